#include "dabm/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dabm/noise.hpp"

#ifndef DABM_SCENARIO_DIR
#define DABM_SCENARIO_DIR "scenarios"
#endif

namespace dabm {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Typed, path-tracking access to one JSON object. Every key must be read,
// so misspelled fields are reported instead of silently ignored.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json& raw(const std::string& key) {
    if (!has(key)) throw SchemaError(join(path_, key), "missing required field");
    seen_.insert(key);
    return node_.at(key);
  }

  Reader child(const std::string& key) { return Reader(raw(key), join(path_, key)); }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) throw SchemaError(join(path_, key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(join(path_, key), "expected a finite number");
    return d;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  int integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) throw SchemaError(join(path_, key), "expected an integer");
    return v.get<int>();
  }
  int integer(const std::string& key, int fallback) { return has(key) ? integer(key) : fallback; }

  std::uint64_t seed(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_unsigned()) throw SchemaError(join(path_, key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) { return has(key) ? seed(key) : fallback; }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) throw SchemaError(join(path_, key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) throw SchemaError(join(path_, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) throw SchemaError(join(path_, key) + "[" + std::to_string(k) + "]", "expected a number");
      out.push_back(v[k].get<double>());
    }
    return out;
  }

  const std::string& path() const { return path_; }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError(join(path_, it.key()), "unknown field");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* routing_name(Routing r) { return r == Routing::PerAgent ? "per-agent" : "cell-level"; }
const char* mode_name(SimMode m) { return m == SimMode::Estimation ? "estimation" : "evaluation"; }

std::vector<bool> parse_mask(const json& v, const std::string& path) {
  std::vector<bool> mask;
  if (!v.is_array()) throw SchemaError(path, "expected an array of row strings");
  for (std::size_t r = 0; r < v.size(); ++r) {
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    if (!v[r].is_string()) throw SchemaError(row_path, "expected a string of 0/1 characters");
    for (char c : v[r].get<std::string>()) {
      if (c != '0' && c != '1') throw SchemaError(row_path, std::string("invalid mask character '") + c + "'");
      mask.push_back(c == '1');
    }
  }
  return mask;
}

json dump_mask(const std::vector<bool>& mask, int cols) {
  json rows = json::array();
  const std::size_t width = cols > 0 ? static_cast<std::size_t>(cols) : std::max<std::size_t>(mask.size(), 1);
  for (std::size_t start = 0; start < mask.size(); start += width) {
    std::string row;
    for (std::size_t k = start; k < std::min(mask.size(), start + width); ++k) row += mask[k] ? '1' : '0';
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

int ScenarioSpec::num_stations() const {
  return coords.empty() ? grid_rows * grid_cols : static_cast<int>(coords.size());
}

std::string scenario_dir() {
  if (const char* env = std::getenv("DABM_SCENARIO_DIR"); env != nullptr && *env != '\0') return env;
  return DABM_SCENARIO_DIR;
}

ScenarioSpec parse_scenario(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", source + " is not valid JSON: " + e.what());
  }
  Reader root(doc, "");
  ScenarioSpec s;
  s.schema_version = root.integer("schema_version");
  if (s.schema_version != kScenarioSchemaVersion) {
    throw SchemaError("schema_version", "unsupported version " + std::to_string(s.schema_version) +
                                            " (expected " + std::to_string(kScenarioSchemaVersion) + ")");
  }
  s.id = root.string("id");
  s.description = root.string("description", "");

  {
    Reader net = root.child("network");
    if (net.has("grid")) {
      Reader grid = net.child("grid");
      s.grid_rows = grid.integer("rows");
      s.grid_cols = grid.integer("cols");
      grid.finish();
    }
    if (net.has("coords")) {
      const json& c = net.raw("coords");
      const std::string path = join(net.path(), "coords");
      if (!c.is_array()) throw SchemaError(path, "expected an array of [x, y] pairs");
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (!c[k].is_array() || c[k].size() != 2 || !c[k][0].is_number() || !c[k][1].is_number()) {
          throw SchemaError(path + "[" + std::to_string(k) + "]", "expected an [x, y] pair");
        }
        s.coords.push_back({c[k][0].get<double>(), c[k][1].get<double>()});
      }
    }
    if ((s.grid_rows > 0) == !s.coords.empty()) {
      throw SchemaError("network", "give exactly one of grid or coords");
    }
    net.finish();
  }

  s.initial_inventory = root.number("initial_inventory");
  s.horizon = root.integer("horizon");
  s.block_len = root.integer("block_len");
  {
    const json& d = root.raw("desired_final");
    if (d.is_number()) {
      s.desired_final.assign(static_cast<std::size_t>(std::max(s.num_stations(), 0)), d.get<double>());
    } else {
      s.desired_final = root.numbers("desired_final");
    }
  }

  {
    Reader dem = root.child("demand");
    const std::string formula = dem.string("formula");
    if (formula == "two-station") {
      s.demand.formula = DemandFormula::TwoStation;
      s.demand.rate_01 = dem.number("rate_01");
      s.demand.rate_10 = dem.number("rate_10");
      s.demand.duration_rate = dem.number("duration_rate");
    } else if (formula == "decaying-peak") {
      s.demand.formula = DemandFormula::DecayingPeak;
      s.demand.scale = dem.number("scale", 1.0);
      s.demand.peak = dem.number("peak", 1.0);
      s.demand.decay = dem.number("decay", 0.2);
      s.demand.base = dem.number("base", 0.1);
      s.demand.noise_width = dem.number("noise_width", 0.2);
      s.demand.duration_numerator = dem.number("duration_numerator", 5.0);
      s.demand.high_demand = parse_mask(dem.raw("high_demand_mask"), join(dem.path(), "high_demand_mask"));
    } else {
      throw SchemaError("demand.formula", "unknown formula '" + formula + "' (expected two-station or decaying-peak)");
    }
    dem.finish();
  }

  if (root.has("choice")) {
    Reader ch = root.child("choice");
    s.choice.w_discount = ch.number("w_discount", s.choice.w_discount);
    s.choice.w_distance = ch.number("w_distance", s.choice.w_distance);
    s.choice.asc_intended = ch.number("asc_intended", s.choice.asc_intended);
    s.choice.asc_switch = ch.number("asc_switch", s.choice.asc_switch);
    ch.finish();
  }

  if (root.has("simulation")) {
    Reader sim = root.child("simulation");
    s.tau = sim.number("tau", s.tau);
    s.batch = sim.integer("batch", s.batch);
    const std::string routing = sim.string("routing", routing_name(s.routing));
    if (routing == "per-agent") {
      s.routing = Routing::PerAgent;
    } else if (routing == "cell-level") {
      s.routing = Routing::CellLevel;
    } else {
      throw SchemaError("simulation.routing", "expected per-agent or cell-level");
    }
    s.timestep = sim.number("timestep", s.timestep);
    s.departures.tail_tol = sim.number("departure_tail_tol", s.departures.tail_tol);
    s.departures.max_limit = sim.integer("departure_max_limit", s.departures.max_limit);
    s.durations.tail_tol = sim.number("duration_tail_tol", s.durations.tail_tol);
    s.durations.max_limit = sim.integer("duration_max_limit", s.durations.max_limit);
    sim.finish();
  }

  if (root.has("optimizer")) {
    Reader opt = root.child("optimizer");
    OptimizerDefaults& o = s.optimizer;
    o.lr_ad = opt.number("lr_ad", o.lr_ad);
    o.lr_fd = opt.number("lr_fd", o.lr_fd);
    o.fd_step = opt.number("fd_step", o.fd_step);
    o.de_pop = opt.integer("de_pop", o.de_pop);
    o.de_mutation = opt.number("de_mutation", o.de_mutation);
    o.de_recombination = opt.number("de_recombination", o.de_recombination);
    o.de_lower = opt.number("de_lower", o.de_lower);
    o.de_upper = opt.number("de_upper", o.de_upper);
    o.budget = opt.seed("budget", o.budget);
    opt.finish();
  }

  if (root.has("seeds")) {
    Reader sd = root.child("seeds");
    s.seeds.demand_est = sd.seed("demand_est", s.seeds.demand_est);
    s.seeds.demand_test = sd.seed("demand_test", s.seeds.demand_test);
    s.seeds.sim = sd.seed("sim", s.seeds.sim);
    s.seeds.policy = sd.seed("policy", s.seeds.policy);
    sd.finish();
  }

  if (root.has("target")) {
    Reader tg = root.child("target");
    TargetSource t;
    t.policy = tg.numbers("policy");
    t.seed = tg.seed("seed");
    const std::string mode = tg.string("mode", "estimation");
    if (mode == "estimation") {
      t.mode = SimMode::Estimation;
    } else if (mode == "evaluation") {
      t.mode = SimMode::Evaluation;
    } else {
      throw SchemaError("target.mode", "expected estimation or evaluation");
    }
    tg.finish();
    s.target = std::move(t);
  }

  root.finish();
  validate(s);
  return s;
}

void validate(const ScenarioSpec& s) {
  const int J = s.num_stations();
  if (!s.coords.empty()) {
    if (s.grid_rows != 0 || s.grid_cols != 0) throw SchemaError("network", "give exactly one of grid or coords");
  } else if (s.grid_rows < 1 || s.grid_cols < 1) {
    throw SchemaError("network.grid", "rows and cols must be positive");
  }
  if (s.id.empty()) throw SchemaError("id", "must not be empty");
  if (s.horizon < 1) throw SchemaError("horizon", "must be at least 1");
  if (s.block_len < 1) throw SchemaError("block_len", "must be at least 1");
  if (!(s.initial_inventory >= 0.0)) throw SchemaError("initial_inventory", "must be nonnegative");
  if (s.desired_final.size() != static_cast<std::size_t>(J)) {
    throw SchemaError("desired_final", "has " + std::to_string(s.desired_final.size()) + " entries for " +
                                           std::to_string(J) + " stations");
  }
  if (s.demand.formula == DemandFormula::TwoStation) {
    if (J != 2) throw SchemaError("demand.formula", "two-station demand needs exactly 2 stations");
    if (!(s.demand.rate_01 >= 0.0)) throw SchemaError("demand.rate_01", "must be nonnegative");
    if (!(s.demand.rate_10 >= 0.0)) throw SchemaError("demand.rate_10", "must be nonnegative");
    if (!(s.demand.duration_rate > 0.0)) throw SchemaError("demand.duration_rate", "must be positive");
  } else {
    if (s.demand.high_demand.size() != static_cast<std::size_t>(J)) {
      throw SchemaError("demand.high_demand_mask", "has " + std::to_string(s.demand.high_demand.size()) +
                                                       " cells for " + std::to_string(J) + " stations");
    }
    if (!(s.demand.scale > 0.0)) throw SchemaError("demand.scale", "must be positive");
    if (!(s.demand.base >= 0.0)) throw SchemaError("demand.base", "must be nonnegative");
    if (!(s.demand.noise_width >= 0.0)) throw SchemaError("demand.noise_width", "must be nonnegative");
    if (!(s.demand.peak >= 0.0)) throw SchemaError("demand.peak", "must be nonnegative");
    if (!(s.demand.duration_numerator > 0.0)) throw SchemaError("demand.duration_numerator", "must be positive");
  }
  if (!(s.tau > 0.0)) throw SchemaError("simulation.tau", "must be positive");
  if (s.batch < 1) throw SchemaError("simulation.batch", "must be at least 1");
  if (!(s.timestep > 0.0)) throw SchemaError("simulation.timestep", "must be positive");
  for (const auto& [name, cfg] : {std::pair{"departure", s.departures}, std::pair{"duration", s.durations}}) {
    if (!(cfg.tail_tol > 0.0 && cfg.tail_tol < 1.0)) {
      throw SchemaError(std::string("simulation.") + name + "_tail_tol", "must lie in (0, 1)");
    }
    if (cfg.max_limit < 1) throw SchemaError(std::string("simulation.") + name + "_max_limit", "must be positive");
  }
  if (s.optimizer.de_pop < 4) throw SchemaError("optimizer.de_pop", "must be at least 4");
  if (!(s.optimizer.de_upper > s.optimizer.de_lower)) throw SchemaError("optimizer.de_upper", "must exceed de_lower");
  if (s.target && s.target->policy.size() != s.num_params()) {
    throw SchemaError("target.policy", "has " + std::to_string(s.target->policy.size()) +
                                           " values, scenario has " + std::to_string(s.num_params()) +
                                           " parameters");
  }
}

std::string dump_scenario(const ScenarioSpec& s) {
  validate(s);
  json doc;
  doc["schema_version"] = s.schema_version;
  doc["id"] = s.id;
  if (!s.description.empty()) doc["description"] = s.description;
  if (s.coords.empty()) {
    doc["network"]["grid"] = {{"rows", s.grid_rows}, {"cols", s.grid_cols}};
  } else {
    json c = json::array();
    for (const Coord& xy : s.coords) c.push_back({xy[0], xy[1]});
    doc["network"]["coords"] = c;
  }
  doc["initial_inventory"] = s.initial_inventory;
  const bool uniform = std::all_of(s.desired_final.begin(), s.desired_final.end(),
                                   [&](double v) { return v == s.desired_final.front(); });
  doc["desired_final"] = uniform ? json(s.desired_final.front()) : json(s.desired_final);
  doc["horizon"] = s.horizon;
  doc["block_len"] = s.block_len;

  json& d = doc["demand"];
  if (s.demand.formula == DemandFormula::TwoStation) {
    d["formula"] = "two-station";
    d["rate_01"] = s.demand.rate_01;
    d["rate_10"] = s.demand.rate_10;
    d["duration_rate"] = s.demand.duration_rate;
  } else {
    d["formula"] = "decaying-peak";
    d["scale"] = s.demand.scale;
    d["peak"] = s.demand.peak;
    d["decay"] = s.demand.decay;
    d["base"] = s.demand.base;
    d["noise_width"] = s.demand.noise_width;
    d["duration_numerator"] = s.demand.duration_numerator;
    d["high_demand_mask"] = dump_mask(s.demand.high_demand, s.coords.empty() ? s.grid_cols : 0);
  }
  doc["choice"] = {{"w_discount", s.choice.w_discount},
                   {"w_distance", s.choice.w_distance},
                   {"asc_intended", s.choice.asc_intended},
                   {"asc_switch", s.choice.asc_switch}};
  doc["simulation"] = {{"tau", s.tau},
                       {"batch", s.batch},
                       {"routing", routing_name(s.routing)},
                       {"timestep", s.timestep},
                       {"departure_tail_tol", s.departures.tail_tol},
                       {"departure_max_limit", s.departures.max_limit},
                       {"duration_tail_tol", s.durations.tail_tol},
                       {"duration_max_limit", s.durations.max_limit}};
  doc["optimizer"] = {{"lr_ad", s.optimizer.lr_ad},
                      {"lr_fd", s.optimizer.lr_fd},
                      {"fd_step", s.optimizer.fd_step},
                      {"de_pop", s.optimizer.de_pop},
                      {"de_mutation", s.optimizer.de_mutation},
                      {"de_recombination", s.optimizer.de_recombination},
                      {"de_lower", s.optimizer.de_lower},
                      {"de_upper", s.optimizer.de_upper},
                      {"budget", s.optimizer.budget}};
  doc["seeds"] = {{"demand_est", s.seeds.demand_est},
                  {"demand_test", s.seeds.demand_test},
                  {"sim", s.seeds.sim},
                  {"policy", s.seeds.policy}};
  if (s.target) {
    doc["target"] = {{"policy", s.target->policy}, {"seed", s.target->seed}, {"mode", mode_name(s.target->mode)}};
  }
  return doc.dump(2) + "\n";
}

void save_scenario(const ScenarioSpec& spec, const std::string& path) {
  const std::string text = dump_scenario(spec);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

ScenarioSpec load_scenario(const std::string& id_or_path) {
  namespace fs = std::filesystem;
  fs::path path(id_or_path);
  if (!fs::exists(path)) {
    const fs::path builtin = fs::path(scenario_dir()) / (id_or_path + ".json");
    if (!fs::exists(builtin)) {
      throw std::runtime_error("unknown scenario '" + id_or_path + "': no such file and no builtin " +
                               builtin.string());
    }
    path = builtin;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

StationNetwork build_network(const ScenarioSpec& spec) {
  if (!spec.coords.empty()) {
    const std::size_t J = spec.coords.size();
    return StationNetwork(spec.coords, std::vector<double>(J, spec.initial_inventory), spec.desired_final);
  }
  StationNetwork net = StationNetwork::grid(spec.grid_rows, spec.grid_cols, spec.initial_inventory, 0.0);
  net.set_desired_final(spec.desired_final);
  return net;
}

DemandField build_demand(const ScenarioSpec& spec, std::uint64_t seed) {
  return build_demand(spec.demand, build_network(spec), spec.horizon, seed);
}

PricingPolicy policy_shape(const ScenarioSpec& spec) {
  return PricingPolicy(spec.horizon, spec.num_stations(), spec.block_len);
}

SimConfig sim_config(const ScenarioSpec& spec, SimMode mode) {
  SimConfig c;
  c.horizon = spec.horizon;
  c.mode = mode;
  c.tau = spec.tau;
  c.batch = spec.batch;
  c.routing = spec.routing;
  c.timestep = spec.timestep;
  c.departures = spec.departures;
  c.durations = spec.durations;
  return c;
}

Simulator make_simulator(const ScenarioSpec& spec, std::uint64_t demand_seed, SimMode mode) {
  return Simulator(build_network(spec), build_demand(spec, demand_seed), policy_shape(spec), spec.choice,
                   sim_config(spec, mode));
}

OptimizerConfig optimizer_config(const ScenarioSpec& spec, Method method) {
  OptimizerConfig c;
  c.method = method;
  c.lr = method == Method::FdGd ? spec.optimizer.lr_fd : spec.optimizer.lr_ad;
  c.fd_step = spec.optimizer.fd_step;
  c.de_pop = spec.optimizer.de_pop;
  c.de_mutation = spec.optimizer.de_mutation;
  c.de_recombination = spec.optimizer.de_recombination;
  c.lower = spec.optimizer.de_lower;
  c.upper = spec.optimizer.de_upper;
  c.sim_budget = spec.optimizer.budget;
  c.seed = spec.seeds.sim;
  return c;
}

InitPattern custom_pattern(double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("custom initial pattern needs a <= b, got (" + std::to_string(lo) + ", " +
                                std::to_string(hi) + ")");
  }
  std::ostringstream name;
  name << "custom:" << lo << ',' << hi;
  return {name.str(), lo, hi};
}

InitPattern parse_init_pattern(const std::string& text) {
  if (text == "1") return {"1", 0.0, 0.1};
  if (text == "2") return {"2", 1.0, 1.1};
  const std::string prefix = "custom:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string rest = text.substr(prefix.size());
    const std::size_t comma = rest.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("custom pattern must look like custom:a,b");
    return custom_pattern(std::stod(rest.substr(0, comma)), std::stod(rest.substr(comma + 1)));
  }
  throw std::invalid_argument("unknown initial pattern '" + text + "' (expected 1, 2 or custom:a,b)");
}

PricingPolicy initial_policy(const ScenarioSpec& spec, const InitPattern& pattern, std::uint64_t seed) {
  if (pattern.lo > pattern.hi) throw std::invalid_argument("initial pattern needs lo <= hi");
  PricingPolicy policy = policy_shape(spec);
  std::mt19937_64 rng(NoiseStream(seed).derive(tag(NoiseTag::Policy)).key({}));
  std::uniform_real_distribution<double> dist(pattern.lo, pattern.hi);
  for (double& v : policy.values()) v = pattern.lo == pattern.hi ? pattern.lo : dist(rng);
  return policy;
}

void materialize_target(ScenarioSpec& spec) {
  if (!spec.target) throw SchemaError("target", "scenario has no ground-truth target to materialize");
  Simulator sim = make_simulator(spec, spec.seeds.demand_est, spec.target->mode);
  const SimOutcome outcome = sim.run(spec.target->policy, spec.target->seed);
  spec.desired_final = outcome.final_inventory;
}

}  // namespace dabm
