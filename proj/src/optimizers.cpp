#include "dabm/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>

#include "dabm/noise.hpp"

namespace dabm {

namespace {

std::uint64_t update_seed(std::uint64_t seed, std::uint64_t update) {
  return NoiseStream(seed).derive(tag(NoiseTag::Optimizer)).key({update});
}

// Aborts after `patience` consecutive losses above factor x the first one.
class DivergenceGuard {
 public:
  DivergenceGuard(double factor, int patience) : factor_(factor), patience_(patience) {}

  bool diverged(double loss) {
    if (!std::isfinite(loss)) return true;
    if (!has_initial_) {
      initial_ = loss;
      has_initial_ = true;
      return false;
    }
    streak_ = loss > factor_ * initial_ ? streak_ + 1 : 0;
    return streak_ >= patience_;
  }

 private:
  double factor_;
  int patience_;
  double initial_ = 0.0;
  bool has_initial_ = false;
  int streak_ = 0;
};

void check_init(const BatchedObjective& objective, std::span<const double> init) {
  if (init.size() != objective.num_params()) {
    throw DimensionError("initial parameters have " + std::to_string(init.size()) +
                         " entries, objective needs " + std::to_string(objective.num_params()));
  }
}

TraceRecord make_record(int update, std::uint64_t sims, double loss, std::span<const double> params,
                        bool keep) {
  TraceRecord r;
  r.update = update;
  r.sim_count = sims;
  r.loss = loss;
  if (keep) r.params.assign(params.begin(), params.end());
  return r;
}

}  // namespace

double BatchedObjective::value_and_gradient(std::span<const double>, std::uint64_t,
                                            std::vector<double>&) {
  throw std::logic_error("objective provides no gradient");
}

SimulationObjective::SimulationObjective(const Simulator& sim)
    : sim_(sim), start_count_(sim.sim_count()) {
  if (sim.config().mode != SimMode::Estimation) {
    throw ConfigError("optimization runs on the relaxed (estimation-mode) simulator");
  }
}

double SimulationObjective::value(std::span<const double> params, std::uint64_t seed) {
  return sim_.batched_loss(params, seed);
}

double SimulationObjective::value_and_gradient(std::span<const double> params, std::uint64_t seed,
                                               std::vector<double>& gradient) {
  return sim_.batched_loss_and_gradient(params, seed, gradient);
}

FunctionObjective::FunctionObjective(std::size_t num_params, int batch, ValueFn value,
                                     GradientFn gradient)
    : num_params_(num_params), batch_(batch), value_(std::move(value)), gradient_(std::move(gradient)) {
  if (batch < 1) throw ConfigError("batch must be at least 1");
}

double FunctionObjective::value(std::span<const double> params, std::uint64_t seed) {
  ++calls_;
  return value_(params, seed);
}

double FunctionObjective::value_and_gradient(std::span<const double> params, std::uint64_t seed,
                                             std::vector<double>& gradient) {
  if (!gradient_) return BatchedObjective::value_and_gradient(params, seed, gradient);
  ++calls_;
  gradient.assign(num_params_, 0.0);
  gradient_(params, seed, gradient);
  return value_(params, seed);
}

const char* method_name(Method m) {
  switch (m) {
    case Method::AdSgd: return "ad-sgd";
    case Method::FdGd: return "fd";
    case Method::DiffEvolution: return "de";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "ad-sgd" || name == "ad") return Method::AdSgd;
  if (name == "fd" || name == "fd-gd") return Method::FdGd;
  if (name == "de") return Method::DiffEvolution;
  throw std::invalid_argument("unknown method '" + name + "' (expected ad-sgd, fd or de)");
}

double OptTrace::best_loss() const {
  double best = std::numeric_limits<double>::infinity();
  for (const TraceRecord& r : records) best = std::min(best, r.loss);
  return best;
}

std::vector<double> fd_gradient(BatchedObjective& objective, std::span<const double> params,
                                double step, std::uint64_t seed, bool common_random_numbers,
                                double* base_loss) {
  if (!(step != 0.0)) throw ConfigError("finite-difference step must be nonzero");
  std::vector<double> p(params.begin(), params.end());
  const double base = objective.value(p, seed);
  if (base_loss != nullptr) *base_loss = base;
  std::vector<double> grad(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double saved = p[k];
    p[k] = saved + step;
    const std::uint64_t probe_seed = common_random_numbers ? seed : NoiseStream(seed).key({k + 1});
    grad[k] = (objective.value(p, probe_seed) - base) / step;
    p[k] = saved;
  }
  return grad;
}

OptTrace ad_sgd(BatchedObjective& objective, std::span<const double> init, const OptimizerConfig& config) {
  check_init(objective, init);
  if (!objective.has_gradient()) throw ConfigError("ad-sgd needs an objective with gradients");
  OptTrace trace;
  trace.method = Method::AdSgd;
  std::vector<double> p(init.begin(), init.end());
  std::vector<double> grad;
  DivergenceGuard guard(config.divergence_factor, config.divergence_patience);
  const std::uint64_t start = objective.sim_count();
  const std::uint64_t per_update = static_cast<std::uint64_t>(objective.batch());
  for (int u = 0; u < config.max_updates; ++u) {
    if (objective.sim_count() - start + per_update > config.sim_budget) break;
    const double loss = objective.value_and_gradient(p, update_seed(config.seed, u), grad);
    trace.records.push_back(make_record(u + 1, objective.sim_count() - start, loss, p, config.keep_snapshots));
    if (guard.diverged(loss)) {
      trace.aborted = true;
      trace.note = "diverged: loss " + std::to_string(loss) + " at update " + std::to_string(u + 1);
      break;
    }
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= config.lr * grad[k];
    ++trace.updates;
  }
  if (trace.updates == 0 && !trace.aborted) trace.note = "no update completed";
  trace.final_params = std::move(p);
  return trace;
}

OptTrace fd_gd(BatchedObjective& objective, std::span<const double> init, const OptimizerConfig& config) {
  check_init(objective, init);
  OptTrace trace;
  trace.method = Method::FdGd;
  std::vector<double> p(init.begin(), init.end());
  DivergenceGuard guard(config.divergence_factor, config.divergence_patience);
  const std::uint64_t start = objective.sim_count();
  const std::uint64_t per_update = (p.size() + 1) * static_cast<std::uint64_t>(objective.batch());
  for (int u = 0; u < config.max_updates; ++u) {
    if (objective.sim_count() - start + per_update > config.sim_budget) break;
    double loss = 0.0;
    const std::vector<double> grad = fd_gradient(objective, p, config.fd_step, update_seed(config.seed, u),
                                                 config.fd_common_random_numbers, &loss);
    trace.records.push_back(make_record(u + 1, objective.sim_count() - start, loss, p, config.keep_snapshots));
    if (guard.diverged(loss)) {
      trace.aborted = true;
      trace.note = "diverged: loss " + std::to_string(loss) + " at update " + std::to_string(u + 1);
      break;
    }
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= config.lr * grad[k];
    ++trace.updates;
  }
  if (trace.updates == 0 && !trace.aborted) trace.note = "no update completed";
  trace.final_params = std::move(p);
  return trace;
}

OptTrace diff_evolution(BatchedObjective& objective, std::span<const double> init,
                        const OptimizerConfig& config) {
  check_init(objective, init);
  if (config.de_pop < 4) throw ConfigError("differential evolution needs a population of at least 4");
  if (!(config.upper > config.lower)) throw ConfigError("DE bounds must satisfy lower < upper");
  if (init.empty()) throw ConfigError("differential evolution needs at least one parameter");
  OptTrace trace;
  trace.method = Method::DiffEvolution;
  const std::size_t P = init.size();
  const int NP = config.de_pop;
  const std::uint64_t start = objective.sim_count();
  const std::uint64_t per_generation = static_cast<std::uint64_t>(NP) * objective.batch();

  std::mt19937_64 rng(NoiseStream(config.seed).derive(tag(NoiseTag::Optimizer)).key({0xde}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> in_bounds(config.lower, config.upper);
  std::uniform_int_distribution<std::size_t> pick_gene(0, P - 1);
  std::uniform_int_distribution<int> pick_member(0, NP - 1);

  if (per_generation > config.sim_budget) {
    trace.note = "no update completed";
    trace.final_params.assign(init.begin(), init.end());
    return trace;
  }

  // First member is the given initial pattern, the rest uniform in the box.
  std::vector<std::vector<double>> pop(static_cast<std::size_t>(NP), std::vector<double>(P));
  pop[0].assign(init.begin(), init.end());
  for (int i = 1; i < NP; ++i) {
    for (double& g : pop[i]) g = in_bounds(rng);
  }
  std::vector<double> fitness(static_cast<std::size_t>(NP));
  const std::uint64_t seed0 = update_seed(config.seed, 0);
  for (int i = 0; i < NP; ++i) fitness[i] = objective.value(pop[i], seed0);
  int best = static_cast<int>(std::min_element(fitness.begin(), fitness.end()) - fitness.begin());
  trace.records.push_back(make_record(0, objective.sim_count() - start, fitness[best], pop[best],
                                      config.keep_snapshots));

  std::vector<double> trial(P);
  for (int gen = 1; gen <= config.max_updates; ++gen) {
    if (objective.sim_count() - start + per_generation > config.sim_budget) break;
    const std::uint64_t seed = update_seed(config.seed, static_cast<std::uint64_t>(gen));
    for (int i = 0; i < NP; ++i) {
      int r1, r2;
      do r1 = pick_member(rng); while (r1 == i);
      do r2 = pick_member(rng); while (r2 == i || r2 == r1);
      const std::size_t forced = pick_gene(rng);
      for (std::size_t k = 0; k < P; ++k) {
        if (k == forced || unit(rng) < config.de_recombination) {
          double g = pop[best][k] + config.de_mutation * (pop[r1][k] - pop[r2][k]);
          if (g < config.lower || g > config.upper) g = in_bounds(rng);
          trial[k] = g;
        } else {
          trial[k] = pop[i][k];
        }
      }
      const double f = objective.value(trial, seed);
      if (f <= fitness[i]) {
        pop[i] = trial;
        fitness[i] = f;
        if (f < fitness[best]) best = i;
      }
    }
    ++trace.updates;
    trace.records.push_back(make_record(gen, objective.sim_count() - start, fitness[best], pop[best],
                                        config.keep_snapshots));
  }
  trace.final_params = pop[best];
  return trace;
}

OptTrace optimize(BatchedObjective& objective, std::span<const double> init, const OptimizerConfig& config) {
  switch (config.method) {
    case Method::AdSgd: return ad_sgd(objective, init, config);
    case Method::FdGd: return fd_gd(objective, init, config);
    case Method::DiffEvolution: return diff_evolution(objective, init, config);
  }
  throw std::invalid_argument("unknown optimizer method");
}

void write_trace_csv(const OptTrace& trace, const std::string& init_pattern, std::ostream& out,
                     bool header) {
  if (header) out << "method,init_pattern,update,sim_count,loss\n";
  out << std::setprecision(12);
  for (const TraceRecord& r : trace.records) {
    out << method_name(trace.method) << ',' << init_pattern << ',' << r.update << ',' << r.sim_count
        << ',' << r.loss << '\n';
  }
}

}  // namespace dabm
