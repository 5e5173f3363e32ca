#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dabm/simulator.hpp"

namespace dabm {

/**
 * A stochastic loss evaluated as the mean of `batch()` simulation runs.
 * Every optimizer goes through this interface, and `sim_count()` reports
 * how many single runs have actually been executed.
 */
class BatchedObjective {
 public:
  virtual ~BatchedObjective() = default;

  virtual std::size_t num_params() const = 0;
  virtual int batch() const = 0;
  /// Mean loss with all noise determined by `seed`.
  virtual double value(std::span<const double> params, std::uint64_t seed) = 0;
  virtual bool has_gradient() const { return false; }
  /// Mean loss and its gradient under the same noise as `value`.
  virtual double value_and_gradient(std::span<const double> params, std::uint64_t seed,
                                    std::vector<double>& gradient);
  virtual std::uint64_t sim_count() const = 0;
};

/// Relaxed simulation as an objective; gradients come from reverse-mode AD.
class SimulationObjective : public BatchedObjective {
 public:
  explicit SimulationObjective(const Simulator& sim);

  std::size_t num_params() const override { return sim_.num_params(); }
  int batch() const override { return sim_.config().batch; }
  double value(std::span<const double> params, std::uint64_t seed) override;
  bool has_gradient() const override { return true; }
  double value_and_gradient(std::span<const double> params, std::uint64_t seed,
                            std::vector<double>& gradient) override;
  std::uint64_t sim_count() const override { return sim_.sim_count() - start_count_; }

 private:
  const Simulator& sim_;
  std::uint64_t start_count_;
};

/// Objective from plain functions; each call counts as `batch` runs.
class FunctionObjective : public BatchedObjective {
 public:
  using ValueFn = std::function<double(std::span<const double>, std::uint64_t)>;
  using GradientFn = std::function<void(std::span<const double>, std::uint64_t, std::vector<double>&)>;

  FunctionObjective(std::size_t num_params, int batch, ValueFn value, GradientFn gradient = {});

  std::size_t num_params() const override { return num_params_; }
  int batch() const override { return batch_; }
  double value(std::span<const double> params, std::uint64_t seed) override;
  bool has_gradient() const override { return static_cast<bool>(gradient_); }
  double value_and_gradient(std::span<const double> params, std::uint64_t seed,
                            std::vector<double>& gradient) override;
  std::uint64_t sim_count() const override { return calls_ * static_cast<std::uint64_t>(batch_); }

 private:
  std::size_t num_params_;
  int batch_;
  ValueFn value_;
  GradientFn gradient_;
  std::uint64_t calls_ = 0;
};

enum class Method { AdSgd, FdGd, DiffEvolution };

const char* method_name(Method m);
/// Accepts "ad-sgd", "fd" / "fd-gd", "de".
Method parse_method(const std::string& name);

struct OptimizerConfig {
  Method method = Method::AdSgd;
  double lr = 1e-3;
  double fd_step = 0.1;
  bool fd_common_random_numbers = true;
  int de_pop = 100;
  double de_mutation = 0.5;
  double de_recombination = 0.7;
  double lower = 0.0;  // DE box bounds, applied to every parameter
  double upper = 3.0;
  int max_updates = std::numeric_limits<int>::max();
  std::uint64_t sim_budget = 2500;
  std::uint64_t seed = 0;
  double divergence_factor = 10.0;
  int divergence_patience = 5;
  /// Keep a parameter snapshot with every record.
  bool keep_snapshots = true;
};

struct TraceRecord {
  int update = 0;              // 1-based update / generation index; 0 = initial population
  std::uint64_t sim_count = 0; // cumulative single runs after this record
  double loss = 0.0;           // batched loss (DE: best fitness so far)
  std::vector<double> params;  // parameters the loss belongs to
};

struct OptTrace {
  Method method = Method::AdSgd;
  std::vector<TraceRecord> records;
  std::vector<double> final_params;
  double final_cost = 0.0;
  int updates = 0;  // completed parameter updates / generations
  bool aborted = false;
  std::string note;

  double best_loss() const;
};

/// Forward-difference gradient; with `common_random_numbers` every probe
/// reuses `seed`, otherwise probe k uses a derived seed.
std::vector<double> fd_gradient(BatchedObjective& objective, std::span<const double> params,
                                double step, std::uint64_t seed, bool common_random_numbers,
                                double* base_loss = nullptr);

OptTrace ad_sgd(BatchedObjective& objective, std::span<const double> init, const OptimizerConfig& config);
OptTrace fd_gd(BatchedObjective& objective, std::span<const double> init, const OptimizerConfig& config);
OptTrace diff_evolution(BatchedObjective& objective, std::span<const double> init,
                        const OptimizerConfig& config);
OptTrace optimize(BatchedObjective& objective, std::span<const double> init, const OptimizerConfig& config);

/// Rows `method,init_pattern,update,sim_count,loss`.
void write_trace_csv(const OptTrace& trace, const std::string& init_pattern, std::ostream& out,
                     bool header = true);

}  // namespace dabm
