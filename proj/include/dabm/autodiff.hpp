#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * Reverse-mode automatic differentiation over scalars.
 *
 * A Tape records every operation applied to its Vars as a node holding the
 * forward value, the parent node indices and the local partial derivative
 * with respect to each parent. Parents always precede their children, so a
 * single reverse sweep propagates adjoints from a loss to every input.
 *
 * A Var without a tape is a constant. Operations whose operands are all
 * constants fold to constants and record nothing, which lets the same model
 * code run as a plain forward evaluation.
 */
namespace dabm::ad {

enum class Op : std::uint8_t {
  Input,
  Add,
  Sub,
  Mul,
  Div,
  Exp,
  Log,
  Neg,
  MaxConst,
  Sum,
  LogSumExp,
  Affine,
  Custom,
};

const char* op_name(Op op);

/// Raised when mixing Vars recorded on different tapes.
class TapeMismatchError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when an operation leaves its domain (log of a nonpositive value,
/// division by zero). `node` is the offending operand's tape index, or -1
/// when the operand is a constant.
class DomainError : public std::runtime_error {
 public:
  DomainError(const std::string& what, std::int64_t node)
      : std::runtime_error(what), node_(node) {}
  std::int64_t node() const { return node_; }

 private:
  std::int64_t node_;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: constants convert implicitly

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, double value)
      : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

/// Adjoints produced by one backward sweep.
class Gradients {
 public:
  Gradients() = default;

  /// d(loss)/d(v); zero for constants and for nodes the loss does not reach.
  double operator[](const Var& v) const;
  double at_node(std::size_t node) const { return adjoints_.at(node); }

  std::size_t visited() const { return visited_; }
  std::size_t size() const { return adjoints_.size(); }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<double> adjoints_;
  std::size_t visited_ = 0;
};

class Tape {
 public:
  /// Backward rule of a multi-output node: receives the adjoints of the
  /// outputs and adds the resulting contributions into `parent_adjoints`
  /// (one slot per parent, in the order the parents were given).
  using CustomBackward = std::function<void(std::span<const double> output_adjoints,
                                            std::span<double> parent_adjoints)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A marked input whose gradient the caller wants.
  Var input(double value);

  /// Record a node. Constant parents are dropped; if every parent is a
  /// constant the result is a constant and nothing is recorded.
  Var record(Op op, std::span<const Var> parents, double value,
             std::span<const double> partials);
  Var record(Op op, std::initializer_list<Var> parents, double value,
             std::initializer_list<double> partials) {
    return record(op, std::span<const Var>(parents.begin(), parents.size()), value,
                  std::span<const double>(partials.begin(), partials.size()));
  }

  /// Record a node with `values.size()` outputs whose backward rule is
  /// supplied by the caller instead of explicit partials.
  std::vector<Var> record_custom(std::span<const Var> parents,
                                 std::span<const double> values, CustomBackward backward);

  Gradients backward(const Var& loss) const;

  std::size_t size() const { return values_.size(); }
  void clear();
  void reserve(std::size_t nodes, std::size_t edges);

  // Node inspection.
  Op op(std::size_t node) const { return ops_.at(node); }
  double value(std::size_t node) const { return values_.at(node); }
  std::span<const std::uint32_t> parents(std::size_t node) const;
  std::span<const double> partials(std::size_t node) const;

 private:
  struct CustomNode {
    std::uint32_t first_output;
    std::uint32_t num_outputs;
    std::vector<std::int64_t> parents;  // -1 for constant parents
    CustomBackward backward;
  };

  std::uint32_t push_node(Op op, double value);
  static Tape* common_tape(std::span<const Var> parents);

  std::vector<double> values_;
  std::vector<Op> ops_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> edge_parent_;
  std::vector<double> edge_partial_;
  std::vector<CustomNode> customs_;
};

// Elementary operations. Each records one node (or a few, for the
// reductions) and folds to a constant when all operands are constant.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var max(const Var& a, double c);

Var sum(std::span<const Var> xs);
/// Σ c_k x_k + offset as a single node.
Var affine(std::span<const Var> xs, std::span<const double> coefficients, double offset = 0.0);
/// log Σ exp(x_k / tau), stabilised by the running maximum.
Var logsumexp(std::span<const Var> xs, double tau = 1.0);
/// softmax(x / tau). Built from one log-sum-exp node plus one node per
/// output, so the tape grows linearly in the slice length.
std::vector<Var> softmax(std::span<const Var> xs, double tau = 1.0);

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

std::vector<double> values_of(std::span<const Var> xs);

}  // namespace dabm::ad
