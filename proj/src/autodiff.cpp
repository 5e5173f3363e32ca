#include "dabm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dabm::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Neg: return "neg";
    case Op::MaxConst: return "max";
    case Op::Sum: return "sum";
    case Op::LogSumExp: return "logsumexp";
    case Op::Affine: return "affine";
    case Op::Custom: return "custom";
  }
  return "?";
}

double Gradients::operator[](const Var& v) const {
  if (v.is_constant()) return 0.0;
  if (v.tape() != tape_) throw TapeMismatchError("gradient queried for a Var from another tape");
  return adjoints_.at(v.index());
}

Tape* Tape::common_tape(std::span<const Var> parents) {
  Tape* tape = nullptr;
  for (const Var& p : parents) {
    if (p.tape_ == nullptr) continue;
    if (tape == nullptr) {
      tape = p.tape_;
    } else if (tape != p.tape_) {
      throw TapeMismatchError("operands recorded on different tapes");
    }
  }
  return tape;
}

std::uint32_t Tape::push_node(Op op, double value) {
  if (values_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("tape node limit reached");
  }
  values_.push_back(value);
  ops_.push_back(op);
  offsets_.push_back(edge_parent_.size());
  return static_cast<std::uint32_t>(values_.size() - 1);
}

Var Tape::input(double value) { return Var(this, push_node(Op::Input, value), value); }

Var Tape::record(Op op, std::span<const Var> parents, double value,
                 std::span<const double> partials) {
  if (parents.size() != partials.size()) {
    throw std::invalid_argument("record: one partial per parent required");
  }
  Tape* tape = common_tape(parents);
  if (tape == nullptr) return Var(value);
  if (tape != this) throw TapeMismatchError("record called on a foreign tape");
  for (std::size_t k = 0; k < parents.size(); ++k) {
    if (parents[k].tape_ == nullptr) continue;
    edge_parent_.push_back(parents[k].index_);
    edge_partial_.push_back(partials[k]);
  }
  const std::uint32_t id = push_node(op, value);
  return Var(this, id, value);
}

std::vector<Var> Tape::record_custom(std::span<const Var> parents, std::span<const double> values,
                                     CustomBackward backward) {
  std::vector<Var> out;
  out.reserve(values.size());
  Tape* tape = common_tape(parents);
  if (tape == nullptr || values.empty()) {
    for (double v : values) out.emplace_back(v);
    return out;
  }
  if (tape != this) throw TapeMismatchError("record_custom called on a foreign tape");
  CustomNode node;
  node.first_output = static_cast<std::uint32_t>(values_.size());
  node.num_outputs = static_cast<std::uint32_t>(values.size());
  node.parents.reserve(parents.size());
  for (const Var& p : parents) {
    node.parents.push_back(p.tape_ == nullptr ? -1 : static_cast<std::int64_t>(p.index_));
  }
  node.backward = std::move(backward);
  for (double v : values) out.push_back(Var(this, push_node(Op::Custom, v), v));
  customs_.push_back(std::move(node));
  return out;
}

std::span<const std::uint32_t> Tape::parents(std::size_t node) const {
  const std::size_t begin = offsets_.at(node);
  const std::size_t end = offsets_.at(node + 1);
  return {edge_parent_.data() + begin, end - begin};
}

std::span<const double> Tape::partials(std::size_t node) const {
  const std::size_t begin = offsets_.at(node);
  const std::size_t end = offsets_.at(node + 1);
  return {edge_partial_.data() + begin, end - begin};
}

Gradients Tape::backward(const Var& loss) const {
  Gradients g;
  g.tape_ = this;
  g.adjoints_.assign(values_.size(), 0.0);
  if (loss.is_constant()) return g;
  if (loss.tape_ != this) throw TapeMismatchError("backward on a Var from another tape");
  g.adjoints_[loss.index_] = 1.0;

  std::vector<double>& adj = g.adjoints_;
  std::vector<double> out_adj;
  std::vector<double> parent_adj;
  std::size_t next_custom = customs_.size();
  for (std::size_t i = values_.size(); i-- > 0;) {
    ++g.visited_;
    if (ops_[i] == Op::Custom) {
      // Outputs of a custom node are contiguous; its rule runs when the
      // sweep reaches the first output, after all output adjoints are final.
      if (next_custom > 0 && customs_[next_custom - 1].first_output == i) {
        const CustomNode& c = customs_[--next_custom];
        out_adj.assign(adj.begin() + c.first_output,
                       adj.begin() + c.first_output + c.num_outputs);
        if (std::any_of(out_adj.begin(), out_adj.end(), [](double a) { return a != 0.0; })) {
          parent_adj.assign(c.parents.size(), 0.0);
          c.backward(out_adj, parent_adj);
          for (std::size_t k = 0; k < c.parents.size(); ++k) {
            if (c.parents[k] >= 0) adj[static_cast<std::size_t>(c.parents[k])] += parent_adj[k];
          }
        }
      }
      continue;
    }
    const double a = adj[i];
    if (a == 0.0) continue;
    const std::size_t begin = offsets_[i];
    const std::size_t end = offsets_[i + 1];
    for (std::size_t e = begin; e < end; ++e) adj[edge_parent_[e]] += edge_partial_[e] * a;
  }
  return g;
}

void Tape::clear() {
  values_.clear();
  ops_.clear();
  offsets_.assign(1, 0);
  edge_parent_.clear();
  edge_partial_.clear();
  customs_.clear();
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  values_.reserve(nodes);
  ops_.reserve(nodes);
  offsets_.reserve(nodes + 1);
  edge_parent_.reserve(edges);
  edge_partial_.reserve(edges);
}

namespace {

Tape* tape_of(std::initializer_list<Var> xs) {
  for (const Var& x : xs) {
    if (!x.is_constant()) return x.tape();
  }
  return nullptr;
}

Var record2(Op op, const Var& a, const Var& b, double value, double da, double db) {
  Tape* t = tape_of({a, b});
  if (t == nullptr) return Var(value);
  return t->record(op, {a, b}, value, {da, db});
}

Var record1(Op op, const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  return a.tape()->record(op, {a}, value, {da});
}

Tape* tape_of(std::span<const Var> xs) {
  for (const Var& x : xs) {
    if (!x.is_constant()) return x.tape();
  }
  return nullptr;
}

std::int64_t node_of(const Var& v) {
  return v.is_constant() ? -1 : static_cast<std::int64_t>(v.index());
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  return record2(Op::Add, a, b, a.value() + b.value(), 1.0, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  return record2(Op::Sub, a, b, a.value() - b.value(), 1.0, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  return record2(Op::Mul, a, b, a.value() * b.value(), b.value(), a.value());
}

Var operator/(const Var& a, const Var& b) {
  if (b.value() == 0.0) throw DomainError("division by zero", node_of(b));
  const double inv = 1.0 / b.value();
  return record2(Op::Div, a, b, a.value() * inv, inv, -a.value() * inv * inv);
}

Var operator-(const Var& a) { return record1(Op::Neg, a, -a.value(), -1.0); }

Var exp(const Var& a) {
  const double v = std::exp(a.value());
  return record1(Op::Exp, a, v, v);
}

Var log(const Var& a) {
  if (!(a.value() > 0.0)) throw DomainError("log of nonpositive value", node_of(a));
  return record1(Op::Log, a, std::log(a.value()), 1.0 / a.value());
}

Var max(const Var& a, double c) {
  const bool pass = a.value() > c;
  return record1(Op::MaxConst, a, pass ? a.value() : c, pass ? 1.0 : 0.0);
}

Var sum(std::span<const Var> xs) {
  double total = 0.0;
  for (const Var& x : xs) total += x.value();
  Tape* t = tape_of(xs);
  if (t == nullptr) return Var(total);
  std::vector<double> ones(xs.size(), 1.0);
  return t->record(Op::Sum, xs, total, ones);
}

Var affine(std::span<const Var> xs, std::span<const double> coefficients, double offset) {
  if (xs.size() != coefficients.size()) throw std::invalid_argument("affine: size mismatch");
  double total = offset;
  for (std::size_t k = 0; k < xs.size(); ++k) total += coefficients[k] * xs[k].value();
  Tape* t = tape_of(xs);
  if (t == nullptr) return Var(total);
  return t->record(Op::Affine, xs, total, coefficients);
}

Var logsumexp(std::span<const Var> xs, double tau) {
  if (xs.empty()) throw std::invalid_argument("logsumexp of an empty slice");
  if (!(tau > 0.0)) throw std::invalid_argument("logsumexp: temperature must be positive");
  double hi = -std::numeric_limits<double>::infinity();
  for (const Var& x : xs) hi = std::max(hi, x.value() / tau);
  std::vector<double> w(xs.size());
  double z = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    w[k] = std::exp(xs[k].value() / tau - hi);
    z += w[k];
  }
  const double value = hi + std::log(z);
  Tape* t = tape_of(xs);
  if (t == nullptr) return Var(value);
  for (double& wk : w) wk /= (z * tau);
  return t->record(Op::LogSumExp, xs, value, w);
}

std::vector<Var> softmax(std::span<const Var> xs, double tau) {
  const Var lse = logsumexp(xs, tau);
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const Var& x : xs) {
    const double y = std::exp(x.value() / tau - lse.value());
    out.push_back(record2(Op::Exp, x, lse, y, y / tau, -y));
  }
  return out;
}

std::vector<double> values_of(std::span<const Var> xs) {
  std::vector<double> v(xs.size());
  std::transform(xs.begin(), xs.end(), v.begin(), [](const Var& x) { return x.value(); });
  return v;
}

}  // namespace dabm::ad
