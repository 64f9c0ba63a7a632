#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"

namespace dipm::ad {

class Tape;

// Scalar carried through the physics and networks. A Value is either a
// constant (node < 0, participates in arithmetic but records nothing) or a
// handle to a node on one specific tape.
class Value {
 public:
  Value() = default;
  Value(double v) : v_(v) {}  // NOLINT: implicit by design, constants are pervasive

  double val() const { return v_; }
  bool is_const() const { return node_ < 0; }
  int64_t node() const { return node_; }
  uint32_t tape_id() const { return tape_; }

  static Value tracked(double v, int64_t node, uint32_t tape) {
    Value x(v);
    x.node_ = node;
    x.tape_ = tape;
    return x;
  }

 private:
  double v_ = 0.0;
  int64_t node_ = -1;
  uint32_t tape_ = 0;
};

// Gradient map produced by a backward sweep: one slot per registered
// parameter, in registration order. Leaves that were never registered are
// deliberately omitted.
class Gradients {
 public:
  explicit Gradients(std::vector<double> g) : g_(std::move(g)) {}
  double wrt_param(size_t param_id) const { return g_.at(param_id); }
  const std::vector<double>& params() const { return g_; }

 private:
  std::vector<double> g_;
};

// Append-only reverse-mode tape. Nodes are stored CSR-style: a flat arena of
// (parent id, local partial) entries plus per-node end offsets. Backward is a
// single reverse sweep visiting each node once, so replaying from any seed
// touches each ancestor exactly once and results are bit-deterministic.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint32_t id() const { return id_; }
  size_t size() const { return node_end_.size(); }
  size_t entry_count() const { return parents_.size(); }
  size_t num_params() const { return param_nodes_.size(); }

  // Tracked leaf: participates in gradients only if also registered.
  Value leaf(double v) {
    check_open();
    const int64_t n = push_node();
    return Value::tracked(v, n, id_);
  }

  // Tracked leaf registered in the gradient map; returns the Value whose
  // parameter id is num_params()-1 after the call.
  Value parameter(double v) {
    Value x = leaf(v);
    param_nodes_.push_back(static_cast<uint64_t>(x.node()));
    return x;
  }

  // General n-ary record. Constant inputs are folded away (their partials are
  // dropped); `value` must already be the op's result.
  Value record(std::span<const Value> inputs, std::span<const double> partials, double value);

  // Checkpoint marks: remember the current node count so a later rewind can
  // drop everything recorded after this point (e.g. between rollouts while
  // keeping parameter leaves alive).
  size_t mark();
  const std::vector<size_t>& marks() const { return marks_; }
  void rewind(size_t mark_value);

  // Forget everything but keep allocated capacity; the tape gets a fresh id
  // so stale Values from the previous generation cannot be mixed back in.
  void reset();

  void seal() { sealed_ = true; }
  bool sealed() const { return sealed_; }

  Gradients backward(const Value& seed) const;

  // Fast paths used by the operator overloads.
  int64_t push1(int64_t p, double d) {
    check_open();
    parents_.push_back(static_cast<uint32_t>(p));
    partials_.push_back(d);
    return push_node();
  }
  int64_t push2(int64_t p0, double d0, int64_t p1, double d1) {
    check_open();
    parents_.push_back(static_cast<uint32_t>(p0));
    partials_.push_back(d0);
    parents_.push_back(static_cast<uint32_t>(p1));
    partials_.push_back(d1);
    return push_node();
  }

 private:
  void check_open() const {
    if (sealed_) throw ValidationError("tape: sealed, recording is closed");
  }
  int64_t push_node() {
    node_end_.push_back(parents_.size());
    return static_cast<int64_t>(node_end_.size()) - 1;
  }

  std::vector<uint32_t> parents_;
  std::vector<double> partials_;
  std::vector<uint64_t> node_end_;
  std::vector<uint64_t> param_nodes_;
  std::vector<size_t> marks_;
  uint32_t id_ = 0;
  bool sealed_ = false;
};

// Thread-local active tape. Ops record onto it; with no active tape only
// constant arithmetic is allowed. Tapes may be handed off between threads,
// but each is active on at most one thread at a time.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

namespace detail {

[[noreturn]] void throw_nonfinite(const char* op);
[[noreturn]] void throw_no_tape(const char* op);
[[noreturn]] void throw_tape_mix(const char* op);

inline Tape& tape_for(const Value& x, const char* op) {
  Tape* t = active_tape();
  if (t == nullptr) throw_no_tape(op);
  if (x.tape_id() != t->id()) throw_tape_mix(op);
  return *t;
}

inline Value unary(const Value& x, double v, double dx, const char* op) {
  if (!std::isfinite(v)) throw_nonfinite(op);
  if (x.is_const()) return Value(v);
  Tape& t = tape_for(x, op);
  return Value::tracked(v, t.push1(x.node(), dx), t.id());
}

inline Value binary(const Value& a, const Value& b, double v, double da, double db,
                    const char* op) {
  if (!std::isfinite(v)) throw_nonfinite(op);
  const bool ca = a.is_const(), cb = b.is_const();
  if (ca && cb) return Value(v);
  if (cb) {
    Tape& t = tape_for(a, op);
    return Value::tracked(v, t.push1(a.node(), da), t.id());
  }
  if (ca) {
    Tape& t = tape_for(b, op);
    return Value::tracked(v, t.push1(b.node(), db), t.id());
  }
  Tape& t = tape_for(a, op);
  if (b.tape_id() != t.id()) throw_tape_mix(op);
  return Value::tracked(v, t.push2(a.node(), da, b.node(), db), t.id());
}

}  // namespace detail

// ---- arithmetic -----------------------------------------------------------

inline Value operator+(const Value& a, const Value& b) {
  return detail::binary(a, b, a.val() + b.val(), 1.0, 1.0, "add");
}
inline Value operator-(const Value& a, const Value& b) {
  return detail::binary(a, b, a.val() - b.val(), 1.0, -1.0, "sub");
}
inline Value operator*(const Value& a, const Value& b) {
  return detail::binary(a, b, a.val() * b.val(), b.val(), a.val(), "mul");
}
inline Value operator/(const Value& a, const Value& b) {
  const double bv = b.val();
  if (bv == 0.0) detail::throw_nonfinite("div");
  return detail::binary(a, b, a.val() / bv, 1.0 / bv, -a.val() / (bv * bv), "div");
}
inline Value operator-(const Value& x) {
  return detail::unary(x, -x.val(), -1.0, "neg");
}
inline Value operator+(const Value& a, double b) { return a + Value(b); }
inline Value operator+(double a, const Value& b) { return Value(a) + b; }
inline Value operator-(const Value& a, double b) { return a - Value(b); }
inline Value operator-(double a, const Value& b) { return Value(a) - b; }
inline Value operator*(const Value& a, double b) { return a * Value(b); }
inline Value operator*(double a, const Value& b) { return Value(a) * b; }
inline Value operator/(const Value& a, double b) { return a / Value(b); }
inline Value operator/(double a, const Value& b) { return Value(a) / b; }
inline Value& operator+=(Value& a, const Value& b) { return a = a + b; }
inline Value& operator-=(Value& a, const Value& b) { return a = a - b; }
inline Value& operator*=(Value& a, const Value& b) { return a = a * b; }

// Comparisons look at values only; they exist so branching code (pivoting,
// clamps, sign tables) reads the same for double and Value.
inline bool operator<(const Value& a, const Value& b) { return a.val() < b.val(); }
inline bool operator>(const Value& a, const Value& b) { return a.val() > b.val(); }
inline bool operator<=(const Value& a, const Value& b) { return a.val() <= b.val(); }
inline bool operator>=(const Value& a, const Value& b) { return a.val() >= b.val(); }
inline bool operator<(const Value& a, double b) { return a.val() < b; }
inline bool operator>(const Value& a, double b) { return a.val() > b; }
inline bool operator<=(const Value& a, double b) { return a.val() <= b; }
inline bool operator>=(const Value& a, double b) { return a.val() >= b; }

// ---- elementary functions ---------------------------------------------------

inline Value sin(const Value& x) {
  return detail::unary(x, std::sin(x.val()), std::cos(x.val()), "sin");
}
inline Value cos(const Value& x) {
  return detail::unary(x, std::cos(x.val()), -std::sin(x.val()), "cos");
}
inline Value tan(const Value& x) {
  const double t = std::tan(x.val());
  return detail::unary(x, t, 1.0 + t * t, "tan");
}
inline Value asin(const Value& x) {
  const double v = x.val();
  if (v <= -1.0 || v >= 1.0) {
    if (!(v == -1.0 || v == 1.0) || !x.is_const()) detail::throw_nonfinite("asin");
  }
  return detail::unary(x, std::asin(v), 1.0 / std::sqrt(1.0 - v * v), "asin");
}
inline Value atan(const Value& x) {
  const double v = x.val();
  return detail::unary(x, std::atan(v), 1.0 / (1.0 + v * v), "atan");
}
inline Value atan2(const Value& y, const Value& x) {
  const double yv = y.val(), xv = x.val();
  const double r2 = xv * xv + yv * yv;
  if (r2 == 0.0) detail::throw_nonfinite("atan2");
  return detail::binary(y, x, std::atan2(yv, xv), xv / r2, -yv / r2, "atan2");
}
inline Value exp(const Value& x) {
  const double e = std::exp(x.val());
  return detail::unary(x, e, e, "exp");
}
inline Value log(const Value& x) {
  const double v = x.val();
  if (v <= 0.0) detail::throw_nonfinite("log");
  return detail::unary(x, std::log(v), 1.0 / v, "log");
}
inline Value sqrt(const Value& x) {
  const double v = x.val();
  if (v < 0.0) detail::throw_nonfinite("sqrt");
  if (v == 0.0 && !x.is_const()) detail::throw_nonfinite("sqrt");  // derivative blows up
  const double s = std::sqrt(v);
  return detail::unary(x, s, 0.5 / (s == 0.0 ? 1.0 : s), "sqrt");
}
inline Value tanh(const Value& x) {
  const double t = std::tanh(x.val());
  return detail::unary(x, t, 1.0 - t * t, "tanh");
}
inline Value sigmoid(const Value& x) {
  const double v = x.val();
  const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return detail::unary(x, s, s * (1.0 - s), "sigmoid");
}
// log(1 + e^x), evaluated stably; derivative is the logistic sigmoid.
inline Value softplus(const Value& x) {
  const double v = x.val();
  const double sp = std::fmax(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
  const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return detail::unary(x, sp, s, "softplus");
}
inline Value elu(const Value& x) {
  const double v = x.val();
  if (v > 0.0) return detail::unary(x, v, 1.0, "elu");
  const double e = std::exp(v);
  return detail::unary(x, e - 1.0, e, "elu");
}
inline Value pow(const Value& x, double p) {
  const double v = x.val();
  return detail::unary(x, std::pow(v, p), p * std::pow(v, p - 1.0), "pow");
}

// |x| with the kink resolved to subgradient 0 at exactly 0.
inline Value abs(const Value& x) {
  const double v = x.val();
  if (v > 0.0) return detail::unary(x, v, 1.0, "abs");
  if (v < 0.0) return detail::unary(x, -v, -1.0, "abs");
  return detail::unary(x, 0.0, 0.0, "abs");
}

inline Value min(const Value& a, const Value& b) { return a.val() <= b.val() ? a : b; }
inline Value max(const Value& a, const Value& b) { return a.val() >= b.val() ? a : b; }

// Clamp as a branch: inside the interval the gradient passes through,
// outside the result is a plain constant (subgradient 0).
inline Value clamp(const Value& x, double lo, double hi) {
  if (x.val() < lo) return Value(lo);
  if (x.val() > hi) return Value(hi);
  return x;
}

// Fused inner product (optionally with bias): one tape node per output scalar
// instead of ~2n; constant operands contribute value but no entries. This is
// an internal optimization only, gradients are identical to the op-by-op form.
Value dot(std::span<const Value> a, std::span<const Value> b);
Value affine(std::span<const Value> w, std::span<const Value> x, const Value& bias);

// ---- helpers shared by code templated over double / Value -----------------

inline double val_of(double x) { return x; }
inline double val_of(const Value& x) { return x.val(); }

// True only for zeros with no gradient: plain 0.0, or a constant Value 0.
// (A tracked value that merely evaluates to zero still carries derivatives.)
inline bool structurally_zero(double x) { return x == 0.0; }
inline bool structurally_zero(const Value& x) { return x.is_const() && x.val() == 0.0; }

inline double clampv(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}
inline Value clampv(const Value& x, double lo, double hi) { return clamp(x, lo, hi); }

}  // namespace dipm::ad
