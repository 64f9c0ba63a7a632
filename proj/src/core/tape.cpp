#include "tape.hpp"

#include <atomic>
#include <string>

namespace dipm::ad {

namespace {
std::atomic<uint32_t> g_tape_ids{1};
thread_local Tape* g_active = nullptr;
}  // namespace

Tape::Tape() : id_(g_tape_ids.fetch_add(1)) {}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& t) : prev_(g_active) { g_active = &t; }
TapeScope::~TapeScope() { g_active = prev_; }

namespace detail {
void throw_nonfinite(const char* op) {
  throw NumericalError(std::string("autodiff: non-finite result or domain violation in '") +
                       op + "'");
}
void throw_no_tape(const char* op) {
  throw ValidationError(std::string("autodiff: '") + op +
                        "' on tracked values with no active tape");
}
void throw_tape_mix(const char* op) {
  throw ValidationError(std::string("autodiff: '") + op +
                        "' mixes values from different tapes");
}
}  // namespace detail

Value Tape::record(std::span<const Value> inputs, std::span<const double> partials,
                   double value) {
  check_open();
  if (inputs.size() != partials.size())
    throw ValidationError("tape: record() inputs/partials size mismatch");
  if (!std::isfinite(value)) detail::throw_nonfinite("record");
  bool any_tracked = false;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].is_const()) continue;
    if (inputs[i].tape_id() != id_) detail::throw_tape_mix("record");
    if (!std::isfinite(partials[i])) detail::throw_nonfinite("record");
    parents_.push_back(static_cast<uint32_t>(inputs[i].node()));
    partials_.push_back(partials[i]);
    any_tracked = true;
  }
  // All-constant op: nothing was recorded, the result is a plain constant.
  if (!any_tracked) return Value(value);
  return Value::tracked(value, push_node(), id_);
}

size_t Tape::mark() {
  marks_.push_back(node_end_.size());
  return node_end_.size();
}

void Tape::rewind(size_t mark_value) {
  if (mark_value > node_end_.size())
    throw ValidationError("tape: rewind past the end of the tape");
  const uint64_t entry_end = mark_value == 0 ? 0 : node_end_[mark_value - 1];
  node_end_.resize(mark_value);
  parents_.resize(entry_end);
  partials_.resize(entry_end);
  while (!param_nodes_.empty() && param_nodes_.back() >= mark_value) param_nodes_.pop_back();
  while (!marks_.empty() && marks_.back() > mark_value) marks_.pop_back();
}

void Tape::reset() {
  parents_.clear();
  partials_.clear();
  node_end_.clear();
  param_nodes_.clear();
  marks_.clear();
  sealed_ = false;
  id_ = g_tape_ids.fetch_add(1);
}

Gradients Tape::backward(const Value& seed) const {
  if (seed.is_const() || seed.tape_id() != id_)
    throw ValidationError("autodiff: backward seed is not on this tape");
  std::vector<double> adj(node_end_.size(), 0.0);
  adj[static_cast<size_t>(seed.node())] = 1.0;
  for (int64_t i = seed.node(); i >= 0; --i) {
    const double a = adj[static_cast<size_t>(i)];
    if (a == 0.0) continue;
    const uint64_t begin = i == 0 ? 0 : node_end_[static_cast<size_t>(i) - 1];
    const uint64_t end = node_end_[static_cast<size_t>(i)];
    for (uint64_t e = begin; e < end; ++e) adj[parents_[e]] += a * partials_[e];
  }
  std::vector<double> g(param_nodes_.size());
  for (size_t k = 0; k < param_nodes_.size(); ++k) g[k] = adj[param_nodes_[k]];
  return Gradients(std::move(g));
}

Value dot(std::span<const Value> a, std::span<const Value> b) {
  return affine(a, b, Value(0.0));
}

Value affine(std::span<const Value> w, std::span<const Value> x, const Value& bias) {
  if (w.size() != x.size())
    throw ValidationError("autodiff: affine() operand length mismatch");
  double v = bias.val();
  for (size_t i = 0; i < w.size(); ++i) v += w[i].val() * x[i].val();
  if (!std::isfinite(v)) detail::throw_nonfinite("affine");

  Tape* t = active_tape();
  bool any_tracked = !bias.is_const();
  if (!any_tracked) {
    for (size_t i = 0; i < w.size() && !any_tracked; ++i)
      any_tracked = !w[i].is_const() || !x[i].is_const();
  }
  if (!any_tracked) return Value(v);
  if (t == nullptr) detail::throw_no_tape("affine");

  // Build one n-ary node; constants contribute no entries.
  static thread_local std::vector<Value> ins;
  static thread_local std::vector<double> parts;
  ins.clear();
  parts.clear();
  ins.reserve(2 * w.size() + 1);
  parts.reserve(2 * w.size() + 1);
  for (size_t i = 0; i < w.size(); ++i) {
    if (!w[i].is_const()) {
      ins.push_back(w[i]);
      parts.push_back(x[i].val());
    }
    if (!x[i].is_const()) {
      ins.push_back(x[i]);
      parts.push_back(w[i].val());
    }
  }
  if (!bias.is_const()) {
    ins.push_back(bias);
    parts.push_back(1.0);
  }
  return t->record(ins, parts, v);
}

}  // namespace dipm::ad
