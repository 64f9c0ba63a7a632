#include "gradcheck.hpp"

#include <cmath>

namespace dipm::ad {

namespace {

double eval_plain(const ScalarFn& f, std::span<const double> p) {
  std::vector<Value> xs(p.size());
  for (size_t i = 0; i < p.size(); ++i) xs[i] = Value(p[i]);
  const double v = f(xs).val();
  if (!std::isfinite(v))
    throw NumericalError("grad_check: non-finite function value at probe point");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::span<const double> params, double h) {
  if (h <= 0.0) throw ValidationError("grad_check: step size must be positive");

  // Reverse-mode pass.
  Tape tape;
  std::vector<double> ad(params.size());
  {
    TapeScope scope(tape);
    std::vector<Value> xs(params.size());
    for (size_t i = 0; i < params.size(); ++i) xs[i] = tape.parameter(params[i]);
    const Value y = f(xs);
    if (!std::isfinite(y.val()))
      throw NumericalError("grad_check: non-finite function value at base point");
    if (y.is_const()) {
      // Output does not depend on any input; gradient is identically zero.
      std::fill(ad.begin(), ad.end(), 0.0);
    } else {
      const Gradients g = tape.backward(y);
      ad = g.params();
    }
  }

  // Central differences.
  GradCheckResult r;
  r.ad_grad = ad;
  r.fd_grad.resize(params.size());
  std::vector<double> probe(params.begin(), params.end());
  for (size_t i = 0; i < params.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    double fp = 0.0, fm = 0.0;
    try {
      fp = eval_plain(f, probe);
      probe[i] = x0 - h;
      fm = eval_plain(f, probe);
    } catch (const NumericalError&) {
      probe[i] = x0;
      throw NumericalError("grad_check: non-finite function value while probing input " +
                           std::to_string(i));
    }
    probe[i] = x0;
    r.fd_grad[i] = (fp - fm) / (2.0 * h);
    const double err = std::fabs(ad[i] - r.fd_grad[i]) /
                       std::fmax(1.0, std::fabs(r.fd_grad[i]));
    if (err >= r.max_rel_err) {
      if (err > r.max_rel_err) r.worst_index = i;
      r.max_rel_err = err;
    }
  }
  return r;
}

}  // namespace dipm::ad
