#pragma once

#include <array>
#include <cmath>

#include "errors.hpp"
#include "tape.hpp"

// 3D inverted pendulum on a planar cart. Generalized coordinates
// q = [x, y, theta, phi]: cart position, rod rotation about the local Y axis
// (lean along +x for theta > 0) and about the local X axis. The rod of length
// l carries the pendulum point mass at
//   p = [x + l sin(theta), y - l cos(theta) sin(phi), l cos(theta) cos(phi)],
// so upright (theta = phi = 0) puts the mass at height l above the cart.
// Everything is templated over the scalar so the same code runs on plain
// doubles and on tape values.
namespace dipm::ipm {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kGravityDefault = 9.81;
inline constexpr double kDefaultTotalMass = 70.0;
inline constexpr double kDtDefault = 1.0 / 60.0;

// Hard guard: |theta| and |phi| must stay below pi/2 minus this margin; the
// phi inertia entry degenerates like cos^2(theta) at the rim.
inline constexpr double kSingularityMargin = 0.05;
inline constexpr double kAngleLimit = kPi / 2.0 - kSingularityMargin;

inline constexpr double kRodMin = 0.3;
inline constexpr double kRodMax = 1.5;

template <class S>
struct BodyParams {
  S total_mass{kDefaultTotalMass};
  S cart_mass{0.1 * kDefaultTotalMass};
  S pend_mass{0.9 * kDefaultTotalMass};
  double gravity = kGravityDefault;

  // Default split: cart carries 10% of the body mass, pendulum 90%.
  static BodyParams from_total_mass(S m, double g = kGravityDefault) {
    BodyParams p;
    p.total_mass = m;
    p.cart_mass = 0.1 * m;
    p.pend_mass = 0.9 * m;
    p.gravity = g;
    return p;
  }

  // Explicit split (total is their exact sum); used e.g. to emulate a pinned
  // pivot with a very heavy cart.
  static BodyParams with_masses(S m_c, S m_p, double g = kGravityDefault) {
    BodyParams p;
    p.cart_mass = m_c;
    p.pend_mass = m_p;
    p.total_mass = m_c + m_p;
    p.gravity = g;
    return p;
  }
};

template <class S>
struct State {
  S x{0.0}, y{0.0}, theta{0.0}, phi{0.0};
};

template <class S>
struct Velocity {
  S xd{0.0}, yd{0.0}, thetad{0.0}, phid{0.0};
};

template <class S>
struct Accel {
  S xdd{0.0}, ydd{0.0}, thetadd{0.0}, phidd{0.0};
};

template <class S>
using Vec4 = std::array<S, 4>;
template <class S>
using Mat4 = std::array<std::array<S, 4>, 4>;

inline bool angles_admissible(double theta, double phi) {
  return std::fabs(theta) < kAngleLimit && std::fabs(phi) < kAngleLimit;
}

template <class S>
Mat4<S> mass_matrix(const State<S>& q, const S& l, const BodyParams<S>& bp) {
  using std::cos;
  using std::sin;
  const S st = sin(q.theta), ct = cos(q.theta);
  const S sp = sin(q.phi), cp = cos(q.phi);
  const S m = bp.cart_mass + bp.pend_mass;
  const S mpl = bp.pend_mass * l;
  const S mpl2 = mpl * l;
  Mat4<S> M;
  M[0] = {m, S(0.0), mpl * ct, S(0.0)};
  M[1] = {S(0.0), m, mpl * st * sp, S(0.0) - mpl * ct * cp};
  M[2] = {mpl * ct, mpl * st * sp, mpl2, S(0.0)};
  M[3] = {S(0.0), S(0.0) - mpl * ct * cp, S(0.0), mpl2 * ct * ct};
  return M;
}

template <class S>
Vec4<S> coriolis_vector(const State<S>& q, const Velocity<S>& v, const S& l,
                        const BodyParams<S>& bp) {
  using std::cos;
  using std::sin;
  const S st = sin(q.theta), ct = cos(q.theta);
  const S sp = sin(q.phi), cp = cos(q.phi);
  const S mpl = bp.pend_mass * l;
  const S mpl2 = mpl * l;
  const S td = v.thetad, pd = v.phid;
  Vec4<S> c;
  c[0] = S(0.0) - mpl * st * td * td;
  c[1] = mpl * (2.0 * st * cp * td * pd + ct * sp * (td * td + pd * pd));
  c[2] = mpl2 * st * cp * pd * pd;
  c[3] = S(0.0) - 2.0 * mpl2 * st * ct * td * pd;
  return c;
}

template <class S>
Vec4<S> gravity_vector(const State<S>& q, const S& l, const BodyParams<S>& bp) {
  using std::cos;
  using std::sin;
  const S st = sin(q.theta), ct = cos(q.theta);
  const S sp = sin(q.phi), cp = cos(q.phi);
  const S mgl = bp.pend_mass * bp.gravity * l;
  return {S(0.0), S(0.0), S(0.0) - mgl * st * cp, S(0.0) - mgl * ct * sp};
}

// Direct 4x4 Gaussian elimination with partial pivoting. Pivot selection
// branches on values only, so the factorization is differentiable wherever
// the pivot order is locally stable. Near-singular or badly conditioned
// systems raise NumericalError.
template <class S>
Vec4<S> solve4(Mat4<S> a, Vec4<S> b) {
  using dipm::ad::val_of;
  double piv_max = 0.0, piv_min = 0.0;
  for (int col = 0; col < 4; ++col) {
    int best = col;
    double best_abs = std::fabs(val_of(a[col][col]));
    for (int r = col + 1; r < 4; ++r) {
      const double cand = std::fabs(val_of(a[r][col]));
      if (cand > best_abs) {
        best_abs = cand;
        best = r;
      }
    }
    if (best_abs < 1e-12) throw NumericalError("solve4: singular matrix");
    if (best != col) {
      std::swap(a[best], a[col]);
      std::swap(b[best], b[col]);
    }
    piv_max = col == 0 ? best_abs : std::fmax(piv_max, best_abs);
    piv_min = col == 0 ? best_abs : std::fmin(piv_min, best_abs);
    for (int r = col + 1; r < 4; ++r) {
      if (dipm::ad::structurally_zero(a[r][col])) continue;
      const S f = a[r][col] / a[col][col];
      for (int c2 = col + 1; c2 < 4; ++c2) a[r][c2] = a[r][c2] - f * a[col][c2];
      b[r] = b[r] - f * b[col];
    }
  }
  if (piv_max / piv_min > 1e12)
    throw NumericalError("solve4: matrix condition beyond threshold");
  Vec4<S> x;
  for (int r = 3; r >= 0; --r) {
    S acc = b[r];
    for (int c2 = r + 1; c2 < 4; ++c2) acc = acc - a[r][c2] * x[c2];
    x[r] = acc / a[r][r];
  }
  return x;
}

// qdd = M^{-1} (F - C - G)
template <class S>
Accel<S> solve_accel(const State<S>& q, const Velocity<S>& v, const S& l,
                     const BodyParams<S>& bp, const Vec4<S>& f_net) {
  const Mat4<S> m = mass_matrix(q, l, bp);
  const Vec4<S> c = coriolis_vector(q, v, l, bp);
  const Vec4<S> g = gravity_vector(q, l, bp);
  Vec4<S> rhs;
  for (int i = 0; i < 4; ++i) rhs[i] = f_net[i] - c[i] - g[i];
  const Vec4<S> a = solve4(m, rhs);
  return Accel<S>{a[0], a[1], a[2], a[3]};
}

// Semi-implicit Euler: the freshly updated velocity advances the position.
template <class S>
void semi_implicit_step(State<S>& q, Velocity<S>& v, const Accel<S>& a, double dt) {
  v.xd = v.xd + dt * a.xdd;
  v.yd = v.yd + dt * a.ydd;
  v.thetad = v.thetad + dt * a.thetadd;
  v.phid = v.phid + dt * a.phidd;
  q.x = q.x + dt * v.xd;
  q.y = q.y + dt * v.yd;
  q.theta = q.theta + dt * v.thetad;
  q.phi = q.phi + dt * v.phid;
}

template <class S>
std::array<S, 3> rod_end_position(const State<S>& q, const S& l) {
  using std::cos;
  using std::sin;
  const S st = sin(q.theta), ct = cos(q.theta);
  const S sp = sin(q.phi), cp = cos(q.phi);
  return {q.x + l * st, q.y - l * ct * sp, l * ct * cp};
}

enum class ApplyAt { cart, rod_end };

// Q = J^T F for a Cartesian force applied at the cart or at the rod end;
// instantaneous power Q . qdot equals F . pdot of the application point.
template <class S>
Vec4<S> cartesian_to_generalized(const State<S>& q, const S& l,
                                 const std::array<S, 3>& f_cart, ApplyAt where) {
  using std::cos;
  using std::sin;
  if (where == ApplyAt::cart) return {f_cart[0], f_cart[1], S(0.0), S(0.0)};
  const S st = sin(q.theta), ct = cos(q.theta);
  const S sp = sin(q.phi), cp = cos(q.phi);
  Vec4<S> out;
  out[0] = f_cart[0];
  out[1] = f_cart[1];
  out[2] = l * ct * f_cart[0] + l * st * sp * f_cart[1] - l * st * cp * f_cart[2];
  out[3] = S(0.0) - l * ct * cp * f_cart[1] - l * ct * sp * f_cart[2];
  return out;
}

// Kinetic plus pendulum potential energy; conserved by the ideal dynamics on
// the planar slice (phi == phid == 0) and used by drift/dissipation checks.
template <class S>
S total_energy(const State<S>& q, const Velocity<S>& v, const S& l,
               const BodyParams<S>& bp) {
  using std::cos;
  const Mat4<S> m = mass_matrix(q, l, bp);
  const Vec4<S> qd = {v.xd, v.yd, v.thetad, v.phid};
  S t{0.0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) t = t + 0.5 * qd[i] * m[i][j] * qd[j];
  return t + bp.pend_mass * bp.gravity * l * cos(q.theta) * cos(q.phi);
}

}  // namespace dipm::ipm
