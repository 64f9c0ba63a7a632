#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "nets.hpp"
#include "tape.hpp"

namespace dipm::models {

// Architecture constants: balance-residual LSTM over
// [theta, phi, xdot, ydot, thetadot, phidot, M]; rod-length MLP over
// [theta, phi, xdot, ydot, thetadot, phidot, F_self(4), M, l]; interaction
// MLP over pairwise [dx, dy, theta_n, phi_n, theta_j, phi_j, dxd, dyd,
// dthetad, dphid].
inline const nn::LstmShape kSelfShape{7, 256, 4};
inline const nn::MlpShape kRodShape{12, {128, 128}, 1};
inline const nn::MlpShape kInterShape{10, {512, 512}, 4};

inline constexpr double kMuInit = 1.0;

// Cart friction is kept positive through mu = softplus(rho).
inline double softplus_inv(double mu) { return std::log(std::expm1(mu)); }

struct ModelSet {
  nn::ParamStore store;
  uint64_t init_seed = 0;

  static ModelSet initialized(uint64_t seed);
  static ModelSet load(const std::string& path);
  void save(const std::string& path) const;
  uint64_t fingerprint() const { return nn::fingerprint(store); }

  double rho() const { return store.require("friction.rho").data.at(0); }
  double friction_mu() const { return nn::act_softplus(rho()); }
  void set_friction_mu(double mu) { store.require("friction.rho").data.at(0) = softplus_inv(mu); }
};

// Which parameter groups stay constant during a taped rollout. Everything
// frozen is the plain-simulation configuration.
struct FreezePolicy {
  bool friction = true;
  bool self = true;
  bool rod = true;
  bool inter = true;

  static FreezePolicy all_frozen() { return {}; }
  // Stage 1 fits friction + the per-agent nets on single-agent data.
  static FreezePolicy stage1() { return {false, false, false, true}; }
  // Stage 2 fits the interaction net, optionally keeping stage-1 groups fixed.
  static FreezePolicy stage2(bool keep_stage1_fixed) {
    return {keep_stage1_fixed, keep_stage1_fixed, keep_stage1_fixed, false};
  }
};

// Registration-order map from tape parameter ids back to named arrays, used
// to scatter gradients onto the master weights.
struct BindRange {
  std::string array;
  size_t param_begin = 0;
  size_t count = 0;
};

template <class S>
struct ModelInstance {
  S rho{0.0};
  nn::LstmInstance<S> self;
  nn::MlpInstance<S> rod;
  nn::MlpInstance<S> inter;

  S friction_mu() const { return nn::act_softplus(rho); }
};

namespace detail {

inline bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

template <class S>
std::vector<S> bind_array(const nn::ParamArray& a, ad::Tape* tape, bool frozen,
                          std::vector<BindRange>* report) {
  std::vector<S> out(a.size());
  if constexpr (std::is_same_v<S, ad::Value>) {
    if (frozen) {
      for (size_t i = 0; i < a.size(); ++i) out[i] = ad::Value(a.data[i]);
    } else {
      if (tape == nullptr)
        throw ValidationError("models: binding learnable '" + a.name + "' needs a tape");
      if (report != nullptr)
        report->push_back(BindRange{a.name, tape->num_params(), a.size()});
      for (size_t i = 0; i < a.size(); ++i) out[i] = tape->parameter(a.data[i]);
    }
  } else {
    (void)tape;
    (void)report;
    std::copy(a.data.begin(), a.data.end(), out.begin());
  }
  return out;
}

}  // namespace detail

// Bind master weights to the scalar type of a rollout. For S = double this is
// a plain copy; for S = Value learnable groups become registered tape
// parameters (in a fixed array order) and frozen groups become constants.
// A frozen net whose output head is exactly zero is marked skip_zero: its
// output and input Jacobian are identically zero, so evaluation is skipped.
template <class S>
ModelInstance<S> instantiate(const ModelSet& set, ad::Tape* tape, const FreezePolicy& fp,
                             std::vector<BindRange>* report = nullptr) {
  using detail::bind_array;
  ModelInstance<S> inst;

  const auto& rho_arr = set.store.require("friction.rho");
  inst.rho = bind_array<S>(rho_arr, tape, fp.friction, report)[0];

  auto& lstm = inst.self;
  lstm.in = kSelfShape.in;
  lstm.hidden = kSelfShape.hidden;
  lstm.out = kSelfShape.out;
  lstm.wi = bind_array<S>(set.store.require("self_lstm.wi"), tape, fp.self, report);
  lstm.bi = bind_array<S>(set.store.require("self_lstm.bi"), tape, fp.self, report);
  lstm.wf = bind_array<S>(set.store.require("self_lstm.wf"), tape, fp.self, report);
  lstm.bf = bind_array<S>(set.store.require("self_lstm.bf"), tape, fp.self, report);
  lstm.wg = bind_array<S>(set.store.require("self_lstm.wg"), tape, fp.self, report);
  lstm.bg = bind_array<S>(set.store.require("self_lstm.bg"), tape, fp.self, report);
  lstm.wo = bind_array<S>(set.store.require("self_lstm.wo"), tape, fp.self, report);
  lstm.bo = bind_array<S>(set.store.require("self_lstm.bo"), tape, fp.self, report);
  lstm.wy = bind_array<S>(set.store.require("self_lstm.wy"), tape, fp.self, report);
  lstm.by = bind_array<S>(set.store.require("self_lstm.by"), tape, fp.self, report);
  lstm.skip_zero = fp.self && detail::all_zero(set.store.require("self_lstm.wy").data) &&
                   detail::all_zero(set.store.require("self_lstm.by").data);

  auto bind_mlp = [&](nn::MlpInstance<S>& m, const std::string& prefix,
                      const nn::MlpShape& shape, bool frozen) {
    size_t in = shape.in;
    std::vector<size_t> outs(shape.hidden);
    outs.push_back(shape.out);
    for (size_t li = 0; li < outs.size(); ++li) {
      typename nn::MlpInstance<S>::Layer layer;
      layer.in = in;
      layer.out = outs[li];
      layer.act = li + 1 < outs.size() ? nn::Act::elu : nn::Act::identity;
      layer.w = bind_array<S>(set.store.require(prefix + ".w" + std::to_string(li)), tape,
                              frozen, report);
      layer.b = bind_array<S>(set.store.require(prefix + ".b" + std::to_string(li)), tape,
                              frozen, report);
      m.layers.push_back(std::move(layer));
      in = outs[li];
    }
    const std::string head = std::to_string(outs.size() - 1);
    m.skip_zero = frozen && detail::all_zero(set.store.require(prefix + ".w" + head).data) &&
                  detail::all_zero(set.store.require(prefix + ".b" + head).data);
  };
  bind_mlp(inst.rod, "rod_mlp", kRodShape, fp.rod);
  bind_mlp(inst.inter, "inter_mlp", kInterShape, fp.inter);
  return inst;
}

}  // namespace dipm::models
