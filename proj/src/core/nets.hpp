#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tape.hpp"

namespace dipm::nn {

// ---- master parameter storage ----------------------------------------------

struct ParamArray {
  std::string name;
  std::vector<size_t> shape;  // row-major
  std::vector<double> data;

  size_t size() const { return data.size(); }
};

struct ParamStore {
  std::vector<ParamArray> arrays;

  ParamArray& add(const std::string& name, std::vector<size_t> shape);
  ParamArray* find(const std::string& name);
  const ParamArray* find(const std::string& name) const;
  ParamArray& require(const std::string& name);
  const ParamArray& require(const std::string& name) const;
  size_t total_size() const;
};

// Weight checkpoint: binary file with a JSON header manifest (array names,
// shapes, byte offsets) followed by little-endian float64 payload.
void save_checkpoint(const ParamStore& store, const std::string& path, uint64_t init_seed);
ParamStore load_checkpoint(const std::string& path, uint64_t* init_seed = nullptr);
uint64_t fingerprint(const ParamStore& store);

// ---- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected update in place. lr_scale multiplies the base rate for
// this parameter group. Non-finite gradients abort, naming the culprit.
void adam_step(std::span<double> w, std::span<const double> g, AdamState& st,
               const AdamConfig& cfg, double lr_scale, const std::string& group_name);

// ---- activation helpers usable from code templated over double/Value --------

inline double act_elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline ad::Value act_elu(const ad::Value& x) { return ad::elu(x); }
inline double act_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline ad::Value act_sigmoid(const ad::Value& x) { return ad::sigmoid(x); }
inline double act_tanh(double x) { return std::tanh(x); }
inline ad::Value act_tanh(const ad::Value& x) { return ad::tanh(x); }
inline double act_softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}
inline ad::Value act_softplus(const ad::Value& x) { return ad::softplus(x); }

template <class S>
S affine_row(std::span<const S> w, std::span<const S> x, const S& b) {
  if constexpr (std::is_same_v<S, ad::Value>) {
    return ad::affine(w, x, b);
  } else {
    double acc = b;
    for (size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k];
    return acc;
  }
}

// ---- multilayer perceptron ---------------------------------------------------

enum class Act { identity, elu };

struct MlpShape {
  size_t in = 0;
  std::vector<size_t> hidden;
  size_t out = 0;
};

// Arrays "<prefix>.w0"/"<prefix>.b0", "<prefix>.w1"/... with the last layer as
// the linear head.
void add_mlp_params(ParamStore& store, const std::string& prefix, const MlpShape& shape);

// Hidden layers uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] (biases zero),
// output head zero.
void init_mlp(ParamStore& store, const std::string& prefix, const MlpShape& shape,
              std::mt19937_64& rng);

template <class S>
struct MlpInstance {
  struct Layer {
    std::vector<S> w, b;
    size_t in = 0, out = 0;
    Act act = Act::identity;
  };
  std::vector<Layer> layers;
  // Frozen nets with an all-zero head have identically zero output and zero
  // input Jacobian; forward returns constants without touching the layers.
  bool skip_zero = false;

  size_t out_size() const { return layers.empty() ? 0 : layers.back().out; }

  std::vector<S> forward(std::span<const S> x) const {
    if (skip_zero) return std::vector<S>(out_size(), S(0.0));
    if (layers.empty() || x.size() != layers.front().in)
      throw ValidationError("mlp: feature length mismatch");
    std::vector<S> cur(x.begin(), x.end());
    std::vector<S> next;
    for (const auto& layer : layers) {
      next.assign(layer.out, S(0.0));
      for (size_t u = 0; u < layer.out; ++u) {
        S acc = affine_row<S>({layer.w.data() + u * layer.in, layer.in},
                              {cur.data(), layer.in}, layer.b[u]);
        next[u] = layer.act == Act::elu ? act_elu(acc) : acc;
      }
      cur.swap(next);
    }
    return cur;
  }
};

// ---- single-layer LSTM with a linear output head -----------------------------

struct LstmShape {
  size_t in = 0, hidden = 0, out = 0;
};

// Gate arrays "<prefix>.wi/.bi/.wf/.bf/.wg/.bg/.wo/.bo" sized
// [hidden x (in+hidden)] / [hidden]; head "<prefix>.wy/.by".
void add_lstm_params(ParamStore& store, const std::string& prefix, const LstmShape& shape);

// Gate weights uniform in [-0.01, 0.01] (biases zero), head zero.
void init_lstm(ParamStore& store, const std::string& prefix, const LstmShape& shape,
               std::mt19937_64& rng);

template <class S>
struct LstmInstance {
  size_t in = 0, hidden = 0, out = 0;
  std::vector<S> wi, bi, wf, bf, wg, bg, wo, bo, wy, by;
  bool skip_zero = false;

  struct RecState {
    std::vector<S> h, c;
  };

  RecState initial_state() const {
    return RecState{std::vector<S>(hidden, S(0.0)), std::vector<S>(hidden, S(0.0))};
  }

  std::vector<S> step(std::span<const S> x, RecState& rec) const {
    if (x.size() != in) throw ValidationError("lstm: feature length mismatch");
    if (skip_zero) return std::vector<S>(out, S(0.0));
    std::vector<S> xh(in + hidden);
    for (size_t k = 0; k < in; ++k) xh[k] = x[k];
    for (size_t k = 0; k < hidden; ++k) xh[in + k] = rec.h[k];
    const size_t cols = in + hidden;
    std::vector<S> h_new(hidden), c_new(hidden);
    for (size_t u = 0; u < hidden; ++u) {
      std::span<const S> xs(xh.data(), cols);
      const S gi = act_sigmoid(affine_row<S>({wi.data() + u * cols, cols}, xs, bi[u]));
      const S gf = act_sigmoid(affine_row<S>({wf.data() + u * cols, cols}, xs, bf[u]));
      const S gg = act_tanh(affine_row<S>({wg.data() + u * cols, cols}, xs, bg[u]));
      const S go = act_sigmoid(affine_row<S>({wo.data() + u * cols, cols}, xs, bo[u]));
      c_new[u] = gf * rec.c[u] + gi * gg;
      h_new[u] = go * act_tanh(c_new[u]);
    }
    rec.h.swap(h_new);
    rec.c.swap(c_new);
    std::vector<S> y(out);
    for (size_t u = 0; u < out; ++u)
      y[u] = affine_row<S>({wy.data() + u * hidden, hidden},
                           {rec.h.data(), hidden}, by[u]);
    return y;
  }
};

}  // namespace dipm::nn
