#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "core/gradcheck.hpp"
#include "core/models.hpp"
#include "core/nets.hpp"
#include "core/tape.hpp"

namespace nn = dipm::nn;
namespace models = dipm::models;
using dipm::ad::Tape;
using dipm::ad::TapeScope;
using dipm::ad::Value;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("single identity layer computes an affine map") {
  nn::MlpInstance<double> mlp;
  mlp.layers.push_back({{2.0}, {1.0}, 1, 1, nn::Act::identity});
  const double x[] = {3.0};
  auto y = mlp.forward(std::span<const double>(x, 1));
  CHECK(y.size() == 1);
  CHECK(y[0] == 7.0);
}

TEST_CASE("two-layer elu network matches a hand evaluation") {
  // hidden: w=[[1, -1], [0.5, 0.5]], b=[0.1, -0.2]; head: w=[[2, -1]], b=[0.3]
  nn::MlpInstance<double> mlp;
  mlp.layers.push_back({{1.0, -1.0, 0.5, 0.5}, {0.1, -0.2}, 2, 2, nn::Act::elu});
  mlp.layers.push_back({{2.0, -1.0}, {0.3}, 2, 1, nn::Act::identity});
  const double x[] = {0.4, 0.9};
  const double h0 = nn::act_elu(1.0 * 0.4 - 1.0 * 0.9 + 0.1);
  const double h1 = nn::act_elu(0.5 * 0.4 + 0.5 * 0.9 - 0.2);
  const double expect = 2.0 * h0 - 1.0 * h1 + 0.3;
  auto y = mlp.forward(std::span<const double>(x, 2));
  CHECK(y[0] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("mlp rejects wrong feature length") {
  nn::MlpInstance<double> mlp;
  mlp.layers.push_back({{2.0}, {1.0}, 1, 1, nn::Act::identity});
  const double x[] = {1.0, 2.0};
  CHECK_THROWS_AS((void)mlp.forward(std::span<const double>(x, 2)), dipm::ValidationError);
}

TEST_CASE("mlp gradient matches finite differences") {
  // 2-3-1 elu net, all weights and the input as parameters.
  const auto f = [](std::span<const Value> p) {
    size_t k = 0;
    auto take = [&](size_t n) {
      std::vector<Value> v(p.begin() + k, p.begin() + k + n);
      k += n;
      return v;
    };
    nn::MlpInstance<Value> mlp;
    mlp.layers.push_back({take(6), take(3), 2, 3, nn::Act::elu});
    mlp.layers.push_back({take(3), take(1), 3, 1, nn::Act::identity});
    std::vector<Value> x = take(2);
    return mlp.forward(x)[0];
  };
  std::mt19937_64 rng(31337u);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<double> p(15);
  for (double& w : p) w = u(rng);
  auto r = dipm::ad::grad_check(f, p, 1e-6);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("all-zero lstm outputs zero and keeps zero state") {
  nn::LstmInstance<double> lstm;
  lstm.in = 2;
  lstm.hidden = 3;
  lstm.out = 2;
  const size_t cols = lstm.in + lstm.hidden;
  lstm.wi.assign(lstm.hidden * cols, 0.0);
  lstm.wf = lstm.wg = lstm.wo = lstm.wi;
  lstm.bi.assign(lstm.hidden, 0.0);
  lstm.bf = lstm.bg = lstm.bo = lstm.bi;
  lstm.wy.assign(lstm.out * lstm.hidden, 0.0);
  lstm.by.assign(lstm.out, 0.0);
  auto rec = lstm.initial_state();
  const double x[] = {0.7, -1.1};
  auto y = lstm.step(std::span<const double>(x, 2), rec);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  for (double h : rec.h) CHECK(h == 0.0);
  for (double c : rec.c) CHECK(c == 0.0);
}

TEST_CASE("one-unit lstm matches the gate equations by hand") {
  nn::LstmInstance<double> lstm;
  lstm.in = 1;
  lstm.hidden = 1;
  lstm.out = 1;
  lstm.wi = {0.3, 0.1};
  lstm.bi = {0.05};
  lstm.wf = {-0.2, 0.4};
  lstm.bf = {0.0};
  lstm.wg = {0.7, -0.3};
  lstm.bg = {-0.1};
  lstm.wo = {0.5, 0.2};
  lstm.bo = {0.1};
  lstm.wy = {1.5};
  lstm.by = {-0.25};
  auto rec = lstm.initial_state();
  const double x0 = 0.6;

  const double gi = nn::act_sigmoid(0.3 * x0 + 0.05);
  const double gf = nn::act_sigmoid(-0.2 * x0);
  const double gg = std::tanh(0.7 * x0 - 0.1);
  const double go = nn::act_sigmoid(0.5 * x0 + 0.1);
  const double c1 = gf * 0.0 + gi * gg;
  const double h1 = go * std::tanh(c1);

  auto y = lstm.step(std::span<const double>(&x0, 1), rec);
  CHECK(rec.c[0] == doctest::Approx(c1).epsilon(1e-15));
  CHECK(rec.h[0] == doctest::Approx(h1).epsilon(1e-15));
  CHECK(y[0] == doctest::Approx(1.5 * h1 - 0.25).epsilon(1e-15));

  // Second step must use the carried state.
  const double x1 = -0.2;
  const double gi2 = nn::act_sigmoid(0.3 * x1 + 0.1 * h1 + 0.05);
  const double gf2 = nn::act_sigmoid(-0.2 * x1 + 0.4 * h1);
  const double gg2 = std::tanh(0.7 * x1 - 0.3 * h1 - 0.1);
  const double go2 = nn::act_sigmoid(0.5 * x1 + 0.2 * h1 + 0.1);
  const double c2 = gf2 * c1 + gi2 * gg2;
  const double h2 = go2 * std::tanh(c2);
  auto y2 = lstm.step(std::span<const double>(&x1, 1), rec);
  CHECK(y2[0] == doctest::Approx(1.5 * h2 - 0.25).epsilon(1e-14));
}

TEST_CASE("lstm gradient over two recurrent steps matches finite differences") {
  const size_t in = 2, hidden = 3, out = 2;
  const size_t cols = in + hidden;
  const auto f = [=](std::span<const Value> p) {
    size_t k = 0;
    auto take = [&](size_t n) {
      std::vector<Value> v(p.begin() + k, p.begin() + k + n);
      k += n;
      return v;
    };
    nn::LstmInstance<Value> lstm;
    lstm.in = in;
    lstm.hidden = hidden;
    lstm.out = out;
    lstm.wi = take(hidden * cols);
    lstm.bi = take(hidden);
    lstm.wf = take(hidden * cols);
    lstm.bf = take(hidden);
    lstm.wg = take(hidden * cols);
    lstm.bg = take(hidden);
    lstm.wo = take(hidden * cols);
    lstm.bo = take(hidden);
    lstm.wy = take(out * hidden);
    lstm.by = take(out);
    std::vector<Value> x1 = take(in);
    std::vector<Value> x2 = take(in);
    auto rec = lstm.initial_state();
    auto y1 = lstm.step(x1, rec);
    auto y2 = lstm.step(x2, rec);
    return y1[0] + 2.0 * y2[1] + y2[0] * y1[1];
  };
  const size_t n_params = 4 * (hidden * cols + hidden) + out * hidden + out + 2 * in;
  std::mt19937_64 rng(777u);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> p(n_params);
  for (double& w : p) w = u(rng);
  auto r = dipm::ad::grad_check(f, p, 1e-6);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
  std::vector<double> w = {1.0, -2.0};
  std::vector<double> g = {0.0, 0.0};
  nn::AdamState st(2);
  nn::adam_step(w, g, st, nn::AdamConfig{}, 1.0, "test");
  CHECK(w[0] == 1.0);
  CHECK(w[1] == -2.0);
}

TEST_CASE("adam: first unit-gradient step moves by about the learning rate") {
  std::vector<double> w = {0.0};
  std::vector<double> g = {1.0};
  nn::AdamState st(1);
  nn::AdamConfig cfg;
  cfg.lr = 3e-4;
  nn::adam_step(w, g, st, cfg, 1.0, "test");
  CHECK(w[0] == doctest::Approx(-3e-4).epsilon(1e-6));
}

TEST_CASE("adam: drives a quadratic toward zero monotonically") {
  std::vector<double> w = {1.0};
  nn::AdamState st(1);
  nn::AdamConfig cfg;
  cfg.lr = 0.05;
  double prev = std::fabs(w[0]);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> g = {w[0]};
    nn::adam_step(w, g, st, cfg, 1.0, "quad");
    CHECK(std::fabs(w[0]) <= prev + 1e-12);
    prev = std::fabs(w[0]);
  }
  CHECK(std::fabs(w[0]) < 0.2);
}

TEST_CASE("adam: learning-rate scale multiplies the step") {
  std::vector<double> w1 = {0.0}, w2 = {0.0};
  std::vector<double> g = {1.0};
  nn::AdamState s1(1), s2(1);
  nn::AdamConfig cfg;
  cfg.lr = 1e-3;
  nn::adam_step(w1, g, s1, cfg, 1.0, "a");
  nn::adam_step(w2, g, s2, cfg, 100.0, "b");
  CHECK(w2[0] == doctest::Approx(100.0 * w1[0]).epsilon(1e-12));
}

TEST_CASE("adam: non-finite gradient aborts naming the group") {
  std::vector<double> w = {0.0};
  std::vector<double> g = {std::nan("")};
  nn::AdamState st(1);
  CHECK_THROWS_WITH_AS(nn::adam_step(w, g, st, nn::AdamConfig{}, 1.0, "friction.rho"),
                       doctest::Contains("friction.rho"), dipm::NumericalError);
}

TEST_CASE("model initialization is seed-deterministic with documented ranges") {
  auto a = models::ModelSet::initialized(42);
  auto b = models::ModelSet::initialized(42);
  auto c = models::ModelSet::initialized(43);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());

  CHECK(a.friction_mu() == doctest::Approx(1.0).epsilon(1e-12));

  // LSTM gate weights within +-0.01, head zero.
  const auto& wi = a.store.require("self_lstm.wi");
  CHECK(wi.shape == std::vector<size_t>{256, 263});
  double max_abs = 0.0;
  for (double w : wi.data) max_abs = std::fmax(max_abs, std::fabs(w));
  CHECK(max_abs <= 0.01);
  CHECK(max_abs > 0.0);
  for (double w : a.store.require("self_lstm.wy").data) CHECK(w == 0.0);
  for (double w : a.store.require("self_lstm.by").data) CHECK(w == 0.0);

  // MLP hidden layers within +-1/sqrt(fan_in), heads zero.
  const auto& w0 = a.store.require("inter_mlp.w0");
  CHECK(w0.shape == std::vector<size_t>{512, 10});
  const double bound0 = 1.0 / std::sqrt(10.0);
  for (double w : w0.data) CHECK(std::fabs(w) <= bound0);
  for (double w : a.store.require("inter_mlp.w2").data) CHECK(w == 0.0);
  for (double w : a.store.require("rod_mlp.w2").data) CHECK(w == 0.0);
  CHECK(a.store.require("rod_mlp.w0").shape == std::vector<size_t>{128, 12});
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  auto set = models::ModelSet::initialized(7);
  set.set_friction_mu(1.7);
  const std::string path = temp_path("dipm_test_ckpt.bin");
  set.save(path);
  auto loaded = models::ModelSet::load(path);
  CHECK(loaded.fingerprint() == set.fingerprint());
  CHECK(loaded.init_seed == 7);
  CHECK(loaded.friction_mu() == set.friction_mu());
  const auto& a = set.store.require("self_lstm.wf").data;
  const auto& b = loaded.store.require("self_lstm.wf").data;
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); i += 997) CHECK(a[i] == b[i]);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects missing and corrupt files") {
  CHECK_THROWS_AS((void)models::ModelSet::load(temp_path("dipm_no_such_file.bin")),
                  dipm::IoError);
  const std::string path = temp_path("dipm_corrupt.bin");
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint at all", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS((void)models::ModelSet::load(path), dipm::IoError);
  std::filesystem::remove(path);
}

TEST_CASE("instantiation registers every learnable scalar exactly once") {
  auto set = models::ModelSet::initialized(3);
  Tape tape;
  TapeScope scope(tape);
  std::vector<models::BindRange> report;
  auto inst = models::instantiate<Value>(set, &tape, models::FreezePolicy::stage1(), &report);
  size_t counted = 0;
  for (const auto& r : report) counted += r.count;
  CHECK(counted == tape.num_params());
  // friction + 10 lstm arrays + 6 rod arrays are learnable in stage 1.
  CHECK(report.size() == 1 + 10 + 6);
  const size_t lstm_params = 4 * (256 * 263 + 256) + 4 * 256 + 4;
  const size_t rod_params = 128 * 12 + 128 + 128 * 128 + 128 + 128 + 1;
  CHECK(counted == 1 + lstm_params + rod_params);
  CHECK_FALSE(inst.self.skip_zero);  // learnable groups must not be skipped
  CHECK_FALSE(inst.rod.skip_zero);
  CHECK(inst.inter.skip_zero);  // frozen with a zero head
}

TEST_CASE("frozen zero-head nets are skipped; nonzero heads are not") {
  auto set = models::ModelSet::initialized(3);
  auto frozen = models::instantiate<double>(set, nullptr, models::FreezePolicy::all_frozen());
  CHECK(frozen.self.skip_zero);
  CHECK(frozen.rod.skip_zero);
  CHECK(frozen.inter.skip_zero);

  set.store.require("inter_mlp.b2").data[1] = 0.25;
  auto frozen2 = models::instantiate<double>(set, nullptr, models::FreezePolicy::all_frozen());
  CHECK_FALSE(frozen2.inter.skip_zero);
}

TEST_CASE("friction reparameterization is positive and invertible") {
  auto set = models::ModelSet::initialized(1);
  for (double mu : {0.3, 1.0, 2.0, 5.0}) {
    set.set_friction_mu(mu);
    CHECK(set.friction_mu() == doctest::Approx(mu).epsilon(1e-12));
  }
  set.store.require("friction.rho").data[0] = -30.0;  // extreme rho still positive mu
  CHECK(set.friction_mu() > 0.0);
}

TEST_SUITE_END();
