#include "models.hpp"

#include "rng.hpp"

namespace dipm::models {

ModelSet ModelSet::initialized(uint64_t seed) {
  ModelSet set;
  set.init_seed = seed;
  set.store.add("friction.rho", {1}).data[0] = softplus_inv(kMuInit);
  nn::add_lstm_params(set.store, "self_lstm", kSelfShape);
  nn::add_mlp_params(set.store, "rod_mlp", kRodShape);
  nn::add_mlp_params(set.store, "inter_mlp", kInterShape);

  auto self_rng = make_stream(seed, "init.self_lstm");
  nn::init_lstm(set.store, "self_lstm", kSelfShape, self_rng);
  auto rod_rng = make_stream(seed, "init.rod_mlp");
  nn::init_mlp(set.store, "rod_mlp", kRodShape, rod_rng);
  auto inter_rng = make_stream(seed, "init.inter_mlp");
  nn::init_mlp(set.store, "inter_mlp", kInterShape, inter_rng);
  return set;
}

ModelSet ModelSet::load(const std::string& path) {
  ModelSet set;
  set.store = nn::load_checkpoint(path, &set.init_seed);
  // Validate the expected inventory up front so simulate fails with a clear
  // message rather than deep inside a rollout.
  (void)set.store.require("friction.rho");
  for (const char* g : {"wi", "bi", "wf", "bf", "wg", "bg", "wo", "bo", "wy", "by"})
    (void)set.store.require(std::string("self_lstm.") + g);
  for (const char* a : {"w0", "b0", "w1", "b1", "w2", "b2"}) {
    (void)set.store.require(std::string("rod_mlp.") + a);
    (void)set.store.require(std::string("inter_mlp.") + a);
  }
  return set;
}

void ModelSet::save(const std::string& path) const {
  nn::save_checkpoint(store, path, init_seed);
}

}  // namespace dipm::models
