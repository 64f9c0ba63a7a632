#include "nets.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rng.hpp"
#include "version.hpp"

namespace dipm::nn {

using nlohmann::json;

ParamArray& ParamStore::add(const std::string& name, std::vector<size_t> shape) {
  if (find(name) != nullptr)
    throw ValidationError("params: duplicate array name '" + name + "'");
  size_t n = 1;
  for (size_t d : shape) n *= d;
  arrays.push_back(ParamArray{name, std::move(shape), std::vector<double>(n, 0.0)});
  return arrays.back();
}

ParamArray* ParamStore::find(const std::string& name) {
  for (auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const ParamArray* ParamStore::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

ParamArray& ParamStore::require(const std::string& name) {
  ParamArray* a = find(name);
  if (a == nullptr) throw ValidationError("params: missing array '" + name + "'");
  return *a;
}

const ParamArray& ParamStore::require(const std::string& name) const {
  const ParamArray* a = find(name);
  if (a == nullptr) throw ValidationError("params: missing array '" + name + "'");
  return *a;
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& a : arrays) n += a.size();
  return n;
}

namespace {
constexpr char kMagic[8] = {'D', 'I', 'P', 'M', 'W', 'T', 'S', '\0'};
}

void save_checkpoint(const ParamStore& store, const std::string& path, uint64_t init_seed) {
  json header;
  header["format"] = "dipm-weights-1";
  header["version"] = dipm::kVersion;
  header["seed"] = init_seed;
  header["byte_order"] = "little";
  json arr = json::array();
  uint64_t offset = 0;
  for (const auto& a : store.arrays) {
    arr.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset},
                   {"count", a.size()}});
    offset += a.size() * sizeof(double);
  }
  header["arrays"] = arr;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  f.write(kMagic, sizeof(kMagic));
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& a : store.arrays)
    f.write(reinterpret_cast<const char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  if (!f) throw IoError("checkpoint: write failed for '" + path + "'");
}

ParamStore load_checkpoint(const std::string& path, uint64_t* init_seed) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint: '" + path + "' is not a weight checkpoint");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen > (1ull << 24)) throw IoError("checkpoint: corrupt header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  if (header.value("format", "") != "dipm-weights-1")
    throw IoError("checkpoint: unknown format tag");
  if (init_seed != nullptr) *init_seed = header.value("seed", uint64_t{0});

  const std::streampos payload_start = f.tellg();
  ParamStore store;
  for (const auto& meta : header.at("arrays")) {
    ParamArray a;
    a.name = meta.at("name").get<std::string>();
    a.shape = meta.at("shape").get<std::vector<size_t>>();
    const uint64_t count = meta.at("count").get<uint64_t>();
    size_t expect = 1;
    for (size_t d : a.shape) expect *= d;
    if (expect != count) throw IoError("checkpoint: shape/count mismatch in '" + a.name + "'");
    a.data.resize(count);
    f.seekg(payload_start + static_cast<std::streamoff>(meta.at("offset").get<uint64_t>()));
    f.read(reinterpret_cast<char*>(a.data.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw IoError("checkpoint: truncated payload in '" + a.name + "'");
    store.arrays.push_back(std::move(a));
  }
  return store;
}

uint64_t fingerprint(const ParamStore& store) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& a : store.arrays) {
    h = fnv1a64(a.name, h);
    for (size_t d : a.shape) h = fnv1a64(&d, sizeof(d), h);
    h = fnv1a64(a.data.data(), a.data.size() * sizeof(double), h);
  }
  return h;
}

void adam_step(std::span<double> w, std::span<const double> g, AdamState& st,
               const AdamConfig& cfg, double lr_scale, const std::string& group_name) {
  if (w.size() != g.size() || st.m.size() != w.size() || st.v.size() != w.size())
    throw ValidationError("adam: size mismatch for group '" + group_name + "'");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  const double lr = cfg.lr * lr_scale;
  for (size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(g[i]))
      throw NumericalError("adam: non-finite gradient in '" + group_name + "' at index " +
                           std::to_string(i));
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void add_mlp_params(ParamStore& store, const std::string& prefix, const MlpShape& shape) {
  size_t in = shape.in;
  size_t li = 0;
  for (size_t h : shape.hidden) {
    store.add(prefix + ".w" + std::to_string(li), {h, in});
    store.add(prefix + ".b" + std::to_string(li), {h});
    in = h;
    ++li;
  }
  store.add(prefix + ".w" + std::to_string(li), {shape.out, in});
  store.add(prefix + ".b" + std::to_string(li), {shape.out});
}

void init_mlp(ParamStore& store, const std::string& prefix, const MlpShape& shape,
              std::mt19937_64& rng) {
  size_t in = shape.in;
  for (size_t li = 0; li < shape.hidden.size(); ++li) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : store.require(prefix + ".w" + std::to_string(li)).data) w = u(rng);
    in = shape.hidden[li];
  }
  // Head stays zero so an untrained net contributes nothing.
}

void add_lstm_params(ParamStore& store, const std::string& prefix, const LstmShape& shape) {
  const size_t cols = shape.in + shape.hidden;
  for (const char* g : {"i", "f", "g", "o"}) {
    store.add(prefix + ".w" + g, {shape.hidden, cols});
    store.add(prefix + ".b" + g, {shape.hidden});
  }
  store.add(prefix + ".wy", {shape.out, shape.hidden});
  store.add(prefix + ".by", {shape.out});
}

void init_lstm(ParamStore& store, const std::string& prefix, const LstmShape& shape,
               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (const char* g : {"i", "f", "g", "o"})
    for (double& w : store.require(prefix + ".w" + std::string(g)).data) w = u(rng);
  // Gate biases and the output head stay zero.
}

}  // namespace dipm::nn
