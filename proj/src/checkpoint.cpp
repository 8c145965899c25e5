#include "nod/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "nod/errors.hpp"

namespace nod::ckpt {

namespace {

std::vector<float> to_f32(const Tensor& t) {
  std::vector<float> out(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return out;
}

std::string hex(const unsigned char* bytes, size_t n) {
  static const char* kDigits = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (size_t i = 0; i < n; ++i) {
    s.push_back(kDigits[bytes[i] >> 4]);
    s.push_back(kDigits[bytes[i] & 0xf]);
  }
  return s;
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void append_registry(CheckpointData& data, const std::string& prefix, nn::ParamRegistry& reg,
                     bool include_moments) {
  auto round_trip = [](Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
  };
  for (size_t i = 0; i < reg.size(); ++i) {
    auto& e = reg.entry(static_cast<int>(i));
    round_trip(e.value);
    data.tensors.push_back({prefix + e.name, e.value});
    if (include_moments && !e.m.empty()) {
      round_trip(e.m);
      round_trip(e.v);
      data.tensors.push_back({"adam.m." + prefix + e.name, e.m});
      data.tensors.push_back({"adam.v." + prefix + e.name, e.v});
    }
  }
}

void load_registry(const CheckpointData& data, const std::string& prefix,
                   nn::ParamRegistry& reg) {
  for (size_t i = 0; i < reg.size(); ++i) {
    auto& e = reg.entry(static_cast<int>(i));
    const Tensor* v = data.find(prefix + e.name);
    if (v == nullptr) throw checkpoint_error("checkpoint missing tensor " + prefix + e.name);
    if (!v->same_shape(e.value))
      throw checkpoint_error("checkpoint tensor " + prefix + e.name + " has shape " +
                             v->shape_str() + ", expected " + e.value.shape_str());
    e.value = *v;
    const Tensor* m = data.find("adam.m." + prefix + e.name);
    const Tensor* vv = data.find("adam.v." + prefix + e.name);
    if (m != nullptr && vv != nullptr) {
      e.m = *m;
      e.v = *vv;
    }
  }
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["phase"] = data.phase;
  if (!data.condition.empty()) manifest["condition"] = data.condition;
  manifest["iteration"] = data.iteration;
  manifest["seed"] = data.seed;
  manifest["adam_steps"] = data.adam_steps;
  manifest["config"] = data.config_json;
  manifest["tensors"] = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& t : data.tensors) {
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}, {"dtype", "f32"}});
    offset += t.value.numel() * static_cast<int64_t>(sizeof(float));
  }
  const std::string mstr = manifest.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw checkpoint_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t mlen = mstr.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& t : data.tensors) {
      const std::vector<float> buf = to_f32(t.value);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw checkpoint_error("short write for checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw checkpoint_error("not a checkpoint file: " + path);
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in) throw checkpoint_error("truncated checkpoint: " + path);
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw checkpoint_error("truncated checkpoint manifest: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(std::string("bad checkpoint manifest: ") + e.what());
  }
  CheckpointData data;
  data.phase = manifest.value("phase", std::string());
  data.condition = manifest.value("condition", std::string());
  data.iteration = manifest.value("iteration", int64_t{0});
  data.seed = manifest.value("seed", uint64_t{0});
  if (manifest.contains("adam_steps"))
    data.adam_steps = manifest["adam_steps"].get<std::map<std::string, int64_t>>();
  data.config_json = manifest.value("config", nlohmann::json::object());
  for (const auto& t : manifest["tensors"]) {
    TensorRecord rec;
    rec.name = t["name"].get<std::string>();
    const std::vector<int> shape = t["shape"].get<std::vector<int>>();
    std::vector<float> buf(static_cast<size_t>(Tensor::count(shape)));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw checkpoint_error("truncated checkpoint tensors: " + path);
    std::vector<double> vals(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) vals[i] = static_cast<double>(buf[i]);
    rec.value = Tensor::from(shape, std::move(vals));
    data.tensors.push_back(std::move(rec));
  }
  return data;
}

std::string param_hash(const nn::ParamRegistry& reg) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
    throw internal_error("param_hash: digest init failed");
  for (size_t i = 0; i < reg.size(); ++i) {
    const std::vector<float> buf = to_f32(reg.value(static_cast<int>(i)));
    EVP_DigestUpdate(ctx, buf.data(), buf.size() * sizeof(float));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return hex(digest, len);
}

}  // namespace nod::ckpt
