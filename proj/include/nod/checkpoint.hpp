#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nod/nn.hpp"
#include "nod/tensor.hpp"

namespace nod::ckpt {

// Single-file checkpoint: 8-byte magic, u64 manifest length, JSON manifest,
// then raw little-endian float32 tensors concatenated in manifest order.
// Tensors are keyed by canonical dotted names; registries are stored under
// a prefix ("operator.", "denoiser.", "conditioner.") with Adam moments
// under "adam.m." / "adam.v.".
inline constexpr char kMagic[8] = {'N', 'O', 'D', 'C', 'K', 'P', 'T', '1'};

struct TensorRecord {
  std::string name;
  Tensor value;
};

struct CheckpointData {
  std::string phase;       // "operator" or "diffusion"
  std::string condition;   // conditioning mode, diffusion checkpoints only
  int64_t iteration = 0;
  uint64_t seed = 0;
  std::map<std::string, int64_t> adam_steps;  // per registry prefix
  nlohmann::json config_json;
  std::vector<TensorRecord> tensors;

  const Tensor* find(const std::string& name) const;
};

// Adds every parameter of the registry (plus Adam moments when
// include_moments) under the prefix. Values are rounded through float32 and
// written back into the live registry, so training after a save continues
// exactly like training after a load.
void append_registry(CheckpointData& data, const std::string& prefix, nn::ParamRegistry& reg,
                     bool include_moments);

// Loads values (and moments when present) back into a registry built with
// the same architecture. Missing tensors are an error.
void load_registry(const CheckpointData& data, const std::string& prefix,
                   nn::ParamRegistry& reg);

void write_checkpoint(const std::string& path, const CheckpointData& data);  // atomic
CheckpointData read_checkpoint(const std::string& path);

// SHA-256 (hex) over the float32 serialization of the registry values, in
// registry order. Used for the phase-2 freeze contract and determinism
// checks.
std::string param_hash(const nn::ParamRegistry& reg);

}  // namespace nod::ckpt
