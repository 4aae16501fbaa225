#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "triplet/lighting.hpp"
#include "triplet/optim.hpp"
#include "triplet/scene.hpp"
#include "triplet/shading.hpp"

namespace triplet {

// Versioned training snapshot: raw (pre-reparameterization) parameters,
// optimizer state, topology, lights, and the config hash that produced it.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  int phase = 0;  // 0 discrete, 1 connected
  std::int64_t iteration = 0;
  ShadingModel model = ShadingModel::CookTorrance;
  TripletScene scene;
  std::vector<Light> lights;
  std::vector<ParamGroup> groups;
  std::vector<AdamState> states;
  std::uint64_t rng_state = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace triplet
