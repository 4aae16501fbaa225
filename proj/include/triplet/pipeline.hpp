#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "triplet/checkpoint.hpp"
#include "triplet/dataset.hpp"
#include "triplet/losses.hpp"
#include "triplet/rasterizer.hpp"
#include "triplet/topology.hpp"

namespace triplet {

struct LightSetupConfig {
  std::string type = "point";  // point | directional | vertex_sh | env_sh
  double intensity = 40.0;
  Vec3 direction{0, 1, 0};
  int sh_band = 5;
  bool optimize = true;
};

struct RunConfig {
  std::string dataset_root;
  std::string output_dir = "out";
  ShadingModel model = ShadingModel::CookTorrance;
  LightSetupConfig light;
  LossWeights weights;
  DensityConfig density;
  ExtractConfig extract;
  std::uint64_t seed = 0;

  int discrete_iterations = 7000;
  int connected_iterations = 3000;
  int checkpoint_interval = 1000;
  int log_interval = 10;
  int filter_interval = 100;

  int init_points = 1000;
  double init_extent = 1.2;  // half-extent of the random init cloud
  double patch_radius = 0.0; // 0 -> 0.5 x mean nearest-neighbour distance

  int k_warmup = 150;
  int k_main = 30;
  int warmup_end = 200;
  int half_res_end = 600;

  double lr_position_scale = 1.6e-4;  // scaled by the scene extent
  double lr_position_connected = 0.0; // 0: reuse lr_position_scale in phase B
  double lr_alpha = 0.05;
  double lr_material = 0.0025;
  double lr_texture = 0.0025;
  double lr_light = 0.01;
  double lr_sh = 0.0025;
  double sh_clip_norm = 1.0;
  int connected_density_interval = 0;  // 0: no loop/QEM passes during refinement
  // end-of-run lr multipliers (exponential anneal across both phases; 1 = constant)
  double lr_decay_position = 1.0;
  double lr_decay_light = 1.0;

  bool optimize_kd = false;
  bool optimize_ao = false;
  Rgb background{1, 1, 1};
};

// §-style schedules as pure functions of the iteration.
int faces_per_pixel_schedule(std::int64_t iteration, const RunConfig& cfg);
double resolution_scale_schedule(std::int64_t iteration, const RunConfig& cfg);

RunConfig default_config();
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);
std::string config_to_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

struct Metrics {
  double psnr = 0.0;  // +inf serialized as null
  double ssim = 0.0;
  double l1 = 0.0;
};

Metrics compute_metrics(const Image& render, const Image& target);
std::string metrics_json_line(std::int64_t iteration, const LossTerms& terms, double total,
                              int faces, const std::optional<Metrics>& eval);

// Raw-parameter view of everything the optimizer updates.
struct ParamSet {
  std::vector<ParamGroup> groups;
  std::vector<AdamState> states;
  int find(const std::string& name) const;
};

ParamSet build_params(const TripletScene& scene, const std::vector<Light>& lights,
                      const RunConfig& cfg, double scene_extent);
void apply_params(const ParamSet& params, TripletScene& scene, std::vector<Light>& lights);

struct OptimizeResult {
  TripletScene discrete_scene;
  TripletScene connected_mesh;
  std::vector<Light> lights;
  std::string metrics_path;
  std::string final_checkpoint;
  double first_l1 = 0.0;
  double last_l1 = 0.0;
  std::int64_t iterations_run = 0;
};

OptimizeResult optimize(const RunConfig& cfg);

// Renders every test-split frame of the dataset against a checkpoint.
std::vector<Metrics> evaluate_checkpoint(const Checkpoint& ckpt,
                                         const std::vector<DatasetFrame>& frames,
                                         const RunConfig& cfg);

}  // namespace triplet
