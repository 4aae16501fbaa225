#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "triplet/camera.hpp"
#include "triplet/image.hpp"
#include "triplet/lighting.hpp"
#include "triplet/scene.hpp"
#include "triplet/shading.hpp"
#include "triplet/vec.hpp"

namespace triplet {

struct Fragment {
  int face_id = -1;
  double depth = 0.0;      // camera-space z, perspective-correct
  double bary[3] = {0, 0, 0};  // perspective-correct, sums to 1
  double alpha = 0.0;      // interpolated opacity
};

// Per-pixel depth-sorted fragment lists, at most K per pixel.
struct FragmentBuffer {
  int width = 0, height = 0, k = 0;
  std::vector<std::vector<Fragment>> pixels;  // row-major

  const std::vector<Fragment>& at(int x, int y) const { return pixels[y * width + x]; }
};

FragmentBuffer rasterize(const TripletScene& scene, const Camera& cam, int k);

// Front-to-back alpha blending of Eq-style (alpha, shaded energy) pairs.
Rgb composite(const std::vector<std::pair<double, Rgb>>& fragments, const Rgb& background);

struct CompositeGrads {
  std::vector<double> d_alpha;
  std::vector<Rgb> d_color;
  Rgb d_background;
};

CompositeGrads composite_backward(const std::vector<std::pair<double, Rgb>>& fragments,
                                  const Rgb& background, const Rgb& d_out);

struct LightGrads {
  Vec3 d_position;    // point lights
  Vec3 d_direction;   // directional lights
  double d_intensity = 0.0;
  Rgb d_color;
  std::vector<double> d_sh;                    // environment SH, channel-major
  std::vector<std::vector<double>> d_vertex_sh;  // per-vertex SH, channel-major per vertex
};

struct RenderGradients {
  std::vector<Vec3> d_position;
  std::vector<Vec2> d_screen;  // accumulated screen-space positional gradient
  std::vector<Rgb> d_texture;
  std::vector<double> d_alpha;
  std::vector<Rgb> d_kd;
  std::vector<Rgb> d_ks;
  std::vector<double> d_shininess;
  std::vector<double> d_roughness;
  std::vector<double> d_metallic;
  std::vector<double> d_ao;
  std::vector<double> d_f0;
  std::vector<LightGrads> d_lights;
  Rgb d_ambient;
  int skipped_degenerate = 0;

  void resize(const TripletScene& scene, const std::vector<Light>& lights);
};

struct RenderOptions {
  int k = 30;
  int active_band = 5;
  ShadingModel model = ShadingModel::CookTorrance;
  Rgb background{0, 0, 0};
  Rgb ambient{0, 0, 0};
  bool two_sided = true;
};

// Retained forward state consumed by render_backward.
struct RenderCache {
  bool valid = false;
  Camera cam;
  RenderOptions opts;
  FragmentBuffer frags;
  std::vector<std::vector<Rgb>> colors;  // shaded color per fragment, parallel to frags
  std::vector<Vec3> vertex_normals;      // connected-mode shading normals
};

Image render(const TripletScene& scene, const Camera& cam, const std::vector<Light>& lights,
             const RenderOptions& opts, RenderCache* cache = nullptr);

// Gradient of sum(dL_dimage .* image) with respect to scene, material, and
// light parameters; coverage, depth order, connected-mode vertex normals, and
// SH aggregate directions are held fixed.
RenderGradients render_backward(const TripletScene& scene, const std::vector<Light>& lights,
                                const RenderCache& cache, const Image& d_image);

// Brute-force primary-ray reference renderer (the rasterizer's oracle).
Image raycast_reference(const TripletScene& scene, const Camera& cam,
                        const std::vector<Light>& lights, const RenderOptions& opts);

// Watertight-style ray/triangle intersection; returns (t, u, v) hit with t > 0.
bool ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                  const Vec3& c, double& t, double& u, double& v);

// Alpha-weighted expected depth and accumulated opacity (mesh extraction input).
void render_depth_alpha(const TripletScene& scene, const Camera& cam, int k,
                        std::vector<double>& depth, std::vector<double>& opacity);

// Composited per-vertex effective albedo (kd * texture), no lighting.
Image render_albedo(const TripletScene& scene, const Camera& cam, int k, const Rgb& background);

}  // namespace triplet
