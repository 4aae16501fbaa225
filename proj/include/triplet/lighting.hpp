#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "triplet/vec.hpp"

namespace triplet {

struct PointLight {
  Vec3 position{0, 0, 0};
  double intensity = 40.0;
  Rgb color{1, 1, 1};
  bool inverse_square = true;
};

struct DirectionalLight {
  Vec3 direction{0, 1, 0};  // travel direction of the light
  double intensity = 10.0;
  Rgb color{1, 1, 1};
};

// Per-channel SH coefficient block, (l,m)-major: index = l*(l+1)+m, l < band_limit.
struct ShCoeffs {
  int band_limit = 1;
  std::vector<double> coeffs;  // channel-major: [3][band_limit^2]

  static ShCoeffs zeros(int band_limit);
  int per_channel() const { return band_limit * band_limit; }
  double& at(int channel, int index) { return coeffs[channel * per_channel() + index]; }
  double at(int channel, int index) const { return coeffs[channel * per_channel() + index]; }
};

// Radiance SH attached to every scene vertex.
struct VertexShLight {
  int band_limit = 5;
  std::vector<ShCoeffs> per_vertex;
};

// Environment (IBL) SH, band 9 by default.
struct EnvironmentShLight {
  ShCoeffs coeffs;
};

using Light = std::variant<PointLight, DirectionalLight, VertexShLight, EnvironmentShLight>;

constexpr int kMaxShBand = 9;
constexpr double kShY00 = 0.28209479177387814;  // 1 / (2 sqrt(pi))

// Real spherical harmonics Y_l^m for l < band_limit, flattened (l,m)-major.
std::vector<double> sh_basis(const Vec3& dir, int band_limit);

// Plain truncated dot product; linear in the coefficients.
Rgb sh_eval(const ShCoeffs& c, const Vec3& dir, int active_band);

// sh_eval clamped at zero from below (radiance use).
Rgb sh_radiance(const ShCoeffs& c, const Vec3& dir, int active_band);

// Monte-Carlo projection c_i = (4 pi / N) sum f(d) Y_i(d).
ShCoeffs sh_project(const std::vector<std::pair<Vec3, Rgb>>& samples, int band_limit);

// Dominant-direction extraction from the linear band; zero vector when degenerate.
Vec3 sh_linear_direction(const ShCoeffs& c);

struct IncidentSample {
  Vec3 l;        // unit surface -> light
  Rgb radiance;
  double distance = 0.0;  // point lights only
};

// Single-sample incident query. VertexShLight requires vertex_id; fallback_dir
// stands in when the linear band is degenerate.
IncidentSample incident(const Light& light, const Vec3& x, std::optional<int> vertex_id,
                        int active_band, const Vec3& fallback_dir = Vec3{0, 0, 1});

// Cosine-convolved irradiance of an environment SH at surface normal n.
Rgb env_irradiance(const EnvironmentShLight& env, const Vec3& n, int active_band);

// Convolution coefficient A_l of the clamped-cosine kernel.
double cosine_lobe_coeff(int l);

enum class TransportMode { Rasterize, RayOracle };

// Rasterize grows one band per 1000 iterations from 1, capped at 5; the ray
// oracle trains the full band from the start.
int sh_band_schedule(std::int64_t iteration, TransportMode mode);

}  // namespace triplet
