#pragma once

#include <vector>

#include "triplet/scene.hpp"
#include "triplet/vec.hpp"

namespace triplet {

enum class ShadingModel { BlinnPhong, CookTorrance };

// Unit shading geometry. H is always recomputed from L and V.
struct ShadingSample {
  Vec3 n;  // surface normal
  Vec3 v;  // surface -> eye
  Vec3 l;  // surface -> light

  static ShadingSample make(const Vec3& n, const Vec3& v, const Vec3& l) {
    return ShadingSample{normalize(n), normalize(v), normalize(l)};
  }
  Vec3 half() const { return normalize(l + v); }
};

// BRDF value with analytic partials. Geometry partials treat the input vectors
// as free 3-vectors (the caller owns any normalization chain); per-channel
// rows d_n[c] etc. are gradients of channel c.
struct BrdfValue {
  Rgb value;
  Rgb d_kd;         // diagonal: d value[c] / d kd[c]
  Rgb d_ks;
  Rgb d_shininess;
  Rgb d_roughness;
  Rgb d_metallic;
  Rgb d_f0;
  Vec3 d_n[3];
  Vec3 d_l[3];
  Vec3 d_v[3];
  bool guarded = false;  // specular denominator hit its epsilon floor
};

constexpr double kGgxAlphaMin = 1e-3;
constexpr double kSpecDenomEps = 1e-7;

// k_d max(0, N.L) + k_s max(0, N.H)^s, clamp-consistent partials.
BrdfValue blinn_phong(const Material& mat, const ShadingSample& s);

Rgb fresnel_schlick(const Rgb& f0, double cos_theta);

// Schlick-GGX masking for one direction; k = (r+1)^2 / 8. Zero at n_dot_x <= 0.
double g_schlick_ggx(double n_dot_x, double roughness);

double g_smith(const ShadingSample& s, double roughness);

// Trowbridge-Reitz/GGX normal distribution.
double ggx_ndf(double n_dot_h, double alpha);

// (1-F) k_d/pi + F G D / (4 (N.L)(N.V)); F0 = lerp(f0_base, kd, metallic),
// alpha = roughness^2, Fresnel angle H.V.
BrdfValue cook_torrance(const Material& mat, const ShadingSample& s);

BrdfValue eval_brdf(ShadingModel model, const Material& mat, const ShadingSample& s);

// One incident radiance sample per light direction.
struct LightSample {
  ShadingSample geom;
  Rgb radiance;
};

// ao * sum_i f_r(s_i) * radiance_i * max(0, N.L_i) + ao * kd * ambient.
Rgb shade(const Material& mat, const VertexProps& props, const std::vector<LightSample>& samples,
          ShadingModel model, const Rgb& ambient = Rgb{});

}  // namespace triplet
