#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "triplet/optim.hpp"
#include "triplet/shading.hpp"

using namespace triplet;

namespace {

// Random interior sample: unit N with L, V in its positive hemisphere, away
// from every clamp so finite differences stay on one side.
struct RandomSample {
  Material mat;
  Vec3 n, l, v;
};

RandomSample draw_sample(Rng& rng) {
  RandomSample s;
  s.n = rng.unit_vector();
  auto hemi = [&](double min_cos) {
    while (true) {
      const Vec3 d = rng.unit_vector();
      const double c = dot(d, s.n);
      if (c > min_cos) return d;
    }
  };
  s.l = hemi(0.15);
  s.v = hemi(0.15);
  s.mat.kd = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  s.mat.ks = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  s.mat.shininess = rng.uniform(1.0, 64.0);
  s.mat.roughness = rng.uniform(0.1, 0.95);
  s.mat.metallic = rng.uniform(0.05, 0.95);
  s.mat.f0_base = rng.uniform(0.02, 0.2);
  s.mat.ao = 1.0;
  return s;
}

// Flattened kernel over [kd ks shininess roughness metallic f0 N L V] -> RGB.
std::vector<double> pack(const RandomSample& s) {
  return {s.mat.kd.r,       s.mat.kd.g,      s.mat.kd.b,   s.mat.ks.r, s.mat.ks.g, s.mat.ks.b,
          s.mat.shininess,  s.mat.roughness, s.mat.metallic, s.mat.f0_base,
          s.n.x, s.n.y, s.n.z, s.l.x, s.l.y, s.l.z, s.v.x, s.v.y, s.v.z};
}

BrdfValue eval_packed(ShadingModel model, const std::vector<double>& x) {
  Material m;
  m.kd = {x[0], x[1], x[2]};
  m.ks = {x[3], x[4], x[5]};
  m.shininess = x[6];
  m.roughness = x[7];
  m.metallic = x[8];
  m.f0_base = x[9];
  ShadingSample s{{x[10], x[11], x[12]}, {x[16], x[17], x[18]}, {x[13], x[14], x[15]}};
  return eval_brdf(model, m, s);
}

GradCheckResult check_brdf(ShadingModel model, const RandomSample& rs) {
  auto fwd = [model](const std::vector<double>& x) {
    const BrdfValue b = eval_packed(model, x);
    return std::vector<double>{b.value.r, b.value.g, b.value.b};
  };
  auto jac = [model](const std::vector<double>& x) {
    const BrdfValue b = eval_packed(model, x);
    std::vector<std::vector<double>> j(3, std::vector<double>(x.size(), 0.0));
    for (int c = 0; c < 3; ++c) {
      j[c][c] = b.d_kd[c];
      j[c][3 + c] = b.d_ks[c];
      j[c][6] = b.d_shininess[c];
      j[c][7] = b.d_roughness[c];
      j[c][8] = b.d_metallic[c];
      j[c][9] = b.d_f0[c];
      for (int k = 0; k < 3; ++k) {
        j[c][10 + k] = b.d_n[c][k];
        j[c][13 + k] = b.d_l[c][k];
        j[c][16 + k] = b.d_v[c][k];
      }
    }
    return j;
  };
  return grad_check(fwd, jac, pack(rs));
}

}  // namespace

TEST_CASE("blinn_phong hand values") {
  Material m;
  m.kd = Rgb(0.5);
  m.ks = Rgb(0.5);
  m.shininess = 10.0;
  const Vec3 n{0, 0, 1};
  // N = L = V so H = N
  BrdfValue b = blinn_phong(m, ShadingSample{n, n, n});
  CHECK(b.value.r == doctest::Approx(1.0));

  // both clamps active
  b = blinn_phong(m, ShadingSample{n, {0, 1, -0.0001}, {0, -1, -0.0001}});
  CHECK(b.value.r == doctest::Approx(0.0));

  // kd = 0, ks = 1, N.H = 0.5, s = 1
  m.kd = Rgb(0.0);
  m.ks = Rgb(1.0);
  m.shininess = 1.0;
  const double c60 = 0.5, s60 = std::sqrt(3.0) / 2.0;
  const Vec3 tilted{s60, 0, c60};
  b = blinn_phong(m, ShadingSample{n, tilted, tilted});
  CHECK(b.value.g == doctest::Approx(0.5));
}

TEST_CASE("fresnel_schlick limits and hand value") {
  const Rgb f0(0.04);
  const Rgb at1 = fresnel_schlick(f0, 1.0);
  CHECK(at1.r == doctest::Approx(0.04));
  const Rgb at0 = fresnel_schlick(f0, 0.0);
  CHECK(at0.r == doctest::Approx(1.0));
  CHECK(at0.b == doctest::Approx(1.0));
  const Rgb mid = fresnel_schlick(f0, 0.5);
  CHECK(mid.r == doctest::Approx(0.07));  // 0.04 + 0.96 * 0.03125
}

TEST_CASE("schlick-ggx geometry term") {
  CHECK(g_schlick_ggx(1.0, 0.3) == doctest::Approx(1.0));
  CHECK(g_schlick_ggx(0.5, 1.0) == doctest::Approx(0.5 / 0.75));
  CHECK(g_schlick_ggx(0.0, 0.5) == doctest::Approx(0.0));
  CHECK(g_schlick_ggx(-0.2, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("smith geometry term") {
  const Vec3 n{0, 0, 1};
  CHECK(g_smith(ShadingSample{n, n, n}, 0.7) == doctest::Approx(1.0));

  const double c = 0.5, s = std::sqrt(3.0) / 2.0;
  const ShadingSample half{n, {s, 0, c}, {-s, 0, c}};
  CHECK(g_smith(half, 1.0) == doctest::Approx((0.5 / 0.75) * (0.5 / 0.75)));

  const ShadingSample grazing{n, n, {1, 0, 0}};
  CHECK(g_smith(grazing, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("ggx ndf hand values") {
  CHECK(ggx_ndf(0.3, 1.0) == doctest::Approx(1.0 / M_PI));
  CHECK(ggx_ndf(0.9, 1.0) == doctest::Approx(1.0 / M_PI));
  CHECK(ggx_ndf(1.0, 0.5) == doctest::Approx(4.0 / M_PI));
  CHECK(std::isfinite(ggx_ndf(1.0, 0.0)));  // alpha floor
}

TEST_CASE("ggx ndf normalizes over the hemisphere") {
  // Stratified-MC oracle: integral of D(h) (N.h) over the hemisphere equals 1.
  // One jittered sample per cos-theta stratum tames the sharp alpha=0.1 peak.
  for (double alpha : {0.1, 0.35, 0.7, 1.0}) {
    Rng rng(99);
    const int n_samples = 100000;
    double acc = 0.0;
    for (int i = 0; i < n_samples; ++i) {
      const double u = (i + rng.uniform()) / n_samples;  // u = cos(theta)
      acc += ggx_ndf(u, alpha) * u;
    }
    const double integral = acc * (2.0 * M_PI / n_samples);
    CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("cook_torrance hand value at normal incidence") {
  Material m;
  m.kd = Rgb(1.0);
  m.roughness = 1.0;
  m.metallic = 0.0;
  m.f0_base = 0.04;
  const Vec3 n{0, 0, 1};
  const BrdfValue b = cook_torrance(m, ShadingSample{n, n, n});
  // (1-F) kd/pi + F G D / 4 = 0.96/pi + 0.04 * (1/pi) / 4
  CHECK(b.value.r == doctest::Approx(0.97 / M_PI).epsilon(1e-6));
}

TEST_CASE("cook_torrance metallic uses albedo as F0") {
  Material m;
  m.kd = {0.8, 0.4, 0.2};
  m.metallic = 1.0;
  m.roughness = 0.5;
  const Vec3 n{0, 0, 1};
  const BrdfValue b = cook_torrance(m, ShadingSample{n, n, n});
  // at normal incidence F = F0 = kd; diffuse = (1-kd) kd/pi, spec = kd G D/4
  const double d = ggx_ndf(1.0, 0.25);
  for (int c = 0; c < 3; ++c) {
    const double kd = m.kd[c];
    const double expect = (1.0 - kd) * kd / M_PI + kd * d / 4.0;
    CHECK(b.value[c] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("cook_torrance specular lobe is reciprocal") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    RandomSample s = draw_sample(rng);
    s.mat.kd = Rgb(0.0);  // isolate the specular term
    const BrdfValue a = cook_torrance(s.mat, ShadingSample{s.n, s.v, s.l});
    const BrdfValue b = cook_torrance(s.mat, ShadingSample{s.n, s.l, s.v});
    CHECK(a.value.r == doctest::Approx(b.value.r).epsilon(1e-12));
    CHECK(a.value.g == doctest::Approx(b.value.g).epsilon(1e-12));
  }
}

TEST_CASE("cook_torrance directional albedo stays bounded") {
  // MC energy audit per channel.
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    RandomSample s = draw_sample(rng);
    const Vec3 n{0, 0, 1};
    const int n_samples = 100000;
    Rgb acc;
    for (int i = 0; i < n_samples; ++i) {
      Vec3 l = rng.unit_vector();
      l.z = std::abs(l.z);
      const BrdfValue b = cook_torrance(s.mat, ShadingSample{n, s.v.z > 0 ? s.v : -s.v, l});
      acc += b.value * l.z;
    }
    const Rgb albedo = acc * (2.0 * M_PI / n_samples);
    CHECK(albedo.r <= 1.02);
    CHECK(albedo.g <= 1.02);
    CHECK(albedo.b <= 1.02);
  }
}

TEST_CASE("blinn_phong never goes negative and clamps kill output") {
  Rng rng(23);
  for (int i = 0; i < 2000; ++i) {
    Material m;
    m.kd = {rng.uniform(), rng.uniform(), rng.uniform()};
    m.ks = {rng.uniform(), rng.uniform(), rng.uniform()};
    m.shininess = rng.uniform(0.0, 128.0);
    const Vec3 n = rng.unit_vector();
    const Vec3 l = rng.unit_vector();
    const Vec3 v = rng.unit_vector();
    const BrdfValue b = blinn_phong(m, ShadingSample{n, v, l});
    CHECK(b.value.r >= 0.0);
    CHECK(b.value.g >= 0.0);
    CHECK(b.value.b >= 0.0);
    const Vec3 h = normalize(l + v);
    if (dot(n, l) <= 0.0 && dot(n, h) <= 0.0) CHECK(b.value.r == 0.0);
  }
}

TEST_CASE("analytic partials match finite differences") {
  Rng rng(31);
  double worst_bp = 0.0, worst_ct = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const RandomSample s = draw_sample(rng);
    worst_bp = std::max(worst_bp, check_brdf(ShadingModel::BlinnPhong, s).max_rel_err);
    worst_ct = std::max(worst_ct, check_brdf(ShadingModel::CookTorrance, s).max_rel_err);
  }
  CHECK(worst_bp < 1e-4);
  CHECK(worst_ct < 1e-4);
}

TEST_CASE("clamped region has zero gradient") {
  Material m;
  m.kd = Rgb(0.5);
  m.ks = Rgb(0.5);
  m.shininess = 8.0;
  const Vec3 n{0, 0, 1};
  // L below the horizon, H below too
  const BrdfValue b = blinn_phong(m, ShadingSample{n, {0.6, 0, -0.8}, {0, 0.6, -0.8}});
  CHECK(b.value.r == 0.0);
  CHECK(norm(b.d_n[0]) == 0.0);
  CHECK(b.d_kd.r == 0.0);
}

TEST_CASE("shade composes lights linearly") {
  Material m;
  m.kd = Rgb(0.5);
  m.ks = Rgb(0.5);
  m.shininess = 10.0;
  m.ao = 1.0;
  VertexProps props;
  props.texture_rgb = Rgb(1.0);

  CHECK(shade(m, props, {}, ShadingModel::BlinnPhong).r == 0.0);

  const Vec3 n{0, 0, 1};
  const LightSample ls{ShadingSample{n, n, n}, Rgb(2.0)};
  const Rgb one = shade(m, props, {ls}, ShadingModel::BlinnPhong);
  CHECK(one.r == doctest::Approx(2.0));  // f_r = 1, radiance 2, N.L = 1

  const LightSample doubled{ls.geom, ls.radiance * 2.0};
  const Rgb two = shade(m, props, {doubled}, ShadingModel::BlinnPhong);
  CHECK(two.r == doctest::Approx(2.0 * one.r));
  CHECK(two.b == doctest::Approx(2.0 * one.b));
}
