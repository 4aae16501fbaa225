#include "triplet/lighting.hpp"

#include <algorithm>
#include <cmath>

#include "triplet/errors.hpp"

namespace triplet {

ShCoeffs ShCoeffs::zeros(int band_limit) {
  ShCoeffs c;
  c.band_limit = band_limit;
  c.coeffs.assign(3 * band_limit * band_limit, 0.0);
  return c;
}

std::vector<double> sh_basis(const Vec3& dir, int band_limit) {
  if (band_limit < 1 || band_limit > kMaxShBand)
    throw InvalidInput("sh_basis: band_limit out of [1,9]");

  const int n = band_limit * band_limit;
  std::vector<double> y(n, 0.0);
  const double x = dir.x, yy = dir.y, z = dir.z;

  // P̂_l^m = P_l^m / sin^m(theta), Condon-Shortley phase dropped; the sin^m
  // factor is carried by the (cm, sm) recurrence so poles stay exact.
  double phat[kMaxShBand][kMaxShBand];  // [l][m]
  for (int m = 0; m < band_limit; ++m) {
    double pmm = 1.0;
    for (int i = 1; i <= m; ++i) pmm *= (2.0 * i - 1.0);
    phat[m][m] = pmm;
    if (m + 1 < band_limit) phat[m + 1][m] = z * (2.0 * m + 1.0) * pmm;
    for (int l = m + 2; l < band_limit; ++l)
      phat[l][m] =
          ((2.0 * l - 1.0) * z * phat[l - 1][m] - (l + m - 1.0) * phat[l - 2][m]) / (l - m);
  }

  // cm = cos(m phi) sin^m(theta), sm = sin(m phi) sin^m(theta)
  double cm = 1.0, sm = 0.0;
  std::vector<double> cms(band_limit), sms(band_limit);
  cms[0] = 1.0;
  sms[0] = 0.0;
  for (int m = 1; m < band_limit; ++m) {
    const double c_next = x * cm - yy * sm;
    const double s_next = x * sm + yy * cm;
    cm = c_next;
    sm = s_next;
    cms[m] = cm;
    sms[m] = sm;
  }

  auto k_norm = [](int l, int m) {
    double num = 2.0 * l + 1.0, den = 4.0 * M_PI;
    for (int i = l - m + 1; i <= l + m; ++i) den *= i;  // (l+m)! / (l-m)!
    return std::sqrt(num / den);
  };

  for (int l = 0; l < band_limit; ++l) {
    y[l * (l + 1)] = k_norm(l, 0) * phat[l][0];
    for (int m = 1; m <= l; ++m) {
      const double k = std::sqrt(2.0) * k_norm(l, m) * phat[l][m];
      y[l * (l + 1) + m] = k * cms[m];
      y[l * (l + 1) - m] = k * sms[m];
    }
  }
  return y;
}

Rgb sh_eval(const ShCoeffs& c, const Vec3& dir, int active_band) {
  const int band = std::min(active_band, c.band_limit);
  if (band < 1) throw InvalidInput("sh_eval: active_band must be >= 1");
  const std::vector<double> y = sh_basis(dir, band);
  Rgb out;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    for (int i = 0; i < band * band; ++i) acc += c.at(ch, i) * y[i];
    out[ch] = acc;
  }
  return out;
}

Rgb sh_radiance(const ShCoeffs& c, const Vec3& dir, int active_band) {
  const Rgb raw = sh_eval(c, dir, active_band);
  return {std::max(0.0, raw.r), std::max(0.0, raw.g), std::max(0.0, raw.b)};
}

ShCoeffs sh_project(const std::vector<std::pair<Vec3, Rgb>>& samples, int band_limit) {
  if (static_cast<int>(samples.size()) < band_limit * band_limit)
    throw InvalidInput("sh_project: need at least band_limit^2 samples");
  ShCoeffs c = ShCoeffs::zeros(band_limit);
  const double w = 4.0 * M_PI / static_cast<double>(samples.size());
  for (const auto& [dir, val] : samples) {
    const std::vector<double> y = sh_basis(normalize(dir), band_limit);
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < c.per_channel(); ++i) c.at(ch, i) += w * val[ch] * y[i];
  }
  return c;
}

Vec3 sh_linear_direction(const ShCoeffs& c) {
  if (c.band_limit < 2) return Vec3{};
  Vec3 d{};
  for (int ch = 0; ch < 3; ++ch) {
    // linear band: index 1 = (1,-1) ~ y, 2 = (1,0) ~ z, 3 = (1,1) ~ x
    d += Vec3{c.at(ch, 3), c.at(ch, 1), c.at(ch, 2)};
  }
  const double len = norm(d);
  return len > 1e-12 ? d / len : Vec3{};
}

IncidentSample incident(const Light& light, const Vec3& x, std::optional<int> vertex_id,
                        int active_band, const Vec3& fallback_dir) {
  IncidentSample out;
  if (const auto* pl = std::get_if<PointLight>(&light)) {
    const Vec3 d = pl->position - x;
    const double dist = std::max(norm(d), 1e-4);
    out.l = norm(d) > 0.0 ? d / norm(d) : Vec3{0, 0, 1};
    out.distance = dist;
    const double falloff = pl->inverse_square ? 1.0 / (dist * dist) : 1.0;
    out.radiance = pl->color * (pl->intensity * falloff);
  } else if (const auto* dl = std::get_if<DirectionalLight>(&light)) {
    out.l = -normalize(dl->direction);
    out.radiance = dl->color * dl->intensity;
  } else if (const auto* vl = std::get_if<VertexShLight>(&light)) {
    if (!vertex_id.has_value()) throw InvalidInput("incident: VertexShLight needs a vertex id");
    if (*vertex_id < 0 || *vertex_id >= static_cast<int>(vl->per_vertex.size()))
      throw InvalidInput("incident: vertex id out of range");
    const ShCoeffs& c = vl->per_vertex[*vertex_id];
    Vec3 dir = sh_linear_direction(c);
    if (norm(dir) < 0.5) dir = normalize(fallback_dir);  // degenerate linear band
    out.l = dir;
    out.radiance = sh_radiance(c, dir, active_band);
  } else if (const auto* el = std::get_if<EnvironmentShLight>(&light)) {
    Vec3 dir = sh_linear_direction(el->coeffs);
    if (norm(dir) < 0.5) dir = normalize(fallback_dir);
    out.l = dir;
    out.radiance = sh_radiance(el->coeffs, dir, active_band);
  }
  return out;
}

double cosine_lobe_coeff(int l) {
  if (l == 0) return M_PI;
  if (l == 1) return 2.0 * M_PI / 3.0;
  if (l % 2 == 1) return 0.0;
  double fact = 1.0;  // l! / (2^l ((l/2)!)^2)
  for (int i = 1; i <= l; ++i) fact *= i;
  double half_fact = 1.0;
  for (int i = 1; i <= l / 2; ++i) half_fact *= i;
  fact /= std::pow(2.0, l) * half_fact * half_fact;
  const double sign = (l / 2) % 2 == 1 ? 1.0 : -1.0;  // (-1)^(l/2 + 1)
  return sign * 2.0 * M_PI / ((l + 2.0) * (l - 1.0)) * fact;
}

Rgb env_irradiance(const EnvironmentShLight& env, const Vec3& n, int active_band) {
  const int band = std::min(active_band, env.coeffs.band_limit);
  const std::vector<double> y = sh_basis(n, band);
  Rgb out;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    for (int l = 0; l < band; ++l) {
      const double a = cosine_lobe_coeff(l);
      for (int m = -l; m <= l; ++m) acc += a * env.coeffs.at(ch, l * (l + 1) + m) * y[l * (l + 1) + m];
    }
    out[ch] = std::max(0.0, acc);
  }
  return out;
}

int sh_band_schedule(std::int64_t iteration, TransportMode mode) {
  if (iteration < 0) throw InvalidInput("sh_band_schedule: negative iteration");
  if (mode == TransportMode::RayOracle) return 5;
  return static_cast<int>(std::min<std::int64_t>(1 + iteration / 1000, 5));
}

}  // namespace triplet
