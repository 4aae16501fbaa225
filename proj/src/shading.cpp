#include "triplet/shading.hpp"

#include <cmath>

namespace triplet {

BrdfValue blinn_phong(const Material& mat, const ShadingSample& s) {
  BrdfValue out;
  const Vec3 h_unnorm = s.l + s.v;
  const double hl = norm(h_unnorm);
  const Vec3 h = hl > 0.0 ? h_unnorm / hl : Vec3{};

  const double ndl = dot(s.n, s.l);
  const double ndh = dot(s.n, h);
  const double diffuse_w = std::max(0.0, ndl);
  const double spec_base = std::max(0.0, ndh);
  const double sexp = mat.shininess;
  const double spec_w = spec_base > 0.0 ? std::pow(spec_base, sexp) : 0.0;

  for (int c = 0; c < 3; ++c) {
    const double kd = mat.kd[c];
    const double ks = mat.ks[c];
    out.value[c] = kd * diffuse_w + ks * spec_w;
    out.d_kd[c] = diffuse_w;
    out.d_ks[c] = spec_w;
    out.d_shininess[c] = spec_base > 0.0 ? ks * spec_w * std::log(spec_base) : 0.0;

    Vec3 dn{}, dl{}, dv{};
    if (ndl > 0.0) {
      dn += kd * s.l;
      dl += kd * s.n;
    }
    if (spec_base > 0.0 && hl > 0.0) {
      const double dspec = ks * sexp * std::pow(spec_base, sexp - 1.0);
      const Vec3 dndh_dlv = (s.n - ndh * h) / hl;  // d(N.H)/dL = d(N.H)/dV
      dn += dspec * h;
      dl += dspec * dndh_dlv;
      dv += dspec * dndh_dlv;
    }
    out.d_n[c] = dn;
    out.d_l[c] = dl;
    out.d_v[c] = dv;
  }
  return out;
}

Rgb fresnel_schlick(const Rgb& f0, double cos_theta) {
  const double q = std::pow(1.0 - cos_theta, 5.0);
  return f0 + (Rgb{1, 1, 1} - f0) * q;
}

double g_schlick_ggx(double n_dot_x, double roughness) {
  if (n_dot_x <= 0.0) return 0.0;
  const double k = (roughness + 1.0) * (roughness + 1.0) / 8.0;
  return n_dot_x / (n_dot_x * (1.0 - k) + k);
}

double g_smith(const ShadingSample& s, double roughness) {
  return g_schlick_ggx(dot(s.n, s.v), roughness) * g_schlick_ggx(dot(s.n, s.l), roughness);
}

double ggx_ndf(double n_dot_h, double alpha) {
  const double a = std::max(alpha, kGgxAlphaMin);
  const double a2 = a * a;
  const double q = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
  return a2 / (M_PI * q * q);
}

BrdfValue cook_torrance(const Material& mat, const ShadingSample& s) {
  BrdfValue out;
  const double ndl = dot(s.n, s.l);
  const double ndv = dot(s.n, s.v);
  if (ndl <= 0.0 || ndv <= 0.0) return out;  // caller culls; keep a total function

  const Vec3 h_unnorm = s.l + s.v;
  const double hl = norm(h_unnorm);
  if (hl <= 1e-12) return out;
  const Vec3 h = h_unnorm / hl;

  const double ndh_raw = dot(s.n, h);
  const double hdv_raw = dot(h, s.v);
  const double ndh = clamp01(ndh_raw);
  const double hdv = clamp01(hdv_raw);
  const bool ndh_active = ndh_raw > 0.0 && ndh_raw < 1.0;
  const bool hdv_active = hdv_raw > 0.0 && hdv_raw < 1.0;

  const double r = mat.roughness;
  const double alpha_sq_raw = r * r;
  const bool alpha_clamped = alpha_sq_raw < kGgxAlphaMin;
  const double a = alpha_clamped ? kGgxAlphaMin : alpha_sq_raw;
  const double a2 = a * a;
  const double k = (r + 1.0) * (r + 1.0) / 8.0;
  const double dk_dr = (r + 1.0) / 4.0;

  auto g1 = [k](double x) { return x / (x * (1.0 - k) + k); };
  auto g1_den = [k](double x) { return x * (1.0 - k) + k; };
  const double g1v = g1(ndv), g1l = g1(ndl);
  const double g = g1v * g1l;
  const double dg1v_dx = k / (g1_den(ndv) * g1_den(ndv));
  const double dg1l_dx = k / (g1_den(ndl) * g1_den(ndl));
  const double dg1v_dk = -ndv * (1.0 - ndv) / (g1_den(ndv) * g1_den(ndv));
  const double dg1l_dk = -ndl * (1.0 - ndl) / (g1_den(ndl) * g1_den(ndl));
  const double dg_dr = dk_dr * (dg1v_dk * g1l + g1v * dg1l_dk);

  const double q = ndh * ndh * (a2 - 1.0) + 1.0;
  const double d = a2 / (M_PI * q * q);
  const double dd_da = (2.0 * a * q - 4.0 * a * a * a * ndh * ndh) / (M_PI * q * q * q);
  const double dd_dr = alpha_clamped ? 0.0 : dd_da * 2.0 * r;
  const double dd_dndh = ndh_active ? -4.0 * a2 * ndh * (a2 - 1.0) / (M_PI * q * q * q) : 0.0;

  const double denom_raw = 4.0 * ndl * ndv;
  out.guarded = denom_raw < kSpecDenomEps;
  const double denom = out.guarded ? kSpecDenomEps : denom_raw;
  const double spec_s = g * d / denom;

  const double fres_q = std::pow(1.0 - hdv, 5.0);
  const double dq_dhdv = hdv_active ? -5.0 * std::pow(1.0 - hdv, 4.0) : 0.0;

  // scalar geometry partials shared across channels (per-channel Fresnel applied below)
  const double dspec_dndl =
      dg1l_dx * g1v * d / denom - (out.guarded ? 0.0 : g * d * 4.0 * ndv / (denom * denom));
  const double dspec_dndv =
      dg1v_dx * g1l * d / denom - (out.guarded ? 0.0 : g * d * 4.0 * ndl / (denom * denom));
  const double dspec_dndh = g * dd_dndh / denom;

  const Vec3 dndh_dlv = (s.n - ndh_raw * h) / hl;
  const Vec3 dhdv_dl = (s.v - hdv_raw * h) / hl;
  const Vec3 dhdv_dv = dhdv_dl + h;

  for (int c = 0; c < 3; ++c) {
    const double kd = mat.kd[c];
    const double f0 = mat.f0_base * (1.0 - mat.metallic) + kd * mat.metallic;
    const double fres = f0 + (1.0 - f0) * fres_q;
    out.value[c] = (1.0 - fres) * kd / M_PI + fres * spec_s;

    const double t = -kd / M_PI + spec_s;       // d value / d F
    const double df_df0 = 1.0 - fres_q;         // d F / d F0
    out.d_kd[c] = (1.0 - fres) / M_PI + t * df_df0 * mat.metallic;
    out.d_f0[c] = t * df_df0 * (1.0 - mat.metallic);
    out.d_metallic[c] = t * df_df0 * (kd - mat.f0_base);
    out.d_roughness[c] = fres * (dg_dr * d + g * dd_dr) / denom;

    const double dv_dndl = fres * dspec_dndl;
    const double dv_dndv = fres * dspec_dndv;
    const double dv_dndh = fres * dspec_dndh;
    const double dv_dhdv = t * (1.0 - f0) * dq_dhdv;

    out.d_n[c] = dv_dndl * s.l + dv_dndv * s.v + dv_dndh * h;
    out.d_l[c] = dv_dndl * s.n + dv_dndh * dndh_dlv + dv_dhdv * dhdv_dl;
    out.d_v[c] = dv_dndv * s.n + dv_dndh * dndh_dlv + dv_dhdv * dhdv_dv;
  }
  return out;
}

BrdfValue eval_brdf(ShadingModel model, const Material& mat, const ShadingSample& s) {
  return model == ShadingModel::BlinnPhong ? blinn_phong(mat, s) : cook_torrance(mat, s);
}

Rgb shade(const Material& mat, const VertexProps& props, const std::vector<LightSample>& samples,
          ShadingModel model, const Rgb& ambient) {
  Material eff = mat;
  eff.kd = mat.kd * props.texture_rgb;
  Rgb out;
  for (const LightSample& ls : samples) {
    const double ndl = dot(ls.geom.n, ls.geom.l);
    if (ndl <= 0.0) continue;
    const BrdfValue f = eval_brdf(model, eff, ls.geom);
    out += f.value * ls.radiance * ndl;
  }
  out += eff.kd * ambient;
  return out * mat.ao;
}

}  // namespace triplet
