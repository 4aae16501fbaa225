#include "triplet/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "triplet/errors.hpp"

namespace triplet {

namespace {

struct InterpProps {
  Rgb texture, kd, ks;
  double alpha = 0, shininess = 0, roughness = 0, metallic = 0, ao = 0, f0 = 0;
};

InterpProps interpolate_props(const TripletScene& scene, const Face& f, const double beta[3]) {
  InterpProps out;
  for (int k = 0; k < 3; ++k) {
    const VertexProps& p = scene.props[f[k]];
    const double b = beta[k];
    out.texture += p.texture_rgb * b;
    out.kd += p.material.kd * b;
    out.ks += p.material.ks * b;
    out.alpha += p.alpha * b;
    out.shininess += p.material.shininess * b;
    out.roughness += p.material.roughness * b;
    out.metallic += p.material.metallic * b;
    out.ao += p.material.ao * b;
    out.f0 += p.material.f0_base * b;
  }
  return out;
}

double dot3(const Rgb& a, const Rgb& b) { return a.r * b.r + a.g * b.g + a.b * b.b; }

// Signed double-area of (a, b, c) in screen space.
double edge_fn(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

struct FragGeom {
  Vec2 s[3];
  double z[3];
  double b[3];  // screen-space barycentrics
  double u_sum; // sum of b_i / z_i
};

// Screen barycentrics and the perspective correction at pixel center `c`.
bool fragment_geometry(const Vec2 s[3], const double z[3], const Vec2& c, FragGeom& geom,
                       double beta[3], double& depth) {
  const double w0 = edge_fn(s[1], s[2], c);
  const double w1 = edge_fn(s[2], s[0], c);
  const double w2 = edge_fn(s[0], s[1], c);
  const double area = w0 + w1 + w2;
  if (area == 0.0) return false;
  const double b0 = w0 / area, b1 = w1 / area, b2 = w2 / area;
  if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) return false;
  const double u0 = b0 / z[0], u1 = b1 / z[1], u2 = b2 / z[2];
  const double usum = u0 + u1 + u2;
  geom = FragGeom{{s[0], s[1], s[2]}, {z[0], z[1], z[2]}, {b0, b1, b2}, usum};
  beta[0] = u0 / usum;
  beta[1] = u1 / usum;
  beta[2] = u2 / usum;
  depth = 1.0 / usum;
  return true;
}

// Pulls d_beta back to screen-point and depth gradients of the three vertices.
void beta_backward(const FragGeom& g, const Vec2& c, const double beta[3], const double d_beta[3],
                   Vec2 d_s[3], double d_z[3]) {
  const double mix = d_beta[0] * beta[0] + d_beta[1] * beta[1] + d_beta[2] * beta[2];
  double du[3], db[3];
  for (int i = 0; i < 3; ++i) du[i] = (d_beta[i] - mix) / g.u_sum;
  double db_mix = 0.0;
  for (int i = 0; i < 3; ++i) {
    db[i] = du[i] / g.z[i];
    d_z[i] = -du[i] * (g.b[i] / g.z[i]) / g.z[i];
  }
  for (int i = 0; i < 3; ++i) db_mix += db[i] * g.b[i];
  const double area = edge_fn(g.s[0], g.s[1], g.s[2]);
  double dw[3];
  for (int i = 0; i < 3; ++i) dw[i] = (db[i] - db_mix) / area;

  const Vec2 s0 = g.s[0], s1 = g.s[1], s2 = g.s[2];
  d_s[0] = Vec2{dw[1] * (c.y - s2.y) + dw[2] * (s1.y - c.y),
                dw[1] * (s2.x - c.x) + dw[2] * (c.x - s1.x)};
  d_s[1] = Vec2{dw[2] * (c.y - s0.y) + dw[0] * (s2.y - c.y),
                dw[2] * (s0.x - c.x) + dw[0] * (c.x - s2.x)};
  d_s[2] = Vec2{dw[0] * (c.y - s1.y) + dw[1] * (s0.y - c.y),
                dw[0] * (s1.x - c.x) + dw[1] * (c.x - s0.x)};
}

struct ShDirCache {
  Vec3 dir;
  std::vector<double> basis;
};

}  // namespace

void RenderGradients::resize(const TripletScene& scene, const std::vector<Light>& lights) {
  const size_t n = scene.vertices.size();
  d_position.assign(n, Vec3{});
  d_screen.assign(n, Vec2{});
  d_texture.assign(n, Rgb{});
  d_alpha.assign(n, 0.0);
  d_kd.assign(n, Rgb{});
  d_ks.assign(n, Rgb{});
  d_shininess.assign(n, 0.0);
  d_roughness.assign(n, 0.0);
  d_metallic.assign(n, 0.0);
  d_ao.assign(n, 0.0);
  d_f0.assign(n, 0.0);
  d_lights.assign(lights.size(), LightGrads{});
  for (size_t li = 0; li < lights.size(); ++li) {
    if (const auto* vl = std::get_if<VertexShLight>(&lights[li])) {
      d_lights[li].d_vertex_sh.assign(vl->per_vertex.size(),
                                      std::vector<double>(3 * vl->band_limit * vl->band_limit, 0.0));
    } else if (const auto* el = std::get_if<EnvironmentShLight>(&lights[li])) {
      d_lights[li].d_sh.assign(el->coeffs.coeffs.size(), 0.0);
    }
  }
  d_ambient = Rgb{};
  skipped_degenerate = 0;
}

FragmentBuffer rasterize(const TripletScene& scene, const Camera& cam, int k) {
  if (k < 1) throw InvalidInput("rasterize: K must be >= 1");
  FragmentBuffer buf;
  buf.width = cam.width;
  buf.height = cam.height;
  buf.k = k;
  buf.pixels.assign(static_cast<size_t>(cam.width) * cam.height, {});

  std::vector<Projection> proj(scene.vertices.size());
  for (size_t i = 0; i < scene.vertices.size(); ++i) proj[i] = project_point(cam, scene.vertices[i]);

  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Face& f = scene.faces[fi];
    const Projection &p0 = proj[f[0]], &p1 = proj[f[1]], &p2 = proj[f[2]];
    if (!p0.valid || !p1.valid || !p2.valid) continue;
    const Vec2 s[3] = {p0.screen, p1.screen, p2.screen};
    const double z[3] = {p0.depth, p1.depth, p2.depth};
    const double area = edge_fn(s[0], s[1], s[2]);
    if (std::abs(area) < 1e-12) continue;

    const double min_x = std::min({s[0].x, s[1].x, s[2].x});
    const double max_x = std::max({s[0].x, s[1].x, s[2].x});
    const double min_y = std::min({s[0].y, s[1].y, s[2].y});
    const double max_y = std::max({s[0].y, s[1].y, s[2].y});
    const int px0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int px1 = std::min(cam.width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
    const int py0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int py1 = std::min(cam.height - 1, static_cast<int>(std::ceil(max_y - 0.5)));

    for (int py = py0; py <= py1; ++py) {
      for (int px = px0; px <= px1; ++px) {
        const Vec2 c{px + 0.5, py + 0.5};
        FragGeom geom;
        Fragment frag;
        frag.face_id = fi;
        if (!fragment_geometry(s, z, c, geom, frag.bary, frag.depth)) continue;
        frag.alpha = clamp01(scene.props[f[0]].alpha * frag.bary[0] +
                             scene.props[f[1]].alpha * frag.bary[1] +
                             scene.props[f[2]].alpha * frag.bary[2]);
        buf.pixels[py * cam.width + px].push_back(frag);
      }
    }
  }

  for (auto& frags : buf.pixels) {
    std::sort(frags.begin(), frags.end(), [](const Fragment& a, const Fragment& b) {
      return a.depth != b.depth ? a.depth < b.depth : a.face_id < b.face_id;
    });
    if (static_cast<int>(frags.size()) > k) frags.resize(k);
  }
  return buf;
}

Rgb composite(const std::vector<std::pair<double, Rgb>>& fragments, const Rgb& background) {
  Rgb out;
  double transmit = 1.0;
  for (const auto& [alpha, color] : fragments) {
    out += color * (alpha * transmit);
    transmit *= (1.0 - alpha);
  }
  out += background * transmit;
  return out;
}

CompositeGrads composite_backward(const std::vector<std::pair<double, Rgb>>& fragments,
                                  const Rgb& background, const Rgb& d_out) {
  const int n = static_cast<int>(fragments.size());
  CompositeGrads g;
  g.d_alpha.assign(n, 0.0);
  g.d_color.assign(n, Rgb{});

  // suffix composite C_i = alpha_i E_i + (1 - alpha_i) C_{i+1}
  std::vector<Rgb> suffix(n + 1);
  suffix[n] = background;
  for (int i = n - 1; i >= 0; --i) {
    const auto& [alpha, color] = fragments[i];
    suffix[i] = color * alpha + suffix[i + 1] * (1.0 - alpha);
  }
  double transmit = 1.0;
  for (int i = 0; i < n; ++i) {
    const auto& [alpha, color] = fragments[i];
    g.d_color[i] = d_out * (alpha * transmit);
    g.d_alpha[i] = dot3(d_out, (color - suffix[i + 1]) * transmit);
    transmit *= (1.0 - alpha);
  }
  g.d_background = d_out * transmit;
  return g;
}

namespace {

// Forward shading of one fragment; when `d_color` is given, also accumulates
// parameter gradients into `grads` and the barycentric gradient into d_beta.
Rgb shade_fragment(const TripletScene& scene, const std::vector<Vec3>& vnormals, int face_id,
                   const double beta[3], const Vec3& eye, const std::vector<Light>& lights,
                   const RenderOptions& opts, const Rgb* d_color, RenderGradients* grads,
                   double d_beta[3], int* skipped) {
  const Face& f = scene.faces[face_id];
  const Vec3 p[3] = {scene.vertices[f[0]], scene.vertices[f[1]], scene.vertices[f[2]]};
  const InterpProps ip = interpolate_props(scene, f, beta);
  const Vec3 x = p[0] * beta[0] + p[1] * beta[1] + p[2] * beta[2];

  const Vec3 to_eye = eye - x;
  const double eye_dist = norm(to_eye);
  if (eye_dist <= 1e-12) return Rgb{};
  const Vec3 v_dir = to_eye / eye_dist;

  const bool connected = scene.connectivity_mode == ConnectivityMode::Connected;
  Vec3 n_raw;
  if (connected) {
    n_raw = vnormals[f[0]] * beta[0] + vnormals[f[1]] * beta[1] + vnormals[f[2]] * beta[2];
  } else {
    n_raw = cross(p[1] - p[0], p[2] - p[0]);
  }
  const double n_len = norm(n_raw);
  if (n_len <= kDegenerateAreaEps) {
    if (skipped) ++*skipped;
    return Rgb{};
  }
  const Vec3 n0 = n_raw / n_len;
  const double side = (opts.two_sided && dot(n0, v_dir) < 0.0) ? -1.0 : 1.0;
  const Vec3 n = n0 * side;

  Material eff;
  eff.kd = ip.kd * ip.texture;
  eff.ks = ip.ks;
  eff.shininess = ip.shininess;
  eff.roughness = ip.roughness;
  eff.metallic = ip.metallic;
  eff.ao = ip.ao;
  eff.f0_base = ip.f0;

  struct LightEval {
    Vec3 l;
    Rgb radiance;
    double ndl = 0.0;
    BrdfValue brdf;
    bool lit = false;
    // point-light chain data
    Vec3 delta;
    double dist = 0.0;
    bool clamped = false;
    // vertex-SH chain data
    ShDirCache sh;
    Rgb sh_raw;
  };
  std::vector<LightEval> evals(lights.size());

  Rgb pre_ao;  // radiance sum before ambient-occlusion scaling
  Rgb env_irr; // last environment irradiance (one env light supported per list entry)

  for (size_t li = 0; li < lights.size(); ++li) {
    LightEval& ev = evals[li];
    if (const auto* pl = std::get_if<PointLight>(&lights[li])) {
      ev.delta = pl->position - x;
      const double raw_dist = norm(ev.delta);
      ev.clamped = raw_dist < 1e-4;
      ev.dist = std::max(raw_dist, 1e-4);
      ev.l = raw_dist > 0.0 ? ev.delta / raw_dist : n;
      const double falloff = pl->inverse_square ? 1.0 / (ev.dist * ev.dist) : 1.0;
      ev.radiance = pl->color * (pl->intensity * falloff);
    } else if (const auto* dl = std::get_if<DirectionalLight>(&lights[li])) {
      ev.l = -normalize(dl->direction);
      ev.radiance = dl->color * dl->intensity;
    } else if (const auto* vl = std::get_if<VertexShLight>(&lights[li])) {
      const int band = std::min(opts.active_band, vl->band_limit);
      const int nc = band * band;
      // interpolate coefficients to the fragment, then query dir + radiance
      ShCoeffs cfrag = ShCoeffs::zeros(band);
      for (int k = 0; k < 3; ++k) {
        const ShCoeffs& cv = vl->per_vertex[f[k]];
        for (int ch = 0; ch < 3; ++ch)
          for (int i = 0; i < nc; ++i) cfrag.at(ch, i) += beta[k] * cv.at(ch, i);
      }
      Vec3 dir = sh_linear_direction(cfrag);
      if (norm(dir) < 0.5) dir = n;
      ev.sh.dir = dir;
      ev.sh.basis = sh_basis(dir, band);
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < nc; ++i) acc += cfrag.at(ch, i) * ev.sh.basis[i];
        ev.sh_raw[ch] = acc;
        ev.radiance[ch] = std::max(0.0, acc);
      }
      ev.l = dir;
    } else if (const auto* el = std::get_if<EnvironmentShLight>(&lights[li])) {
      // diffuse IBL: cosine-convolved irradiance, no single-sample specular
      env_irr = env_irradiance(*el, n, opts.active_band);
      pre_ao += eff.kd * env_irr * (1.0 / M_PI);
      continue;
    }
    ev.ndl = dot(n, ev.l);
    if (ev.ndl <= 0.0) continue;
    ev.lit = true;
    ShadingSample s{n, v_dir, ev.l};
    ev.brdf = eval_brdf(opts.model, eff, s);
    pre_ao += ev.brdf.value * ev.radiance * ev.ndl;
  }
  pre_ao += eff.kd * opts.ambient;
  const Rgb color = pre_ao * ip.ao;

  if (d_color == nullptr) return color;

  // ---- backward ----
  const Rgb& w = *d_color;
  const double d_ao_total = dot3(w, pre_ao);
  const Rgb d_pre = w * ip.ao;

  Rgb d_kd_eff, d_texture_up, d_kd_up, d_ks_up;
  double d_shin = 0, d_rough = 0, d_metal = 0, d_f0v = 0;
  Vec3 d_n{}, d_x{};

  // ambient
  d_kd_eff += d_pre * opts.ambient;
  grads->d_ambient += d_pre * eff.kd;

  for (size_t li = 0; li < lights.size(); ++li) {
    LightGrads& lg = grads->d_lights[li];
    if (const auto* el = std::get_if<EnvironmentShLight>(&lights[li])) {
      d_kd_eff += d_pre * env_irr * (1.0 / M_PI);
      const int band = std::min(opts.active_band, el->coeffs.band_limit);
      const std::vector<double> y = sh_basis(n, band);
      for (int ch = 0; ch < 3; ++ch) {
        if (env_irr[ch] <= 0.0) continue;  // clamped at zero
        const double de = d_pre[ch] * eff.kd[ch] / M_PI;
        for (int l = 0; l < band; ++l) {
          const double a = cosine_lobe_coeff(l);
          for (int m = -l; m <= l; ++m) {
            const int idx = l * (l + 1) + m;
            lg.d_sh[ch * el->coeffs.per_channel() + idx] += de * a * y[idx];
          }
        }
      }
      continue;
    }
    const LightEval& ev = evals[li];
    if (!ev.lit) continue;

    Rgb d_brdf, d_rad;
    double d_ndl = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      d_brdf[ch] = d_pre[ch] * ev.radiance[ch] * ev.ndl;
      d_rad[ch] = d_pre[ch] * ev.brdf.value[ch] * ev.ndl;
      d_ndl += d_pre[ch] * ev.brdf.value[ch] * ev.radiance[ch];
    }

    // BRDF partials
    Vec3 d_l{};
    for (int ch = 0; ch < 3; ++ch) {
      d_kd_eff[ch] += d_brdf[ch] * ev.brdf.d_kd[ch];
      d_ks_up[ch] += d_brdf[ch] * ev.brdf.d_ks[ch];
      d_shin += d_brdf[ch] * ev.brdf.d_shininess[ch];
      d_rough += d_brdf[ch] * ev.brdf.d_roughness[ch];
      d_metal += d_brdf[ch] * ev.brdf.d_metallic[ch];
      d_f0v += d_brdf[ch] * ev.brdf.d_f0[ch];
      d_n += d_brdf[ch] * ev.brdf.d_n[ch];
      d_l += d_brdf[ch] * ev.brdf.d_l[ch];
      // d_v through the BRDF
    }
    Vec3 d_v{};
    for (int ch = 0; ch < 3; ++ch) d_v += d_brdf[ch] * ev.brdf.d_v[ch];
    d_n += d_ndl * ev.l;
    d_l += d_ndl * n;

    // view chain: V = (eye - x)/|eye - x|
    const Vec3 dv_proj = (d_v - v_dir * dot(v_dir, d_v)) / eye_dist;
    d_x -= dv_proj;

    if (const auto* pl = std::get_if<PointLight>(&lights[li])) {
      const double raw_dist = norm(ev.delta);
      if (!ev.clamped && raw_dist > 0.0) {
        const Vec3 dl_proj = (d_l - ev.l * dot(ev.l, d_l)) / raw_dist;
        lg.d_position += dl_proj;
        d_x -= dl_proj;
      }
      const double falloff = pl->inverse_square ? 1.0 / (ev.dist * ev.dist) : 1.0;
      lg.d_intensity += dot3(d_rad, pl->color) * falloff;
      lg.d_color += d_rad * (pl->intensity * falloff);
      if (pl->inverse_square && !ev.clamped) {
        const double dd = dot3(d_rad, pl->color) * pl->intensity * (-2.0 / (ev.dist * ev.dist * ev.dist));
        lg.d_position += dd * ev.l;
        d_x -= dd * ev.l;
      }
    } else if (const auto* dl = std::get_if<DirectionalLight>(&lights[li])) {
      const double len = norm(dl->direction);
      const Vec3 nd = dl->direction / len;
      lg.d_direction += -(d_l - nd * dot(nd, d_l) * 1.0) / len;
      // note: L = -nd, so dL/d(direction) = -(I - nd nd^T)/len
      lg.d_intensity += dot3(d_rad, dl->color);
      lg.d_color += d_rad * dl->intensity;
    } else if (const auto* vl = std::get_if<VertexShLight>(&lights[li])) {
      // aggregate direction held fixed; gradient flows through the coefficients
      const int band = std::min(opts.active_band, vl->band_limit);
      const int nc = band * band;
      const int full = vl->band_limit * vl->band_limit;
      for (int ch = 0; ch < 3; ++ch) {
        if (ev.sh_raw[ch] <= 0.0) continue;
        for (int i = 0; i < nc; ++i) {
          const double dc = d_rad[ch] * ev.sh.basis[i];
          for (int k = 0; k < 3; ++k) {
            lg.d_vertex_sh[f[k]][ch * full + i] += beta[k] * dc;
            d_beta[k] += dc * vl->per_vertex[f[k]].at(ch, i);
          }
        }
      }
    }
  }

  // kd_eff = kd * texture
  for (int ch = 0; ch < 3; ++ch) {
    d_kd_up[ch] += d_kd_eff[ch] * ip.texture[ch];
    d_texture_up[ch] += d_kd_eff[ch] * ip.kd[ch];
  }

  // normal chain
  const Vec3 d_n0 = d_n * side;
  const Vec3 d_nraw = (d_n0 - n0 * dot(n0, d_n0)) / n_len;
  if (connected) {
    for (int k = 0; k < 3; ++k) d_beta[k] += dot(d_nraw, vnormals[f[k]]);
  } else {
    const Vec3 e1 = p[1] - p[0], e2 = p[2] - p[0];
    const Vec3 de1 = cross(e2, d_nraw);
    const Vec3 de2 = cross(d_nraw, e1);
    grads->d_position[f[1]] += de1;
    grads->d_position[f[2]] += de2;
    grads->d_position[f[0]] -= de1 + de2;
  }

  // world-position chain: x = sum beta_k p_k
  for (int k = 0; k < 3; ++k) {
    grads->d_position[f[k]] += beta[k] * d_x;
    d_beta[k] += dot(d_x, p[k]);
  }

  // interpolated attribute chains
  for (int k = 0; k < 3; ++k) {
    const VertexProps& vp = scene.props[f[k]];
    const Material& m = vp.material;
    const double b = beta[k];
    for (int ch = 0; ch < 3; ++ch) {
      grads->d_texture[f[k]][ch] += b * d_texture_up[ch];
      grads->d_kd[f[k]][ch] += b * d_kd_up[ch];
      grads->d_ks[f[k]][ch] += b * d_ks_up[ch];
      d_beta[k] += vp.texture_rgb[ch] * d_texture_up[ch] + m.kd[ch] * d_kd_up[ch] +
                   m.ks[ch] * d_ks_up[ch];
    }
    grads->d_shininess[f[k]] += b * d_shin;
    grads->d_roughness[f[k]] += b * d_rough;
    grads->d_metallic[f[k]] += b * d_metal;
    grads->d_ao[f[k]] += b * d_ao_total;
    grads->d_f0[f[k]] += b * d_f0v;
    d_beta[k] += m.shininess * d_shin + m.roughness * d_rough + m.metallic * d_metal +
                 m.ao * d_ao_total + m.f0_base * d_f0v;
  }

  return color;
}

}  // namespace

Image render(const TripletScene& scene, const Camera& cam, const std::vector<Light>& lights,
             const RenderOptions& opts, RenderCache* cache) {
  FragmentBuffer frags = rasterize(scene, cam, opts.k);
  std::vector<Vec3> vnorms;
  if (scene.connectivity_mode == ConnectivityMode::Connected)
    vnorms = vertex_normals(scene).normals;

  Image img(cam.width, cam.height);
  std::vector<std::vector<Rgb>> colors(frags.pixels.size());
  int skipped = 0;
  const Vec3 eye = cam.position();

  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      const auto& list = frags.pixels[py * cam.width + px];
      std::vector<std::pair<double, Rgb>> layered;
      layered.reserve(list.size());
      auto& color_row = colors[py * cam.width + px];
      color_row.reserve(list.size());
      for (const Fragment& fr : list) {
        const Rgb c =
            shade_fragment(scene, vnorms, fr.face_id, fr.bary, eye, lights, opts, nullptr,
                           nullptr, nullptr, &skipped);
        color_row.push_back(c);
        layered.emplace_back(fr.alpha, c);
      }
      img.set_pixel(px, py, composite(layered, opts.background));
    }
  }

  if (cache != nullptr) {
    cache->valid = true;
    cache->cam = cam;
    cache->opts = opts;
    cache->frags = std::move(frags);
    cache->colors = std::move(colors);
    cache->vertex_normals = std::move(vnorms);
  }
  return img;
}

RenderGradients render_backward(const TripletScene& scene, const std::vector<Light>& lights,
                                const RenderCache& cache, const Image& d_image) {
  if (!cache.valid) throw InvalidState("render_backward: forward cache missing");
  if (d_image.width != cache.cam.width || d_image.height != cache.cam.height)
    throw InvalidInput("render_backward: d_image shape mismatch");

  RenderGradients grads;
  grads.resize(scene, lights);

  const Camera& cam = cache.cam;
  const Vec3 eye = cam.position();
  std::vector<Projection> proj(scene.vertices.size());
  for (size_t i = 0; i < scene.vertices.size(); ++i) proj[i] = project_point(cam, scene.vertices[i]);

  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      const auto& list = cache.frags.pixels[py * cam.width + px];
      if (list.empty()) continue;
      const Rgb d_pix = d_image.pixel(px, py);
      if (d_pix.r == 0.0 && d_pix.g == 0.0 && d_pix.b == 0.0) continue;

      const auto& color_row = cache.colors[py * cam.width + px];
      std::vector<std::pair<double, Rgb>> layered;
      layered.reserve(list.size());
      for (size_t i = 0; i < list.size(); ++i) layered.emplace_back(list[i].alpha, color_row[i]);
      const CompositeGrads cg = composite_backward(layered, cache.opts.background, d_pix);

      const Vec2 center{px + 0.5, py + 0.5};
      for (size_t i = 0; i < list.size(); ++i) {
        const Fragment& fr = list[i];
        const Face& f = scene.faces[fr.face_id];
        double d_beta[3] = {0, 0, 0};

        shade_fragment(scene, cache.vertex_normals, fr.face_id, fr.bary, eye, lights, cache.opts,
                       &cg.d_color[i], &grads, d_beta, &grads.skipped_degenerate);

        // fragment alpha = sum beta_k alpha_k (clamp ignored in the interior)
        for (int k = 0; k < 3; ++k) {
          grads.d_alpha[f[k]] += fr.bary[k] * cg.d_alpha[i];
          d_beta[k] += scene.props[f[k]].alpha * cg.d_alpha[i];
        }

        // barycentric chain back to screen positions and camera depths
        const Vec2 s[3] = {proj[f[0]].screen, proj[f[1]].screen, proj[f[2]].screen};
        const double z[3] = {proj[f[0]].depth, proj[f[1]].depth, proj[f[2]].depth};
        FragGeom geom;
        double beta_check[3], depth_check;
        if (!fragment_geometry(s, z, center, geom, beta_check, depth_check)) continue;
        Vec2 d_s[3];
        double d_z[3];
        beta_backward(geom, center, beta_check, d_beta, d_s, d_z);
        for (int k = 0; k < 3; ++k) {
          grads.d_screen[f[k]] = grads.d_screen[f[k]] + d_s[k];
          grads.d_position[f[k]] +=
              project_backward(cam, scene.vertices[f[k]], d_s[k], d_z[k]);
        }
      }
    }
  }
  return grads;
}

bool ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                  const Vec3& c, double& t, double& u, double& v) {
  // Woop-style watertight intersection: shear into a ray-aligned frame and
  // evaluate 2D edge functions.
  const double ax = std::abs(dir.x), ay = std::abs(dir.y), az = std::abs(dir.z);
  int kz = 0;
  if (ay > ax && ay >= az) kz = 1;
  else if (az > ax && az > ay) kz = 2;
  int kx = (kz + 1) % 3, ky = (kx + 1) % 3;
  if (dir[kz] < 0.0) std::swap(kx, ky);

  const double sx = dir[kx] / dir[kz];
  const double sy = dir[ky] / dir[kz];
  const double sz = 1.0 / dir[kz];

  const Vec3 pa = a - origin, pb = b - origin, pc = c - origin;
  const double ax2 = pa[kx] - sx * pa[kz], ay2 = pa[ky] - sy * pa[kz];
  const double bx2 = pb[kx] - sx * pb[kz], by2 = pb[ky] - sy * pb[kz];
  const double cx2 = pc[kx] - sx * pc[kz], cy2 = pc[ky] - sy * pc[kz];

  const double wu = cx2 * by2 - cy2 * bx2;
  const double wv = ax2 * cy2 - ay2 * cx2;
  const double ww = bx2 * ay2 - by2 * ax2;

  if ((wu < 0 || wv < 0 || ww < 0) && (wu > 0 || wv > 0 || ww > 0)) return false;
  const double det = wu + wv + ww;
  if (det == 0.0) return false;

  const double az2 = sz * pa[kz], bz2 = sz * pb[kz], cz2 = sz * pc[kz];
  const double t_scaled = wu * az2 + wv * bz2 + ww * cz2;
  t = t_scaled / det;
  if (t <= 0.0) return false;
  u = wu / det;
  v = wv / det;
  return true;
}

Image raycast_reference(const TripletScene& scene, const Camera& cam,
                        const std::vector<Light>& lights, const RenderOptions& opts) {
  Image img(cam.width, cam.height);
  std::vector<Vec3> vnorms;
  if (scene.connectivity_mode == ConnectivityMode::Connected)
    vnorms = vertex_normals(scene).normals;
  const Vec3 eye = cam.position();
  int skipped = 0;

  struct Hit {
    double depth;
    int face_id;
    double beta[3];
  };

  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      const Vec3 dir_cam = normalize(Vec3{(px + 0.5 - cam.cx) / cam.fx,
                                          (py + 0.5 - cam.cy) / cam.fy, 1.0});
      const Vec3 dir = cam.r_wc * dir_cam;
      std::vector<Hit> hits;
      for (int fi = 0; fi < scene.face_count(); ++fi) {
        const Face& f = scene.faces[fi];
        double t, u, v;
        if (!ray_triangle(eye, dir, scene.vertices[f[0]], scene.vertices[f[1]],
                          scene.vertices[f[2]], t, u, v))
          continue;
        const double depth = t * dir_cam.z;
        if (depth < cam.near || depth > cam.far) continue;
        hits.push_back(Hit{depth, fi, {u, v, 1.0 - u - v}});
      }
      std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.face_id < b.face_id;
      });
      if (static_cast<int>(hits.size()) > opts.k) hits.resize(opts.k);

      std::vector<std::pair<double, Rgb>> layered;
      layered.reserve(hits.size());
      for (const Hit& h : hits) {
        const Face& f = scene.faces[h.face_id];
        const double alpha = clamp01(scene.props[f[0]].alpha * h.beta[0] +
                                     scene.props[f[1]].alpha * h.beta[1] +
                                     scene.props[f[2]].alpha * h.beta[2]);
        const Rgb c = shade_fragment(scene, vnorms, h.face_id, h.beta, eye, lights, opts, nullptr,
                                     nullptr, nullptr, &skipped);
        layered.emplace_back(alpha, c);
      }
      img.set_pixel(px, py, composite(layered, opts.background));
    }
  }
  return img;
}

void render_depth_alpha(const TripletScene& scene, const Camera& cam, int k,
                        std::vector<double>& depth, std::vector<double>& opacity) {
  const FragmentBuffer frags = rasterize(scene, cam, k);
  depth.assign(frags.pixels.size(), 0.0);
  opacity.assign(frags.pixels.size(), 0.0);
  for (size_t i = 0; i < frags.pixels.size(); ++i) {
    double transmit = 1.0, wsum = 0.0, dsum = 0.0;
    for (const Fragment& fr : frags.pixels[i]) {
      const double w = fr.alpha * transmit;
      wsum += w;
      dsum += w * fr.depth;
      transmit *= (1.0 - fr.alpha);
    }
    opacity[i] = wsum;
    depth[i] = wsum > 1e-6 ? dsum / wsum : 0.0;
  }
}

Image render_albedo(const TripletScene& scene, const Camera& cam, int k, const Rgb& background) {
  const FragmentBuffer frags = rasterize(scene, cam, k);
  Image img(cam.width, cam.height);
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      std::vector<std::pair<double, Rgb>> layered;
      for (const Fragment& fr : frags.pixels[py * cam.width + px]) {
        const Face& f = scene.faces[fr.face_id];
        Rgb albedo;
        for (int kk = 0; kk < 3; ++kk) {
          const VertexProps& vp = scene.props[f[kk]];
          albedo += (vp.material.kd * vp.texture_rgb) * fr.bary[kk];
        }
        layered.emplace_back(fr.alpha, albedo);
      }
      img.set_pixel(px, py, composite(layered, background));
    }
  }
  return img;
}

}  // namespace triplet
