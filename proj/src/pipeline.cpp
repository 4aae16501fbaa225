#include "triplet/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "triplet/errors.hpp"
#include "triplet/synthetic.hpp"

namespace triplet {

namespace fs = std::filesystem;
using nlohmann::json;

int faces_per_pixel_schedule(std::int64_t iteration, const RunConfig& cfg) {
  return iteration < cfg.warmup_end ? cfg.k_warmup : cfg.k_main;
}

double resolution_scale_schedule(std::int64_t iteration, const RunConfig& cfg) {
  if (iteration < cfg.warmup_end) return 0.25;
  if (iteration < cfg.half_res_end) return 0.5;
  return 1.0;
}

RunConfig default_config() { return RunConfig{}; }

namespace {

json config_json(const RunConfig& c) {
  json j;
  j["dataset_root"] = c.dataset_root;
  j["output_dir"] = c.output_dir;
  j["model"] = c.model == ShadingModel::BlinnPhong ? "blinn_phong" : "cook_torrance";
  j["light"] = {{"type", c.light.type},
                {"intensity", c.light.intensity},
                {"direction", {c.light.direction.x, c.light.direction.y, c.light.direction.z}},
                {"sh_band", c.light.sh_band},
                {"optimize", c.light.optimize}};
  j["loss_weights"] = {{"l1", c.weights.w_l1},
                       {"ssim", c.weights.w_ssim},
                       {"image_tv", c.weights.w_itv},
                       {"nc_discrete", c.weights.w_nc_discrete},
                       {"graph_tv", c.weights.w_gtv},
                       {"nc_connected", c.weights.w_nc_connected},
                       {"laplacian", c.weights.w_laplacian}};
  j["density"] = {{"interval", c.density.interval},
                  {"grad_threshold", c.density.grad_threshold},
                  {"size_threshold", c.density.size_threshold},
                  {"alpha_prune", c.density.alpha_prune},
                  {"max_faces", c.density.max_faces}};
  j["extract"] = {{"grid_resolution", c.extract.grid_resolution},
                  {"faces_per_pixel", c.extract.faces_per_pixel},
                  {"min_opacity", c.extract.min_opacity},
                  {"truncation_voxels", c.extract.truncation_voxels},
                  {"simplify_target", c.extract.simplify_target},
                  {"smooth_rounds", c.extract.smooth_rounds}};
  j["seed"] = c.seed;
  j["discrete_iterations"] = c.discrete_iterations;
  j["connected_iterations"] = c.connected_iterations;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["log_interval"] = c.log_interval;
  j["filter_interval"] = c.filter_interval;
  j["init_points"] = c.init_points;
  j["init_extent"] = c.init_extent;
  j["patch_radius"] = c.patch_radius;
  j["k_warmup"] = c.k_warmup;
  j["k_main"] = c.k_main;
  j["warmup_end"] = c.warmup_end;
  j["half_res_end"] = c.half_res_end;
  j["lr"] = {{"position_scale", c.lr_position_scale},
             {"position_connected", c.lr_position_connected},
             {"alpha", c.lr_alpha},
             {"material", c.lr_material},
             {"texture", c.lr_texture},
             {"light", c.lr_light},
             {"sh", c.lr_sh}};
  j["sh_clip_norm"] = c.sh_clip_norm;
  j["connected_density_interval"] = c.connected_density_interval;
  j["lr_decay"] = {{"position", c.lr_decay_position}, {"light", c.lr_decay_light}};
  j["optimize_kd"] = c.optimize_kd;
  j["optimize_ao"] = c.optimize_ao;
  j["background"] = {c.background.r, c.background.g, c.background.b};
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(1); }

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << config_to_json(cfg) << "\n";
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw InvalidInput("malformed config " + path + ": " + e.what());
  }
  RunConfig c;
  maybe(j, "dataset_root", c.dataset_root);
  maybe(j, "output_dir", c.output_dir);
  if (j.contains("model"))
    c.model = j["model"] == "blinn_phong" ? ShadingModel::BlinnPhong : ShadingModel::CookTorrance;
  if (j.contains("light")) {
    const json& l = j["light"];
    maybe(l, "type", c.light.type);
    maybe(l, "intensity", c.light.intensity);
    maybe(l, "sh_band", c.light.sh_band);
    maybe(l, "optimize", c.light.optimize);
    if (l.contains("direction"))
      c.light.direction = {l["direction"][0], l["direction"][1], l["direction"][2]};
  }
  if (j.contains("loss_weights")) {
    const json& w = j["loss_weights"];
    maybe(w, "l1", c.weights.w_l1);
    maybe(w, "ssim", c.weights.w_ssim);
    maybe(w, "image_tv", c.weights.w_itv);
    maybe(w, "nc_discrete", c.weights.w_nc_discrete);
    maybe(w, "graph_tv", c.weights.w_gtv);
    maybe(w, "nc_connected", c.weights.w_nc_connected);
    maybe(w, "laplacian", c.weights.w_laplacian);
  }
  if (j.contains("density")) {
    const json& d = j["density"];
    maybe(d, "interval", c.density.interval);
    maybe(d, "grad_threshold", c.density.grad_threshold);
    maybe(d, "size_threshold", c.density.size_threshold);
    maybe(d, "alpha_prune", c.density.alpha_prune);
    maybe(d, "max_faces", c.density.max_faces);
  }
  if (j.contains("extract")) {
    const json& e = j["extract"];
    maybe(e, "grid_resolution", c.extract.grid_resolution);
    maybe(e, "faces_per_pixel", c.extract.faces_per_pixel);
    maybe(e, "min_opacity", c.extract.min_opacity);
    maybe(e, "truncation_voxels", c.extract.truncation_voxels);
    maybe(e, "simplify_target", c.extract.simplify_target);
    maybe(e, "smooth_rounds", c.extract.smooth_rounds);
  }
  maybe(j, "seed", c.seed);
  maybe(j, "discrete_iterations", c.discrete_iterations);
  maybe(j, "connected_iterations", c.connected_iterations);
  maybe(j, "checkpoint_interval", c.checkpoint_interval);
  maybe(j, "log_interval", c.log_interval);
  maybe(j, "filter_interval", c.filter_interval);
  maybe(j, "init_points", c.init_points);
  maybe(j, "init_extent", c.init_extent);
  maybe(j, "patch_radius", c.patch_radius);
  maybe(j, "k_warmup", c.k_warmup);
  maybe(j, "k_main", c.k_main);
  maybe(j, "warmup_end", c.warmup_end);
  maybe(j, "half_res_end", c.half_res_end);
  if (j.contains("lr")) {
    const json& l = j["lr"];
    maybe(l, "position_scale", c.lr_position_scale);
    maybe(l, "position_connected", c.lr_position_connected);
    maybe(l, "alpha", c.lr_alpha);
    maybe(l, "material", c.lr_material);
    maybe(l, "texture", c.lr_texture);
    maybe(l, "light", c.lr_light);
    maybe(l, "sh", c.lr_sh);
  }
  maybe(j, "sh_clip_norm", c.sh_clip_norm);
  maybe(j, "connected_density_interval", c.connected_density_interval);
  if (j.contains("lr_decay")) {
    maybe(j["lr_decay"], "position", c.lr_decay_position);
    maybe(j["lr_decay"], "light", c.lr_decay_light);
  }
  maybe(j, "optimize_kd", c.optimize_kd);
  maybe(j, "optimize_ao", c.optimize_ao);
  if (j.contains("background"))
    c.background = {j["background"][0], j["background"][1], j["background"][2]};
  return c;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // identify the experiment, not where it reads or writes
  RunConfig c = cfg;
  c.dataset_root.clear();
  c.output_dir.clear();
  return fnv1a_hash(config_to_json(c));
}

Metrics compute_metrics(const Image& render, const Image& target) {
  if (!render.same_shape(target)) throw InvalidInput("metrics: image shape mismatch");
  Metrics m;
  double mse = 0.0;
  for (size_t i = 0; i < render.data.size(); ++i) {
    const double d = render.data[i] - target.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(render.data.size());
  m.psnr = mse > 0.0 ? -10.0 * std::log10(mse) : std::numeric_limits<double>::infinity();
  m.ssim = ssim_index(render, target);
  m.l1 = l1_loss(render, target);
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_json_line(std::int64_t iteration, const LossTerms& terms, double total,
                              int faces, const std::optional<Metrics>& eval) {
  std::string line = "{\"iter\":" + std::to_string(iteration);
  line += ",\"l1\":" + fmt(terms.l1);
  line += ",\"ssim_loss\":" + fmt(terms.ssim);
  line += ",\"image_tv\":" + fmt(terms.itv);
  line += ",\"nc_discrete\":" + fmt(terms.nc_discrete);
  line += ",\"graph_tv\":" + fmt(terms.gtv);
  line += ",\"nc_connected\":" + fmt(terms.nc_connected);
  line += ",\"laplacian\":" + fmt(terms.laplacian);
  line += ",\"total\":" + fmt(total);
  line += ",\"faces\":" + std::to_string(faces);
  if (eval.has_value()) {
    line += std::isinf(eval->psnr) ? ",\"psnr\":null" : ",\"psnr\":" + fmt(eval->psnr);
    line += ",\"ssim\":" + fmt(eval->ssim);
  }
  line += "}";
  return line;
}

// ---------------------------------------------------------------------------
// parameter plumbing
// ---------------------------------------------------------------------------

int ParamSet::find(const std::string& name) const {
  for (size_t i = 0; i < groups.size(); ++i)
    if (groups[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

constexpr double kMaxShininessRaw = 6.931471805599453;  // ln(1024)

ParamGroup make_group(const std::string& name, Reparam reparam, double lr, size_t n) {
  ParamGroup g;
  g.name = name;
  g.reparam = reparam;
  g.learning_rate = lr;
  g.values.assign(n, 0.0);
  return g;
}

}  // namespace

ParamSet build_params(const TripletScene& scene, const std::vector<Light>& lights,
                      const RunConfig& cfg, double scene_extent) {
  ParamSet ps;
  const size_t nv = scene.vertices.size();
  const bool connected = scene.connectivity_mode == ConnectivityMode::Connected;

  ParamGroup pos = make_group("position", Reparam::Identity,
                              cfg.lr_position_scale * scene_extent, nv * 3);
  ParamGroup tex = make_group("texture", Reparam::Sigmoid, cfg.lr_texture, nv * 3);
  ParamGroup rough = make_group("roughness", Reparam::Sigmoid, cfg.lr_material, nv);
  ParamGroup metal = make_group("metallic", Reparam::Sigmoid, cfg.lr_material, nv);
  for (size_t i = 0; i < nv; ++i) {
    const Vec3& v = scene.vertices[i];
    pos.values[i * 3 + 0] = v.x;
    pos.values[i * 3 + 1] = v.y;
    pos.values[i * 3 + 2] = v.z;
    const VertexProps& p = scene.props[i];
    for (int c = 0; c < 3; ++c)
      tex.values[i * 3 + c] = reparam_invert(Reparam::Sigmoid, p.texture_rgb[c]);
    rough.values[i] = reparam_invert(Reparam::Sigmoid, p.material.roughness);
    metal.values[i] = reparam_invert(Reparam::Sigmoid, p.material.metallic);
  }
  ps.groups.push_back(std::move(pos));
  ps.groups.push_back(std::move(tex));
  ps.groups.push_back(std::move(rough));
  ps.groups.push_back(std::move(metal));

  if (!connected) {
    ParamGroup alpha = make_group("alpha", Reparam::Sigmoid, cfg.lr_alpha, nv);
    for (size_t i = 0; i < nv; ++i)
      alpha.values[i] = reparam_invert(Reparam::Sigmoid, scene.props[i].alpha);
    ps.groups.push_back(std::move(alpha));
  }
  if (cfg.optimize_kd) {
    ParamGroup kd = make_group("kd", Reparam::Sigmoid, cfg.lr_material, nv * 3);
    for (size_t i = 0; i < nv; ++i)
      for (int c = 0; c < 3; ++c)
        kd.values[i * 3 + c] = reparam_invert(Reparam::Sigmoid, scene.props[i].material.kd[c]);
    ps.groups.push_back(std::move(kd));
  }
  if (cfg.optimize_ao) {
    ParamGroup ao = make_group("ao", Reparam::Sigmoid, cfg.lr_material, nv);
    for (size_t i = 0; i < nv; ++i)
      ao.values[i] = reparam_invert(Reparam::Sigmoid, scene.props[i].material.ao);
    ps.groups.push_back(std::move(ao));
  }
  if (cfg.model == ShadingModel::BlinnPhong) {
    ParamGroup ks = make_group("ks", Reparam::Sigmoid, cfg.lr_material, nv * 3);
    ParamGroup shin = make_group("shininess", Reparam::Exp, cfg.lr_material, nv);
    for (size_t i = 0; i < nv; ++i) {
      for (int c = 0; c < 3; ++c)
        ks.values[i * 3 + c] = reparam_invert(Reparam::Sigmoid, scene.props[i].material.ks[c]);
      shin.values[i] =
          std::min(reparam_invert(Reparam::Exp, scene.props[i].material.shininess),
                   kMaxShininessRaw);
    }
    ps.groups.push_back(std::move(ks));
    ps.groups.push_back(std::move(shin));
  }

  if (cfg.light.optimize) {
    for (size_t li = 0; li < lights.size(); ++li) {
      const std::string tag = "light" + std::to_string(li) + "_";
      if (const auto* pl = std::get_if<PointLight>(&lights[li])) {
        ParamGroup p = make_group(tag + "position", Reparam::Identity, cfg.lr_light, 3);
        p.values = {pl->position.x, pl->position.y, pl->position.z};
        ParamGroup it = make_group(tag + "intensity", Reparam::Exp, cfg.lr_light, 1);
        it.values = {reparam_invert(Reparam::Exp, pl->intensity)};
        ps.groups.push_back(std::move(p));
        ps.groups.push_back(std::move(it));
      } else if (const auto* dl = std::get_if<DirectionalLight>(&lights[li])) {
        ParamGroup d = make_group(tag + "direction", Reparam::Identity, cfg.lr_light, 3);
        d.values = {dl->direction.x, dl->direction.y, dl->direction.z};
        ParamGroup it = make_group(tag + "intensity", Reparam::Exp, cfg.lr_light, 1);
        it.values = {reparam_invert(Reparam::Exp, dl->intensity)};
        ps.groups.push_back(std::move(d));
        ps.groups.push_back(std::move(it));
      } else if (const auto* vl = std::get_if<VertexShLight>(&lights[li])) {
        const int n = 3 * vl->band_limit * vl->band_limit;
        ParamGroup sh = make_group(tag + "vertex_sh", Reparam::Identity, cfg.lr_sh,
                                   vl->per_vertex.size() * n);
        sh.clip_norm = cfg.sh_clip_norm;
        for (size_t v = 0; v < vl->per_vertex.size(); ++v)
          std::copy(vl->per_vertex[v].coeffs.begin(), vl->per_vertex[v].coeffs.end(),
                    sh.values.begin() + v * n);
        ps.groups.push_back(std::move(sh));
      } else if (const auto* el = std::get_if<EnvironmentShLight>(&lights[li])) {
        ParamGroup sh =
            make_group(tag + "env_sh", Reparam::Identity, cfg.lr_sh, el->coeffs.coeffs.size());
        sh.clip_norm = cfg.sh_clip_norm;
        sh.values = el->coeffs.coeffs;
        ps.groups.push_back(std::move(sh));
      }
    }
  }

  ps.states.resize(ps.groups.size());
  for (size_t i = 0; i < ps.groups.size(); ++i) ps.states[i].resize(ps.groups[i].values.size());
  return ps;
}

void apply_params(const ParamSet& params, TripletScene& scene, std::vector<Light>& lights) {
  const size_t nv = scene.vertices.size();
  for (const ParamGroup& g : params.groups) {
    if (g.name == "position") {
      for (size_t i = 0; i < nv; ++i)
        scene.vertices[i] = {g.values[i * 3], g.values[i * 3 + 1], g.values[i * 3 + 2]};
    } else if (g.name == "texture") {
      for (size_t i = 0; i < nv; ++i)
        for (int c = 0; c < 3; ++c)
          scene.props[i].texture_rgb[c] = reparam_apply(Reparam::Sigmoid, g.values[i * 3 + c]);
    } else if (g.name == "alpha") {
      for (size_t i = 0; i < nv; ++i)
        scene.props[i].alpha = reparam_apply(Reparam::Sigmoid, g.values[i]);
    } else if (g.name == "roughness") {
      for (size_t i = 0; i < nv; ++i)
        scene.props[i].material.roughness = reparam_apply(Reparam::Sigmoid, g.values[i]);
    } else if (g.name == "metallic") {
      for (size_t i = 0; i < nv; ++i)
        scene.props[i].material.metallic = reparam_apply(Reparam::Sigmoid, g.values[i]);
    } else if (g.name == "kd") {
      for (size_t i = 0; i < nv; ++i)
        for (int c = 0; c < 3; ++c)
          scene.props[i].material.kd[c] = reparam_apply(Reparam::Sigmoid, g.values[i * 3 + c]);
    } else if (g.name == "ao") {
      for (size_t i = 0; i < nv; ++i)
        scene.props[i].material.ao = reparam_apply(Reparam::Sigmoid, g.values[i]);
    } else if (g.name == "ks") {
      for (size_t i = 0; i < nv; ++i)
        for (int c = 0; c < 3; ++c)
          scene.props[i].material.ks[c] = reparam_apply(Reparam::Sigmoid, g.values[i * 3 + c]);
    } else if (g.name == "shininess") {
      for (size_t i = 0; i < nv; ++i)
        scene.props[i].material.shininess =
            reparam_apply(Reparam::Exp, std::min(g.values[i], kMaxShininessRaw));
    } else if (g.name.rfind("light", 0) == 0) {
      const size_t underscore = g.name.find('_');
      const size_t li = std::stoul(g.name.substr(5, underscore - 5));
      const std::string what = g.name.substr(underscore + 1);
      if (li >= lights.size()) continue;
      if (auto* pl = std::get_if<PointLight>(&lights[li])) {
        if (what == "position") pl->position = {g.values[0], g.values[1], g.values[2]};
        else if (what == "intensity") pl->intensity = reparam_apply(Reparam::Exp, g.values[0]);
      } else if (auto* dl = std::get_if<DirectionalLight>(&lights[li])) {
        if (what == "direction") dl->direction = {g.values[0], g.values[1], g.values[2]};
        else if (what == "intensity") dl->intensity = reparam_apply(Reparam::Exp, g.values[0]);
      } else if (auto* vl = std::get_if<VertexShLight>(&lights[li])) {
        const int n = 3 * vl->band_limit * vl->band_limit;
        for (size_t v = 0; v < vl->per_vertex.size(); ++v)
          std::copy(g.values.begin() + v * n, g.values.begin() + (v + 1) * n,
                    vl->per_vertex[v].coeffs.begin());
      } else if (auto* el = std::get_if<EnvironmentShLight>(&lights[li])) {
        el->coeffs.coeffs = g.values;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

struct RegGrads {
  std::vector<Vec3> d_position;
  std::vector<Rgb> d_texture;
  std::vector<double> d_roughness;
  std::vector<double> d_metallic;
};

// Exponential lr anneal for the drift-prone groups, fraction in [0,1].
void anneal_learning_rates(ParamSet& ps, const std::vector<double>& base_lr,
                           const RunConfig& cfg, double fraction) {
  for (size_t gi = 0; gi < ps.groups.size(); ++gi) {
    ParamGroup& g = ps.groups[gi];
    double decay = 1.0;
    if (g.name == "position") decay = cfg.lr_decay_position;
    else if (g.name.rfind("light", 0) == 0) decay = cfg.lr_decay_light;
    g.learning_rate = decay == 1.0 ? base_lr[gi] : base_lr[gi] * std::pow(decay, fraction);
  }
}

std::vector<double> base_learning_rates(const ParamSet& ps) {
  std::vector<double> out(ps.groups.size());
  for (size_t i = 0; i < ps.groups.size(); ++i) out[i] = ps.groups[i].learning_rate;
  return out;
}

// Collects constrained-space gradients into per-group raw gradients and steps.
void step_params(ParamSet& ps, const TripletScene& scene, const std::vector<Light>& lights,
                 const RenderGradients& rg, const RegGrads& reg, const LossWeights& w,
                 double w_image) {
  const size_t nv = scene.vertices.size();
  for (size_t gi = 0; gi < ps.groups.size(); ++gi) {
    ParamGroup& g = ps.groups[gi];
    std::vector<double> grad(g.values.size(), 0.0);
    if (g.name == "position") {
      for (size_t i = 0; i < nv; ++i) {
        Vec3 d = rg.d_position[i] * w_image;
        if (!reg.d_position.empty()) d += reg.d_position[i];
        grad[i * 3 + 0] = d.x;
        grad[i * 3 + 1] = d.y;
        grad[i * 3 + 2] = d.z;
      }
    } else if (g.name == "texture") {
      for (size_t i = 0; i < nv; ++i)
        for (int c = 0; c < 3; ++c) {
          double d = rg.d_texture[i][c] * w_image;
          if (!reg.d_texture.empty()) d += reg.d_texture[i][c];
          grad[i * 3 + c] = d;
        }
    } else if (g.name == "alpha") {
      for (size_t i = 0; i < nv; ++i) grad[i] = rg.d_alpha[i] * w_image;
    } else if (g.name == "roughness") {
      for (size_t i = 0; i < nv; ++i) {
        grad[i] = rg.d_roughness[i] * w_image;
        if (!reg.d_roughness.empty()) grad[i] += reg.d_roughness[i];
      }
    } else if (g.name == "metallic") {
      for (size_t i = 0; i < nv; ++i) {
        grad[i] = rg.d_metallic[i] * w_image;
        if (!reg.d_metallic.empty()) grad[i] += reg.d_metallic[i];
      }
    } else if (g.name == "kd") {
      for (size_t i = 0; i < nv; ++i)
        for (int c = 0; c < 3; ++c) grad[i * 3 + c] = rg.d_kd[i][c] * w_image;
    } else if (g.name == "ao") {
      for (size_t i = 0; i < nv; ++i) grad[i] = rg.d_ao[i] * w_image;
    } else if (g.name == "ks") {
      for (size_t i = 0; i < nv; ++i)
        for (int c = 0; c < 3; ++c) grad[i * 3 + c] = rg.d_ks[i][c] * w_image;
    } else if (g.name == "shininess") {
      for (size_t i = 0; i < nv; ++i) grad[i] = rg.d_shininess[i] * w_image;
    } else if (g.name.rfind("light", 0) == 0) {
      const size_t underscore = g.name.find('_');
      const size_t li = std::stoul(g.name.substr(5, underscore - 5));
      const std::string what = g.name.substr(underscore + 1);
      const LightGrads& lg = rg.d_lights[li];
      if (what == "position") {
        grad = {lg.d_position.x * w_image, lg.d_position.y * w_image, lg.d_position.z * w_image};
      } else if (what == "direction") {
        grad = {lg.d_direction.x * w_image, lg.d_direction.y * w_image,
                lg.d_direction.z * w_image};
      } else if (what == "intensity") {
        grad = {lg.d_intensity * w_image};
      } else if (what == "vertex_sh") {
        size_t off = 0;
        for (const auto& per_v : lg.d_vertex_sh) {
          for (double v : per_v) grad[off++] = v * w_image;
        }
      } else if (what == "env_sh") {
        for (size_t i = 0; i < lg.d_sh.size(); ++i) grad[i] = lg.d_sh[i] * w_image;
      }
    }
    (void)w;
    reparam_backward(g, grad);
    if (g.clip_norm > 0.0) clip_grad_norm(grad, g.clip_norm);
    adam_step(g, ps.states[gi], grad);
  }
}

void remap_adam_after_edit(ParamSet& fresh, const ParamSet& old, const std::vector<int>& src) {
  for (size_t gi = 0; gi < fresh.groups.size(); ++gi) {
    const int oi = old.find(fresh.groups[gi].name);
    if (oi < 0) continue;
    AdamState& ns = fresh.states[gi];
    const AdamState& os = old.states[oi];
    ns.t = os.t;
    if (fresh.groups[gi].name.rfind("light", 0) == 0) {
      if (ns.m.size() == os.m.size()) {
        ns.m = os.m;
        ns.v = os.v;
      }
      continue;
    }
    const size_t stride = fresh.groups[gi].values.size() / src.size();
    const size_t old_n = old.groups[oi].values.size() / stride;
    for (size_t i = 0; i < src.size(); ++i) {
      if (src[i] < 0 || static_cast<size_t>(src[i]) >= old_n) continue;
      for (size_t k = 0; k < stride; ++k) {
        ns.m[i * stride + k] = os.m[src[i] * stride + k];
        ns.v[i * stride + k] = os.v[src[i] * stride + k];
      }
    }
  }
}

std::vector<Light> init_lights(const RunConfig& cfg, const TripletScene& scene,
                               const std::vector<const DatasetFrame*>& train, Rng& rng) {
  std::vector<Light> lights;
  if (cfg.light.type == "point") {
    PointLight pl;
    // A light inside the init cloud blows out its neighbourhood through the
    // inverse-square law and kills every nearby alpha, so seed it at the first
    // training camera instead (a flash prior outside the matter).
    pl.position = !train.empty() ? train.front()->camera.position() : Vec3{0, 0, 0};
    pl.intensity = cfg.light.intensity;
    lights.emplace_back(pl);
  } else if (cfg.light.type == "directional") {
    DirectionalLight dl;
    dl.direction = cfg.light.direction;
    dl.intensity = cfg.light.intensity;
    lights.emplace_back(dl);
  } else if (cfg.light.type == "vertex_sh") {
    VertexShLight vl;
    vl.band_limit = cfg.light.sh_band;
    vl.per_vertex.reserve(scene.vertices.size());
    for (size_t i = 0; i < scene.vertices.size(); ++i) {
      ShCoeffs c = ShCoeffs::zeros(vl.band_limit);
      const Vec3 dir = rng.unit_vector();
      for (int ch = 0; ch < 3; ++ch) {
        c.at(ch, 0) = 1.0 / kShY00;  // radiance 1
        if (vl.band_limit > 1) {
          c.at(ch, 3) = 0.1 * dir.x;
          c.at(ch, 1) = 0.1 * dir.y;
          c.at(ch, 2) = 0.1 * dir.z;
        }
      }
      vl.per_vertex.push_back(std::move(c));
    }
    lights.emplace_back(std::move(vl));
  } else if (cfg.light.type == "env_sh") {
    EnvironmentShLight el;
    el.coeffs = ShCoeffs::zeros(9);
    for (int ch = 0; ch < 3; ++ch) el.coeffs.at(ch, 0) = 1.0 / kShY00;
    lights.emplace_back(std::move(el));
  } else {
    throw InvalidInput("unknown light type: " + cfg.light.type);
  }
  return lights;
}

// Vertex-SH lights must track vertex-set edits.
void remap_vertex_sh(std::vector<Light>& lights, const std::vector<int>& src, Rng& rng) {
  for (Light& l : lights) {
    auto* vl = std::get_if<VertexShLight>(&l);
    if (vl == nullptr) continue;
    std::vector<ShCoeffs> next(src.size());
    for (size_t i = 0; i < src.size(); ++i) {
      if (src[i] >= 0 && static_cast<size_t>(src[i]) < vl->per_vertex.size()) {
        next[i] = vl->per_vertex[src[i]];
      } else {
        ShCoeffs c = ShCoeffs::zeros(vl->band_limit);
        const Vec3 dir = rng.unit_vector();
        for (int ch = 0; ch < 3; ++ch) {
          c.at(ch, 0) = 1.0 / kShY00;
          if (vl->band_limit > 1) {
            c.at(ch, 3) = 0.1 * dir.x;
            c.at(ch, 1) = 0.1 * dir.y;
            c.at(ch, 2) = 0.1 * dir.z;
          }
        }
        next[i] = std::move(c);
      }
    }
    vl->per_vertex = std::move(next);
  }
}

void rebuild_vertex_sh_nn(std::vector<Light>& lights, const std::vector<Vec3>& old_pos,
                          const std::vector<Vec3>& new_pos) {
  for (Light& l : lights) {
    auto* vl = std::get_if<VertexShLight>(&l);
    if (vl == nullptr || old_pos.empty()) continue;
    std::vector<ShCoeffs> next(new_pos.size());
    for (size_t i = 0; i < new_pos.size(); ++i) {
      size_t best = 0;
      double best_d = std::numeric_limits<double>::max();
      for (size_t j = 0; j < old_pos.size(); ++j) {
        const double d = norm2(new_pos[i] - old_pos[j]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      next[i] = vl->per_vertex[best];
    }
    vl->per_vertex = std::move(next);
  }
}

struct TargetPyramid {
  Image full, half, quarter;
  const Image& at(double scale) const {
    if (scale <= 0.3) return quarter;
    if (scale <= 0.6) return half;
    return full;
  }
};

}  // namespace

OptimizeResult optimize(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  const std::string metrics_path = (fs::path(cfg.output_dir) / "metrics.jsonl").string();
  std::ofstream metrics_out(metrics_path, std::ios::trunc);
  if (!metrics_out) throw IoError("cannot write " + metrics_path);
  const std::uint64_t chash = config_hash(cfg);

  const std::vector<DatasetFrame> frames = load_dataset(cfg.dataset_root, cfg.background);
  std::vector<const DatasetFrame*> train;
  for (const DatasetFrame& f : frames)
    if (f.split == Split::Train) train.push_back(&f);
  if (train.empty()) throw DatasetError("no training frames");

  std::vector<TargetPyramid> pyramids(train.size());
  for (size_t i = 0; i < train.size(); ++i) {
    pyramids[i].full = train[i]->image;
    pyramids[i].half = downscale(train[i]->image, 2);
    pyramids[i].quarter = downscale(train[i]->image, 4);
  }

  Rng rng(cfg.seed);

  // random init cloud inside a ball
  std::vector<Vec3> points;
  points.reserve(cfg.init_points);
  while (static_cast<int>(points.size()) < cfg.init_points) {
    const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (norm(p) <= 1.0) points.push_back(p * cfg.init_extent);
  }
  const double patch_radius =
      cfg.patch_radius > 0.0 ? cfg.patch_radius : 0.5 * mean_nn_distance(points);
  TripletScene scene = assemble_triplets(points, patch_radius, cfg.seed + 1);
  const double extent = 2.0 * cfg.init_extent;

  DensityConfig density = cfg.density;
  if (density.size_threshold <= 0.0)
    density.size_threshold = 0.01 * extent * std::sqrt(3.0);  // 1% of AABB diagonal

  std::vector<Light> lights = init_lights(cfg, scene, train, rng);
  ParamSet params = build_params(scene, lights, cfg, extent);
  std::vector<double> base_lr = base_learning_rates(params);
  const double total_iters =
      std::max<std::int64_t>(1, cfg.discrete_iterations + cfg.connected_iterations);
  GradStats stats;
  stats.reset(scene.vertices.size());

  std::vector<Vec3> nc_ref_normals;
  std::vector<double> nc_weights;
  knn_reference_normals(scene, 8, nc_ref_normals, nc_weights);

  OptimizeResult result;
  result.metrics_path = metrics_path;
  std::string last_ckpt;

  auto save_ckpt = [&](int phase, std::int64_t it, const std::string& name) {
    Checkpoint ck;
    ck.config_hash = chash;
    ck.phase = phase;
    ck.iteration = it;
    ck.model = cfg.model;
    ck.scene = scene;
    ck.lights = lights;
    ck.groups = params.groups;
    ck.states = params.states;
    ck.rng_state = rng.next_u64();  // advances; deterministic by construction
    const std::string path = (fs::path(cfg.output_dir) / name).string();
    save_checkpoint(ck, path);
    last_ckpt = path;
    return path;
  };

  // ---- phase A: discrete triplets ----
  for (std::int64_t it = 0; it < cfg.discrete_iterations; ++it) {
    apply_params(params, scene, lights);

    const double scale = resolution_scale_schedule(it, cfg);
    const int k = faces_per_pixel_schedule(it, cfg);
    const int band = sh_band_schedule(it, TransportMode::Rasterize);
    const size_t frame_idx = rng.uniform_int(static_cast<int>(train.size()));
    const Camera cam = train[frame_idx]->camera.scaled(scale);
    const Image& target = pyramids[frame_idx].at(scale);

    RenderOptions opts;
    opts.k = k;
    opts.active_band = band;
    opts.model = cfg.model;
    opts.background = cfg.background;
    RenderCache cache;
    const Image img = render(scene, cam, lights, opts, &cache);

    LossTerms terms;
    terms.l1 = l1_loss(img, target);
    terms.ssim = ssim_loss(img, target);
    terms.itv = image_tv(img);
    const NormalConsistencyDiscrete nc = normal_consistency_discrete(scene, nc_ref_normals, nc_weights);
    terms.nc_discrete = nc.loss;
    double total;
    try {
      total = total_loss(terms, cfg.weights, ConnectivityMode::Discrete);
    } catch (const LossDiverged&) {
      metrics_out << "{\"iter\":" << it << ",\"error\":\"loss diverged\"}" << std::endl;
      throw;
    }
    if (it == 0) result.first_l1 = terms.l1;
    result.last_l1 = terms.l1;

    // image-space upstream gradient
    Image d_img = l1_backward(img, target);
    const Image d_ssim = ssim_backward(img, target);
    const Image d_itv = image_tv_backward(img);
    for (size_t i = 0; i < d_img.data.size(); ++i)
      d_img.data[i] = cfg.weights.w_l1 * d_img.data[i] + cfg.weights.w_ssim * d_ssim.data[i] +
                      cfg.weights.w_itv * d_itv.data[i];

    const RenderGradients rg = render_backward(scene, lights, cache, d_img);

    RegGrads reg;
    reg.d_position = normal_consistency_discrete_backward(scene, nc_ref_normals, nc_weights);
    for (Vec3& v : reg.d_position) v *= cfg.weights.w_nc_discrete;

    anneal_learning_rates(params, base_lr, cfg, static_cast<double>(it) / total_iters);
    step_params(params, scene, lights, rg, reg, cfg.weights, 1.0);
    // screen gradients in NDC units so grad_threshold is resolution-independent
    std::vector<Vec2> ndc_grads = rg.d_screen;
    const double ndc_scale = 0.5 * std::max(cam.width, cam.height);
    for (Vec2& v : ndc_grads) v = v * ndc_scale;
    accumulate_grad_stats(stats, ndc_grads, rg.d_position);

    if (it % cfg.log_interval == 0)
      metrics_out << metrics_json_line(it, terms, total, scene.face_count(), std::nullopt)
                  << std::endl;
    if (cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0)
      save_ckpt(0, it + 1, "ckpt_" + std::to_string(it + 1) + ".ckpt");

    if ((it + 1) % density.interval == 0 && it + 1 < cfg.discrete_iterations) {
      apply_params(params, scene, lights);
      const SceneEdit edit = densify_and_prune(scene, stats, density);
      if (edit.empty_scene) {
        metrics_out << "{\"iter\":" << it << ",\"error\":\"EmptyScene\"}" << std::endl;
        throw InvalidState("EmptyScene: density control pruned every face");
      }
      remap_vertex_sh(lights, edit.src_vertex, rng);
      ParamSet fresh = build_params(scene, lights, cfg, extent);
      remap_adam_after_edit(fresh, params, edit.src_vertex);
      params = std::move(fresh);
      base_lr = base_learning_rates(params);
      stats.reset(scene.vertices.size());
      knn_reference_normals(scene, 8, nc_ref_normals, nc_weights);
    }
  }
  apply_params(params, scene, lights);
  result.discrete_scene = scene;
  save_ckpt(0, cfg.discrete_iterations, "discrete.ckpt");

  // ---- phase B: extraction + connected refinement ----
  TripletScene mesh;
  if (cfg.connected_iterations > 0) {
    std::vector<Camera> cams;
    for (const auto* f : train) cams.push_back(f->camera);
    mesh = extract_mesh(scene, cams, cfg.extract);
    transfer_properties(scene, mesh);
    rebuild_vertex_sh_nn(lights, scene.vertices, mesh.vertices);

    RunConfig cfg_b = cfg;
    if (cfg.lr_position_connected > 0.0) cfg_b.lr_position_scale = cfg.lr_position_connected;
    ParamSet mesh_params = build_params(mesh, lights, cfg_b, extent);
    std::vector<double> mesh_base_lr = base_learning_rates(mesh_params);
    GradStats mesh_stats;
    mesh_stats.reset(mesh.vertices.size());

    for (std::int64_t it = 0; it < cfg.connected_iterations; ++it) {
      const std::int64_t global_it = cfg.discrete_iterations + it;
      apply_params(mesh_params, mesh, lights);

      const int band = sh_band_schedule(global_it, TransportMode::Rasterize);
      const size_t frame_idx = rng.uniform_int(static_cast<int>(train.size()));
      const Camera& cam = train[frame_idx]->camera;
      const Image& target = pyramids[frame_idx].full;

      RenderOptions opts;
      opts.k = cfg.k_main;
      opts.active_band = band;
      opts.model = cfg.model;
      opts.background = cfg.background;
      RenderCache cache;
      const Image img = render(mesh, cam, lights, opts, &cache);

      LossTerms terms;
      terms.l1 = l1_loss(img, target);
      terms.ssim = ssim_loss(img, target);
      terms.itv = image_tv(img);

      std::vector<double> tex_field(mesh.vertices.size() * 3), rough_field(mesh.vertices.size()),
          metal_field(mesh.vertices.size());
      for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        for (int c = 0; c < 3; ++c) tex_field[i * 3 + c] = mesh.props[i].texture_rgb[c];
        rough_field[i] = mesh.props[i].material.roughness;
        metal_field[i] = mesh.props[i].material.metallic;
      }
      terms.gtv = graph_tv(mesh, tex_field, 3) + graph_tv(mesh, rough_field, 1) +
                  graph_tv(mesh, metal_field, 1);
      terms.nc_connected = normal_consistency_connected(mesh);
      terms.laplacian = laplacian_loss(mesh);
      double total;
      try {
        total = total_loss(terms, cfg.weights, ConnectivityMode::Connected);
      } catch (const LossDiverged&) {
        metrics_out << "{\"iter\":" << global_it << ",\"error\":\"loss diverged\"}" << std::endl;
        throw;
      }
      result.last_l1 = terms.l1;

      Image d_img = l1_backward(img, target);
      const Image d_ssim = ssim_backward(img, target);
      const Image d_itv = image_tv_backward(img);
      for (size_t i = 0; i < d_img.data.size(); ++i)
        d_img.data[i] = cfg.weights.w_l1 * d_img.data[i] + cfg.weights.w_ssim * d_ssim.data[i] +
                        cfg.weights.w_itv * d_itv.data[i];
      const RenderGradients rg = render_backward(mesh, lights, cache, d_img);

      RegGrads reg;
      reg.d_position = normal_consistency_connected_backward(mesh);
      const std::vector<Vec3> lap = laplacian_backward(mesh);
      for (size_t i = 0; i < reg.d_position.size(); ++i)
        reg.d_position[i] = reg.d_position[i] * cfg.weights.w_nc_connected +
                            lap[i] * cfg.weights.w_laplacian;
      const std::vector<double> gtex = graph_tv_backward(mesh, tex_field, 3);
      const std::vector<double> grough = graph_tv_backward(mesh, rough_field, 1);
      const std::vector<double> gmetal = graph_tv_backward(mesh, metal_field, 1);
      reg.d_texture.assign(mesh.vertices.size(), Rgb{});
      reg.d_roughness.assign(mesh.vertices.size(), 0.0);
      reg.d_metallic.assign(mesh.vertices.size(), 0.0);
      for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        for (int c = 0; c < 3; ++c) reg.d_texture[i][c] = cfg.weights.w_gtv * gtex[i * 3 + c];
        reg.d_roughness[i] = cfg.weights.w_gtv * grough[i];
        reg.d_metallic[i] = cfg.weights.w_gtv * gmetal[i];
      }

      anneal_learning_rates(mesh_params, mesh_base_lr, cfg,
                            static_cast<double>(global_it) / total_iters);
      step_params(mesh_params, mesh, lights, rg, reg, cfg.weights, 1.0);
      std::vector<Vec2> ndc_grads = rg.d_screen;
      const double ndc_scale = 0.5 * std::max(cam.width, cam.height);
      for (Vec2& v : ndc_grads) v = v * ndc_scale;
      accumulate_grad_stats(mesh_stats, ndc_grads, rg.d_position);

      if (global_it % cfg.log_interval == 0)
        metrics_out << metrics_json_line(global_it, terms, total, mesh.face_count(), std::nullopt)
                    << std::endl;

      const bool last_iteration = it + 1 == cfg.connected_iterations;
      if (cfg.filter_interval > 0 && (it + 1) % cfg.filter_interval == 0 && !last_iteration) {
        apply_params(mesh_params, mesh, lights);
        ring_filter_materials(mesh, 1);
        ParamSet fresh = build_params(mesh, lights, cfg_b, extent);
        // same vertex set: keep the optimizer state
        std::vector<int> ident(mesh.vertices.size());
        for (size_t i = 0; i < ident.size(); ++i) ident[i] = static_cast<int>(i);
        remap_adam_after_edit(fresh, mesh_params, ident);
        mesh_params = std::move(fresh);
        mesh_base_lr = base_learning_rates(mesh_params);
      }

      if (cfg.connected_density_interval > 0 &&
          (it + 1) % cfg.connected_density_interval == 0 && !last_iteration) {
        apply_params(mesh_params, mesh, lights);
        double mean_grad = 0.0;
        int counted = 0;
        for (size_t i = 0; i < mesh_stats.size(); ++i)
          if (mesh_stats.count[i] > 0) {
            mean_grad += mesh_stats.norm_sum[i] / mesh_stats.count[i];
            ++counted;
          }
        mean_grad = counted > 0 ? mean_grad / counted : 0.0;
        bool edited = false;
        const std::vector<Vec3> old_pos = mesh.vertices;
        if (mean_grad > density.grad_threshold &&
            mesh.face_count() * 4 <= density.max_faces) {
          mesh = loop_subdivide(mesh);
          edited = true;
        } else if (mean_grad < 0.25 * density.grad_threshold && mesh.face_count() > 800) {
          mesh = qem_simplify(mesh, mesh.face_count() * 3 / 4);
          edited = true;
        }
        if (edited) {
          rebuild_vertex_sh_nn(lights, old_pos, mesh.vertices);
          mesh_params = build_params(mesh, lights, cfg_b, extent);
          mesh_base_lr = base_learning_rates(mesh_params);
          mesh_stats.reset(mesh.vertices.size());
        }
      }

      if (cfg.checkpoint_interval > 0 && (global_it + 1) % cfg.checkpoint_interval == 0) {
        // connected-phase checkpoints carry the mesh
        std::swap(scene, mesh);
        std::swap(params, mesh_params);
        save_ckpt(1, global_it + 1, "ckpt_" + std::to_string(global_it + 1) + ".ckpt");
        std::swap(scene, mesh);
        std::swap(params, mesh_params);
      }
    }
    apply_params(mesh_params, mesh, lights);
    result.connected_mesh = mesh;

    std::swap(scene, mesh);
    std::swap(params, mesh_params);
    result.final_checkpoint = save_ckpt(1, cfg.discrete_iterations + cfg.connected_iterations,
                                        "final.ckpt");
    std::swap(scene, mesh);
    std::swap(params, mesh_params);
  } else {
    result.final_checkpoint = save_ckpt(0, cfg.discrete_iterations, "final.ckpt");
  }

  result.lights = lights;
  result.iterations_run = cfg.discrete_iterations + cfg.connected_iterations;
  metrics_out.flush();
  return result;
}

std::vector<Metrics> evaluate_checkpoint(const Checkpoint& ckpt,
                                         const std::vector<DatasetFrame>& frames,
                                         const RunConfig& cfg) {
  std::vector<Metrics> out;
  RenderOptions opts;
  opts.k = cfg.k_main;
  opts.active_band = kMaxShBand;
  opts.model = ckpt.model;
  opts.background = cfg.background;
  for (const DatasetFrame& f : frames) {
    if (f.split != Split::Test) continue;
    const Image img = render(ckpt.scene, f.camera, ckpt.lights, opts);
    out.push_back(compute_metrics(img, f.image));
  }
  return out;
}

}  // namespace triplet
