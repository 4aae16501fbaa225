#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "triplet/checkpoint.hpp"
#include "triplet/dataset.hpp"
#include "triplet/errors.hpp"
#include "triplet/image_io.hpp"
#include "triplet/mesh_io.hpp"
#include "triplet/optim.hpp"
#include "triplet/pipeline.hpp"
#include "triplet/rasterizer.hpp"
#include "triplet/synthetic.hpp"
#include "triplet/topology.hpp"

namespace fs = std::filesystem;
using namespace triplet;

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kInternalError = 2;

// Synthetic icosphere dataset rendered with the engine's own forward path.
void write_demo_dataset(const std::string& dir, int train_views, int test_views, int res,
                        std::uint64_t seed) {
  TripletScene sphere = make_icosphere(3, 1.0);
  paint_texture_bands(sphere);
  for (auto& p : sphere.props) {
    p.material.kd = Rgb(0.5);
    p.material.roughness = 0.8;
    p.material.metallic = 0.0;
  }
  PointLight pl;
  pl.position = {1.5, 1.8, 2.2};
  pl.intensity = 40.0;
  const std::vector<Light> lights = {Light{pl}};

  const double focal = 1.2 * res;
  const std::vector<Camera> train_cams = ring_cameras(train_views, 3.0, res, res, focal, 0.4, seed);
  const std::vector<Camera> test_cams =
      ring_cameras(test_views, 3.0, res, res, focal, 0.3, seed + 17);

  RenderOptions opts;
  opts.k = 30;
  opts.background = {1, 1, 1};
  std::vector<DatasetFrame> frames;
  for (const Camera& cam : train_cams) {
    DatasetFrame f;
    f.split = Split::Train;
    f.camera = cam;
    f.image = render(sphere, cam, lights, opts);
    frames.push_back(std::move(f));
  }
  for (const Camera& cam : test_cams) {
    DatasetFrame f;
    f.split = Split::Test;
    f.camera = cam;
    f.image = render(sphere, cam, lights, opts);
    frames.push_back(std::move(f));
  }
  const double angle_x = 2.0 * std::atan(0.5 * res / focal);
  save_dataset(dir, frames, angle_x);
}

int cmd_gradcheck() {
  Rng rng(123);
  double worst = 0.0;
  std::string worst_name = "none";
  auto report = [&](const char* name, double err) {
    std::printf("%-24s max rel err %.3e %s\n", name, err, err < 1e-4 ? "ok" : "FAIL");
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  // BRDF kernels over random interior samples
  for (const ShadingModel model : {ShadingModel::BlinnPhong, ShadingModel::CookTorrance}) {
    double err = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Vec3 n = rng.unit_vector();
      auto hemi = [&] {
        while (true) {
          const Vec3 d = rng.unit_vector();
          if (dot(d, n) > 0.15) return d;
        }
      };
      const Vec3 l = hemi(), v = hemi();
      Material m;
      m.kd = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
      m.ks = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
      m.shininess = rng.uniform(1, 64);
      m.roughness = rng.uniform(0.15, 0.9);
      m.metallic = rng.uniform(0.1, 0.9);

      auto fwd = [&](const std::vector<double>& x) {
        Material mm = m;
        mm.roughness = x[0];
        mm.metallic = x[1];
        const ShadingSample s{{x[2], x[3], x[4]}, v, l};
        const BrdfValue b = eval_brdf(model, mm, s);
        return std::vector<double>{b.value.r, b.value.g, b.value.b};
      };
      auto jac = [&](const std::vector<double>& x) {
        Material mm = m;
        mm.roughness = x[0];
        mm.metallic = x[1];
        const ShadingSample s{{x[2], x[3], x[4]}, v, l};
        const BrdfValue b = eval_brdf(model, mm, s);
        std::vector<std::vector<double>> j(3, std::vector<double>(5));
        for (int c = 0; c < 3; ++c) {
          j[c][0] = b.d_roughness[c];
          j[c][1] = b.d_metallic[c];
          for (int k = 0; k < 3; ++k) j[c][2 + k] = b.d_n[c][k];
        }
        return j;
      };
      err = std::max(err,
                     grad_check(fwd, jac, {m.roughness, m.metallic, n.x, n.y, n.z}).max_rel_err);
    }
    report(model == ShadingModel::BlinnPhong ? "blinn_phong" : "cook_torrance", err);
  }

  // sh_eval gradient = basis
  {
    double err = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Vec3 dir = rng.unit_vector();
      auto fwd = [&](const std::vector<double>& x) {
        ShCoeffs c = ShCoeffs::zeros(3);
        for (int k = 0; k < 9; ++k) c.at(0, k) = x[k];
        return std::vector<double>{sh_eval(c, dir, 3).r};
      };
      auto jac = [&](const std::vector<double>&) {
        return std::vector<std::vector<double>>{sh_basis(dir, 3)};
      };
      std::vector<double> x(9);
      for (double& v : x) v = rng.uniform(-1, 1);
      err = std::max(err, grad_check(fwd, jac, x).max_rel_err);
    }
    report("sh_eval", err);
  }

  // projection jacobian
  {
    const Camera cam = Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, 1, 0}, 64, 64, 80.0);
    double err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      auto fwd = [&](const std::vector<double>& p) {
        const Projection pr = project_point(cam, {p[0], p[1], p[2]});
        return std::vector<double>{pr.screen.x, pr.screen.y};
      };
      auto jac = [&](const std::vector<double>& p) {
        const Vec3 pos{p[0], p[1], p[2]};
        const Vec3 gx = project_backward(cam, pos, {1, 0}, 0);
        const Vec3 gy = project_backward(cam, pos, {0, 1}, 0);
        return std::vector<std::vector<double>>{{gx.x, gx.y, gx.z}, {gy.x, gy.y, gy.z}};
      };
      err = std::max(err, grad_check(fwd, jac, x).max_rel_err);
    }
    report("projection", err);
  }

  std::printf("worst: %s (%.3e)\n", worst_name.c_str(), worst);
  return worst < 1e-4 ? kOk : kUserError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplet: mesh-based inverse rendering from multi-view RGB images"};
  app.require_subcommand(1);

  // init
  auto* init = app.add_subcommand("init", "write a starter config (and optional demo dataset)");
  std::string init_out = "config.json";
  std::string demo_dir;
  int demo_views = 20, demo_test = 5, demo_res = 128;
  std::uint64_t init_seed = 0;
  init->add_option("--out", init_out, "config path");
  init->add_option("--demo-dataset", demo_dir, "also generate a synthetic dataset here");
  init->add_option("--views", demo_views, "demo train view count");
  init->add_option("--test-views", demo_test, "demo test view count");
  init->add_option("--resolution", demo_res, "demo image resolution");
  init->add_option("--seed", init_seed, "demo generation seed");

  // optimize
  auto* opt = app.add_subcommand("optimize", "run the two-phase optimization");
  std::string opt_config;
  std::string opt_out;
  std::uint64_t opt_seed = 0;
  bool opt_seed_set = false;
  int opt_iterations = -1;
  opt->add_option("--config", opt_config, "run config json")->required();
  opt->add_option("--out", opt_out, "override output directory");
  opt->add_option("--seed", opt_seed, "override seed")->trigger_on_parse();
  opt->add_option("--iterations", opt_iterations, "override discrete-phase iterations");
  opt->callback([&] { opt_seed_set = opt->count("--seed") > 0; });

  // render
  auto* ren = app.add_subcommand("render", "render a checkpoint to a png");
  std::string ren_ckpt, ren_out = "render.png", ren_dataset, ren_metrics;
  int ren_frame = 0;
  std::string ren_split = "test";
  double ren_scale = 1.0;
  ren->add_option("--checkpoint", ren_ckpt, "checkpoint path")->required();
  ren->add_option("--out", ren_out, "output png");
  ren->add_option("--dataset", ren_dataset, "dataset supplying the camera")->required();
  ren->add_option("--frame", ren_frame, "frame index within the split");
  ren->add_option("--split", ren_split, "train|test");
  ren->add_option("--resolution-scale", ren_scale, "render scale factor");
  ren->add_option("--metrics", ren_metrics, "append psnr/ssim json line here");

  // extract
  auto* ext = app.add_subcommand("extract", "extract a connected mesh from a checkpoint");
  std::string ext_ckpt, ext_dataset, ext_out = "mesh.obj";
  int ext_res = 64;
  ext->add_option("--checkpoint", ext_ckpt)->required();
  ext->add_option("--dataset", ext_dataset, "cameras for depth fusion")->required();
  ext->add_option("--out", ext_out, "obj/ply output path");
  ext->add_option("--grid-resolution", ext_res);

  // export
  auto* exp = app.add_subcommand("export", "export the checkpoint scene as obj/ply");
  std::string exp_ckpt, exp_out = "mesh.obj", exp_format = "obj";
  exp->add_option("--checkpoint", exp_ckpt)->required();
  exp->add_option("--out", exp_out);
  exp->add_option("--format", exp_format, "obj|ply");

  // validate
  auto* val = app.add_subcommand("validate", "check scene invariants of a checkpoint or mesh");
  std::string val_ckpt, val_mesh;
  val->add_option("--checkpoint", val_ckpt);
  val->add_option("--mesh", val_mesh, "obj/ply file");

  // gradcheck
  app.add_subcommand("gradcheck", "finite-difference audit of the differentiable kernels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (init->parsed()) {
      RunConfig cfg = default_config();
      if (!demo_dir.empty()) {
        write_demo_dataset(demo_dir, demo_views, demo_test, demo_res, init_seed);
        cfg.dataset_root = demo_dir;
        std::printf("demo dataset written to %s\n", demo_dir.c_str());
      }
      cfg.seed = init_seed;
      save_config(cfg, init_out);
      std::printf("config written to %s\n", init_out.c_str());
      return kOk;
    }

    if (opt->parsed()) {
      RunConfig cfg = load_config(opt_config);
      if (!opt_out.empty()) cfg.output_dir = opt_out;
      if (opt_seed_set) cfg.seed = opt_seed;
      if (opt_iterations >= 0) cfg.discrete_iterations = opt_iterations;
      const OptimizeResult res = optimize(cfg);
      std::printf("optimize done: %lld iterations, final checkpoint %s\n",
                  static_cast<long long>(res.iterations_run), res.final_checkpoint.c_str());
      std::printf("metrics: %s\n", res.metrics_path.c_str());
      return kOk;
    }

    if (ren->parsed()) {
      const Checkpoint ckpt = load_checkpoint(ren_ckpt);
      const std::vector<DatasetFrame> frames = load_dataset(ren_dataset);
      const Split want = ren_split == "train" ? Split::Train : Split::Test;
      std::vector<const DatasetFrame*> split_frames;
      for (const auto& f : frames)
        if (f.split == want) split_frames.push_back(&f);
      if (ren_frame < 0 || ren_frame >= static_cast<int>(split_frames.size())) {
        std::fprintf(stderr, "unknown camera id %d (split has %zu frames)\n", ren_frame,
                     split_frames.size());
        return kUserError;
      }
      const DatasetFrame& frame = *split_frames[ren_frame];
      RenderOptions opts;
      opts.k = 30;
      opts.active_band = kMaxShBand;
      opts.model = ckpt.model;
      opts.background = {1, 1, 1};
      const Camera cam = frame.camera.scaled(ren_scale);
      const Image img = render(ckpt.scene, cam, ckpt.lights, opts);
      save_png(img, ren_out);
      if (!ren_metrics.empty() && ren_scale == 1.0) {
        const Metrics m = compute_metrics(img, frame.image);
        std::ofstream ms(ren_metrics, std::ios::app);
        ms << metrics_json_line(ckpt.iteration, LossTerms{}, 0.0, ckpt.scene.face_count(), m)
           << "\n";
        std::printf("psnr %.3f ssim %.4f\n", m.psnr, m.ssim);
      }
      std::printf("wrote %s\n", ren_out.c_str());
      return kOk;
    }

    if (ext->parsed()) {
      const Checkpoint ckpt = load_checkpoint(ext_ckpt);
      const std::vector<DatasetFrame> frames = load_dataset(ext_dataset);
      std::vector<Camera> cams;
      for (const auto& f : frames)
        if (f.split == Split::Train) cams.push_back(f.camera);
      ExtractConfig cfg;
      cfg.grid_resolution = ext_res;
      TripletScene mesh = extract_mesh(ckpt.scene, cams, cfg);
      transfer_properties(ckpt.scene, mesh);
      const MeshFormat fmt =
          ext_out.size() >= 4 && ext_out.substr(ext_out.size() - 4) == ".ply" ? MeshFormat::PLY
                                                                              : MeshFormat::OBJ;
      export_mesh(mesh, fmt, ext_out);
      std::printf("extracted %d faces -> %s\n", mesh.face_count(), ext_out.c_str());
      return kOk;
    }

    if (exp->parsed()) {
      const Checkpoint ckpt = load_checkpoint(exp_ckpt);
      const MeshFormat fmt = exp_format == "ply" ? MeshFormat::PLY : MeshFormat::OBJ;
      export_mesh(ckpt.scene, fmt, exp_out);
      std::printf("wrote %s\n", exp_out.c_str());
      return kOk;
    }

    if (val->parsed()) {
      TripletScene scene;
      if (!val_ckpt.empty()) {
        scene = load_checkpoint(val_ckpt).scene;
      } else if (!val_mesh.empty()) {
        const MeshFormat fmt =
            val_mesh.size() >= 4 && val_mesh.substr(val_mesh.size() - 4) == ".ply"
                ? MeshFormat::PLY
                : MeshFormat::OBJ;
        scene = import_mesh(fmt, val_mesh);
      } else {
        std::fprintf(stderr, "validate needs --checkpoint or --mesh\n");
        return kUserError;
      }
      const ValidationReport report = validate(scene);
      if (report.ok()) {
        std::printf("ok: %d vertices, %d faces, %zu edges\n", scene.vertex_count(),
                    scene.face_count(), scene.edges.size());
        return kOk;
      }
      for (const auto& v : report.violations) std::printf("violation: %s\n", v.c_str());
      return kUserError;
    }

    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kUserError;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kUserError;
  } catch (const IoError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kUserError;
  } catch (const VersionError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kUserError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternalError;
  }
  return kOk;
}
