#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "triplet/errors.hpp"
#include "triplet/lighting.hpp"
#include "triplet/losses.hpp"
#include "triplet/mesh_io.hpp"
#include "triplet/pipeline.hpp"
#include "triplet/rasterizer.hpp"
#include "triplet/scene.hpp"
#include "triplet/synthetic.hpp"
#include "triplet/topology.hpp"

namespace py = pybind11;
using namespace triplet;

namespace {

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw InvalidInput("expected an HxWx3 array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::array_t<double> image_to_array(const Image& img) {
  py::array_t<double> out({img.height, img.width, 3});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

std::vector<Vec3> points_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidInput("expected an Nx3 array");
  std::vector<Vec3> pts(a.shape(0));
  for (ssize_t i = 0; i < a.shape(0); ++i)
    pts[i] = {a.at(i, 0), a.at(i, 1), a.at(i, 2)};
  return pts;
}

py::array_t<double> vertices_to_array(const TripletScene& s) {
  py::array_t<double> out({static_cast<ssize_t>(s.vertices.size()), ssize_t(3)});
  auto r = out.mutable_unchecked<2>();
  for (ssize_t i = 0; i < r.shape(0); ++i) {
    r(i, 0) = s.vertices[i].x;
    r(i, 1) = s.vertices[i].y;
    r(i, 2) = s.vertices[i].z;
  }
  return out;
}

py::array_t<int> faces_to_array(const TripletScene& s) {
  py::array_t<int> out({static_cast<ssize_t>(s.faces.size()), ssize_t(3)});
  auto r = out.mutable_unchecked<2>();
  for (ssize_t i = 0; i < r.shape(0); ++i)
    for (int k = 0; k < 3; ++k) r(i, k) = s.faces[i][k];
  return out;
}

Camera make_camera(const py::array_t<double>& eye, const py::array_t<double>& target, int width,
                   int height, double focal_px) {
  auto e = eye.unchecked<1>();
  auto t = target.unchecked<1>();
  const Vec3 eye_v{e(0), e(1), e(2)}, target_v{t(0), t(1), t(2)};
  const Vec3 fwd = normalize(target_v - eye_v);
  const Vec3 up = std::abs(fwd.z) > 0.99 ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
  Camera cam = Camera::look_at(eye_v, target_v, up, width, height, focal_px);
  cam.near = 0.05;
  cam.far = 100.0;
  return cam;
}

std::vector<Light> one_point_light(const py::array_t<double>& pos, double intensity) {
  auto p = pos.unchecked<1>();
  PointLight pl;
  pl.position = {p(0), p(1), p(2)};
  pl.intensity = intensity;
  return {Light{pl}};
}

}  // namespace

PYBIND11_MODULE(_triplet, m) {
  m.doc() = "mesh-based inverse rendering core";

  py::register_exception<InvalidInput>(m, "InvalidInputError");
  py::register_exception<NonManifold>(m, "NonManifoldError");

  py::class_<TripletScene>(m, "Scene")
      .def_property_readonly("vertices", &vertices_to_array)
      .def_property_readonly("faces", &faces_to_array)
      .def_property_readonly("n_vertices", &TripletScene::vertex_count)
      .def_property_readonly("n_faces", &TripletScene::face_count)
      .def_property_readonly("n_edges", [](const TripletScene& s) { return s.edges.size(); })
      .def_property_readonly("is_connected_mode",
                             [](const TripletScene& s) {
                               return s.connectivity_mode == ConnectivityMode::Connected;
                             })
      .def("alphas",
           [](const TripletScene& s) {
             py::array_t<double> out(static_cast<ssize_t>(s.props.size()));
             auto r = out.mutable_unchecked<1>();
             for (ssize_t i = 0; i < r.shape(0); ++i) r(i) = s.props[i].alpha;
             return out;
           })
      .def("set_alpha",
           [](TripletScene& s, double alpha) {
             for (auto& p : s.props) p.alpha = alpha;
           })
      .def("set_texture",
           [](TripletScene& s, const py::array_t<double>& rgb) {
             auto r = rgb.unchecked<1>();
             for (auto& p : s.props) p.texture_rgb = {r(0), r(1), r(2)};
           })
      .def("validate", [](const TripletScene& s) { return validate(s).violations; });

  py::class_<Camera>(m, "Camera")
      .def_property_readonly("width", [](const Camera& c) { return c.width; })
      .def_property_readonly("height", [](const Camera& c) { return c.height; });

  m.def("assemble_triplets",
        [](const py::array_t<double>& points, double patch_radius, std::uint64_t seed) {
          return assemble_triplets(points_from_array(points), patch_radius, seed);
        },
        py::arg("points"), py::arg("patch_radius"), py::arg("seed") = 0);

  m.def("make_icosphere", &make_icosphere, py::arg("subdivisions"), py::arg("radius"));
  m.def("look_at_camera", &make_camera, py::arg("eye"), py::arg("target"), py::arg("width"),
        py::arg("height"), py::arg("focal_px"));

  m.def("render",
        [](const TripletScene& scene, const Camera& cam, const py::array_t<double>& light_pos,
           double intensity, int k, const std::string& model) {
          RenderOptions opts;
          opts.k = k;
          opts.model = model == "blinn_phong" ? ShadingModel::BlinnPhong
                                              : ShadingModel::CookTorrance;
          opts.background = {0, 0, 0};
          return image_to_array(render(scene, cam, one_point_light(light_pos, intensity), opts));
        },
        py::arg("scene"), py::arg("camera"), py::arg("light_pos"), py::arg("intensity") = 40.0,
        py::arg("k") = 30, py::arg("model") = "cook_torrance");

  m.def("raycast_reference",
        [](const TripletScene& scene, const Camera& cam, const py::array_t<double>& light_pos,
           double intensity, int k, const std::string& model) {
          RenderOptions opts;
          opts.k = k;
          opts.model = model == "blinn_phong" ? ShadingModel::BlinnPhong
                                              : ShadingModel::CookTorrance;
          opts.background = {0, 0, 0};
          return image_to_array(
              raycast_reference(scene, cam, one_point_light(light_pos, intensity), opts));
        },
        py::arg("scene"), py::arg("camera"), py::arg("light_pos"), py::arg("intensity") = 40.0,
        py::arg("k") = 30, py::arg("model") = "cook_torrance");

  m.def("composite",
        [](const py::array_t<double>& alphas, const py::array_t<double>& colors,
           const py::array_t<double>& background) {
          auto a = alphas.unchecked<1>();
          auto c = colors.unchecked<2>();
          auto bg = background.unchecked<1>();
          std::vector<std::pair<double, Rgb>> frags;
          for (ssize_t i = 0; i < a.shape(0); ++i)
            frags.emplace_back(a(i), Rgb{c(i, 0), c(i, 1), c(i, 2)});
          const Rgb out = composite(frags, {bg(0), bg(1), bg(2)});
          py::array_t<double> res(3);
          res.mutable_at(0) = out.r;
          res.mutable_at(1) = out.g;
          res.mutable_at(2) = out.b;
          return res;
        });

  m.def("sh_basis", [](const py::array_t<double>& dir, int band_limit) {
    auto d = dir.unchecked<1>();
    const std::vector<double> y = sh_basis(normalize(Vec3{d(0), d(1), d(2)}), band_limit);
    py::array_t<double> out(static_cast<ssize_t>(y.size()));
    std::copy(y.begin(), y.end(), out.mutable_data());
    return out;
  });

  m.def("sh_band_schedule", [](std::int64_t iteration, const std::string& mode) {
    return sh_band_schedule(iteration, mode == "ray" ? TransportMode::RayOracle
                                                     : TransportMode::Rasterize);
  });

  m.def("l1_loss",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
          return l1_loss(image_from_array(a), image_from_array(b));
        });
  m.def("ssim_loss", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return ssim_loss(image_from_array(a), image_from_array(b));
  });
  m.def("image_tv", [](const py::array_t<double>& a, double eps) {
    return image_tv(image_from_array(a), eps);
  }, py::arg("image"), py::arg("eps") = 1e-8);
  m.def("psnr", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return compute_metrics(image_from_array(a), image_from_array(b)).psnr;
  });

  m.def("loop_subdivide", &loop_subdivide);
  m.def("qem_simplify", &qem_simplify, py::arg("mesh"), py::arg("target_faces"));
  m.def("is_watertight", &is_watertight);

  m.def("export_mesh",
        [](const TripletScene& mesh, const std::string& path, const std::string& format) {
          export_mesh(mesh, format == "ply" ? MeshFormat::PLY : MeshFormat::OBJ, path);
        },
        py::arg("mesh"), py::arg("path"), py::arg("format") = "obj");
  m.def("import_mesh", [](const std::string& path, const std::string& format) {
    return import_mesh(format == "ply" ? MeshFormat::PLY : MeshFormat::OBJ, path);
  }, py::arg("path"), py::arg("format") = "obj");

  m.def("run_optimize", [](const std::string& config_path) {
    const RunConfig cfg = load_config(config_path);
    const OptimizeResult res = optimize(cfg);
    py::dict out;
    out["first_l1"] = res.first_l1;
    out["last_l1"] = res.last_l1;
    out["metrics_path"] = res.metrics_path;
    out["final_checkpoint"] = res.final_checkpoint;
    return out;
  });
}
