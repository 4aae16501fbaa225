#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "triplet/errors.hpp"
#include "triplet/optim.hpp"
#include "triplet/rasterizer.hpp"
#include "triplet/synthetic.hpp"

using namespace triplet;

namespace {

Camera test_camera(int w = 32, int h = 32, double focal = 40.0) {
  Camera cam = Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, 1, 0}, w, h, focal);
  cam.near = 0.1;
  cam.far = 100.0;
  return cam;
}

// Full-screen triangle facing the camera at z = 0 (world), camera at -3 on z.
TripletScene fullscreen_triangle(double alpha = 1.0) {
  TripletScene s;
  s.connectivity_mode = ConnectivityMode::Discrete;
  s.vertices = {{-40, -40, 0}, {40, -40, 0}, {0, 60, 0}};
  VertexProps p;
  p.alpha = alpha;
  p.texture_rgb = Rgb(1.0);
  p.material.kd = Rgb(0.5);
  p.material.roughness = 1.0;
  s.props.assign(3, p);
  s.faces = {{0, 1, 2}};
  s.rebuild_edges();
  return s;
}

TripletScene random_patch_scene(int n_faces, Rng& rng, double alpha_lo = 0.3,
                                double alpha_hi = 0.9) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n_faces; ++i)
    pts.push_back({rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.6, 0.6)});
  TripletScene s = assemble_triplets(pts, 0.35, rng.next_u64());
  for (auto& p : s.props) {
    p.alpha = rng.uniform(alpha_lo, alpha_hi);
    p.texture_rgb = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
    p.material.roughness = rng.uniform(0.3, 0.9);
    p.material.metallic = rng.uniform(0.0, 0.5);
  }
  return s;
}

std::vector<Light> one_point_light() {
  PointLight pl;
  pl.position = {1.0, 2.0, -4.0};
  pl.intensity = 40.0;
  return {Light{pl}};
}

double image_dot(const Image& img, const Image& w) {
  double acc = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i) acc += img.data[i] * w.data[i];
  return acc;
}

}  // namespace

TEST_CASE("project puts the optical axis at the principal point") {
  const Camera cam = test_camera();
  const Projection p = project_point(cam, {0, 0, 1.0});  // depth 4 from the camera
  REQUIRE(p.valid);
  CHECK(p.screen.x == doctest::Approx(cam.cx));
  CHECK(p.screen.y == doctest::Approx(cam.cy));
  CHECK(p.depth == doctest::Approx(4.0));

  CHECK_FALSE(project_point(cam, {0, 0, -10}).valid);  // behind the camera
}

TEST_CASE("projection jacobian matches finite differences") {
  const Camera cam = test_camera();
  Rng rng(8);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto fwd = [&cam](const std::vector<double>& x) {
      const Projection pr = project_point(cam, {x[0], x[1], x[2]});
      return std::vector<double>{pr.screen.x, pr.screen.y, pr.depth};
    };
    auto jac = [&cam](const std::vector<double>& x) {
      const Vec3 pos{x[0], x[1], x[2]};
      std::vector<std::vector<double>> j(3, std::vector<double>(3));
      const Vec3 gx = project_backward(cam, pos, {1, 0}, 0);
      const Vec3 gy = project_backward(cam, pos, {0, 1}, 0);
      const Vec3 gz = project_backward(cam, pos, {0, 0}, 1);
      for (int k = 0; k < 3; ++k) {
        j[0][k] = gx[k];
        j[1][k] = gy[k];
        j[2][k] = gz[k];
      }
      return j;
    };
    worst = std::max(worst, grad_check(fwd, jac, {p.x, p.y, p.z}).max_rel_err);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("rasterize covers the viewport with a single fragment") {
  const TripletScene s = fullscreen_triangle();
  const Camera cam = test_camera();
  const FragmentBuffer buf = rasterize(s, cam, 5);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const auto& frags = buf.at(x, y);
      REQUIRE(frags.size() == 1);
      const double b = frags[0].bary[0] + frags[0].bary[1] + frags[0].bary[2];
      CHECK(b == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(frags[0].depth >= cam.near);
      CHECK(frags[0].depth <= cam.far);
    }
}

TEST_CASE("rasterize keeps the nearest fragment when capped") {
  TripletScene s = fullscreen_triangle();
  // second triangle nearer to the camera
  TripletScene near = fullscreen_triangle();
  for (Vec3& v : near.vertices) v.z = -1.0;
  const int base = s.vertex_count();
  for (int i = 0; i < 3; ++i) {
    s.vertices.push_back(near.vertices[i]);
    s.props.push_back(near.props[i]);
  }
  s.faces.push_back({base, base + 1, base + 2});
  s.rebuild_edges();

  const FragmentBuffer buf = rasterize(s, test_camera(), 1);
  for (const auto& frags : buf.pixels) {
    REQUIRE(frags.size() == 1);
    CHECK(frags[0].face_id == 1);
  }
}

TEST_CASE("rasterize agrees with a brute-force inside test") {
  Rng rng(12);
  const TripletScene s = random_patch_scene(25, rng);
  const Camera cam = test_camera(48, 48, 60.0);
  const FragmentBuffer buf = rasterize(s, cam, 1000);

  // independent inside test via cross-product signs on projected triangles
  std::vector<Projection> proj(s.vertices.size());
  for (size_t i = 0; i < s.vertices.size(); ++i) proj[i] = project_point(cam, s.vertices[i]);
  int checked = 0;
  for (int py = 0; py < cam.height; ++py)
    for (int px = 0; px < cam.width; ++px) {
      std::vector<int> expect;
      for (int fi = 0; fi < s.face_count(); ++fi) {
        const Face& f = s.faces[fi];
        if (!proj[f[0]].valid || !proj[f[1]].valid || !proj[f[2]].valid) continue;
        const Vec2 a = proj[f[0]].screen, b = proj[f[1]].screen, c = proj[f[2]].screen;
        const Vec2 q{px + 0.5, py + 0.5};
        auto side = [&q](const Vec2& p0, const Vec2& p1) {
          return (p1.x - p0.x) * (q.y - p0.y) - (p1.y - p0.y) * (q.x - p0.x);
        };
        const double s0 = side(a, b), s1 = side(b, c), s2 = side(c, a);
        const bool inside = (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
        const double area = side(a, b) + 0;  // reuse: full area via other formula below
        (void)area;
        const double tri_area =
            (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (inside && std::abs(tri_area) >= 1e-12) expect.push_back(fi);
      }
      std::vector<int> got;
      for (const Fragment& fr : buf.at(px, py)) got.push_back(fr.face_id);
      std::sort(got.begin(), got.end());
      std::sort(expect.begin(), expect.end());
      CHECK(got == expect);
      ++checked;
    }
  CHECK(checked == cam.width * cam.height);
}

TEST_CASE("composite hand values and partition of unity") {
  CHECK(composite({{1.0, Rgb(0.7)}}, Rgb(0.1)).r == doctest::Approx(0.7));
  CHECK(composite({{0.5, Rgb(1.0)}, {0.5, Rgb(1.0)}}, Rgb(0.0)).r ==
        doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + rng.uniform_int(6);
    std::vector<std::pair<double, Rgb>> frags;
    double weight_sum = 0.0, transmit = 1.0;
    for (int i = 0; i < n; ++i) frags.emplace_back(rng.uniform(), Rgb(1.0));
    for (const auto& [a, c] : frags) {
      weight_sum += a * transmit;
      transmit *= 1.0 - a;
    }
    weight_sum += transmit;  // background weight
    CHECK(weight_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("front-to-back matches back-to-front evaluation") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + rng.uniform_int(8);
    std::vector<std::pair<double, Rgb>> frags;
    for (int i = 0; i < n; ++i)
      frags.emplace_back(rng.uniform(), Rgb{rng.uniform(), rng.uniform(), rng.uniform()});
    const Rgb bg{rng.uniform(), rng.uniform(), rng.uniform()};
    const Rgb front = composite(frags, bg);
    Rgb back = bg;  // back-to-front: C = a E + (1 - a) C
    for (int i = n - 1; i >= 0; --i)
      back = frags[i].second * frags[i].first + back * (1.0 - frags[i].first);
    CHECK(std::abs(front.r - back.r) < 1e-12);
    CHECK(std::abs(front.g - back.g) < 1e-12);
    CHECK(std::abs(front.b - back.b) < 1e-12);
  }
}

TEST_CASE("composite_backward matches finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + rng.uniform_int(5);
    std::vector<double> x;  // [alpha_i, rgb_i ...] + bg
    for (int i = 0; i < n; ++i) {
      x.push_back(rng.uniform(0.05, 0.95));
      x.push_back(rng.uniform());
      x.push_back(rng.uniform());
      x.push_back(rng.uniform());
    }
    x.push_back(rng.uniform());
    auto unpack = [n](const std::vector<double>& v) {
      std::vector<std::pair<double, Rgb>> frags;
      for (int i = 0; i < n; ++i)
        frags.emplace_back(v[i * 4], Rgb{v[i * 4 + 1], v[i * 4 + 2], v[i * 4 + 3]});
      return std::make_pair(frags, Rgb(v[n * 4]));
    };
    auto fwd = [&](const std::vector<double>& v) {
      const auto [frags, bg] = unpack(v);
      const Rgb out = composite(frags, bg);
      return std::vector<double>{out.r, out.g, out.b};
    };
    auto jac = [&](const std::vector<double>& v) {
      const auto [frags, bg] = unpack(v);
      std::vector<std::vector<double>> j(3, std::vector<double>(v.size(), 0.0));
      for (int c = 0; c < 3; ++c) {
        Rgb d;
        d[c] = 1.0;
        const CompositeGrads g = composite_backward(frags, bg, d);
        for (int i = 0; i < n; ++i) {
          j[c][i * 4] = g.d_alpha[i];
          j[c][i * 4 + 1 + c] = g.d_color[i][c];
        }
        j[c][n * 4] = g.d_background[c];
      }
      return j;
    };
    CHECK(grad_check(fwd, jac, x).max_rel_err < 1e-6);
  }
}

TEST_CASE("render of an empty scene is the background") {
  TripletScene s;
  s.connectivity_mode = ConnectivityMode::Discrete;
  RenderOptions opts;
  opts.background = {0.2, 0.4, 0.6};
  const Image img = render(s, test_camera(), {}, opts);
  for (int i = 0; i < img.width * img.height; ++i) {
    CHECK(img.data[i * 3 + 0] == doctest::Approx(0.2));
    CHECK(img.data[i * 3 + 2] == doctest::Approx(0.6));
  }
}

TEST_CASE("lambertian full-screen triangle matches the hand value") {
  // directional light straight down the normal, Cook-Torrance diffuse
  const TripletScene s = fullscreen_triangle();
  DirectionalLight dl;
  dl.direction = {0, 0, 1};  // travels +z so L = -z = toward the camera side
  dl.intensity = 2.0;
  RenderOptions opts;
  opts.k = 4;
  opts.background = {0, 0, 0};
  const Image img = render(s, test_camera(), {Light{dl}}, opts);

  // kd_eff = 0.5, F0 = 0.04: f = (1-F)kd/pi + F G D/4 at normal-ish incidence
  const Vec3 n{0, 0, -1};
  Material eff;
  eff.kd = Rgb(0.5);
  eff.roughness = 1.0;
  const Vec3 view = normalize(Vec3{0, 0, -3} - Vec3{0, 0, 0});
  const BrdfValue b = cook_torrance(eff, ShadingSample{n, view, n});
  const double expect = b.value.r * 2.0 * 1.0;  // radiance 2, N.L = 1
  // centre pixel looks straight on
  CHECK(img.at(16, 16, 0) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("render is linear in light intensity") {
  Rng rng(15);
  const TripletScene s = random_patch_scene(12, rng);
  PointLight pl;
  pl.position = {0, 0, -5};
  pl.intensity = 10.0;
  RenderOptions opts;
  opts.background = {0, 0, 0};
  const Image a = render(s, test_camera(), {Light{pl}}, opts);
  pl.intensity = 20.0;
  const Image b = render(s, test_camera(), {Light{pl}}, opts);
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == doctest::Approx(2.0 * a.data[i]));
}

TEST_CASE("ray_triangle reproduces the analytic plane hit") {
  const Vec3 a{-1, -1, 2}, b{1, -1, 2}, c{0, 1.5, 2};  // plane z = 2
  double t, u, v;
  REQUIRE(ray_triangle({0, 0, 0}, normalize(Vec3{0.1, 0.05, 1.0}), a, b, c, t, u, v));
  const double dirz = normalize(Vec3{0.1, 0.05, 1.0}).z;
  CHECK(t * dirz == doctest::Approx(2.0).epsilon(1e-9));

  // barycentric convention: hit = u a + v b + (1-u-v) c
  const Vec3 hit = normalize(Vec3{0.1, 0.05, 1.0}) * t;
  const Vec3 recon = a * u + b * v + c * (1.0 - u - v);
  CHECK(norm(hit - recon) < 1e-9);
}

TEST_CASE("rasterizer matches the ray-cast oracle on interior pixels") {
  Rng rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const TripletScene s = random_patch_scene(20, rng);
    const Camera cam = test_camera(64, 64, 80.0);
    std::vector<Light> lights = one_point_light();
    for (int k : {1, 5, 30}) {
      RenderOptions opts;
      opts.k = k;
      opts.background = {0.1, 0.1, 0.1};
      const Image a = render(s, cam, lights, opts);
      const Image b = raycast_reference(s, cam, lights, opts);

      // interior mask: at least one pixel away from any projected edge
      std::vector<Projection> proj(s.vertices.size());
      for (size_t i = 0; i < s.vertices.size(); ++i) proj[i] = project_point(cam, s.vertices[i]);
      auto edge_dist = [&](double px, double py) {
        double best = 1e9;
        for (const Face& f : s.faces) {
          for (int k2 = 0; k2 < 3; ++k2) {
            const Projection &p0 = proj[f[k2]], &p1 = proj[f[(k2 + 1) % 3]];
            if (!p0.valid || !p1.valid) continue;
            const Vec2 d = p1.screen - p0.screen;
            const Vec2 q{px - p0.screen.x, py - p0.screen.y};
            const double len2 = d.x * d.x + d.y * d.y;
            const double t = len2 > 0 ? std::clamp((q.x * d.x + q.y * d.y) / len2, 0.0, 1.0) : 0.0;
            const double dx = q.x - t * d.x, dy = q.y - t * d.y;
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
          }
        }
        return best;
      };
      double diff_sum = 0.0;
      int count = 0;
      for (int py = 0; py < cam.height; ++py)
        for (int px = 0; px < cam.width; ++px) {
          if (edge_dist(px + 0.5, py + 0.5) < 1.0) continue;
          for (int ch = 0; ch < 3; ++ch)
            diff_sum += std::abs(a.at(px, py, ch) - b.at(px, py, ch));
          count += 3;
        }
      REQUIRE(count > 0);
      CHECK(diff_sum / count < 1e-5);
    }
  }
}

TEST_CASE("render_backward needs a forward cache and zero upstream gives zero grads") {
  Rng rng(33);
  const TripletScene s = random_patch_scene(6, rng);
  const Camera cam = test_camera();
  std::vector<Light> lights = one_point_light();
  RenderOptions opts;

  RenderCache cache;
  CHECK_THROWS_AS(render_backward(s, lights, cache, Image(cam.width, cam.height)), InvalidState);

  render(s, cam, lights, opts, &cache);
  const RenderGradients g = render_backward(s, lights, cache, Image(cam.width, cam.height));
  for (const Vec3& v : g.d_position) CHECK(norm(v) == 0.0);
  for (double v : g.d_alpha) CHECK(v == 0.0);
}

TEST_CASE("render_backward matches finite differences on scene parameters") {
  Rng rng(41);
  TripletScene s = random_patch_scene(8, rng, 0.3, 0.7);
  const Camera cam = test_camera(24, 24, 30.0);
  std::vector<Light> lights = one_point_light();
  RenderOptions opts;
  opts.k = 8;
  opts.background = {0.05, 0.05, 0.05};

  // random linear functional of the image
  Image w(cam.width, cam.height);
  for (double& v : w.data) v = rng.uniform(-1, 1);

  RenderCache cache;
  render(s, cam, lights, opts, &cache);
  const RenderGradients g = render_backward(s, lights, cache, w);

  const double step = 1e-6;
  auto loss_of = [&](const TripletScene& sc, const std::vector<Light>& ls) {
    return image_dot(render(sc, cam, ls, opts), w);
  };

  SUBCASE("texture gradient") {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const int v = rng.uniform_int(s.vertex_count());
      const int c = rng.uniform_int(3);
      TripletScene sp = s, sm = s;
      sp.props[v].texture_rgb[c] += step;
      sm.props[v].texture_rgb[c] -= step;
      const double fd = (loss_of(sp, lights) - loss_of(sm, lights)) / (2 * step);
      const double an = g.d_texture[v][c];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }

  SUBCASE("alpha gradient") {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const int v = rng.uniform_int(s.vertex_count());
      TripletScene sp = s, sm = s;
      sp.props[v].alpha += step;
      sm.props[v].alpha -= step;
      const double fd = (loss_of(sp, lights) - loss_of(sm, lights)) / (2 * step);
      const double an = g.d_alpha[v];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }

  SUBCASE("material gradients") {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const int v = rng.uniform_int(s.vertex_count());
      TripletScene sp = s, sm = s;
      sp.props[v].material.roughness += step;
      sm.props[v].material.roughness -= step;
      double fd = (loss_of(sp, lights) - loss_of(sm, lights)) / (2 * step);
      worst = std::max(worst, std::abs(fd - g.d_roughness[v]) /
                                  std::max({std::abs(fd), std::abs(g.d_roughness[v]), 1e-6}));
      sp = s;
      sm = s;
      sp.props[v].material.metallic += step;
      sm.props[v].material.metallic -= step;
      fd = (loss_of(sp, lights) - loss_of(sm, lights)) / (2 * step);
      worst = std::max(worst, std::abs(fd - g.d_metallic[v]) /
                                  std::max({std::abs(fd), std::abs(g.d_metallic[v]), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }

  SUBCASE("light gradients") {
    const PointLight& pl = std::get<PointLight>(lights[0]);
    for (int axis = 0; axis < 3; ++axis) {
      std::vector<Light> lp = lights, lm = lights;
      Vec3 dp = pl.position, dm = pl.position;
      (axis == 0 ? dp.x : axis == 1 ? dp.y : dp.z) += step;
      (axis == 0 ? dm.x : axis == 1 ? dm.y : dm.z) -= step;
      std::get<PointLight>(lp[0]).position = dp;
      std::get<PointLight>(lm[0]).position = dm;
      const double fd = (loss_of(s, lp) - loss_of(s, lm)) / (2 * step);
      const double an = g.d_lights[0].d_position[axis];
      CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) < 1e-4);
    }
    std::vector<Light> lp = lights, lm = lights;
    std::get<PointLight>(lp[0]).intensity += step;
    std::get<PointLight>(lm[0]).intensity -= step;
    const double fd = (loss_of(s, lp) - loss_of(s, lm)) / (2 * step);
    const double an = g.d_lights[0].d_intensity;
    CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) < 1e-4);
  }

  SUBCASE("position gradient on coverage-stable pixels") {
    // tiny step so no pixel changes coverage
    const double pos_step = 1e-7;
    double worst = 0.0;
    int tested = 0;
    for (int i = 0; i < 12 && tested < 6; ++i) {
      const int v = rng.uniform_int(s.vertex_count());
      const int axis = rng.uniform_int(3);
      TripletScene sp = s, sm = s;
      Vec3& vp = sp.vertices[v];
      Vec3& vm = sm.vertices[v];
      (axis == 0 ? vp.x : axis == 1 ? vp.y : vp.z) += pos_step;
      (axis == 0 ? vm.x : axis == 1 ? vm.y : vm.z) -= pos_step;
      // coverage must be identical on both sides for the FD to be valid
      const FragmentBuffer fa = rasterize(sp, cam, opts.k);
      const FragmentBuffer fb = rasterize(sm, cam, opts.k);
      bool same = true;
      for (size_t px = 0; px < fa.pixels.size() && same; ++px) {
        if (fa.pixels[px].size() != fb.pixels[px].size()) same = false;
        else
          for (size_t j = 0; j < fa.pixels[px].size(); ++j)
            if (fa.pixels[px][j].face_id != fb.pixels[px][j].face_id) same = false;
      }
      if (!same) continue;
      const double fd = (loss_of(sp, lights) - loss_of(sm, lights)) / (2 * pos_step);
      const double an = g.d_position[v][axis];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
      ++tested;
    }
    REQUIRE(tested > 0);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("render_backward reaches SH coefficients") {
  Rng rng(55);
  TripletScene s = random_patch_scene(5, rng, 0.5, 0.9);
  const Camera cam = test_camera(16, 16, 20.0);

  VertexShLight vl;
  vl.band_limit = 2;
  for (int i = 0; i < s.vertex_count(); ++i) {
    ShCoeffs c = ShCoeffs::zeros(2);
    for (int ch = 0; ch < 3; ++ch) {
      c.at(ch, 0) = 1.0 / kShY00;
      c.at(ch, 1) = 0.05;
      c.at(ch, 2) = 0.03;
      c.at(ch, 3) = -0.04;
    }
    vl.per_vertex.push_back(c);
  }
  std::vector<Light> lights = {Light{vl}};

  RenderOptions opts;
  opts.k = 6;
  opts.active_band = 2;
  Image w(cam.width, cam.height);
  for (double& v : w.data) v = rng.uniform(-1, 1);

  RenderCache cache;
  render(s, cam, lights, opts, &cache);
  const RenderGradients g = render_backward(s, lights, cache, w);

  // FD on the DC coefficient of a vertex (direction is held fixed by contract,
  // and the DC never moves the aggregate direction)
  const double step = 1e-5;
  double worst = 0.0;
  int tested = 0;
  for (int i = 0; i < 8; ++i) {
    const int v = rng.uniform_int(s.vertex_count());
    const int ch = rng.uniform_int(3);
    std::vector<Light> lp = lights, lm = lights;
    std::get<VertexShLight>(lp[0]).per_vertex[v].at(ch, 0) += step;
    std::get<VertexShLight>(lm[0]).per_vertex[v].at(ch, 0) -= step;
    const double fp = image_dot(render(s, cam, lp, opts), w);
    const double fm = image_dot(render(s, cam, lm, opts), w);
    const double fd = (fp - fm) / (2 * step);
    const double an = g.d_lights[0].d_vertex_sh[v][ch * 4 + 0];
    if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    ++tested;
  }
  REQUIRE(tested > 0);
  CHECK(worst < 1e-4);
}

TEST_CASE("two-run render determinism") {
  Rng rng(60);
  const TripletScene s = random_patch_scene(10, rng);
  const Camera cam = test_camera();
  std::vector<Light> lights = one_point_light();
  RenderOptions opts;
  const Image a = render(s, cam, lights, opts);
  const Image b = render(s, cam, lights, opts);
  CHECK(a.data == b.data);
}
