#include "triplet/synthetic.hpp"

#include <cmath>
#include <map>

namespace triplet {

TripletScene make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (Vec3& v : verts) v = normalize(v);

  for (int s = 0; s < subdivisions; ++s) {
    std::map<Edge, int> mid;
    auto midpoint = [&](int a, int b) {
      const Edge e = make_edge(a, b);
      auto it = mid.find(e);
      if (it != mid.end()) return it->second;
      verts.push_back(normalize((verts[a] + verts[b]) * 0.5));
      mid[e] = static_cast<int>(verts.size()) - 1;
      return mid[e];
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  TripletScene scene;
  scene.connectivity_mode = ConnectivityMode::Connected;
  for (const Vec3& v : verts) {
    scene.vertices.push_back(v * radius);
    VertexProps p;
    p.alpha = 1.0;
    scene.props.push_back(p);
  }
  scene.faces = faces;
  scene.rebuild_edges();
  return scene;
}

void paint_texture_bands(TripletScene& scene) {
  for (size_t i = 0; i < scene.vertices.size(); ++i) {
    const Vec3 n = normalize(scene.vertices[i]);
    VertexProps& p = scene.props[i];
    p.texture_rgb = {0.55 + 0.3 * std::sin(3.0 * n.z),
                     0.5 + 0.25 * std::cos(2.0 * n.x + 1.0),
                     0.45 + 0.3 * std::sin(2.0 * n.y + 0.5)};
    p.texture_rgb.r = clamp01(p.texture_rgb.r);
    p.texture_rgb.g = clamp01(p.texture_rgb.g);
    p.texture_rgb.b = clamp01(p.texture_rgb.b);
  }
}

std::vector<Camera> ring_cameras(int count, double radius, int width, int height, double focal_px,
                                 double elevation_jitter, std::uint64_t seed) {
  std::vector<Camera> cams;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * M_PI * i / count;
    const double el = elevation_jitter * std::sin(2.7 * i + 0.4) +
                      rng.uniform(-0.08, 0.08);
    const Vec3 eye{radius * std::cos(az) * std::cos(el), radius * std::sin(az) * std::cos(el),
                   radius * std::sin(el)};
    cams.push_back(Camera::look_at(eye, {0, 0, 0}, {0, 0, 1}, width, height, focal_px));
    cams.back().near = 0.05;
    cams.back().far = 4.0 * radius;
  }
  return cams;
}

}  // namespace triplet
