#include "triplet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "triplet/errors.hpp"

namespace triplet {

void TripletScene::rebuild_edges() {
  edges.clear();
  for (const Face& f : faces) {
    edges.insert(make_edge(f[0], f[1]));
    edges.insert(make_edge(f[1], f[2]));
    edges.insert(make_edge(f[2], f[0]));
  }
}

TripletScene assemble_triplets(const std::vector<Vec3>& points, double patch_radius,
                               std::uint64_t seed) {
  if (points.empty()) throw InvalidInput("assemble_triplets: empty point list");
  if (!(patch_radius > 0.0)) throw InvalidInput("assemble_triplets: patch_radius must be > 0");
  for (const Vec3& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw InvalidInput("assemble_triplets: non-finite coordinate");
  }

  TripletScene scene;
  scene.connectivity_mode = ConnectivityMode::Discrete;
  scene.vertices.reserve(points.size() * 3);
  scene.props.reserve(points.size() * 3);
  scene.faces.reserve(points.size());

  Rng rng(seed);
  for (const Vec3& c : points) {
    const Vec3 n = rng.unit_vector();
    // Orthonormal in-plane frame; in-plane spin is part of the random orientation.
    Vec3 ref = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 u = normalize(cross(n, ref));
    const Vec3 v = cross(n, u);
    const double phi0 = rng.uniform(0.0, 2.0 * M_PI);

    const int base = scene.vertex_count();
    for (int k = 0; k < 3; ++k) {
      const double a = phi0 + 2.0 * M_PI * k / 3.0;
      scene.vertices.push_back(c + patch_radius * (std::cos(a) * u + std::sin(a) * v));
      scene.props.push_back(VertexProps{});
    }
    scene.faces.push_back({base, base + 1, base + 2});
  }
  scene.rebuild_edges();
  return scene;
}

Vec3 face_normal_raw(const TripletScene& scene, int face_id) {
  const Face& f = scene.faces.at(face_id);
  const Vec3& v0 = scene.vertices[f[0]];
  const Vec3& v1 = scene.vertices[f[1]];
  const Vec3& v2 = scene.vertices[f[2]];
  return cross(v1 - v0, v2 - v0);
}

Vec3 face_normal(const TripletScene& scene, int face_id) {
  const Vec3 n = face_normal_raw(scene, face_id);
  const double len = norm(n);
  if (len <= kDegenerateAreaEps)
    throw DegenerateFace("face " + std::to_string(face_id) + " below area floor");
  return n / len;
}

double face_area(const TripletScene& scene, int face_id) {
  return 0.5 * norm(face_normal_raw(scene, face_id));
}

VertexNormals vertex_normals(const TripletScene& scene) {
  VertexNormals out;
  out.normals.assign(scene.vertices.size(), Vec3{});
  out.valid.assign(scene.vertices.size(), 0);
  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Vec3 n = face_normal_raw(scene, fi);  // magnitude carries the area weight
    if (norm(n) <= kDegenerateAreaEps) continue;
    for (int k = 0; k < 3; ++k) {
      out.normals[scene.faces[fi][k]] += n;
      out.valid[scene.faces[fi][k]] = 1;
    }
  }
  for (size_t i = 0; i < out.normals.size(); ++i) {
    if (!out.valid[i]) continue;
    const double len = norm(out.normals[i]);
    if (len <= kDegenerateAreaEps) {
      out.valid[i] = 0;
      out.normals[i] = Vec3{};
    } else {
      out.normals[i] = out.normals[i] / len;
    }
  }
  return out;
}

std::vector<int> one_ring(const TripletScene& scene, int vertex_id) {
  if (vertex_id < 0 || vertex_id >= scene.vertex_count())
    throw InvalidInput("one_ring: vertex index out of range");
  std::vector<int> ring;
  for (const Edge& e : scene.edges) {
    if (e.first == vertex_id) ring.push_back(e.second);
    else if (e.second == vertex_id) ring.push_back(e.first);
  }
  std::sort(ring.begin(), ring.end());
  return ring;
}

std::vector<std::vector<int>> adjacency(const TripletScene& scene) {
  std::vector<std::vector<int>> adj(scene.vertices.size());
  for (const Edge& e : scene.edges) {
    adj[e.first].push_back(e.second);
    adj[e.second].push_back(e.first);
  }
  for (auto& r : adj) std::sort(r.begin(), r.end());
  return adj;
}

ValidationReport validate(const TripletScene& scene) {
  ValidationReport report;
  const int nv = scene.vertex_count();

  if (scene.props.size() != scene.vertices.size())
    report.violations.push_back("props/vertices size mismatch");

  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Face& f = scene.faces[fi];
    bool in_range = true;
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= nv) {
        report.violations.push_back("face " + std::to_string(fi) + " index out of range");
        in_range = false;
        break;
      }
    }
    if (!in_range) continue;
    if (f[0] == f[1] || f[1] == f[2] || f[2] == f[0])
      report.violations.push_back("face " + std::to_string(fi) + " has repeated vertex index");
    else if (norm(face_normal_raw(scene, fi)) <= kDegenerateAreaEps)
      report.violations.push_back("face " + std::to_string(fi) + " is degenerate");
  }

  if (scene.connectivity_mode == ConnectivityMode::Discrete) {
    std::vector<int> owner(nv, -1);
    for (int fi = 0; fi < scene.face_count(); ++fi) {
      for (int k = 0; k < 3; ++k) {
        const int v = scene.faces[fi][k];
        if (v < 0 || v >= nv) continue;
        if (owner[v] != -1 && owner[v] != fi)
          report.violations.push_back("discrete mode: vertex " + std::to_string(v) +
                                      " shared by faces " + std::to_string(owner[v]) + " and " +
                                      std::to_string(fi));
        owner[v] = fi;
      }
    }
  }

  {
    std::set<Edge> induced;
    for (const Face& f : scene.faces) {
      induced.insert(make_edge(f[0], f[1]));
      induced.insert(make_edge(f[1], f[2]));
      induced.insert(make_edge(f[2], f[0]));
    }
    if (induced != scene.edges)
      report.violations.push_back("edge set inconsistent with faces");
  }

  for (size_t i = 0; i < scene.props.size(); ++i) {
    const VertexProps& p = scene.props[i];
    const Material& m = p.material;
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    const bool ok = in01(p.alpha) && in01(p.texture_rgb.r) && in01(p.texture_rgb.g) &&
                    in01(p.texture_rgb.b) && in01(m.kd.r) && in01(m.kd.g) && in01(m.kd.b) &&
                    in01(m.ks.r) && in01(m.ks.g) && in01(m.ks.b) && in01(m.roughness) &&
                    in01(m.metallic) && in01(m.ao) && m.shininess >= 0.0;
    if (!ok) {
      report.violations.push_back("props " + std::to_string(i) + " out of range");
      break;  // one report line is enough
    }
  }

  return report;
}

double mean_nn_distance(const std::vector<Vec3>& points) {
  if (points.size() < 2) return 1.0;
  double total = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::max();
    for (size_t j = 0; j < points.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, norm2(points[i] - points[j]));
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(points.size());
}

}  // namespace triplet
