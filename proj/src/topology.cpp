#include "triplet/topology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>

#include "triplet/errors.hpp"
#include "triplet/rasterizer.hpp"

namespace triplet {

namespace {

constexpr int kPropChannels = 16;

std::array<double, kPropChannels> props_to_array(const VertexProps& p) {
  const Material& m = p.material;
  return {p.texture_rgb.r, p.texture_rgb.g, p.texture_rgb.b,
          m.kd.r,          m.kd.g,          m.kd.b,
          m.ks.r,          m.ks.g,          m.ks.b,
          m.shininess,     m.roughness,     m.metallic,
          m.ao,            m.f0_base,       p.alpha, 0.0};
}

VertexProps array_to_props(const std::array<double, kPropChannels>& a) {
  VertexProps p;
  p.texture_rgb = {a[0], a[1], a[2]};
  p.material.kd = {a[3], a[4], a[5]};
  p.material.ks = {a[6], a[7], a[8]};
  p.material.shininess = a[9];
  p.material.roughness = a[10];
  p.material.metallic = a[11];
  p.material.ao = a[12];
  p.material.f0_base = a[13];
  p.alpha = a[14];
  return p;
}

VertexProps mix_props(const VertexProps& a, const VertexProps& b, double t) {
  const auto pa = props_to_array(a), pb = props_to_array(b);
  std::array<double, kPropChannels> out;
  for (int i = 0; i < kPropChannels; ++i) out[i] = (1.0 - t) * pa[i] + t * pb[i];
  return array_to_props(out);
}

double longest_edge(const TripletScene& scene, int face_id, int& e0, int& e1) {
  const Face& f = scene.faces[face_id];
  double best = -1.0;
  for (int k = 0; k < 3; ++k) {
    const double len = norm(scene.vertices[f[k]] - scene.vertices[f[(k + 1) % 3]]);
    if (len > best) {
      best = len;
      e0 = f[k];
      e1 = f[(k + 1) % 3];
    }
  }
  return best;
}

}  // namespace

void QuadricError::add_plane(const Vec3& n, double d, double w) {
  q[0] += w * n.x * n.x;
  q[1] += w * n.x * n.y;
  q[2] += w * n.x * n.z;
  q[3] += w * n.x * d;
  q[4] += w * n.y * n.y;
  q[5] += w * n.y * n.z;
  q[6] += w * n.y * d;
  q[7] += w * n.z * n.z;
  q[8] += w * n.z * d;
  q[9] += w * d * d;
}

QuadricError& QuadricError::operator+=(const QuadricError& o) {
  for (int i = 0; i < 10; ++i) q[i] += o.q[i];
  return *this;
}

double QuadricError::eval(const Vec3& v) const {
  return q[0] * v.x * v.x + 2 * q[1] * v.x * v.y + 2 * q[2] * v.x * v.z + 2 * q[3] * v.x +
         q[4] * v.y * v.y + 2 * q[5] * v.y * v.z + 2 * q[6] * v.y + q[7] * v.z * v.z +
         2 * q[8] * v.z + q[9];
}

bool QuadricError::optimal_point(Vec3& out) const {
  Mat3 a;
  a.m[0][0] = q[0];
  a.m[0][1] = a.m[1][0] = q[1];
  a.m[0][2] = a.m[2][0] = q[2];
  a.m[1][1] = q[4];
  a.m[1][2] = a.m[2][1] = q[5];
  a.m[2][2] = q[7];
  return solve3x3(a, {-q[3], -q[6], -q[8]}, out, 1e-10);
}

std::array<int, 4> split_face_loop(TripletScene& scene, int face_id) {
  if (face_id < 0 || face_id >= scene.face_count())
    throw InvalidInput("split_face_loop: face out of range");
  const Face f = scene.faces[face_id];
  if (norm(face_normal_raw(scene, face_id)) <= kDegenerateAreaEps)
    throw DegenerateFace("split_face_loop: degenerate face");

  const Vec3 v0 = scene.vertices[f[0]], v1 = scene.vertices[f[1]], v2 = scene.vertices[f[2]];
  const Vec3 m01 = (v0 + v1) * 0.5, m12 = (v1 + v2) * 0.5, m20 = (v2 + v0) * 0.5;
  const VertexProps p01 = mix_props(scene.props[f[0]], scene.props[f[1]], 0.5);
  const VertexProps p12 = mix_props(scene.props[f[1]], scene.props[f[2]], 0.5);
  const VertexProps p20 = mix_props(scene.props[f[2]], scene.props[f[0]], 0.5);

  auto push_vertex = [&scene](const Vec3& v, const VertexProps& p) {
    scene.vertices.push_back(v);
    scene.props.push_back(p);
    return scene.vertex_count() - 1;
  };

  // corner children reuse the parent corners; every midpoint copy is private
  const int a01 = push_vertex(m01, p01), a20 = push_vertex(m20, p20);  // child at v0
  const int b12 = push_vertex(m12, p12), b01 = push_vertex(m01, p01);  // child at v1
  const int c20 = push_vertex(m20, p20), c12 = push_vertex(m12, p12);  // child at v2
  const int d01 = push_vertex(m01, p01), d12 = push_vertex(m12, p12), d20 = push_vertex(m20, p20);

  scene.faces[face_id] = {f[0], a01, a20};
  scene.faces.push_back({f[1], b12, b01});
  scene.faces.push_back({f[2], c20, c12});
  scene.faces.push_back({d01, d12, d20});
  scene.rebuild_edges();
  return {face_id, scene.face_count() - 3, scene.face_count() - 2, scene.face_count() - 1};
}

int clone_face(TripletScene& scene, int face_id, const std::vector<Vec3>& grad_dir, double step) {
  if (face_id < 0 || face_id >= scene.face_count())
    throw InvalidInput("clone_face: face out of range");
  const Face f = scene.faces[face_id];
  Vec3 fallback{0, 0, 1};
  const Vec3 raw = face_normal_raw(scene, face_id);
  if (norm(raw) > kDegenerateAreaEps) fallback = raw / norm(raw);

  Face clone;
  for (int k = 0; k < 3; ++k) {
    const int v = f[k];
    Vec3 dir = v < static_cast<int>(grad_dir.size()) ? grad_dir[v] : Vec3{};
    const double len = norm(dir);
    dir = len > 1e-15 ? (-1.0 / len) * dir : fallback;  // descend, or nudge along the normal
    scene.vertices.push_back(scene.vertices[v] + dir * step);
    scene.props.push_back(scene.props[v]);
    clone[k] = scene.vertex_count() - 1;
  }
  scene.faces.push_back(clone);
  scene.rebuild_edges();
  return scene.face_count() - 1;
}

namespace {

// Compacts a scene to the faces flagged alive; returns the vertex remap.
void compact_scene(TripletScene& scene, const std::vector<char>& face_alive,
                   std::vector<int>& vertex_map) {
  std::vector<char> vertex_alive(scene.vertices.size(), 0);
  for (int fi = 0; fi < scene.face_count(); ++fi)
    if (face_alive[fi])
      for (int k = 0; k < 3; ++k) vertex_alive[scene.faces[fi][k]] = 1;

  vertex_map.assign(scene.vertices.size(), -1);
  TripletScene out;
  out.connectivity_mode = scene.connectivity_mode;
  for (size_t v = 0; v < scene.vertices.size(); ++v) {
    if (!vertex_alive[v]) continue;
    vertex_map[v] = out.vertex_count();
    out.vertices.push_back(scene.vertices[v]);
    out.props.push_back(scene.props[v]);
  }
  for (int fi = 0; fi < scene.face_count(); ++fi) {
    if (!face_alive[fi]) continue;
    const Face& f = scene.faces[fi];
    out.faces.push_back({vertex_map[f[0]], vertex_map[f[1]], vertex_map[f[2]]});
  }
  out.rebuild_edges();
  scene = std::move(out);
}

}  // namespace

SceneEdit densify_and_prune(TripletScene& scene, const GradStats& stats,
                            const DensityConfig& cfg) {
  if (stats.size() != scene.vertices.size())
    throw InvalidInput("densify_and_prune: stats/scene size mismatch");

  const int n_before = scene.vertex_count();
  SceneEdit edit;

  std::vector<double> mean_norm(stats.size(), 0.0);
  std::vector<Vec3> mean_dir(stats.size(), Vec3{});
  for (size_t i = 0; i < stats.size(); ++i) {
    if (stats.count[i] > 0) {
      mean_norm[i] = stats.norm_sum[i] / stats.count[i];
      mean_dir[i] = stats.dir_sum[i] / static_cast<double>(stats.count[i]);
    }
  }

  struct Candidate {
    double grad;
    int face;
  };
  std::vector<Candidate> candidates;
  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Face& f = scene.faces[fi];
    const double g = std::max({mean_norm[f[0]], mean_norm[f[1]], mean_norm[f[2]]});
    if (g > cfg.grad_threshold) candidates.push_back({g, fi});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.grad != b.grad ? a.grad > b.grad : a.face < b.face;
  });

  for (const Candidate& c : candidates) {
    int e0, e1;
    const double edge = longest_edge(scene, c.face, e0, e1);
    const int budget = cfg.max_faces - scene.face_count();
    const int need = edge > cfg.size_threshold ? 3 : 1;
    if (budget < need) {
      edit.truncated = true;
      break;
    }
    if (norm(face_normal_raw(scene, c.face)) <= kDegenerateAreaEps) continue;
    if (edge > cfg.size_threshold) {
      split_face_loop(scene, c.face);
      ++edit.n_split;
    } else {
      clone_face(scene, c.face, mean_dir, 0.5 * edge);
      ++edit.n_cloned;
    }
  }

  // prune transparent faces
  std::vector<char> alive(scene.face_count(), 1);
  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Face& f = scene.faces[fi];
    const double mean_alpha =
        (scene.props[f[0]].alpha + scene.props[f[1]].alpha + scene.props[f[2]].alpha) / 3.0;
    if (mean_alpha < cfg.alpha_prune) {
      alive[fi] = 0;
      ++edit.n_pruned;
    }
  }

  std::vector<int> vertex_map;
  compact_scene(scene, alive, vertex_map);
  edit.empty_scene = scene.face_count() == 0;

  edit.src_vertex.assign(scene.vertices.size(), -1);
  for (size_t old_v = 0; old_v < vertex_map.size(); ++old_v) {
    if (vertex_map[old_v] >= 0 && old_v < static_cast<size_t>(n_before))
      edit.src_vertex[vertex_map[old_v]] = static_cast<int>(old_v);
  }
  return edit;
}

TripletScene loop_subdivide(const TripletScene& mesh) {
  // edge -> adjacent faces
  std::map<Edge, std::vector<int>> edge_faces;
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    for (int k = 0; k < 3; ++k) edge_faces[make_edge(f[k], f[(k + 1) % 3])].push_back(fi);
  }
  for (const auto& [e, faces] : edge_faces)
    if (faces.size() > 2)
      throw NonManifold("loop_subdivide: edge with " + std::to_string(faces.size()) + " faces");

  const auto adj = adjacency(mesh);
  std::vector<char> on_boundary(mesh.vertices.size(), 0);
  for (const auto& [e, faces] : edge_faces)
    if (faces.size() == 1) on_boundary[e.first] = on_boundary[e.second] = 1;

  TripletScene out;
  out.connectivity_mode = ConnectivityMode::Connected;
  out.vertices.resize(mesh.vertices.size());
  out.props.resize(mesh.props.size());

  // even (original) vertices
  for (size_t v = 0; v < mesh.vertices.size(); ++v) {
    const auto& ring = adj[v];
    if (ring.empty()) {
      out.vertices[v] = mesh.vertices[v];
      out.props[v] = mesh.props[v];
      continue;
    }
    if (on_boundary[v]) {
      std::vector<int> bnd;
      for (int j : ring)
        if (edge_faces.at(make_edge(static_cast<int>(v), j)).size() == 1) bnd.push_back(j);
      if (bnd.size() == 2) {
        out.vertices[v] =
            mesh.vertices[v] * 0.75 + (mesh.vertices[bnd[0]] + mesh.vertices[bnd[1]]) * 0.125;
        auto pv = props_to_array(mesh.props[v]);
        const auto p0 = props_to_array(mesh.props[bnd[0]]), p1 = props_to_array(mesh.props[bnd[1]]);
        for (int c = 0; c < kPropChannels; ++c) pv[c] = 0.75 * pv[c] + 0.125 * (p0[c] + p1[c]);
        out.props[v] = array_to_props(pv);
      } else {  // corner or irregular boundary: keep
        out.vertices[v] = mesh.vertices[v];
        out.props[v] = mesh.props[v];
      }
      continue;
    }
    const int n = static_cast<int>(ring.size());
    const double c = 0.375 + 0.25 * std::cos(2.0 * M_PI / n);
    const double beta = (0.625 - c * c) / n;
    Vec3 pos = mesh.vertices[v] * (1.0 - n * beta);
    auto acc = props_to_array(mesh.props[v]);
    for (int ch = 0; ch < kPropChannels; ++ch) acc[ch] *= (1.0 - n * beta);
    for (int j : ring) {
      pos += mesh.vertices[j] * beta;
      const auto pj = props_to_array(mesh.props[j]);
      for (int ch = 0; ch < kPropChannels; ++ch) acc[ch] += beta * pj[ch];
    }
    out.vertices[v] = pos;
    out.props[v] = array_to_props(acc);
  }

  // odd (edge) vertices
  std::map<Edge, int> edge_vertex;
  for (const auto& [e, faces] : edge_faces) {
    const Vec3 a = mesh.vertices[e.first], b = mesh.vertices[e.second];
    const auto pa = props_to_array(mesh.props[e.first]), pb = props_to_array(mesh.props[e.second]);
    Vec3 pos;
    std::array<double, kPropChannels> pr{};
    if (faces.size() == 2) {
      int c = -1, d = -1;
      for (int fi : faces) {
        for (int k = 0; k < 3; ++k) {
          const int w = mesh.faces[fi][k];
          if (w != e.first && w != e.second) (c < 0 ? c : d) = w;
        }
      }
      pos = (a + b) * 0.375 + (mesh.vertices[c] + mesh.vertices[d]) * 0.125;
      const auto pc = props_to_array(mesh.props[c]), pd = props_to_array(mesh.props[d]);
      for (int ch = 0; ch < kPropChannels; ++ch)
        pr[ch] = 0.375 * (pa[ch] + pb[ch]) + 0.125 * (pc[ch] + pd[ch]);
    } else {
      pos = (a + b) * 0.5;
      for (int ch = 0; ch < kPropChannels; ++ch) pr[ch] = 0.5 * (pa[ch] + pb[ch]);
    }
    edge_vertex[e] = out.vertex_count();
    out.vertices.push_back(pos);
    out.props.push_back(array_to_props(pr));
  }

  for (const Face& f : mesh.faces) {
    const int m01 = edge_vertex.at(make_edge(f[0], f[1]));
    const int m12 = edge_vertex.at(make_edge(f[1], f[2]));
    const int m20 = edge_vertex.at(make_edge(f[2], f[0]));
    out.faces.push_back({f[0], m01, m20});
    out.faces.push_back({f[1], m12, m01});
    out.faces.push_back({f[2], m20, m12});
    out.faces.push_back({m01, m12, m20});
  }
  out.rebuild_edges();
  return out;
}

TripletScene qem_simplify(const TripletScene& mesh, int target_faces) {
  if (target_faces < 4) throw InvalidInput("qem_simplify: target_faces must be >= 4");

  {
    std::map<Edge, int> edge_count;
    for (const Face& f : mesh.faces)
      for (int k = 0; k < 3; ++k) edge_count[make_edge(f[k], f[(k + 1) % 3])]++;
    for (const auto& [e, n] : edge_count)
      if (n > 2) throw NonManifold("qem_simplify: non-manifold edge");
  }
  if (mesh.face_count() <= target_faces) return mesh;

  TripletScene work = mesh;
  work.connectivity_mode = ConnectivityMode::Connected;
  const int nv = work.vertex_count();

  std::vector<QuadricError> quadrics(nv);
  for (int fi = 0; fi < work.face_count(); ++fi) {
    const Vec3 raw = face_normal_raw(work, fi);
    const double area = 0.5 * norm(raw);
    if (area <= kDegenerateAreaEps) continue;
    const Vec3 n = raw / (2.0 * area);
    const double d = -dot(n, work.vertices[work.faces[fi][0]]);
    for (int k = 0; k < 3; ++k) quadrics[work.faces[fi][k]].add_plane(n, d, area);
  }

  std::vector<std::set<int>> vert_faces(nv);
  std::vector<std::set<int>> neighbors(nv);
  for (int fi = 0; fi < work.face_count(); ++fi) {
    const Face& f = work.faces[fi];
    for (int k = 0; k < 3; ++k) {
      vert_faces[f[k]].insert(fi);
      neighbors[f[k]].insert(f[(k + 1) % 3]);
      neighbors[f[k]].insert(f[(k + 2) % 3]);
    }
  }

  std::vector<int> version(nv, 0);
  std::vector<char> face_alive(work.face_count(), 1);
  std::vector<char> vert_alive(nv, 1);
  int alive_faces = work.face_count();

  struct Entry {
    double cost;
    int u, v, version_u, version_v;
    Vec3 opt;
    bool operator>(const Entry& o) const {
      return cost != o.cost ? cost > o.cost : (u != o.u ? u > o.u : v > o.v);
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;

  auto push_edge = [&](int u, int v) {
    if (u > v) std::swap(u, v);
    QuadricError q = quadrics[u];
    q += quadrics[v];
    Vec3 opt;
    if (!q.optimal_point(opt)) opt = (work.vertices[u] + work.vertices[v]) * 0.5;
    heap.push(Entry{q.eval(opt), u, v, version[u], version[v], opt});
  };
  for (int u = 0; u < nv; ++u)
    for (int v : neighbors[u])
      if (u < v) push_edge(u, v);

  auto face_normal_of = [&](const Face& f, const Vec3& a, const Vec3& b, const Vec3& c) {
    (void)f;
    return cross(b - a, c - a);
  };

  while (alive_faces > target_faces && !heap.empty()) {
    const Entry e = heap.top();
    heap.pop();
    if (!vert_alive[e.u] || !vert_alive[e.v]) continue;
    if (version[e.u] != e.version_u || version[e.v] != e.version_v) continue;
    if (!neighbors[e.u].count(e.v)) continue;

    // link condition: shared neighbours must be exactly the wing vertices
    std::vector<int> shared;
    for (int n : neighbors[e.u])
      if (neighbors[e.v].count(n)) shared.push_back(n);
    std::vector<int> wing_faces;
    for (int fi : vert_faces[e.u])
      if (vert_faces[e.v].count(fi)) wing_faces.push_back(fi);
    if (shared.size() != wing_faces.size()) continue;
    if (wing_faces.empty() || wing_faces.size() > 2) continue;

    // reject collapses that flip surviving faces
    bool flips = false;
    for (int side = 0; side < 2 && !flips; ++side) {
      const int vtx = side == 0 ? e.u : e.v;
      for (int fi : vert_faces[vtx]) {
        if (!face_alive[fi]) continue;
        if (std::find(wing_faces.begin(), wing_faces.end(), fi) != wing_faces.end()) continue;
        const Face& f = work.faces[fi];
        Vec3 before[3], after[3];
        for (int k = 0; k < 3; ++k) {
          before[k] = work.vertices[f[k]];
          after[k] = (f[k] == e.u || f[k] == e.v) ? e.opt : work.vertices[f[k]];
        }
        const Vec3 n0 = face_normal_of(f, before[0], before[1], before[2]);
        const Vec3 n1 = face_normal_of(f, after[0], after[1], after[2]);
        if (dot(n0, n1) <= 0.0 || norm(n1) <= kDegenerateAreaEps) {
          flips = true;
          break;
        }
      }
    }
    if (flips) continue;
    if (alive_faces - static_cast<int>(wing_faces.size()) < target_faces) break;

    // property blend weighted by how well each endpoint's quadric likes the target
    const double err_u = quadrics[e.u].eval(e.opt), err_v = quadrics[e.v].eval(e.opt);
    const double wu = 1.0 / (1e-12 + std::max(0.0, err_u));
    const double wv = 1.0 / (1e-12 + std::max(0.0, err_v));
    const double t = wv / (wu + wv);
    work.props[e.u] = mix_props(work.props[e.u], work.props[e.v], t);

    work.vertices[e.u] = e.opt;
    quadrics[e.u] += quadrics[e.v];
    vert_alive[e.v] = 0;

    for (int fi : wing_faces) {
      if (face_alive[fi]) {
        face_alive[fi] = 0;
        --alive_faces;
      }
      for (int k = 0; k < 3; ++k) vert_faces[work.faces[fi][k]].erase(fi);
    }
    for (int fi : std::vector<int>(vert_faces[e.v].begin(), vert_faces[e.v].end())) {
      Face& f = work.faces[fi];
      for (int k = 0; k < 3; ++k)
        if (f[k] == e.v) f[k] = e.u;
      vert_faces[e.v].erase(fi);
      vert_faces[e.u].insert(fi);
    }

    // rebuild the 1-ring adjacency of u
    for (int n : neighbors[e.v]) {
      neighbors[n].erase(e.v);
      if (n != e.u) {
        neighbors[n].insert(e.u);
        neighbors[e.u].insert(n);
      }
    }
    neighbors[e.v].clear();
    neighbors[e.u].erase(e.v);
    neighbors[e.u].erase(e.u);

    version[e.u]++;
    version[e.v]++;
    for (int n : neighbors[e.u]) push_edge(std::min(e.u, n), std::max(e.u, n));
  }

  std::vector<int> vertex_map;
  compact_scene(work, face_alive, vertex_map);
  return work;
}

// ---------------------------------------------------------------------------
// iso-surface extraction
// ---------------------------------------------------------------------------

namespace {

struct GridShape {
  int nx, ny, nz;  // corner counts
  Vec3 origin;
  double voxel;
};

// Tetrahedral decomposition of each cell around the main diagonal; the face
// diagonals agree between neighbouring cells, so shared crossings weld exactly.
constexpr int kTets[6][4] = {{0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6},
                             {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6}};
constexpr int kCubeOffsets[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

}  // namespace

TripletScene isosurface_from_grid(const std::vector<double>& values, int nx, int ny, int nz,
                                  const Vec3& origin, double voxel) {
  if (static_cast<int>(values.size()) != nx * ny * nz)
    throw InvalidInput("isosurface_from_grid: value count mismatch");
  auto value_at = [&](int x, int y, int z) { return values[(z * ny + y) * nx + x]; };
  auto corner_id = [&](int x, int y, int z) { return (z * ny + y) * nx + x; };
  auto corner_pos = [&](int x, int y, int z) {
    return origin + Vec3{x * voxel, y * voxel, z * voxel};
  };

  TripletScene mesh;
  mesh.connectivity_mode = ConnectivityMode::Connected;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  auto crossing = [&](int ca, int cb, double va, double vb, const Vec3& pa, const Vec3& pb) {
    const std::uint64_t key = ca < cb
                                  ? (static_cast<std::uint64_t>(ca) << 32) | static_cast<std::uint32_t>(cb)
                                  : (static_cast<std::uint64_t>(cb) << 32) | static_cast<std::uint32_t>(ca);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double t = va / (va - vb);
    mesh.vertices.push_back(pa + (pb - pa) * t);
    mesh.props.push_back(VertexProps{});
    const int idx = mesh.vertex_count() - 1;
    edge_vertex.emplace(key, idx);
    return idx;
  };

  auto emit = [&](int a, int b, int c, const Vec3& inside_to_out) {
    const Vec3 n = cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
    if (norm(n) <= 1e-18) return;  // collapsed crossing, skip sliver
    if (dot(n, inside_to_out) >= 0.0) mesh.faces.push_back({a, b, c});
    else mesh.faces.push_back({a, c, b});
  };

  for (int z = 0; z + 1 < nz; ++z)
    for (int y = 0; y + 1 < ny; ++y)
      for (int x = 0; x + 1 < nx; ++x) {
        int ids[8];
        double vals[8];
        Vec3 pos[8];
        for (int c = 0; c < 8; ++c) {
          const int cx = x + kCubeOffsets[c][0], cy = y + kCubeOffsets[c][1],
                    cz = z + kCubeOffsets[c][2];
          ids[c] = corner_id(cx, cy, cz);
          vals[c] = value_at(cx, cy, cz);
          pos[c] = corner_pos(cx, cy, cz);
        }
        for (const auto& tet : kTets) {
          int inside[4], outside[4];
          int ni = 0, no = 0;
          for (int k = 0; k < 4; ++k) {
            if (vals[tet[k]] < 0.0) inside[ni++] = tet[k];
            else outside[no++] = tet[k];
          }
          if (ni == 0 || ni == 4) continue;

          Vec3 c_in{}, c_out{};
          for (int k = 0; k < ni; ++k) c_in += pos[inside[k]] / ni;
          for (int k = 0; k < no; ++k) c_out += pos[outside[k]] / no;
          const Vec3 io = c_out - c_in;

          auto cut = [&](int i, int o) {
            return crossing(ids[i], ids[o], vals[i], vals[o], pos[i], pos[o]);
          };
          if (ni == 1) {
            emit(cut(inside[0], outside[0]), cut(inside[0], outside[1]),
                 cut(inside[0], outside[2]), io);
          } else if (ni == 3) {
            emit(cut(inside[0], outside[0]), cut(inside[1], outside[0]),
                 cut(inside[2], outside[0]), io);
          } else {  // ni == 2: quad split along a fixed diagonal
            const int q0 = cut(inside[0], outside[0]);
            const int q1 = cut(inside[0], outside[1]);
            const int q2 = cut(inside[1], outside[1]);
            const int q3 = cut(inside[1], outside[0]);
            emit(q0, q1, q2, io);
            emit(q0, q2, q3, io);
          }
        }
      }

  mesh.rebuild_edges();
  return mesh;
}

bool is_watertight(const TripletScene& mesh) {
  if (mesh.faces.empty()) return false;
  std::map<Edge, int> count;
  for (const Face& f : mesh.faces)
    for (int k = 0; k < 3; ++k) count[make_edge(f[k], f[(k + 1) % 3])]++;
  for (const auto& [e, n] : count)
    if (n != 2) return false;
  return true;
}

namespace {

TripletScene largest_component(const TripletScene& mesh) {
  if (mesh.faces.empty()) return mesh;
  // union-find over vertices
  std::vector<int> parent(mesh.vertices.size());
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const Face& f : mesh.faces) {
    parent[find(f[1])] = find(f[0]);
    parent[find(f[2])] = find(f[0]);
  }
  std::map<int, int> face_counts;
  for (const Face& f : mesh.faces) face_counts[find(f[0])]++;
  int best_root = -1, best = -1;
  for (const auto& [root, n] : face_counts)
    if (n > best) {
      best = n;
      best_root = root;
    }
  std::vector<char> alive(mesh.faces.size(), 0);
  for (size_t fi = 0; fi < mesh.faces.size(); ++fi)
    alive[fi] = find(mesh.faces[fi][0]) == best_root;
  TripletScene out = mesh;
  std::vector<int> vertex_map;
  compact_scene(out, alive, vertex_map);
  return out;
}

}  // namespace

TripletScene extract_mesh(const TripletScene& scene, const std::vector<Camera>& cameras,
                          const ExtractConfig& cfg) {
  if (cameras.size() < 3) throw InvalidInput("extract_mesh: need at least 3 cameras");
  if (scene.vertices.empty()) throw ExtractionFailed("empty scene");

  Vec3 lo = scene.vertices[0], hi = scene.vertices[0];
  for (const Vec3& v : scene.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  const Vec3 extent = hi - lo;
  const double longest = std::max({extent.x, extent.y, extent.z, 1e-6});
  const double voxel = longest / cfg.grid_resolution;
  const double pad = cfg.padding_voxels * voxel;
  lo -= Vec3{pad, pad, pad};
  const Vec3 span = extent + Vec3{2 * pad, 2 * pad, 2 * pad};
  const int nx = static_cast<int>(std::ceil(span.x / voxel)) + 1;
  const int ny = static_cast<int>(std::ceil(span.y / voxel)) + 1;
  const int nz = static_cast<int>(std::ceil(span.z / voxel)) + 1;
  const double trunc = cfg.truncation_voxels * voxel;

  struct DepthMap {
    std::vector<double> depth, opacity;
  };
  std::vector<DepthMap> maps(cameras.size());
  for (size_t ci = 0; ci < cameras.size(); ++ci)
    render_depth_alpha(scene, cameras[ci], cfg.faces_per_pixel, maps[ci].depth, maps[ci].opacity);

  std::vector<double> tsdf(static_cast<size_t>(nx) * ny * nz, 0.0);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const Vec3 p = lo + Vec3{x * voxel, y * voxel, z * voxel};
        double acc = 0.0;
        int weight = 0;
        for (size_t ci = 0; ci < cameras.size(); ++ci) {
          const Camera& cam = cameras[ci];
          const Vec3 q = cam.to_camera(p);
          if (q.z < cam.near || q.z > cam.far) continue;
          const int px = static_cast<int>(std::floor(cam.fx * q.x / q.z + cam.cx));
          const int py = static_cast<int>(std::floor(cam.fy * q.y / q.z + cam.cy));
          if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) continue;
          const size_t pix = static_cast<size_t>(py) * cam.width + px;
          const double opacity = maps[ci].opacity[pix];
          if (opacity < cfg.empty_below) {
            acc += trunc;  // observed empty along this ray
            ++weight;
            continue;
          }
          if (opacity < cfg.min_opacity) continue;  // fringe pixel: no evidence
          const double sdf = maps[ci].depth[pix] - q.z;
          if (sdf >= -trunc) {
            acc += std::clamp(sdf, -trunc, trunc);
            ++weight;
          }
        }
        tsdf[(static_cast<size_t>(z) * ny + y) * nx + x] = weight > 0 ? acc / weight : -trunc;
      }

  TripletScene mesh = isosurface_from_grid(tsdf, nx, ny, nz, lo, voxel);
  if (mesh.faces.empty()) throw ExtractionFailed("no surface crossing in the fused volume");
  if (cfg.keep_largest_component) mesh = largest_component(mesh);
  if (cfg.simplify_target > 0 && mesh.face_count() > cfg.simplify_target)
    mesh = qem_simplify(mesh, cfg.simplify_target);
  if (cfg.smooth_rounds > 0)
    laplacian_smooth(mesh, cfg.smooth_rounds, cfg.smooth_lambda, cfg.smooth_mu);
  for (VertexProps& p : mesh.props) p.alpha = 1.0;
  return mesh;
}

void transfer_properties(const TripletScene& src, TripletScene& dst) {
  if (src.vertices.empty() || dst.vertices.empty())
    throw InvalidInput("transfer_properties: empty scene");

  // uniform grid over the source cloud
  Vec3 lo = src.vertices[0], hi = src.vertices[0];
  for (const Vec3& v : src.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  const double diag = norm(hi - lo);
  const double cell = std::max(diag / 64.0, 1e-9);
  auto cell_of = [&](const Vec3& p) {
    return std::array<int, 3>{static_cast<int>(std::floor((p.x - lo.x) / cell)),
                              static_cast<int>(std::floor((p.y - lo.y) / cell)),
                              static_cast<int>(std::floor((p.z - lo.z) / cell))};
  };
  std::map<std::array<int, 3>, std::vector<int>> grid;
  for (size_t i = 0; i < src.vertices.size(); ++i) grid[cell_of(src.vertices[i])].push_back(static_cast<int>(i));

  auto lex_less = [&](int a, int b) {
    const Vec3 &pa = src.vertices[a], &pb = src.vertices[b];
    if (pa.x != pb.x) return pa.x < pb.x;
    if (pa.y != pb.y) return pa.y < pb.y;
    if (pa.z != pb.z) return pa.z < pb.z;
    return a < b;
  };

  for (size_t di = 0; di < dst.vertices.size(); ++di) {
    const Vec3& p = dst.vertices[di];
    const auto base = cell_of(p);
    int best = -1;
    double best_d = std::numeric_limits<double>::max();
    const int ring_limit = 256;
    for (int ring = 0; ring <= ring_limit; ++ring) {
      // cells at Chebyshev ring r are at least (r-1) cells away
      if (best >= 0) {
        const double lower = (ring - 1) * cell;
        if (lower > 0.0 && lower * lower > best_d) break;
      }
      for (int dz = -ring; dz <= ring; ++dz)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const auto it = grid.find({base[0] + dx, base[1] + dy, base[2] + dz});
            if (it == grid.end()) continue;
            for (int si : it->second) {
              const double d = norm2(src.vertices[si] - p);
              if (d < best_d || (d == best_d && best >= 0 && lex_less(si, best))) {
                best_d = d;
                best = si;
              }
            }
          }
    }
    if (best < 0) {  // degenerate grid; exact fallback
      for (size_t si = 0; si < src.vertices.size(); ++si) {
        const double d = norm2(src.vertices[si] - p);
        if (d < best_d || (d == best_d && best >= 0 && lex_less(static_cast<int>(si), best))) {
          best_d = d;
          best = static_cast<int>(si);
        }
      }
    }
    dst.props[di] = src.props[best];
    if (dst.connectivity_mode == ConnectivityMode::Connected) dst.props[di].alpha = 1.0;
  }
}

void laplacian_smooth(TripletScene& mesh, int rounds, double lambda, double mu) {
  const auto adj = adjacency(mesh);
  auto step = [&](double s) {
    std::vector<Vec3> next = mesh.vertices;
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
      if (adj[v].empty()) continue;
      Vec3 mean{};
      for (int j : adj[v]) mean += mesh.vertices[j];
      mean = mean / static_cast<double>(adj[v].size());
      next[v] = mesh.vertices[v] + (mean - mesh.vertices[v]) * s;
    }
    mesh.vertices = std::move(next);
  };
  for (int r = 0; r < rounds; ++r) {
    step(lambda);
    if (mu != 0.0) step(mu);
  }
}

void ring_filter_materials(TripletScene& mesh, int rounds) {
  const auto adj = adjacency(mesh);
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::array<double, kPropChannels>> next(mesh.vertices.size());
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
      auto acc = props_to_array(mesh.props[v]);
      const double alpha_keep = acc[14];
      int n = 1;
      for (int j : adj[v]) {
        const auto pj = props_to_array(mesh.props[j]);
        for (int c = 0; c < kPropChannels; ++c) acc[c] += pj[c];
        ++n;
      }
      for (int c = 0; c < kPropChannels; ++c) acc[c] /= n;
      acc[14] = alpha_keep;  // alpha is not a material channel
      next[v] = acc;
    }
    for (size_t v = 0; v < mesh.vertices.size(); ++v) mesh.props[v] = array_to_props(next[v]);
  }
}

}  // namespace triplet
