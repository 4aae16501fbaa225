#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "triplet/vec.hpp"

namespace triplet {

// Reflectance parameters shared by both shading models. Bounded fields live in
// [0,1]; shininess is the Blinn-Phong exponent, roughness drives GGX.
struct Material {
  Rgb kd{0.5, 0.5, 0.5};
  Rgb ks{0.04, 0.04, 0.04};
  double shininess = 32.0;
  double roughness = 0.8;
  double metallic = 0.0;
  double ao = 1.0;
  double f0_base = 0.04;
};

struct VertexProps {
  Material material;
  Rgb texture_rgb{0.5, 0.5, 0.5};  // spatially varying albedo fed to k_d
  double alpha = 0.1;
};

enum class ConnectivityMode { Discrete, Connected };

using Face = std::array<int, 3>;
using Edge = std::pair<int, int>;  // ordered (lo, hi)

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

constexpr double kDegenerateAreaEps = 1e-12;  // squared-world-units floor on 2*area

// The four sets of the triplet representation: V (vertices), P (props),
// E (edges, derived from F), F (faces).
struct TripletScene {
  std::vector<Vec3> vertices;
  std::vector<VertexProps> props;
  std::vector<Face> faces;
  std::set<Edge> edges;
  ConnectivityMode connectivity_mode = ConnectivityMode::Discrete;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  void rebuild_edges();
};

// One equilateral patchlet per input point, seeded random orientation.
TripletScene assemble_triplets(const std::vector<Vec3>& points, double patch_radius,
                               std::uint64_t seed);

// Unnormalized face normal (cross of edge vectors); norm is twice the face area.
Vec3 face_normal_raw(const TripletScene& scene, int face_id);

// Unit face normal; throws DegenerateFace below the area floor.
Vec3 face_normal(const TripletScene& scene, int face_id);

double face_area(const TripletScene& scene, int face_id);

struct VertexNormals {
  std::vector<Vec3> normals;       // zero vector where invalid
  std::vector<std::uint8_t> valid; // isolated vertices flagged invalid
};

// Area-weighted average of incident face normals.
VertexNormals vertex_normals(const TripletScene& scene);

// Exact 1-ring neighbourhood of a vertex from the edge set.
std::vector<int> one_ring(const TripletScene& scene, int vertex_id);

// Vertex -> incident vertices adjacency for the whole scene.
std::vector<std::vector<int>> adjacency(const TripletScene& scene);

ValidationReport validate(const TripletScene& scene);

// Mean nearest-neighbour distance of a point set (default patch radius source).
double mean_nn_distance(const std::vector<Vec3>& points);

}  // namespace triplet
