#pragma once

#include <array>
#include <string>
#include <vector>

#include "triplet/camera.hpp"
#include "triplet/optim.hpp"
#include "triplet/scene.hpp"

namespace triplet {

struct DensityConfig {
  int interval = 100;               // iterations between density-control passes
  double grad_threshold = 2e-4;     // mean screen-space gradient norm trigger
  double size_threshold = 0.01;     // longest edge above this splits, below clones
  double alpha_prune = 0.005;
  int max_faces = 500000;
};

// Symmetric 4x4 quadric accumulated from weighted face planes.
struct QuadricError {
  // packed upper triangle: xx xy xz xw yy yz yw zz zw ww
  std::array<double, 10> q{};

  void add_plane(const Vec3& n, double d, double weight);
  QuadricError& operator+=(const QuadricError& o);
  double eval(const Vec3& v) const;
  // Minimizer of the quadric; false when the 3x3 block is singular.
  bool optimal_point(Vec3& out) const;
};

// Maps each vertex of an edited scene to its source vertex, -1 for fresh ones.
struct SceneEdit {
  std::vector<int> src_vertex;
  int n_split = 0;
  int n_cloned = 0;
  int n_pruned = 0;
  bool truncated = false;   // densification stopped at max_faces
  bool empty_scene = false; // pruning removed every face
};

// 1-to-4 midpoint split of a discrete patchlet; children own their vertices.
std::array<int, 4> split_face_loop(TripletScene& scene, int face_id);

// Duplicate of the face, each vertex offset along its descent direction.
int clone_face(TripletScene& scene, int face_id, const std::vector<Vec3>& grad_dir, double step);

// Gradient/size-driven split-or-clone plus alpha pruning, max_faces-capped.
SceneEdit densify_and_prune(TripletScene& scene, const GradStats& stats,
                            const DensityConfig& cfg);

// Standard Loop subdivision (V' = V + E, F' = 4F); props use the same stencils.
TripletScene loop_subdivide(const TripletScene& mesh);

// Greedy quadric-error edge collapse down to target_faces.
TripletScene qem_simplify(const TripletScene& mesh, int target_faces);

struct ExtractConfig {
  int grid_resolution = 64;   // cells along the longest AABB axis
  int faces_per_pixel = 30;
  double min_opacity = 0.5;   // at least this accumulated alpha backs a depth sample
  double empty_below = 0.1;   // below this the ray is carving evidence; between: no info
  double truncation_voxels = 4.0;
  double padding_voxels = 3.0;
  bool keep_largest_component = true;
  int simplify_target = 0;    // >0: QEM the raw tessellation down before use
  int smooth_rounds = 0;      // Taubin smoothing passes after simplification
  double smooth_lambda = 0.5;
  double smooth_mu = -0.53;   // 0 disables the inflate step (plain Laplacian)
};

// Taubin-style positional smoothing; each round applies lambda then mu steps
// of v += s * (ring mean - v). mu = 0 reduces to shrinking Laplacian smoothing.
void laplacian_smooth(TripletScene& mesh, int rounds, double lambda, double mu = 0.0);

// Alpha-weighted depth maps -> TSDF fusion -> iso-surface extraction.
TripletScene extract_mesh(const TripletScene& scene, const std::vector<Camera>& cameras,
                          const ExtractConfig& cfg);

// Nearest-neighbour property transfer; alpha forced to 1 on connected meshes.
void transfer_properties(const TripletScene& src, TripletScene& dst);

// Per-round replacement of every material channel by its closed-ring mean.
void ring_filter_materials(TripletScene& mesh, int rounds);

// Iso-surface of an arbitrary sampled field (exposed for testing).
TripletScene isosurface_from_grid(const std::vector<double>& values, int nx, int ny, int nz,
                                  const Vec3& origin, double voxel);

// true when every edge bounds exactly two faces
bool is_watertight(const TripletScene& mesh);

}  // namespace triplet
