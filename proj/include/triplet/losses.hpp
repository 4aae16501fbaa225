#pragma once

#include <map>
#include <vector>

#include "triplet/image.hpp"
#include "triplet/scene.hpp"
#include "triplet/vec.hpp"

namespace triplet {

struct LossWeights {
  double w_l1 = 0.8;
  double w_ssim = 0.2;
  // Eq.-13-style TV is a raw sum over pixels, so its weight carries the 1/(W*H*3)
  // normalization a mean would have had.
  double w_itv = 1e-6;
  double w_nc_discrete = 0.01;
  // graph TV is a raw sum over the edge set (see w_itv); weighted accordingly
  double w_gtv = 1e-6;
  double w_nc_connected = 0.01;
  double w_laplacian = 0.1;
};

double l1_loss(const Image& render, const Image& target);
Image l1_backward(const Image& render, const Image& target);

// 1 - mean SSIM; 11x11 Gaussian window sigma 1.5, K1 0.01, K2 0.03, L = 1.
// Windows needing off-image support are dropped; images smaller than the
// window fall back to global statistics.
double ssim_loss(const Image& render, const Image& target);
Image ssim_backward(const Image& render, const Image& target);

// Mean SSIM itself (metrics use).
double ssim_index(const Image& a, const Image& b);

double image_tv(const Image& img, double eps_tv = 1e-8);
Image image_tv_backward(const Image& img, double eps_tv = 1e-8);

struct NormalConsistencyDiscrete {
  double loss = 0.0;
  int skipped_degenerate = 0;
};

NormalConsistencyDiscrete normal_consistency_discrete(const TripletScene& scene,
                                                      const std::vector<Vec3>& reference_normals,
                                                      const std::vector<double>& weights);
std::vector<Vec3> normal_consistency_discrete_backward(const TripletScene& scene,
                                                       const std::vector<Vec3>& reference_normals,
                                                       const std::vector<double>& weights);

// Reference normals and weights of Eq.-14 style regularization: area-weighted
// mean normal of the k nearest faces, weight = area / mean area.
void knn_reference_normals(const TripletScene& scene, int k, std::vector<Vec3>& normals,
                           std::vector<double>& weights);

// sum_i sum_{j in ring(i)} sqrt(W_ij) |x_i - x_j|_1; each edge counted twice.
double graph_tv(const TripletScene& scene, const std::vector<double>& field, int dim,
                const std::map<Edge, double>* edge_weights = nullptr);
std::vector<double> graph_tv_backward(const TripletScene& scene, const std::vector<double>& field,
                                      int dim, const std::map<Edge, double>* edge_weights = nullptr);

double normal_consistency_connected(const TripletScene& scene);
std::vector<Vec3> normal_consistency_connected_backward(const TripletScene& scene);

double laplacian_loss(const TripletScene& scene);
std::vector<Vec3> laplacian_backward(const TripletScene& scene);

struct LossTerms {
  double l1 = 0.0;
  double ssim = 0.0;
  double itv = 0.0;
  double nc_discrete = 0.0;
  double gtv = 0.0;
  double nc_connected = 0.0;
  double laplacian = 0.0;
};

// Weighted sum over the phase-appropriate terms; throws LossDiverged naming
// the first non-finite term.
double total_loss(const LossTerms& terms, const LossWeights& weights, ConnectivityMode phase);

}  // namespace triplet
