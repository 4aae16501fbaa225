#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "triplet/vec.hpp"

namespace triplet {

enum class Reparam { Identity, Sigmoid, Exp };

// Flat parameter array plus its mapping to constrained space. `values` holds
// the raw (unconstrained) parameters the optimizer sees.
struct ParamGroup {
  std::string name;
  std::vector<double> values;
  Reparam reparam = Reparam::Identity;
  double learning_rate = 1e-3;
  double clip_norm = 0.0;  // 0 disables clipping
};

double reparam_apply(Reparam r, double raw);
double reparam_derivative(Reparam r, double raw);  // d(constrained)/d(raw)
double reparam_invert(Reparam r, double constrained);

std::vector<double> reparam_forward(const ParamGroup& group);

// Chain raw-space gradients from constrained-space ones, in place.
void reparam_backward(const ParamGroup& group, std::vector<double>& grads);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  void resize(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

// Bias-corrected Adam. Non-finite gradient entries skip their scalar and are counted.
int adam_step(ParamGroup& group, AdamState& state, const std::vector<double>& grads);

// Scales grads to max_norm when the l2 norm exceeds it.
void clip_grad_norm(std::vector<double>& grads, double max_norm);

// Per-vertex positional gradient statistics feeding density control.
struct GradStats {
  std::vector<double> norm_sum;   // accumulated screen-space gradient norm
  std::vector<int> count;
  std::vector<Vec3> dir_sum;      // accumulated world-space positional gradient (clone direction)

  void reset(size_t n_vertices) {
    norm_sum.assign(n_vertices, 0.0);
    count.assign(n_vertices, 0);
    dir_sum.assign(n_vertices, Vec3{});
  }
  size_t size() const { return norm_sum.size(); }
};

void accumulate_grad_stats(GradStats& stats, const std::vector<Vec2>& screen_grads,
                           const std::vector<Vec3>& world_grads);

// Central finite-difference verification of an analytic Jacobian.
// forward: R^n -> R^m, must be pure; jacobian(x)[i][j] = d out_i / d in_j.
struct GradCheckResult {
  double max_rel_err = 0.0;
  int worst_output = -1;
  int worst_input = -1;
};

GradCheckResult grad_check(
    const std::function<std::vector<double>(const std::vector<double>&)>& forward,
    const std::function<std::vector<std::vector<double>>(const std::vector<double>&)>& jacobian,
    const std::vector<double>& inputs, double step = 1e-5, double abs_floor = 1e-6);

}  // namespace triplet
