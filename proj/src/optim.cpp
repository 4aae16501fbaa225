#include "triplet/optim.hpp"

#include <algorithm>
#include <cmath>

#include "triplet/errors.hpp"

namespace triplet {

double reparam_apply(Reparam r, double raw) {
  switch (r) {
    case Reparam::Identity:
      return raw;
    case Reparam::Sigmoid:
      // overflow-safe logistic
      return raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw))
                        : std::exp(raw) / (1.0 + std::exp(raw));
    case Reparam::Exp:
      return std::exp(raw);
  }
  return raw;
}

double reparam_derivative(Reparam r, double raw) {
  switch (r) {
    case Reparam::Identity:
      return 1.0;
    case Reparam::Sigmoid: {
      const double s = reparam_apply(Reparam::Sigmoid, raw);
      return s * (1.0 - s);
    }
    case Reparam::Exp:
      return std::exp(raw);
  }
  return 1.0;
}

double reparam_invert(Reparam r, double constrained) {
  switch (r) {
    case Reparam::Identity:
      return constrained;
    case Reparam::Sigmoid: {
      const double c = std::clamp(constrained, 1e-12, 1.0 - 1e-12);
      return std::log(c / (1.0 - c));
    }
    case Reparam::Exp:
      return std::log(std::max(constrained, 1e-300));
  }
  return constrained;
}

std::vector<double> reparam_forward(const ParamGroup& group) {
  std::vector<double> out(group.values.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = reparam_apply(group.reparam, group.values[i]);
  return out;
}

void reparam_backward(const ParamGroup& group, std::vector<double>& grads) {
  for (size_t i = 0; i < grads.size(); ++i)
    grads[i] *= reparam_derivative(group.reparam, group.values[i]);
}

int adam_step(ParamGroup& group, AdamState& state, const std::vector<double>& grads) {
  if (grads.size() != group.values.size())
    throw InvalidInput("adam_step: gradient/value shape mismatch");
  if (state.m.size() != group.values.size()) state.resize(group.values.size());

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  int skipped = 0;
  for (size_t i = 0; i < grads.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) {
      ++skipped;
      continue;
    }
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    group.values[i] -= group.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
  }
  return skipped;
}

void clip_grad_norm(std::vector<double>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw InvalidInput("clip_grad_norm: max_norm must be > 0");
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double n = std::sqrt(sq);
  if (n <= max_norm) return;
  const double scale = max_norm / n;
  for (double& g : grads) g *= scale;
}

void accumulate_grad_stats(GradStats& stats, const std::vector<Vec2>& screen_grads,
                           const std::vector<Vec3>& world_grads) {
  if (stats.size() != screen_grads.size() || stats.size() != world_grads.size())
    throw InvalidInput("accumulate_grad_stats: size mismatch");
  for (size_t i = 0; i < stats.size(); ++i) {
    stats.norm_sum[i] += std::hypot(screen_grads[i].x, screen_grads[i].y);
    stats.count[i] += 1;
    stats.dir_sum[i] += world_grads[i];
  }
}

GradCheckResult grad_check(
    const std::function<std::vector<double>(const std::vector<double>&)>& forward,
    const std::function<std::vector<std::vector<double>>(const std::vector<double>&)>& jacobian,
    const std::vector<double>& inputs, double step, double abs_floor) {
  const std::vector<double> y0 = forward(inputs);
  const std::vector<double> y1 = forward(inputs);
  if (y0 != y1) throw InvalidKernel("grad_check: forward pass is nondeterministic");

  const std::vector<std::vector<double>> jac = jacobian(inputs);
  if (jac.size() != y0.size()) throw InvalidKernel("grad_check: jacobian row count mismatch");

  GradCheckResult result;
  std::vector<double> x = inputs;
  for (size_t j = 0; j < inputs.size(); ++j) {
    const double saved = x[j];
    x[j] = saved + step;
    const std::vector<double> yp = forward(x);
    x[j] = saved - step;
    const std::vector<double> ym = forward(x);
    x[j] = saved;
    for (size_t i = 0; i < y0.size(); ++i) {
      const double fd = (yp[i] - ym[i]) / (2.0 * step);
      const double an = jac[i][j];
      const double denom = std::max({std::abs(fd), std::abs(an), abs_floor});
      const double rel = std::abs(fd - an) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_output = static_cast<int>(i);
        result.worst_input = static_cast<int>(j);
      }
    }
  }
  return result;
}

}  // namespace triplet
