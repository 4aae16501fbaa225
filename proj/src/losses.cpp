#include "triplet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "triplet/errors.hpp"

namespace triplet {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const double* gaussian_window() {
  static double w[kWindow] = {0};
  static bool init = false;
  if (!init) {
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kHalf;
      w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += w[i];
    }
    for (int i = 0; i < kWindow; ++i) w[i] /= sum;
    init = true;
  }
  return w;
}

struct SsimFields {
  int vw = 0, vh = 0;  // valid-region extent
  std::vector<double> mu_x, mu_y, mxx, myy, mxy, s;
};

// Local window statistics over fully supported positions, one channel.
SsimFields ssim_fields(const Image& x, const Image& y, int c) {
  const double* g = gaussian_window();
  SsimFields f;
  f.vw = x.width - 2 * kHalf;
  f.vh = x.height - 2 * kHalf;
  const size_t n = static_cast<size_t>(f.vw) * f.vh;
  f.mu_x.assign(n, 0.0);
  f.mu_y.assign(n, 0.0);
  f.mxx.assign(n, 0.0);
  f.myy.assign(n, 0.0);
  f.mxy.assign(n, 0.0);
  f.s.assign(n, 0.0);
  for (int vy = 0; vy < f.vh; ++vy) {
    for (int vx = 0; vx < f.vw; ++vx) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = 0; dy < kWindow; ++dy)
        for (int dx = 0; dx < kWindow; ++dx) {
          const double w = g[dy] * g[dx];
          const double xv = x.at(vx + dx, vy + dy, c);
          const double yv = y.at(vx + dx, vy + dy, c);
          mx += w * xv;
          my += w * yv;
          sxx += w * xv * xv;
          syy += w * yv * yv;
          sxy += w * xv * yv;
        }
      const size_t i = static_cast<size_t>(vy) * f.vw + vx;
      f.mu_x[i] = mx;
      f.mu_y[i] = my;
      f.mxx[i] = sxx;
      f.myy[i] = syy;
      f.mxy[i] = sxy;
      const double a1 = 2.0 * mx * my + kC1;
      const double a2 = 2.0 * (sxy - mx * my) + kC2;
      const double b1 = mx * mx + my * my + kC1;
      const double b2 = (sxx - mx * mx) + (syy - my * my) + kC2;
      f.s[i] = a1 * a2 / (b1 * b2);
    }
  }
  return f;
}

double global_ssim(const Image& x, const Image& y) {
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
    const double n = static_cast<double>(x.width) * x.height;
    for (int py = 0; py < x.height; ++py)
      for (int px = 0; px < x.width; ++px) {
        const double xv = x.at(px, py, c), yv = y.at(px, py, c);
        mx += xv;
        my += yv;
        sxx += xv * xv;
        syy += yv * yv;
        sxy += xv * yv;
      }
    mx /= n;
    my /= n;
    const double var_x = sxx / n - mx * mx;
    const double var_y = syy / n - my * my;
    const double cov = sxy / n - mx * my;
    total += (2 * mx * my + kC1) * (2 * cov + kC2) /
             ((mx * mx + my * my + kC1) * (var_x + var_y + kC2));
  }
  return total / 3.0;
}

void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(who) + ": image shape mismatch");
}

}  // namespace

double l1_loss(const Image& render, const Image& target) {
  require_same_shape(render, target, "l1_loss");
  double total = 0.0;
  for (size_t i = 0; i < render.data.size(); ++i) total += std::abs(render.data[i] - target.data[i]);
  return total / static_cast<double>(render.data.size());
}

Image l1_backward(const Image& render, const Image& target) {
  require_same_shape(render, target, "l1_backward");
  Image g(render.width, render.height);
  const double inv_n = 1.0 / static_cast<double>(render.data.size());
  for (size_t i = 0; i < render.data.size(); ++i) {
    const double d = render.data[i] - target.data[i];
    g.data[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  return g;
}

double ssim_index(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.width < kWindow || a.height < kWindow) return global_ssim(a, b);
  double total = 0.0;
  size_t count = 0;
  for (int c = 0; c < 3; ++c) {
    const SsimFields f = ssim_fields(a, b, c);
    for (double v : f.s) total += v;
    count += f.s.size();
  }
  return total / static_cast<double>(count);
}

double ssim_loss(const Image& render, const Image& target) {
  return 1.0 - ssim_index(render, target);
}

Image ssim_backward(const Image& render, const Image& target) {
  require_same_shape(render, target, "ssim_backward");
  Image grad(render.width, render.height);
  if (render.width < kWindow || render.height < kWindow) {
    // Global-statistics fallback gradient.
    const double n = static_cast<double>(render.width) * render.height;
    for (int c = 0; c < 3; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (size_t i = c; i < render.data.size(); i += 3) {
        const double xv = render.data[i], yv = target.data[i];
        mx += xv;
        my += yv;
        sxx += xv * xv;
        syy += yv * yv;
        sxy += xv * yv;
      }
      mx /= n;
      my /= n;
      const double var_x = sxx / n - mx * mx;
      const double var_y = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      const double a1 = 2 * mx * my + kC1, a2 = 2 * cov + kC2;
      const double b1 = mx * mx + my * my + kC1, b2 = var_x + var_y + kC2;
      const double denom = b1 * b2;
      const double ds_dmu = (2 * my * a2 - 2 * my * a1) / denom -
                            a1 * a2 * (2 * mx * b2 - 2 * mx * b1) / (denom * denom);
      const double ds_dmxx = -a1 * a2 / (b1 * b2 * b2);
      const double ds_dmxy = 2 * a1 / denom;
      for (size_t i = c; i < render.data.size(); i += 3) {
        const double xv = render.data[i], yv = target.data[i];
        grad.data[i] = -(ds_dmu / n + ds_dmxx * 2 * xv / n + ds_dmxy * yv / n) / 3.0;
      }
    }
    return grad;
  }

  for (int c = 0; c < 3; ++c) {
    const SsimFields f = ssim_fields(render, target, c);
    const double inv_p = 1.0 / (3.0 * static_cast<double>(f.s.size()));
    const double* g = gaussian_window();
    for (int vy = 0; vy < f.vh; ++vy) {
      for (int vx = 0; vx < f.vw; ++vx) {
        const size_t i = static_cast<size_t>(vy) * f.vw + vx;
        const double mx = f.mu_x[i], my = f.mu_y[i];
        const double a1 = 2 * mx * my + kC1;
        const double a2 = 2 * (f.mxy[i] - mx * my) + kC2;
        const double b1 = mx * mx + my * my + kC1;
        const double b2 = (f.mxx[i] - mx * mx) + (f.myy[i] - my * my) + kC2;
        const double denom = b1 * b2;
        const double ds_dmu = (2 * my * a2 - 2 * my * a1) / denom -
                              a1 * a2 * (2 * mx * b2 - 2 * mx * b1) / (denom * denom);
        const double ds_dmxx = -a1 * a2 / (b1 * b2 * b2);
        const double ds_dmxy = 2 * a1 / denom;
        // scatter: loss = 1 - mean(S) so each map gets -inv_p
        for (int dy = 0; dy < kWindow; ++dy)
          for (int dx = 0; dx < kWindow; ++dx) {
            const double w = g[dy] * g[dx];
            const int qx = vx + dx, qy = vy + dy;
            const double xv = render.at(qx, qy, c), yv = target.at(qx, qy, c);
            grad.at(qx, qy, c) +=
                -inv_p * w * (ds_dmu + ds_dmxx * 2.0 * xv + ds_dmxy * yv);
          }
      }
    }
  }
  return grad;
}

double image_tv(const Image& img, double eps_tv) {
  double total = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double sq = 0.0;
        bool any = false;
        if (x >= 1) {
          const double dh = img.at(x - 1, y, c) - img.at(x, y, c);
          sq += dh * dh;
          any = true;
        }
        if (y + 1 < img.height) {
          const double dv = img.at(x, y + 1, c) - img.at(x, y, c);
          sq += dv * dv;
          any = true;
        }
        if (any) total += std::sqrt(sq + eps_tv);
      }
  return total;
}

Image image_tv_backward(const Image& img, double eps_tv) {
  Image grad(img.width, img.height);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double sq = 0.0;
        bool any = false;
        double dh = 0.0, dv = 0.0;
        if (x >= 1) {
          dh = img.at(x - 1, y, c) - img.at(x, y, c);
          sq += dh * dh;
          any = true;
        }
        if (y + 1 < img.height) {
          dv = img.at(x, y + 1, c) - img.at(x, y, c);
          sq += dv * dv;
          any = true;
        }
        if (!any) continue;
        const double val = std::sqrt(sq + eps_tv);
        if (val <= 0.0) continue;  // eps 0 subgradient
        if (x >= 1) {
          grad.at(x - 1, y, c) += dh / val;
          grad.at(x, y, c) -= dh / val;
        }
        if (y + 1 < img.height) {
          grad.at(x, y + 1, c) += dv / val;
          grad.at(x, y, c) -= dv / val;
        }
      }
  return grad;
}

NormalConsistencyDiscrete normal_consistency_discrete(const TripletScene& scene,
                                                      const std::vector<Vec3>& reference_normals,
                                                      const std::vector<double>& weights) {
  if (reference_normals.size() != scene.faces.size() || weights.size() != scene.faces.size())
    throw InvalidInput("normal_consistency_discrete: per-face arrays expected");
  NormalConsistencyDiscrete out;
  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Vec3 raw = face_normal_raw(scene, fi);
    const double len = norm(raw);
    if (len <= kDegenerateAreaEps) {
      ++out.skipped_degenerate;
      continue;
    }
    out.loss += weights[fi] * (1.0 - dot(raw / len, reference_normals[fi]));
  }
  return out;
}

std::vector<Vec3> normal_consistency_discrete_backward(
    const TripletScene& scene, const std::vector<Vec3>& reference_normals,
    const std::vector<double>& weights) {
  std::vector<Vec3> grad(scene.vertices.size(), Vec3{});
  for (int fi = 0; fi < scene.face_count(); ++fi) {
    const Vec3 raw = face_normal_raw(scene, fi);
    const double len = norm(raw);
    if (len <= kDegenerateAreaEps) continue;
    const Vec3 n = raw / len;
    const Vec3 u = (-weights[fi]) * reference_normals[fi];  // d loss / d n
    const Vec3 d_raw = (u - n * dot(n, u)) / len;
    const Face& f = scene.faces[fi];
    const Vec3 e1 = scene.vertices[f[1]] - scene.vertices[f[0]];
    const Vec3 e2 = scene.vertices[f[2]] - scene.vertices[f[0]];
    const Vec3 de1 = cross(e2, d_raw);
    const Vec3 de2 = cross(d_raw, e1);
    grad[f[1]] += de1;
    grad[f[2]] += de2;
    grad[f[0]] -= de1 + de2;
  }
  return grad;
}

void knn_reference_normals(const TripletScene& scene, int k, std::vector<Vec3>& normals,
                           std::vector<double>& weights) {
  const int nf = scene.face_count();
  normals.assign(nf, Vec3{0, 0, 1});
  weights.assign(nf, 0.0);
  if (nf == 0) return;

  std::vector<Vec3> centroids(nf);
  std::vector<Vec3> raw_normals(nf);
  std::vector<double> areas(nf);
  double mean_area = 0.0;
  for (int fi = 0; fi < nf; ++fi) {
    const Face& f = scene.faces[fi];
    centroids[fi] =
        (scene.vertices[f[0]] + scene.vertices[f[1]] + scene.vertices[f[2]]) / 3.0;
    raw_normals[fi] = face_normal_raw(scene, fi);
    areas[fi] = 0.5 * norm(raw_normals[fi]);
    mean_area += areas[fi];
  }
  mean_area /= nf;

  std::vector<std::pair<double, int>> dist(nf);
  for (int fi = 0; fi < nf; ++fi) {
    for (int fj = 0; fj < nf; ++fj) dist[fj] = {norm2(centroids[fi] - centroids[fj]), fj};
    const int kk = std::min(k, nf);
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    Vec3 acc{};
    const Vec3 self = raw_normals[fi];
    for (int j = 0; j < kk; ++j) {
      Vec3 nj = raw_normals[dist[j].second];
      if (dot(nj, self) < 0.0) nj = -nj;  // orient the soup locally
      acc += nj;
    }
    const double len = norm(acc);
    normals[fi] = len > 1e-12 ? acc / len : Vec3{0, 0, 1};
    weights[fi] = mean_area > 0.0 ? areas[fi] / mean_area : 0.0;
  }
}

double graph_tv(const TripletScene& scene, const std::vector<double>& field, int dim,
                const std::map<Edge, double>* edge_weights) {
  if (field.size() != scene.vertices.size() * static_cast<size_t>(dim))
    throw InvalidInput("graph_tv: field size mismatch");
  double total = 0.0;
  for (const Edge& e : scene.edges) {
    const double w = edge_weights != nullptr && edge_weights->count(e) ? edge_weights->at(e) : 1.0;
    double l1 = 0.0;
    for (int d = 0; d < dim; ++d)
      l1 += std::abs(field[e.first * dim + d] - field[e.second * dim + d]);
    total += 2.0 * std::sqrt(w) * l1;  // the double sum visits each edge twice
  }
  return total;
}

std::vector<double> graph_tv_backward(const TripletScene& scene, const std::vector<double>& field,
                                      int dim, const std::map<Edge, double>* edge_weights) {
  std::vector<double> grad(field.size(), 0.0);
  for (const Edge& e : scene.edges) {
    const double w = edge_weights != nullptr && edge_weights->count(e) ? edge_weights->at(e) : 1.0;
    const double scale = 2.0 * std::sqrt(w);
    for (int d = 0; d < dim; ++d) {
      const double diff = field[e.first * dim + d] - field[e.second * dim + d];
      const double s = diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
      grad[e.first * dim + d] += s;
      grad[e.second * dim + d] -= s;
    }
  }
  return grad;
}

namespace {

struct InteriorEdge {
  int v0, v1, a, b;
};

std::vector<InteriorEdge> interior_edges(const TripletScene& scene) {
  // third vertex of the face traversing (u -> v), keyed by undirected edge
  std::map<Edge, std::array<int, 2>> sides;
  for (const Face& f : scene.faces) {
    for (int k = 0; k < 3; ++k) {
      const int u = f[k], v = f[(k + 1) % 3], w = f[(k + 2) % 3];
      const Edge e = make_edge(u, v);
      auto [it, inserted] = sides.emplace(e, std::array<int, 2>{-1, -1});
      const int slot = (u == e.first) ? 0 : 1;
      it->second[slot] = w;
    }
  }
  std::vector<InteriorEdge> out;
  for (const auto& [e, wings] : sides) {
    if (wings[0] < 0 || wings[1] < 0) continue;  // boundary or inconsistent winding
    out.push_back(InteriorEdge{e.first, e.second, wings[0], wings[1]});
  }
  return out;
}

}  // namespace

double normal_consistency_connected(const TripletScene& scene) {
  const std::vector<InteriorEdge> edges = interior_edges(scene);
  if (edges.empty()) return 0.0;
  double total = 0.0;
  for (const InteriorEdge& ie : edges) {
    const Vec3 v0 = scene.vertices[ie.v0], v1 = scene.vertices[ie.v1];
    const Vec3 n0 = cross(v1 - v0, scene.vertices[ie.a] - v0);
    const Vec3 n1 = cross(scene.vertices[ie.b] - v0, v1 - v0);
    const double l0 = norm(n0), l1 = norm(n1);
    if (l0 <= kDegenerateAreaEps || l1 <= kDegenerateAreaEps) continue;
    total += 1.0 - dot(n0, n1) / (l0 * l1);
  }
  return total / static_cast<double>(edges.size());
}

std::vector<Vec3> normal_consistency_connected_backward(const TripletScene& scene) {
  std::vector<Vec3> grad(scene.vertices.size(), Vec3{});
  const std::vector<InteriorEdge> edges = interior_edges(scene);
  if (edges.empty()) return grad;
  const double inv_m = 1.0 / static_cast<double>(edges.size());
  for (const InteriorEdge& ie : edges) {
    const Vec3 v0 = scene.vertices[ie.v0], v1 = scene.vertices[ie.v1];
    const Vec3 va = scene.vertices[ie.a], vb = scene.vertices[ie.b];
    const Vec3 e = v1 - v0;
    const Vec3 fa = va - v0;
    const Vec3 fb = vb - v0;
    const Vec3 n0 = cross(e, fa);
    const Vec3 n1 = cross(fb, e);
    const double l0 = norm(n0), l1 = norm(n1);
    if (l0 <= kDegenerateAreaEps || l1 <= kDegenerateAreaEps) continue;
    const double cosv = dot(n0, n1) / (l0 * l1);
    // d(1 - cos)/dn0 and /dn1, scaled by the mean
    const Vec3 u0 = (n0 * cosv / (l0 * l0) - n1 / (l0 * l1)) * inv_m;
    const Vec3 u1 = (n1 * cosv / (l1 * l1) - n0 / (l0 * l1)) * inv_m;
    // n0 = e x fa
    const Vec3 de_0 = cross(fa, u0);
    const Vec3 dfa = cross(u0, e);
    // n1 = fb x e
    const Vec3 dfb = cross(e, u1);
    const Vec3 de_1 = cross(u1, fb);
    grad[ie.v1] += de_0 + de_1;
    grad[ie.a] += dfa;
    grad[ie.b] += dfb;
    grad[ie.v0] -= de_0 + de_1 + dfa + dfb;
  }
  return grad;
}

double laplacian_loss(const TripletScene& scene) {
  const auto adj = adjacency(scene);
  double total = 0.0;
  int counted = 0;
  for (size_t i = 0; i < adj.size(); ++i) {
    if (adj[i].empty()) continue;
    Vec3 delta{};
    for (int j : adj[i]) delta += scene.vertices[j] - scene.vertices[i];
    delta = delta / static_cast<double>(adj[i].size());
    total += norm2(delta);
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

std::vector<Vec3> laplacian_backward(const TripletScene& scene) {
  const auto adj = adjacency(scene);
  std::vector<Vec3> grad(scene.vertices.size(), Vec3{});
  int counted = 0;
  for (const auto& ring : adj)
    if (!ring.empty()) ++counted;
  if (counted == 0) return grad;
  const double inv_m = 1.0 / counted;
  for (size_t i = 0; i < adj.size(); ++i) {
    if (adj[i].empty()) continue;
    Vec3 delta{};
    for (int j : adj[i]) delta += scene.vertices[j] - scene.vertices[i];
    const double inv_n = 1.0 / static_cast<double>(adj[i].size());
    delta = delta * inv_n;
    const Vec3 u = 2.0 * inv_m * delta;
    for (int j : adj[i]) grad[j] += u * inv_n;
    grad[i] -= u;
  }
  return grad;
}

double total_loss(const LossTerms& terms, const LossWeights& weights, ConnectivityMode phase) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) throw LossDiverged(std::string("non-finite loss term: ") + name);
    return v;
  };
  double total = weights.w_l1 * check(terms.l1, "l1") +
                 weights.w_ssim * check(terms.ssim, "ssim") +
                 weights.w_itv * check(terms.itv, "image_tv");
  if (phase == ConnectivityMode::Discrete) {
    total += weights.w_nc_discrete * check(terms.nc_discrete, "normal_consistency_discrete");
  } else {
    total += weights.w_gtv * check(terms.gtv, "graph_tv") +
             weights.w_nc_connected * check(terms.nc_connected, "normal_consistency_connected") +
             weights.w_laplacian * check(terms.laplacian, "laplacian");
  }
  return total;
}

}  // namespace triplet
