#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace triplet {

struct Vec2 {
  double x = 0, y = 0;
  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm2(const Vec3& v) { return dot(v, v); }
inline double norm(const Vec3& v) { return std::sqrt(norm2(v)); }

inline Vec3 normalize(const Vec3& v) {
  const double n = norm(v);
  if (n == 0.0) return v;
  return v / n;
}

struct Rgb {
  double r = 0, g = 0, b = 0;
  Rgb() = default;
  Rgb(double r_, double g_, double b_) : r(r_), g(g_), b(b_) {}
  explicit Rgb(double v) : r(v), g(v), b(v) {}
  Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
  Rgb operator-(const Rgb& o) const { return {r - o.r, g - o.g, b - o.b}; }
  Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
  Rgb operator*(const Rgb& o) const { return {r * o.r, g * o.g, b * o.b}; }
  Rgb& operator+=(const Rgb& o) {
    r += o.r;
    g += o.g;
    b += o.b;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
  double& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }
  double sum() const { return r + g + b; }
  double max_component() const { return std::max(r, std::max(g, b)); }
};

inline Rgb operator*(double s, const Rgb& c) { return c * s; }

// Column-major-free 3x3; row-vector entries m[r][c].
struct Mat3 {
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

  static Mat3 identity() {
    Mat3 I;
    I.m[0][0] = I.m[1][1] = I.m[2][2] = 1;
    return I;
  }
  Vec3 row(int i) const { return {m[i][0], m[i][1], m[i][2]}; }
  Vec3 col(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
  Vec3 operator*(const Vec3& v) const {
    return {dot(row(0), v), dot(row(1), v), dot(row(2), v)};
  }
  Mat3 transposed() const {
    Mat3 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t.m[i][j] = m[j][i];
    return t;
  }
};

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a.m[i][k] * b.m[k][j];
      c.m[i][j] = s;
    }
  return c;
}

// Solves A x = b for symmetric-or-not 3x3 by cofactor inversion. Returns false when |det| < tol.
inline bool solve3x3(const Mat3& a, const Vec3& b, Vec3& x, double tol = 1e-12) {
  const double* const* A = nullptr;
  (void)A;
  const double a00 = a.m[0][0], a01 = a.m[0][1], a02 = a.m[0][2];
  const double a10 = a.m[1][0], a11 = a.m[1][1], a12 = a.m[1][2];
  const double a20 = a.m[2][0], a21 = a.m[2][1], a22 = a.m[2][2];
  const double c00 = a11 * a22 - a12 * a21;
  const double c01 = -(a10 * a22 - a12 * a20);
  const double c02 = a10 * a21 - a11 * a20;
  const double det = a00 * c00 + a01 * c01 + a02 * c02;
  if (std::abs(det) < tol) return false;
  const double c10 = -(a01 * a22 - a02 * a21);
  const double c11 = a00 * a22 - a02 * a20;
  const double c12 = -(a00 * a21 - a01 * a20);
  const double c20 = a01 * a12 - a02 * a11;
  const double c21 = -(a00 * a12 - a02 * a10);
  const double c22 = a00 * a11 - a01 * a10;
  const double inv = 1.0 / det;
  x.x = (c00 * b.x + c10 * b.y + c20 * b.z) * inv;
  x.y = (c01 * b.x + c11 * b.y + c21 * b.z) * inv;
  x.z = (c02 * b.x + c12 * b.y + c22 * b.z) * inv;
  return true;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Deterministic uniform RNG built on mt19937_64 raw draws. std distributions are
// implementation-defined, so doubles are derived from the bits directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ull + 1) {}

  std::uint64_t next_u64() {
    // xorshift* keeps the sequence platform-stable without std::mt19937_64 overhead.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  Vec3 unit_vector() {
    const double z = 1.0 - 2.0 * uniform();
    const double phi = 2.0 * M_PI * uniform();
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
  }

 private:
  std::uint64_t state_;
};

}  // namespace triplet
