#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace rediff {

inline constexpr int kMaxDim = 8;

/// Euclidean vector with runtime dimension (at most kMaxDim), held inline so
/// hot loops do not allocate.
struct Vec {
  std::array<double, kMaxDim> c{};
  int d = 0;

  Vec() = default;
  explicit Vec(int dim) : d(dim) { assert(dim >= 0 && dim <= kMaxDim); }
  Vec(std::initializer_list<double> xs) {
    assert(static_cast<int>(xs.size()) <= kMaxDim);
    for (double x : xs) c[d++] = x;
  }
  static Vec zero(int dim) { return Vec(dim); }
  static Vec basis(int dim, int axis) {
    Vec v(dim);
    v.c[axis] = 1.0;
    return v;
  }
  static Vec from(const std::vector<double>& xs) {
    Vec v(static_cast<int>(xs.size()));
    for (int i = 0; i < v.d; ++i) v.c[i] = xs[i];
    return v;
  }

  double& operator[](int i) { return c[i]; }
  double operator[](int i) const { return c[i]; }
  int dim() const { return d; }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < d; ++i) c[i] += o.c[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < d; ++i) c[i] -= o.c[i];
    return *this;
  }
  Vec& operator*=(double s) {
    for (int i = 0; i < d; ++i) c[i] *= s;
    return *this;
  }
  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(Vec a, double s) { return a *= s; }
  friend Vec operator*(double s, Vec a) { return a *= s; }
  friend bool operator==(const Vec& a, const Vec& b) {
    if (a.d != b.d) return false;
    for (int i = 0; i < a.d; ++i)
      if (a.c[i] != b.c[i]) return false;
    return true;
  }

  double dot(const Vec& o) const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += c[i] * o.c[i];
    return s;
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }

  std::vector<double> to_vector() const { return {c.begin(), c.begin() + d}; }
};

inline double distance(const Vec& a, const Vec& b) { return (a - b).norm(); }

/// w - (w.u)u for a unit vector u.
inline Vec project_orthogonal(const Vec& w, const Vec& u) {
  return w - w.dot(u) * u;
}

inline bool is_unit(const Vec& v, double tol = 1e-12) {
  return std::abs(v.norm() - 1.0) <= tol;
}

}  // namespace rediff
