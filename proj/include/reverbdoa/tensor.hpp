#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "reverbdoa/errors.hpp"

namespace reverbdoa {

// Dense row-major tensor of doubles. Rank is dynamic (vectors, matrices and
// conv activations all share this type); gradient tracking lives in the tape,
// the flag here only marks leaves that should receive gradients.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  bool requires_grad = false;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    values.assign(checked_numel(shape), 0.0);
  }

  Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    values.assign(checked_numel(shape), fill);
  }

  Tensor(std::vector<int> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (static_cast<std::size_t>(checked_numel(shape)) != values.size()) {
      throw dimension_error("tensor value count " +
                            std::to_string(values.size()) +
                            " does not match shape " + shape_string(shape));
    }
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    return Tensor(std::move(s), v);
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int numel() const { return static_cast<int>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& operator[](int i) { return values[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }

  double& at(int i, int j) { return values[flat(i, j)]; }
  double at(int i, int j) const { return values[flat(i, j)]; }
  double& at(int i, int j, int k) { return values[flat(i, j, k)]; }
  double at(int i, int j, int k) const { return values[flat(i, j, k)]; }
  double& at(int i, int j, int k, int l) { return values[flat(i, j, k, l)]; }
  double at(int i, int j, int k, int l) const {
    return values[flat(i, j, k, l)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { values.assign(values.size(), v); }

  std::string shape_str() const { return shape_string(shape); }

  static int checked_numel(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d <= 0) {
        throw dimension_error("non-positive dimension in shape " +
                              shape_string(s));
      }
      n *= d;
      if (n > (1LL << 31)) {
        throw dimension_error("tensor too large: shape " + shape_string(s));
      }
    }
    return static_cast<int>(n);
  }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << 'x';
      os << s[i];
    }
    os << ']';
    return os.str();
  }

 private:
  std::size_t flat(int i, int j) const {
    return static_cast<std::size_t>(i) * shape[1] + j;
  }
  std::size_t flat(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k;
  }
  std::size_t flat(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) *
               shape[3] +
           l;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* where) {
  if (!a.same_shape(b)) {
    throw dimension_error(std::string(where) + ": shape mismatch " +
                          a.shape_str() + " vs " + b.shape_str());
  }
}

inline void require_rank(const Tensor& t, int rank, const char* where) {
  if (t.rank() != rank) {
    throw dimension_error(std::string(where) + ": expected rank " +
                          std::to_string(rank) + ", got shape " +
                          t.shape_str());
  }
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void require_finite(const Tensor& t, const char* where) {
  if (!all_finite(t)) {
    throw numeric_error(std::string(where) + ": non-finite value in tensor " +
                        t.shape_str());
  }
}

}  // namespace reverbdoa
