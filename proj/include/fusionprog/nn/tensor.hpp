#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fusionprog/core/error.hpp"

namespace fusionprog::nn {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

// Storage aligned to Eigen's widest packet: vectorized kernels peel loops by
// address, so fixed alignment keeps results independent of heap placement.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense NCHW tensor. Feature matrices are {N, F, 1, 1}, whose storage is a
/// row-major N x F matrix.
template <class T>
struct Tensor {
  std::array<int, 4> shape{0, 0, 1, 1};
  Buffer<T> data;

  Tensor() = default;
  Tensor(int n, int c, int h = 1, int w = 1) : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, T(0)) {}

  static Tensor from_matrix(const MatR<T>& m) {
    Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    std::copy(m.data(), m.data() + m.size(), t.data.begin());
    return t;
  }

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  std::size_t per_item() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }
  T* item(int i) { return data.data() + i * per_item(); }
  const T* item(int i) const { return data.data() + i * per_item(); }

  /// Rows = batch items, cols = flattened features.
  MapR<T> matrix() { return MapR<T>(data.data(), shape[0], static_cast<Eigen::Index>(per_item())); }
  CMapR<T> matrix() const { return CMapR<T>(data.data(), shape[0], static_cast<Eigen::Index>(per_item())); }

  std::string shape_string() const {
    return "(" + std::to_string(shape[0]) + "," + std::to_string(shape[1]) + "," + std::to_string(shape[2]) + "," +
           std::to_string(shape[3]) + ")";
  }
};

/// Learnable tensor with its accumulated gradient.
template <class T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Buffer<T> value;
  Buffer<T> grad;
  int fan_in = 1;
  bool zero_init = false;  // bias, or a residual branch's last layer

  Param() = default;
  Param(std::string n, std::vector<int> s, int fan, bool zero = false) : name(std::move(n)), shape(std::move(s)), fan_in(fan), zero_init(zero) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T(0));
    grad.assign(count, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

}  // namespace fusionprog::nn
