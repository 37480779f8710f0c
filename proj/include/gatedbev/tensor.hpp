#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gatedbev {

// Dense row-major float64 tensor. Feature maps are laid out C x H x W.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  static Tensor zeros(std::initializer_list<std::size_t> s) { return Tensor(std::vector<std::size_t>(s)); }

  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t size() const noexcept { return data.size(); }

  // 3-D accessors (C, H, W).
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape[1] + y) * shape[2] + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * shape[1] + y) * shape[2] + x]; }

  std::span<double> plane(std::size_t c);
  std::span<const double> plane(std::size_t c) const;

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(const std::vector<std::size_t>& shape);

// Concatenate two C x H x W tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace gatedbev
