#include "gatedbev/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gatedbev/errors.hpp"

namespace gatedbev {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(element_count(shape), fill) {}

std::span<double> Tensor::plane(std::size_t c) {
  const std::size_t n = shape[1] * shape[2];
  return {data.data() + c * n, n};
}

std::span<const double> Tensor::plane(std::size_t c) const {
  const std::size_t n = shape[1] * shape[2];
  return {data.data() + c * n, n};
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape[1] != b.shape[1] || a.shape[2] != b.shape[2]) {
    throw ShapeError("concat_channels: incompatible shapes " + a.shape_string() + " and " + b.shape_string());
  }
  Tensor out({a.shape[0] + b.shape[0], a.shape[1], a.shape[2]});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace gatedbev
