#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// 3x3 cross-correlation kernels, stride 1, zero padding 1, float64.
//
// Every ISA variant implements the same two primitives over a zero-padded
// input (C x (H+2) x (W+2)); the dispatch layer builds the padded buffers and
// derives the input gradient as a forward pass with the transposed, flipped
// kernel. The scalar variant is the reference the others are tested against.

namespace gatedbev::kernels {

struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t in_size() const { return in_channels * height * width; }
  std::size_t out_size() const { return out_channels * height * width; }
  std::size_t weight_size() const { return out_channels * in_channels * 9; }
  std::size_t padded_in_size() const { return in_channels * (height + 2) * (width + 2); }
};

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  // out[o] = bias[o] + sum_c sum_k w[o,c,k] * padded_in[c, shifted by k]; bias may be null.
  void (*forward_padded)(const ConvShape& shape, const double* padded_in, const double* weight, const double* bias,
                         double* out);
  // grad_w[o,c,k] += sum_{y,x} grad_out[o,y,x] * padded_in[c,y+ky,x+kx].
  void (*weight_grad_padded)(const ConvShape& shape, const double* grad_out, const double* padded_in,
                             double* grad_weight);
};

bool isa_supported(Isa isa);

// Best supported ISA unless overridden by force_isa() or GATEDBEV_KERNELS=scalar|avx2.
Isa active_isa();

// Pins the dispatch target; throws ConfigError when the ISA is not supported here.
void force_isa(Isa isa);

const KernelTable& table(Isa isa);

namespace detail {
const KernelTable& scalar_table();
#if defined(GATEDBEV_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
}  // namespace detail

// Writes in (C x H x W) into padded (C x (H+2) x (W+2)) with a zero border.
void pad_input(const ConvShape& shape, std::span<const double> in, std::span<double> padded);

// out = conv(in, weight) + bias. bias may be empty.
void conv3x3_forward(const ConvShape& shape, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> bias, std::span<double> out, Isa isa = active_isa());

// grad_in += conv^T(grad_out, weight).
void conv3x3_backward_input(const ConvShape& shape, std::span<const double> grad_out,
                            std::span<const double> weight, std::span<double> grad_in, Isa isa = active_isa());

// grad_weight += dL/dW, grad_bias += dL/db (grad_bias may be empty).
void conv3x3_backward_weight(const ConvShape& shape, std::span<const double> grad_out, std::span<const double> in,
                             std::span<double> grad_weight, std::span<double> grad_bias, Isa isa = active_isa());

}  // namespace gatedbev::kernels
