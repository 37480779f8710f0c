#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "gatedbev/errors.hpp"
#include "gatedbev/kernels.hpp"

namespace gatedbev::kernels {

namespace {

Isa detect_best() {
#if defined(GATEDBEV_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("GATEDBEV_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return detect_best();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

void check_sizes(const ConvShape& s, std::size_t in, std::size_t w, std::size_t out, const char* what) {
  if (in != s.in_size() || w != s.weight_size() || out != s.out_size()) {
    throw ShapeError(std::string(what) + ": buffer sizes (in " + std::to_string(in) + ", weight " +
                     std::to_string(w) + ", out " + std::to_string(out) + ") do not match shape " +
                     std::to_string(s.in_channels) + "->" + std::to_string(s.out_channels) + " @ " +
                     std::to_string(s.height) + "x" + std::to_string(s.width));
  }
}

// Per-thread scratch for padded buffers; grows monotonically.
std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> bufs[2];
  return bufs[slot];
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
  return detect_best() == Isa::avx2;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) throw ConfigError("kernel ISA '" + std::string(isa_name(isa)) + "' not supported here");
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
#if defined(GATEDBEV_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::avx2_table();
#endif
  (void)isa;
  return detail::scalar_table();
}

void pad_input(const ConvShape& s, std::span<const double> in, std::span<double> padded) {
  const std::size_t h = s.height, w = s.width, pw = w + 2;
  std::fill(padded.begin(), padded.end(), 0.0);
  for (std::size_t c = 0; c < s.in_channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(in.data() + (c * h + y) * w, w, padded.data() + (c * (h + 2) + y + 1) * pw + 1);
}

void conv3x3_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> bias, std::span<double> out, Isa isa) {
  check_sizes(s, in.size(), weight.size(), out.size(), "conv3x3_forward");
  if (!bias.empty() && bias.size() != s.out_channels) throw ShapeError("conv3x3_forward: bias size mismatch");
  auto& pad = scratch(0);
  pad.resize(s.padded_in_size());
  pad_input(s, in, pad);
  table(isa).forward_padded(s, pad.data(), weight.data(), bias.empty() ? nullptr : bias.data(), out.data());
}

void conv3x3_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                            std::span<double> grad_in, Isa isa) {
  check_sizes(s, grad_in.size(), weight.size(), grad_out.size(), "conv3x3_backward_input");
  // Transposed conv == forward conv over grad_out with kernel wt[c,o,2-ky,2-kx] = w[o,c,ky,kx].
  const ConvShape t{s.out_channels, s.in_channels, s.height, s.width};
  std::vector<double> wt(weight.size());
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t c = 0; c < s.in_channels; ++c)
      for (std::size_t k = 0; k < 9; ++k) wt[(c * s.out_channels + o) * 9 + (8 - k)] = weight[(o * s.in_channels + c) * 9 + k];
  auto& pad = scratch(0);
  pad.resize(t.padded_in_size());
  pad_input(t, grad_out, pad);
  auto& tmp = scratch(1);
  tmp.resize(t.out_size());
  table(isa).forward_padded(t, pad.data(), wt.data(), nullptr, tmp.data());
  for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] += tmp[i];
}

void conv3x3_backward_weight(const ConvShape& s, std::span<const double> grad_out, std::span<const double> in,
                             std::span<double> grad_weight, std::span<double> grad_bias, Isa isa) {
  check_sizes(s, in.size(), grad_weight.size(), grad_out.size(), "conv3x3_backward_weight");
  auto& pad = scratch(0);
  pad.resize(s.padded_in_size());
  pad_input(s, in, pad);
  table(isa).weight_grad_padded(s, grad_out.data(), pad.data(), grad_weight.data());
  if (!grad_bias.empty()) {
    const std::size_t n = s.height * s.width;
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += grad_out[o * n + i];
      grad_bias[o] += acc;
    }
  }
}

}  // namespace gatedbev::kernels
