// Compiled with -mavx2 -mfma; only reached when the CPU reports both.

#include <immintrin.h>

#include "gatedbev/kernels.hpp"

namespace gatedbev::kernels::detail {

namespace {

// NO output channels x NV 4-wide vectors starting at column x0 of row y.
template <int NO, int NV>
inline void forward_block(const ConvShape& s, const double* pin, const double* w, const double* bias, double* out,
                          std::size_t o0, std::size_t y, std::size_t x0) {
  const std::size_t h = s.height, wd = s.width, pw = wd + 2, pplane = (h + 2) * pw;
  __m256d acc[NO][NV];
  for (int a = 0; a < NO; ++a) {
    const __m256d b = _mm256_set1_pd(bias ? bias[o0 + a] : 0.0);
    for (int v = 0; v < NV; ++v) acc[a][v] = b;
  }
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const double* plane = pin + c * pplane + y * pw + x0;
    const double* k[NO];
    for (int a = 0; a < NO; ++a) k[a] = w + ((o0 + a) * s.in_channels + c) * 9;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      const double* irow = plane + ky * pw;
      for (std::size_t kx = 0; kx < 3; ++kx) {
        __m256d in[NV];
        for (int v = 0; v < NV; ++v) in[v] = _mm256_loadu_pd(irow + kx + 4 * v);
        for (int a = 0; a < NO; ++a) {
          const __m256d wv = _mm256_broadcast_sd(k[a] + ky * 3 + kx);
          for (int v = 0; v < NV; ++v) acc[a][v] = _mm256_fmadd_pd(wv, in[v], acc[a][v]);
        }
      }
    }
  }
  for (int a = 0; a < NO; ++a)
    for (int v = 0; v < NV; ++v) _mm256_storeu_pd(out + (o0 + a) * h * wd + y * wd + x0 + 4 * v, acc[a][v]);
}

inline void forward_scalar_cell(const ConvShape& s, const double* pin, const double* w, const double* bias,
                                double* out, std::size_t o, std::size_t y, std::size_t x) {
  const std::size_t h = s.height, wd = s.width, pw = wd + 2, pplane = (h + 2) * pw;
  double acc = bias ? bias[o] : 0.0;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const double* k = w + (o * s.in_channels + c) * 9;
    const double* plane = pin + c * pplane;
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) acc += k[ky * 3 + kx] * plane[(y + ky) * pw + x + kx];
  }
  out[o * h * wd + y * wd + x] = acc;
}

template <int NO>
void forward_rows(const ConvShape& s, const double* pin, const double* w, const double* bias, double* out,
                  std::size_t o0) {
  const std::size_t wd = s.width;
  for (std::size_t y = 0; y < s.height; ++y) {
    std::size_t x = 0;
    for (; x + 16 <= wd; x += 16) forward_block<NO, 4>(s, pin, w, bias, out, o0, y, x);
    for (; x + 4 <= wd; x += 4) forward_block<NO, 1>(s, pin, w, bias, out, o0, y, x);
    for (; x < wd; ++x)
      for (int a = 0; a < NO; ++a) forward_scalar_cell(s, pin, w, bias, out, o0 + a, y, x);
  }
}

void forward_padded(const ConvShape& s, const double* pin, const double* w, const double* bias, double* out) {
  std::size_t o = 0;
  for (; o + 2 <= s.out_channels; o += 2) forward_rows<2>(s, pin, w, bias, out, o);
  for (; o < s.out_channels; ++o) forward_rows<1>(s, pin, w, bias, out, o);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void weight_grad_padded(const ConvShape& s, const double* gout, const double* pin, double* gw) {
  const std::size_t h = s.height, wd = s.width, pw = wd + 2, pplane = (h + 2) * pw;
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    const double* g = gout + o * h * wd;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* plane = pin + c * pplane;
      __m256d acc[9];
      for (auto& a : acc) a = _mm256_setzero_pd();
      double tail[9] = {};
      for (std::size_t y = 0; y < h; ++y) {
        const double* grow = g + y * wd;
        const double* r0 = plane + y * pw;
        std::size_t x = 0;
        for (; x + 4 <= wd; x += 4) {
          const __m256d gv = _mm256_loadu_pd(grow + x);
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const double* irow = r0 + ky * pw + x;
            acc[ky * 3 + 0] = _mm256_fmadd_pd(gv, _mm256_loadu_pd(irow + 0), acc[ky * 3 + 0]);
            acc[ky * 3 + 1] = _mm256_fmadd_pd(gv, _mm256_loadu_pd(irow + 1), acc[ky * 3 + 1]);
            acc[ky * 3 + 2] = _mm256_fmadd_pd(gv, _mm256_loadu_pd(irow + 2), acc[ky * 3 + 2]);
          }
        }
        for (; x < wd; ++x)
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) tail[ky * 3 + kx] += grow[x] * r0[ky * pw + x + kx];
      }
      double* k = gw + (o * s.in_channels + c) * 9;
      for (int i = 0; i < 9; ++i) k[i] += hsum(acc[i]) + tail[i];
    }
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{&forward_padded, &weight_grad_padded};
  return t;
}

}  // namespace gatedbev::kernels::detail
