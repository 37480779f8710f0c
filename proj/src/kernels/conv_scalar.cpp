#include "gatedbev/kernels.hpp"

namespace gatedbev::kernels::detail {

namespace {

void forward_padded(const ConvShape& s, const double* pin, const double* w, const double* bias, double* out) {
  const std::size_t h = s.height, wd = s.width, pw = wd + 2, pplane = (h + 2) * pw;
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    double* orow0 = out + o * h * wd;
    const double b = bias ? bias[o] : 0.0;
    for (std::size_t i = 0; i < h * wd; ++i) orow0[i] = b;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* k = w + (o * s.in_channels + c) * 9;
      const double* plane = pin + c * pplane;
      for (std::size_t y = 0; y < h; ++y) {
        double* orow = orow0 + y * wd;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const double* irow = plane + (y + ky) * pw;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double wv = k[ky * 3 + kx];
            const double* src = irow + kx;
            for (std::size_t x = 0; x < wd; ++x) orow[x] += wv * src[x];
          }
        }
      }
    }
  }
}

void weight_grad_padded(const ConvShape& s, const double* gout, const double* pin, double* gw) {
  const std::size_t h = s.height, wd = s.width, pw = wd + 2, pplane = (h + 2) * pw;
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    const double* g = gout + o * h * wd;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* plane = pin + c * pplane;
      double* k = gw + (o * s.in_channels + c) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) {
          double acc = 0.0;
          for (std::size_t y = 0; y < h; ++y) {
            const double* grow = g + y * wd;
            const double* irow = plane + (y + ky) * pw + kx;
            for (std::size_t x = 0; x < wd; ++x) acc += grow[x] * irow[x];
          }
          k[ky * 3 + kx] += acc;
        }
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{&forward_padded, &weight_grad_padded};
  return t;
}

}  // namespace gatedbev::kernels::detail
