#pragma once

// Reference computations used only by tests. Each is written directly from the
// defining formula, without sharing code paths with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "gatedbev/eval.hpp"
#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"
#include "gatedbev/tensor.hpp"

namespace oracle {

using gatedbev::Box3D;
using gatedbev::Tensor;

inline Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

// out[o,y,x] = b[o] + sum_c sum_{dy,dx} w[o,c,dy,dx] * in[c, y+dy-1, x+dx-1], zero outside.
inline Tensor conv3x3(const Tensor& in, const Tensor& w, const std::vector<double>& b) {
  const std::size_t cin = in.dim(0), h = in.dim(1), wd = in.dim(2), cout = w.dim(0);
  Tensor out({cout, h, wd});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wd; ++x) {
        double acc = b.empty() ? 0.0 : b[o];
        for (std::size_t c = 0; c < cin; ++c)
          for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx) {
              const long yy = static_cast<long>(y) + dy - 1, xx = static_cast<long>(x) + dx - 1;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
              acc += w.data[((o * cin + c) * 3 + static_cast<std::size_t>(dy)) * 3 + static_cast<std::size_t>(dx)] *
                     in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

// out_i = b_i + sum_j G1(j) w(i,j) * f1(j) + sum_k G2(k) w(i,C1+k) * f2(k), term by term.
inline Tensor gated_conv(const Tensor& f1, const Tensor& f2, const std::vector<double>& g1, const std::vector<double>& g2,
                         const Tensor& w, const std::vector<double>& b) {
  const std::size_t c1 = f1.dim(0), c2 = f2.dim(0), h = f1.dim(1), wd = f1.dim(2), cout = w.dim(0), cin = c1 + c2;
  Tensor out({cout, h, wd});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wd; ++x) out.at(o, y, x) = b[o];
  auto add_term = [&](const Tensor& f, std::size_t c_local, std::size_t c_global, double g) {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wd; ++x) {
          double acc = 0.0;
          for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx) {
              const long yy = static_cast<long>(y) + dy - 1, xx = static_cast<long>(x) + dx - 1;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
              acc += w.data[((o * cin + c_global) * 3 + static_cast<std::size_t>(dy)) * 3 + static_cast<std::size_t>(dx)] *
                     f.at(c_local, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
          out.at(o, y, x) += g * acc;
        }
  };
  for (std::size_t j = 0; j < c1; ++j) add_term(f1, j, j, g1[j]);
  for (std::size_t k = 0; k < c2; ++k) add_term(f2, k, c1 + k, g2[k]);
  return out;
}

// Point-in-rotated-rectangle by projecting onto the box axes.
inline bool inside_bev(const Box3D& b, double x, double y) {
  const double dx = x - b.center.x, dy = y - b.center.y;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.extent.x && std::abs(ly) <= 0.5 * b.extent.y;
}

// Monte-Carlo BEV IoU over the bounding square of both boxes.
inline double monte_carlo_iou(const Box3D& a, const Box3D& b, std::size_t n, std::uint64_t seed) {
  const double ra = 0.5 * std::hypot(a.extent.x, a.extent.y), rb = 0.5 * std::hypot(b.extent.x, b.extent.y);
  const double x0 = std::min(a.center.x - ra, b.center.x - rb), x1 = std::max(a.center.x + ra, b.center.x + rb);
  const double y0 = std::min(a.center.y - ra, b.center.y - rb), y1 = std::max(a.center.y + ra, b.center.y + rb);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  std::size_t both = 0, any = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool ia = inside_bev(a, x, y), ib = inside_bev(b, x, y);
    both += ia && ib;
    any += ia || ib;
  }
  return any == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(any);
}

inline bool inside_box3d(const Box3D& b, const gatedbev::Point& p) {
  return inside_bev(b, p.x, p.y) && std::abs(p.z - b.center.z) <= 0.5 * b.extent.z;
}

// Cell index by explicit comparison against every cell edge.
inline std::optional<int> cell_of(double v, double lo, double hi, int n) {
  if (v < lo || v > hi) return std::nullopt;
  const double step = (hi - lo) / n;
  for (int i = 0; i < n; ++i)
    if (v < lo + (i + 1) * step) return i;
  return n - 1;
}

// Distance along (origin + t dir) to a box, by intersecting the ray with each of the six face planes.
inline std::optional<double> ray_box_faces(const gatedbev::Vec3& o, const gatedbev::Vec3& d, const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double axes[3][3] = {{c, s, 0.0}, {-s, c, 0.0}, {0.0, 0.0, 1.0}};
  const double half[3] = {0.5 * b.extent.x, 0.5 * b.extent.y, 0.5 * b.extent.z};
  const double rel[3] = {o.x - b.center.x, o.y - b.center.y, o.z - b.center.z};
  std::optional<double> best;
  for (int a = 0; a < 3; ++a) {
    const double dn = d.x * axes[a][0] + d.y * axes[a][1] + d.z * axes[a][2];
    if (std::abs(dn) < 1e-15) continue;
    const double on = rel[0] * axes[a][0] + rel[1] * axes[a][1] + rel[2] * axes[a][2];
    for (double sign : {-1.0, 1.0}) {
      const double t = (sign * half[a] - on) / dn;
      if (t <= 0.0) continue;
      bool ok = true;
      for (int k = 0; k < 3 && ok; ++k) {
        if (k == a) continue;
        const double pk = (rel[0] + t * d.x) * axes[k][0] + (rel[1] + t * d.y) * axes[k][1] + (rel[2] + t * d.z) * axes[k][2];
        ok = std::abs(pk) <= half[k] + 1e-9;
      }
      if (ok && (!best || t < *best)) best = t;
    }
  }
  return best;
}

// Greedy matching by literal simulation: repeatedly take the highest-scoring
// unprocessed prediction (earliest on ties) and give it the nearest free GT in range.
inline std::vector<int> greedy_match(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double thr) {
  std::vector<int> assign(preds.size(), -1);
  std::vector<bool> done(preds.size(), false), used(gts.size(), false);
  for (std::size_t step = 0; step < preds.size(); ++step) {
    std::size_t pick = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (!done[i] && (pick == preds.size() || preds[i].score.value_or(0) > preds[pick].score.value_or(0))) pick = i;
    done[pick] = true;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double dd = std::hypot(preds[pick].center.x - gts[g].center.x, preds[pick].center.y - gts[g].center.y);
      if (dd <= thr && dd < best) {
        best = dd;
        assign[pick] = static_cast<int>(g);
      }
    }
    if (assign[pick] >= 0) used[static_cast<std::size_t>(assign[pick])] = true;
  }
  return assign;
}

// AP by exhaustive enumeration of score cutoffs: for every k, keep the top-k
// predictions (stable order), rematch from scratch, and record (recall, precision).
inline double exhaustive_ap(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double thr) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score.value_or(0) > preds[b].score.value_or(0); });
  std::vector<double> rec, prec;
  for (std::size_t k = 1; k <= preds.size(); ++k) {
    std::vector<Box3D> top;
    for (std::size_t i = 0; i < k; ++i) top.push_back(preds[order[i]]);
    const auto assign = greedy_match(top, gts, thr);
    const auto tp = static_cast<double>(std::count_if(assign.begin(), assign.end(), [](int a) { return a >= 0; }));
    rec.push_back(tp / static_cast<double>(gts.size()));
    prec.push_back(tp / static_cast<double>(k));
  }
  if (rec.empty()) return 0.0;
  // Envelope: best precision at any cutoff with recall at least this point's recall
  // and at or after it in rank order.
  double area = 0.0, pr = 0.0;
  double pp = *std::max_element(prec.begin(), prec.end());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double env = *std::max_element(prec.begin() + static_cast<long>(i), prec.end());
    area += (rec[i] - pr) * 0.5 * (env + pp);
    pr = rec[i];
    pp = env;
  }
  return area;
}

inline double exhaustive_ap_mean(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                                 const std::vector<double>& thresholds) {
  double s = 0.0;
  for (double t : thresholds) s += exhaustive_ap(preds, gts, t);
  return s / static_cast<double>(thresholds.size());
}

// Greedy center-distance NMS: repeatedly keep the best remaining box, drop everything within radius.
inline std::vector<Box3D> greedy_nms(std::vector<Box3D> boxes, double radius) {
  std::vector<Box3D> kept;
  while (!boxes.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < boxes.size(); ++i)
      if (*boxes[i].score > *boxes[best].score) best = i;
    const Box3D b = boxes[best];
    kept.push_back(b);
    std::vector<Box3D> rest;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (i != best && std::hypot(boxes[i].center.x - b.center.x, boxes[i].center.y - b.center.y) > radius)
        rest.push_back(boxes[i]);
    boxes = std::move(rest);
  }
  return kept;
}

// Two-sided 99% normal-approximation binomial interval for n trials at rate p.
inline std::pair<double, double> binomial_ci99(double p, double n) {
  const double half = 2.5758293035489 * std::sqrt(p * (1.0 - p) / n);
  return {p - half, p + half};
}

// Penalty-reduced focal loss in probability space, summed then divided by max(1, #positives).
inline double focal_loss(const Tensor& logits, const Tensor& target, double alpha, double beta) {
  double sum = 0.0;
  double npos = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.data[i]));
    const double y = target.data[i];
    if (y == 1.0) {
      sum += -std::pow(1.0 - p, alpha) * std::log(p);
      npos += 1.0;
    } else {
      sum += -std::pow(1.0 - y, beta) * std::pow(p, alpha) * std::log(1.0 - p);
    }
  }
  return sum / std::max(1.0, npos);
}

inline double masked_l1(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  const std::size_t ch = pred.dim(0), n = pred.dim(1) * pred.dim(2);
  double sum = 0.0, cells = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(mask.data[i] > 0.0)) continue;
    cells += 1.0;
    for (std::size_t c = 0; c < ch; ++c) sum += std::abs(pred.data[c * n + i] - target.data[c * n + i]);
  }
  return sum / std::max(1.0, cells);
}

}  // namespace oracle
