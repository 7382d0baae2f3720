#include "arnn/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace arnn::oracles {

DependencyMap::DependencyMap(std::size_t out_rows, std::size_t out_cols, std::size_t in_rows,
                             std::size_t in_cols)
    : out_rows_(out_rows),
      out_cols_(out_cols),
      in_rows_(in_rows),
      in_cols_(in_cols),
      bits_(out_rows * out_cols * in_rows * in_cols, false) {}

bool DependencyMap::depends(std::size_t oi, std::size_t oj, std::size_t ii, std::size_t ij) const {
  return bits_[((oi * out_cols_ + oj) * in_rows_ + ii) * in_cols_ + ij];
}

void DependencyMap::set(std::size_t oi, std::size_t oj, std::size_t ii, std::size_t ij) {
  bits_[((oi * out_cols_ + oj) * in_rows_ + ii) * in_cols_ + ij] = true;
}

DependencyMap dependency_set(const ForwardFn& forward, const Tensor& base_input, double epsilon,
                             double threshold) {
  if (base_input.rank() != 3) throw ShapeError("dependency_set: input must be c x m x n");
  const std::size_t c = base_input.dim(0), m = base_input.dim(1), n = base_input.dim(2);
  const Tensor base_out = forward(base_input);
  const auto& os = base_out.shape();
  if (os.size() < 2) throw ShapeError("dependency_set: output must have spatial axes");
  const std::size_t om = os[os.size() - 2], on = os[os.size() - 1];
  const std::size_t planes = base_out.numel() / (om * on);
  const auto ref = base_out.values();

  DependencyMap deps(om, on, m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Tensor probe = base_input.clone();
      auto v = probe.mutable_values();
      // Distinct per-channel steps so channel contributions cannot cancel.
      for (std::size_t ch = 0; ch < c; ++ch) {
        v[(ch * m + i) * n + j] += epsilon * (1.0 + 0.37 * static_cast<double>(ch));
      }
      const Tensor out = forward(probe);
      const auto got = out.values();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oi = 0; oi < om; ++oi) {
          for (std::size_t oj = 0; oj < on; ++oj) {
            const std::size_t k = (p * om + oi) * on + oj;
            if (std::abs(got[k] - ref[k]) > threshold) deps.set(oi, oj, i, j);
          }
        }
      }
    }
  }
  return deps;
}

Tensor reference_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
                        std::size_t padding) {
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  if (is.size() != 3 || ks.size() != 4 || ks[1] != is[0]) {
    throw ShapeError("reference_conv2d: incompatible shapes");
  }
  const long cin = static_cast<long>(is[0]), h = static_cast<long>(is[1]),
             w = static_cast<long>(is[2]);
  const long cout = static_cast<long>(ks[0]), kh = static_cast<long>(ks[2]),
             kw = static_cast<long>(ks[3]);
  const long s = static_cast<long>(stride), p = static_cast<long>(padding);
  const long oh = (h + 2 * p - kh) / s + 1;
  const long ow = (w + 2 * p - kw) / s + 1;
  const auto x = input.values();
  const auto k = kernel.values();
  std::vector<double> out(static_cast<std::size_t>(cout * oh * ow), 0.0);
  for (long co = 0; co < cout; ++co) {
    for (long y = 0; y < oh; ++y) {
      for (long xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (long ci = 0; ci < cin; ++ci) {
          for (long dy = 0; dy < kh; ++dy) {
            for (long dx = 0; dx < kw; ++dx) {
              const long iy = y * s + dy - p;
              const long ix = xo * s + dx - p;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x[static_cast<std::size_t>((ci * h + iy) * w + ix)] *
                     k[static_cast<std::size_t>(((co * cin + ci) * kh + dy) * kw + dx)];
            }
          }
        }
        out[static_cast<std::size_t>((co * oh + y) * ow + xo)] = acc;
      }
    }
  }
  return Tensor(Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(oh),
                      static_cast<std::size_t>(ow)},
                std::move(out));
}

std::pair<double, double> gaussian_product_reference(double mu1, double s1, double mu2,
                                                     double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw std::invalid_argument("standard deviations must be > 0");
  const double v1 = s1 * s1, v2 = s2 * s2;
  const double var = v1 * v2 / (v1 + v2);
  const double mu = (mu1 * v2 + mu2 * v1) / (v1 + v2);
  return {mu, std::sqrt(var)};
}

}  // namespace arnn::oracles
