#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "arnn/tensor.hpp"

// Brute-force references used to certify the production paths. Nothing here
// calls into the convolution, skew or recurrent implementations.
namespace arnn::oracles {

// Which input cells each output cell responds to. Inputs are c x m x n maps;
// outputs are m' x n' or c' x m' x n' (spatial cells are the last two axes).
class DependencyMap {
 public:
  DependencyMap(std::size_t out_rows, std::size_t out_cols, std::size_t in_rows,
                std::size_t in_cols);

  bool depends(std::size_t oi, std::size_t oj, std::size_t ii, std::size_t ij) const;
  void set(std::size_t oi, std::size_t oj, std::size_t ii, std::size_t ij);

  std::size_t out_rows() const { return out_rows_; }
  std::size_t out_cols() const { return out_cols_; }
  std::size_t in_rows() const { return in_rows_; }
  std::size_t in_cols() const { return in_cols_; }

 private:
  std::size_t out_rows_, out_cols_, in_rows_, in_cols_;
  std::vector<bool> bits_;
};

using ForwardFn = std::function<Tensor(const Tensor&)>;

// Perturbs every input cell in turn (all channels) and records the output
// cells whose value moves by more than `threshold`.
DependencyMap dependency_set(const ForwardFn& forward, const Tensor& base_input,
                             double epsilon = 1e-3, double threshold = 1e-12);

// Direct quadruple-loop convolution with zero padding.
Tensor reference_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
                        std::size_t padding);

// Product of N(mu1, s1^2) and N(mu2, s2^2) renormalized: returns (mu, s).
std::pair<double, double> gaussian_product_reference(double mu1, double s1, double mu2,
                                                     double s2);

}  // namespace arnn::oracles
