#pragma once

#include <string>
#include <vector>

#include "arnn/random.hpp"
#include "arnn/tensor.hpp"

namespace arnn {

struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

// Leaf tensor with requires_grad set, uniform in [-bound, bound].
Tensor make_parameter(Shape shape, Rng& rng, double bound);
// Leaf tensor with requires_grad set and a constant value.
Tensor make_parameter(Shape shape, double value);

// Base for anything that owns parameters. Tensors are shared handles, so the
// returned list aliases the module's storage.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_parameters(ParameterList& out, const std::string& prefix) const = 0;

  ParameterList parameters(const std::string& prefix = "") const;
  std::vector<Tensor> parameter_tensors() const;
  void zero_grad() const;
};

}  // namespace arnn
