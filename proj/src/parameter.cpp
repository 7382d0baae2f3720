#include "arnn/parameter.hpp"

#include <set>

namespace arnn {

Tensor make_parameter(Shape shape, Rng& rng, double bound) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_values()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor make_parameter(Shape shape, double value) {
  Tensor t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

ParameterList Module::parameters(const std::string& prefix) const {
  ParameterList out;
  collect_parameters(out, prefix);
  std::set<std::string> names;
  for (const auto& p : out) {
    if (!names.insert(p.name).second) throw ContractError("duplicate parameter name " + p.name);
  }
  return out;
}

std::vector<Tensor> Module::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

void Module::zero_grad() const {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

}  // namespace arnn
