#include "arnn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace arnn {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::uint64_t next_seq() { return g_next_seq.fetch_add(1, std::memory_order_relaxed); }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(arnn::numel(shape), fill);
  impl->shape = std::move(shape);
  impl->seq = next_seq();
  impl_ = std::move(impl);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (arnn::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + arnn::to_string(shape) + " holds " +
                     std::to_string(arnn::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->seq = next_seq();
  impl_ = std::move(impl);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("tensor: use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     arnn::to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const double> Tensor::values() const { return impl().data; }

std::span<double> Tensor::mutable_values() {
  auto& im = impl();
  if (!im.is_leaf()) throw ContractError("tensor: cannot mutate an operation result");
  return im.data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on " + arnn::to_string(shape()));
  return impl().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("tensor: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ShapeError("tensor: index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl().data[flat];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  auto& im = impl();
  if (!im.is_leaf()) throw ContractError("tensor: requires_grad is set on leaves only");
  im.requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad() const { return impl().grad; }

void Tensor::zero_grad() {
  auto& im = impl();
  if (!im.grad.empty()) std::fill(im.grad.begin(), im.grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  const auto& im = impl();
  return Tensor(im.shape, im.data);
}

const char* Tensor::op_name() const { return impl().op; }

Tensor Tensor::from_op(Shape shape, std::vector<double> values, const char* op,
                       std::vector<Tensor> parents,
                       std::function<void(detail::TensorImpl&)> backward_fn) {
  Tensor out(std::move(shape), std::move(values));
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (!needs) return out;
  auto& im = *out.impl_;
  im.op = op;
  im.requires_grad = true;
  im.parents.reserve(parents.size());
  for (auto& p : parents) im.parents.push_back(p.impl_);
  im.backward_fn = std::move(backward_fn);
  return out;
}

void Tensor::backward() const {
  auto& root = impl();
  if (root.data.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + arnn::to_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Collect every reachable node that takes part in differentiation.
  std::vector<detail::TensorImpl*> nodes;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<detail::TensorImpl*> stack{&root};
  seen.insert(&root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto* a, const auto* b) { return a->seq > b->seq; });

  for (auto* n : nodes) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  root.ensure_grad()[0] += 1.0;
  for (auto* n : nodes) {
    if (!n->is_leaf()) n->backward_fn(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

}  // namespace arnn
