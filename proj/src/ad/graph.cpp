#include "hmmr/ad/graph.hpp"

#include <atomic>
#include <mutex>

namespace hmmr::ad {

namespace fault {
namespace {
std::mutex& mu() {
  static std::mutex m;
  return m;
}
std::string& name() {
  static std::string n;
  return n;
}
std::atomic<bool> enabled{false};
}  // namespace

void corrupt_backward(std::string op_name) {
  std::lock_guard lock(mu());
  name() = std::move(op_name);
  enabled = !name().empty();
}

void clear() { corrupt_backward({}); }

const std::string& corrupted() { return name(); }
}  // namespace fault

const Tensor& Var::value() const { return graph_->value(*this); }
bool Var::requires_grad() const { return graph_->requires_grad(*this); }

Tensor Gradients::param(const ParameterSet& set, std::size_t index) const {
  auto it = params_.find({&set, index});
  if (it != params_.end()) return it->second;
  return Tensor::zeros(set.value(index).shape());
}

std::vector<Tensor> Gradients::for_set(const ParameterSet& set) const {
  std::vector<Tensor> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back(param(set, i));
  return out;
}

Tensor Gradients::wrt(Var leaf) const {
  auto it = leaves_.find(leaf.id());
  if (it != leaves_.end()) return it->second;
  return Tensor::zeros(leaf.shape());
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Graph::check_owned(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor t) {
  return push(Node{"constant", Kind::Constant, false, std::move(t), {}, {}});
}

Var Graph::leaf(Tensor t) { return push(Node{"leaf", Kind::Leaf, true, std::move(t), {}, {}}); }

Var Graph::parameter(const ParameterSet& set, std::size_t index, bool trainable) {
  if (!trainable) return constant(set.value(index));
  Node n{"parameter", Kind::Parameter, true, set.value(index), {}, {}};
  n.set = &set;
  n.param_index = index;
  return push(std::move(n));
}

Var Graph::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n{op, Kind::Op, false, std::move(value), {}, std::move(fn)};
  n.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    check_owned(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (!n.requires_grad) n.backward = nullptr;
  return push(std::move(n));
}

Gradients Graph::backward(Var loss) {
  check_owned(loss);
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.id()] = {1.0};

  const bool inject = fault::enabled.load();
  const std::string bad = inject ? fault::corrupted() : std::string{};

  std::vector<double*> in_ptrs;
  std::vector<double> corrupted_grad;
  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    Node& node = nodes_[idx];
    auto& g = grads[idx];
    if (g.empty() || node.kind != Kind::Op || !node.backward) continue;

    in_ptrs.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in].assign(nodes_[in].value.size(), 0.0);
      in_ptrs[k] = grads[in].data();
    }
    std::span<const double> gout = g;
    if (inject && bad == node.op) {
      corrupted_grad = g;
      for (auto& x : corrupted_grad) x *= 1.25;
      gout = corrupted_grad;
    }
    node.backward(BackwardArgs{gout, in_ptrs});
    g.clear();
    g.shrink_to_fit();
  }

  Gradients out;
  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    const Node& node = nodes_[idx];
    if (node.kind == Kind::Op || node.kind == Kind::Constant) continue;
    Tensor t = grads[idx].empty() ? Tensor::zeros(node.value.shape())
                                  : Tensor(node.value.shape(), std::move(grads[idx]));
    if (node.kind == Kind::Leaf) {
      out.leaves_.emplace(static_cast<std::uint32_t>(idx), std::move(t));
    } else {
      // Parameter bound more than once: gradients add.
      auto key = std::make_pair(node.set, node.param_index);
      auto it = out.params_.find(key);
      if (it == out.params_.end()) {
        out.params_.emplace(key, std::move(t));
      } else {
        std::vector<double> sum = it->second.to_vector();
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += t[i];
        it->second = Tensor(t.shape(), std::move(sum));
      }
    }
  }
  return out;
}

}  // namespace hmmr::ad
