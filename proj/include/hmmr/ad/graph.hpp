#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmmr/ad/parameters.hpp"
#include "hmmr/ad/tensor.hpp"

namespace hmmr::ad {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// What a backward rule sees: the gradient flowing into its output and one
// accumulation buffer per input (nullptr when that input needs no gradient).
struct BackwardArgs {
  std::span<const double> grad_out;
  std::span<double* const> grad_in;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

class Gradients {
 public:
  // Gradient of a parameter bound into the graph; zeros if it was unused.
  Tensor param(const ParameterSet& set, std::size_t index) const;
  std::vector<Tensor> for_set(const ParameterSet& set) const;
  // Gradient of a leaf created with Graph::leaf.
  Tensor wrt(Var leaf) const;

 private:
  friend class Graph;
  std::map<std::pair<const ParameterSet*, std::size_t>, Tensor> params_;
  std::map<std::uint32_t, Tensor> leaves_;
};

// Tape of operations in construction order (always a topological order).
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  Var leaf(Tensor t);
  // trainable=false binds the current value as a constant.
  Var parameter(const ParameterSet& set, std::size_t index, bool trainable = true);

  // Appends an op node. `op` must outlive the graph (string literal).
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

  Gradients backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var v) const { return nodes_.at(v.id()).op; }
  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

 private:
  enum class Kind : std::uint8_t { Constant, Leaf, Parameter, Op };
  struct Node {
    const char* op;
    Kind kind;
    bool requires_grad;
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    const ParameterSet* set = nullptr;
    std::size_t param_index = 0;
  };

  Var push(Node n);
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

// Test hook: scales the incoming gradient of every node whose op name matches,
// so a gradient check on that op must fail. Empty name disables it.
namespace fault {
void corrupt_backward(std::string op_name);
void clear();
const std::string& corrupted();
}  // namespace fault

}  // namespace hmmr::ad
