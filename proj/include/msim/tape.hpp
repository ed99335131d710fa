#pragma once

#include <map>
#include <string>
#include <vector>

#include "msim/array.hpp"
#include "msim/params.hpp"

namespace msim {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kShift,
  kExp,
  kSqrt,
  kGelu,
  kElemMax,
  kMatmul,
  kTranspose,
  kSoftmaxAxis,
  kSumAll,
  kMeanAll,
  kSumAxis,
  kL2NormCols,
  kConcatRows,
  kConcatCols,
  kSliceRows,
  kSliceCols,
  kReshape,
  kRepeatRows,
  kBlockSumRows,
};

// Reverse-mode differentiation graph. Nodes are appended in evaluation
// order (inputs always precede outputs), values are stored at record time,
// and backward() walks the records exactly once in reverse. Gradient
// accumulation order is therefore fixed by construction order, which keeps
// repeated runs bit-identical.
class Tape {
 public:
  struct Node {
    OpKind op = OpKind::kLeaf;
    std::vector<int> in;
    std::vector<int> shape;
    std::vector<double> val;
    int i0 = 0, i1 = 0;  // op-specific ints (axis, slice bounds)
    double d0 = 0.0;     // op-specific scalar (scale factor, shift amount)
    std::string name;    // non-empty for named leaves only
    // True for leaves registered via leaf(); false for constants wrapped by
    // ensure_node(). backward() skips gradient work for subgraphs that no
    // registered leaf feeds into.
    bool wants_grad = false;
  };

  // Registers a value as a differentiable input. Named leaves appear in
  // named_grads(); parameters use their checkpoint name here.
  Array leaf(const Array& value, const std::string& name = "");

  // Computes gradients of a scalar loss w.r.t. every node on this tape.
  void backward(const Array& loss);

  // Gradient of the last backward() w.r.t. the given tracked array
  // (zeros if the array did not participate in the loss).
  Array grad(const Array& a) const;

  std::map<std::string, Array> named_grads() const;

  // Copies gradients of named leaves into an existing map, reusing its
  // storage. Creates entries on first use; afterwards the shapes must match.
  void named_grads_into(ParamMap& out) const;

  size_t node_count() const { return nodes_.size(); }
  void clear();

  // Used by the op implementations; returns the new node id.
  int record(Node n);
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  // Wraps an untracked operand as an anonymous constant leaf.
  int ensure_node(const Array& a);

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace msim
