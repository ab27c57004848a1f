#pragma once

#include <string>
#include <vector>

#include "lexinmt/matrix.hpp"
#include "lexinmt/nnet.hpp"

namespace lexinmt::nnet {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a fixed op set. Nodes are created in topological
// order; backward() walks them in reverse. One tape per forward pass.
class Tape {
 public:
  Var leaf(Matrix value);              // constant, no gradient
  Var input(Matrix value);             // differentiable non-parameter leaf
  Var param(ParamStore& store, const std::string& name);  // one node per name

  Var matmul(Var a, Var b);            // a @ b
  Var matmul_nt(Var a, Var b);         // a @ b^T
  Var add(Var a, Var b);               // same shape
  Var add_scaled(Var a, Var b, double alpha);  // a + alpha * b
  Var add_row(Var a, Var b);           // b is 1 x n, broadcast over rows
  Var scale(Var a, double alpha);
  Var add_scalar(Var a, double alpha); // elementwise a + alpha
  Var mul(Var a, Var b);               // Hadamard, same shape
  Var tanh(Var a);
  Var relu(Var a);
  Var log(Var a);                      // elementwise
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias);  // gain/bias are 1 x d
  Var gather_rows(Var table, std::vector<int> ids);
  Var pick_entries(Var a, std::vector<int> col_ids);  // out[i,0] = a[i, ids[i]]
  Var slice_rows(Var a, int first, int count);
  Var slice_cols(Var a, int first, int count);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  // Row-wise cosine similarity; either side may have a single row, which is
  // broadcast. Zero-norm rows are an error (cosine undefined).
  Var cosine_rows(Var a, Var b);
  Var sum(Var a);                      // all entries -> 1x1
  Var logsumexp(Var a);                // all entries -> 1x1, stable
  Var sigmoid(Var a);                  // composed from tanh

  const Matrix& val(Var v) const;
  double scalar(Var v) const;

  // Seeds d(loss)=1, sweeps in reverse, and returns gradients for every
  // parameter the loss actually reaches. Throws on non-finite loss before
  // any gradient is produced.
  GradMap backward(Var loss);
  // Gradient of a differentiable leaf after backward().
  const Matrix& grad(Var v) const;

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kLeaf, kInput, kParam, kMatMul, kMatMulNT, kAddScaled, kAddRow,
    kScale, kAddScalar, kMul, kTanh, kRelu, kLog, kSoftmaxRows,
    kLogSoftmaxRows, kLayerNorm, kGatherRows, kPickEntries, kSliceRows,
    kSliceCols, kConcatRows, kConcatCols, kCosineRows, kSum, kLogSumExp,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> many;      // concat parents
    Matrix val;
    Matrix grad;
    bool needs_grad = false;
    std::vector<int> ids;       // gather / pick indices
    double alpha = 0.0;
    int i0 = 0, n0 = 0;         // slice window
    Matrix aux;                 // layer norm: normalized rows
    std::vector<double> auxv;   // layer norm: 1/sigma per row
    std::string pname;
  };

  int push(Node n);
  Node& node(Var v);
  const Node& node(Var v) const;
  bool needs(int id) const { return id >= 0 && nodes_[id].needs_grad; }
  void ensure_grad(int id);
  void accum(int id, const Matrix& g);
  void backward_node(int i);

  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  bool swept_ = false;
};

}  // namespace lexinmt::nnet
