#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hilearn/common.hpp"

namespace hilearn::ad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using NodeId = int32_t;

// Flat parameter block plus per-layer shape metadata. Layers are stored
// row-major-contiguous in `values` in declaration order.
struct ParamVector {
  VectorXd values;
  std::vector<std::pair<int, int>> shapes;  // (rows, cols) per layer

  static ParamVector zeros(std::vector<std::pair<int, int>> shapes);

  int layer_count() const { return static_cast<int>(shapes.size()); }
  int size() const { return static_cast<int>(values.size()); }
  int offset_of(int layer) const;
  MatrixXd matrix(int layer) const;
  void set_matrix(int layer, const MatrixXd& m);
  void validate() const;  // total length and finiteness
};

enum class Op : uint8_t {
  kConstant,
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kMatMul,
  kTranspose,
  kRelu,
  kReluGrad,  // d relu: upstream grad masked by sign of the relu input
  kExp,
  kLog,
  kSumAll,
  kSumCols,      // n x k -> n x 1
  kSumRows,      // n x k -> 1 x k
  kTileCols,     // n x 1 -> n x k
  kTileRows,     // 1 x k -> n x k
  kFillScalar,   // 1 x 1 -> r x c
  kGather,       // pick a(i, label[i]) -> n x 1
  kScatter,      // place v(i) at (i, label[i]) in an n x k zero matrix
  kPadZeroCol,   // n x (k-1) -> n x k, zero reference column in front
  kStripFirstCol,
  kRowMaxDetached,  // rowwise max, treated as constant by gradients
};

const char* op_name(Op op);

// Reverse-mode tape over dense matrices. Nodes are evaluated eagerly when
// recorded; `gradient` appends adjoint nodes to the same tape, so gradients
// are themselves differentiable (this carries the second-order penalty path).
// A recorded tape can be replayed against fresh leaf values with `recompute`,
// which re-evaluates every node in recording order without reallocating.
class Tape {
 public:
  NodeId constant(MatrixXd value);
  NodeId scalar_constant(double value);
  NodeId leaf(MatrixXd value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sum_all(NodeId a);
  NodeId sum_cols(NodeId a);
  NodeId sum_rows(NodeId a);
  NodeId tile_cols(NodeId a, int cols);
  NodeId tile_rows(NodeId a, int rows);
  NodeId fill_scalar(NodeId a, int rows, int cols);
  NodeId gather(NodeId a, std::vector<int> labels);
  NodeId scatter(NodeId a, std::vector<int> labels, int cols);
  NodeId pad_zero_col(NodeId a);
  NodeId strip_first_col(NodeId a);
  NodeId row_max_detached(NodeId a);

  // Composite helpers.
  NodeId mean_all(NodeId a);
  // Rowwise log-softmax with max subtraction (max treated as constant).
  NodeId log_softmax_rows(NodeId logits);
  // Mean negative log-likelihood of the given per-row labels.
  NodeId nll_mean(NodeId logits, const std::vector<int>& labels);
  NodeId sum_squares(NodeId a);

  // Appends adjoint nodes of `root` (scalar) w.r.t. each node in `wrt`.
  // Leaves unreachable from root get explicit zero adjoints.
  std::vector<NodeId> gradient(NodeId root, const std::vector<NodeId>& wrt);

  const MatrixXd& value(NodeId id) const { return nodes_[id].value; }
  double scalar_value(NodeId id) const;

  // Replay support: overwrite a leaf (same shape) and re-evaluate the tape.
  void set_leaf(NodeId id, const MatrixXd& value);
  void set_labels(NodeId id, const std::vector<int>& labels);
  void recompute();

  size_t node_count() const { return nodes_.size(); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double c = 0.0;  // scale factor / fill dims via rows_/cols_
    int rows = 0;
    int cols = 0;
    std::vector<int> labels;
    MatrixXd value;
    bool grad_like = false;  // participates in differentiation
  };

  NodeId push(Node n);
  void eval(Node& n) const;
  void check_finite_all() const;

  std::vector<Node> nodes_;
};

// Builds a scalar loss node from parameter leaves bound on the given tape.
using LossGraphFn =
    std::function<NodeId(Tape&, const std::vector<NodeId>& params)>;
// Two-block variant: inner parameters first, outer parameters second.
using InnerLossGraphFn = std::function<NodeId(
    Tape&, const std::vector<NodeId>& inner, const std::vector<NodeId>& outer)>;

// dloss/dparams at `at`. Deterministic for fixed inputs.
ParamVector grad(const LossGraphFn& loss, const ParamVector& at);

// d/douter || dloss/dinner ||^2, both gradients evaluated at the given points.
ParamVector grad_norm_sq_grad(const InnerLossGraphFn& inner_loss,
                              const ParamVector& inner_at,
                              const ParamVector& outer_at);

double eval_loss(const LossGraphFn& loss, const ParamVector& at);

// Max over coordinates of |analytic - central difference| / (|analytic| + step).
double finite_diff_check(const LossGraphFn& loss, const ParamVector& params,
                         double step);

}  // namespace hilearn::ad
