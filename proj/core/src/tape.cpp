#include "hilearn/tape.hpp"

#include <cmath>
#include <unordered_map>

namespace hilearn::ad {

ParamVector ParamVector::zeros(std::vector<std::pair<int, int>> shapes) {
  int total = 0;
  for (auto [r, c] : shapes) total += r * c;
  ParamVector p;
  p.values = VectorXd::Zero(total);
  p.shapes = std::move(shapes);
  return p;
}

int ParamVector::offset_of(int layer) const {
  int off = 0;
  for (int i = 0; i < layer; ++i) off += shapes[i].first * shapes[i].second;
  return off;
}

MatrixXd ParamVector::matrix(int layer) const {
  auto [r, c] = shapes[layer];
  MatrixXd m(r, c);
  const double* src = values.data() + offset_of(layer);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = src[i * c + j];
  return m;
}

void ParamVector::set_matrix(int layer, const MatrixXd& m) {
  auto [r, c] = shapes[layer];
  if (m.rows() != r || m.cols() != c)
    throw InputError("ParamVector::set_matrix: shape mismatch");
  double* dst = values.data() + offset_of(layer);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) dst[i * c + j] = m(i, j);
}

void ParamVector::validate() const {
  int total = 0;
  for (auto [r, c] : shapes) {
    if (r <= 0 || c <= 0) throw InputError("ParamVector: non-positive shape");
    total += r * c;
  }
  if (total != values.size())
    throw InputError("ParamVector: values length does not match shapes");
  if (!values.allFinite()) throw NumericError("ParamVector: non-finite entry");
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kRelu: return "relu";
    case Op::kReluGrad: return "relu_grad";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSumAll: return "sum_all";
    case Op::kSumCols: return "sum_cols";
    case Op::kSumRows: return "sum_rows";
    case Op::kTileCols: return "tile_cols";
    case Op::kTileRows: return "tile_rows";
    case Op::kFillScalar: return "fill_scalar";
    case Op::kGather: return "gather";
    case Op::kScatter: return "scatter";
    case Op::kPadZeroCol: return "pad_zero_col";
    case Op::kStripFirstCol: return "strip_first_col";
    case Op::kRowMaxDetached: return "row_max_detached";
  }
  return "?";
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

}  // namespace

NodeId Tape::push(Node n) {
  eval(n);
  if (!n.value.allFinite()) {
    throw NumericError(std::string("non-finite value in op ") + op_name(n.op) +
                       " at node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::eval(Node& n) const {
  switch (n.op) {
    case Op::kConstant:
    case Op::kLeaf:
      break;
    case Op::kAdd:
      n.value = nodes_[n.a].value + nodes_[n.b].value;
      break;
    case Op::kSub:
      n.value = nodes_[n.a].value - nodes_[n.b].value;
      break;
    case Op::kMul:
      n.value = nodes_[n.a].value.cwiseProduct(nodes_[n.b].value);
      break;
    case Op::kDiv:
      n.value = nodes_[n.a].value.cwiseQuotient(nodes_[n.b].value);
      break;
    case Op::kScale:
      n.value = n.c * nodes_[n.a].value;
      break;
    case Op::kMatMul:
      n.value.noalias() = nodes_[n.a].value * nodes_[n.b].value;
      break;
    case Op::kTranspose:
      n.value = nodes_[n.a].value.transpose();
      break;
    case Op::kRelu:
      n.value = nodes_[n.a].value.cwiseMax(0.0);
      break;
    case Op::kReluGrad: {
      const MatrixXd& g = nodes_[n.a].value;
      const MatrixXd& src = nodes_[n.b].value;
      n.value = (src.array() > 0.0).cast<double>() * g.array();
      break;
    }
    case Op::kExp:
      n.value = nodes_[n.a].value.array().exp();
      break;
    case Op::kLog:
      n.value = nodes_[n.a].value.array().log();
      break;
    case Op::kSumAll:
      n.value.resize(1, 1);
      n.value(0, 0) = nodes_[n.a].value.sum();
      break;
    case Op::kSumCols:
      n.value = nodes_[n.a].value.rowwise().sum();
      break;
    case Op::kSumRows:
      n.value = nodes_[n.a].value.colwise().sum();
      break;
    case Op::kTileCols:
      n.value = nodes_[n.a].value.replicate(1, n.cols);
      break;
    case Op::kTileRows:
      n.value = nodes_[n.a].value.replicate(n.rows, 1);
      break;
    case Op::kFillScalar:
      n.value = MatrixXd::Constant(n.rows, n.cols, nodes_[n.a].value(0, 0));
      break;
    case Op::kGather: {
      const MatrixXd& src = nodes_[n.a].value;
      n.value.resize(src.rows(), 1);
      for (int i = 0; i < src.rows(); ++i) n.value(i, 0) = src(i, n.labels[i]);
      break;
    }
    case Op::kScatter: {
      const MatrixXd& src = nodes_[n.a].value;
      n.value = MatrixXd::Zero(src.rows(), n.cols);
      for (int i = 0; i < src.rows(); ++i) n.value(i, n.labels[i]) = src(i, 0);
      break;
    }
    case Op::kPadZeroCol: {
      const MatrixXd& src = nodes_[n.a].value;
      n.value = MatrixXd::Zero(src.rows(), src.cols() + 1);
      n.value.rightCols(src.cols()) = src;
      break;
    }
    case Op::kStripFirstCol: {
      const MatrixXd& src = nodes_[n.a].value;
      n.value = src.rightCols(src.cols() - 1);
      break;
    }
    case Op::kRowMaxDetached:
      n.value = nodes_[n.a].value.rowwise().maxCoeff();
      break;
  }
}

NodeId Tape::constant(MatrixXd value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::scalar_constant(double value) {
  MatrixXd m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

NodeId Tape::leaf(MatrixXd value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.grad_like = true;
  return push(std::move(n));
}

#define HILEARN_BINOP(name, opcode)                                         \
  NodeId Tape::name(NodeId a, NodeId b) {                                   \
    require(nodes_[a].value.rows() == nodes_[b].value.rows() &&             \
                nodes_[a].value.cols() == nodes_[b].value.cols(),           \
            #name ": shape mismatch");                                      \
    Node n;                                                                 \
    n.op = opcode;                                                          \
    n.a = a;                                                                \
    n.b = b;                                                                \
    n.grad_like = nodes_[a].grad_like || nodes_[b].grad_like;               \
    return push(std::move(n));                                              \
  }

HILEARN_BINOP(add, Op::kAdd)
HILEARN_BINOP(sub, Op::kSub)
HILEARN_BINOP(mul, Op::kMul)
HILEARN_BINOP(div, Op::kDiv)
#undef HILEARN_BINOP

NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c = c;
  n.grad_like = nodes_[a].grad_like;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  require(nodes_[a].value.cols() == nodes_[b].value.rows(),
          "matmul: inner dimension mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.grad_like = nodes_[a].grad_like || nodes_[b].grad_like;
  return push(std::move(n));
}

#define HILEARN_UNOP(name, opcode)               \
  NodeId Tape::name(NodeId a) {                  \
    Node n;                                      \
    n.op = opcode;                               \
    n.a = a;                                     \
    n.grad_like = nodes_[a].grad_like;           \
    return push(std::move(n));                   \
  }

HILEARN_UNOP(transpose, Op::kTranspose)
HILEARN_UNOP(relu, Op::kRelu)
HILEARN_UNOP(exp, Op::kExp)
HILEARN_UNOP(log, Op::kLog)
HILEARN_UNOP(sum_all, Op::kSumAll)
HILEARN_UNOP(sum_cols, Op::kSumCols)
HILEARN_UNOP(sum_rows, Op::kSumRows)
HILEARN_UNOP(pad_zero_col, Op::kPadZeroCol)
HILEARN_UNOP(strip_first_col, Op::kStripFirstCol)
#undef HILEARN_UNOP

NodeId Tape::row_max_detached(NodeId a) {
  Node n;
  n.op = Op::kRowMaxDetached;
  n.a = a;
  n.grad_like = false;  // constant for differentiation
  return push(std::move(n));
}

NodeId Tape::tile_cols(NodeId a, int cols) {
  require(nodes_[a].value.cols() == 1, "tile_cols: expects a column vector");
  Node n;
  n.op = Op::kTileCols;
  n.a = a;
  n.cols = cols;
  n.grad_like = nodes_[a].grad_like;
  return push(std::move(n));
}

NodeId Tape::tile_rows(NodeId a, int rows) {
  require(nodes_[a].value.rows() == 1, "tile_rows: expects a row vector");
  Node n;
  n.op = Op::kTileRows;
  n.a = a;
  n.rows = rows;
  n.grad_like = nodes_[a].grad_like;
  return push(std::move(n));
}

NodeId Tape::fill_scalar(NodeId a, int rows, int cols) {
  require(nodes_[a].value.size() == 1, "fill_scalar: expects a scalar");
  Node n;
  n.op = Op::kFillScalar;
  n.a = a;
  n.rows = rows;
  n.cols = cols;
  n.grad_like = nodes_[a].grad_like;
  return push(std::move(n));
}

NodeId Tape::gather(NodeId a, std::vector<int> labels) {
  require(static_cast<int>(labels.size()) == nodes_[a].value.rows(),
          "gather: one label per row required");
  for (int y : labels)
    require(y >= 0 && y < nodes_[a].value.cols(), "gather: label out of range");
  Node n;
  n.op = Op::kGather;
  n.a = a;
  n.labels = std::move(labels);
  n.grad_like = nodes_[a].grad_like;
  return push(std::move(n));
}

NodeId Tape::scatter(NodeId a, std::vector<int> labels, int cols) {
  require(nodes_[a].value.cols() == 1, "scatter: expects a column vector");
  require(static_cast<int>(labels.size()) == nodes_[a].value.rows(),
          "scatter: one label per row required");
  for (int y : labels) require(y >= 0 && y < cols, "scatter: label out of range");
  Node n;
  n.op = Op::kScatter;
  n.a = a;
  n.cols = cols;
  n.labels = std::move(labels);
  n.grad_like = nodes_[a].grad_like;
  return push(std::move(n));
}

NodeId Tape::mean_all(NodeId a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(nodes_[a].value.size()));
}

NodeId Tape::log_softmax_rows(NodeId logits) {
  const int k = static_cast<int>(nodes_[logits].value.cols());
  NodeId m = row_max_detached(logits);
  NodeId shifted = sub(logits, tile_cols(m, k));
  NodeId lse = add(log(sum_cols(exp(shifted))), m);  // n x 1, exact for any m
  return sub(logits, tile_cols(lse, k));
}

NodeId Tape::nll_mean(NodeId logits, const std::vector<int>& labels) {
  const int k = static_cast<int>(nodes_[logits].value.cols());
  NodeId m = row_max_detached(logits);
  NodeId shifted = sub(logits, tile_cols(m, k));
  NodeId lse = add(log(sum_cols(exp(shifted))), m);  // n x 1
  NodeId picked = gather(logits, labels);            // n x 1
  return mean_all(sub(lse, picked));
}

NodeId Tape::sum_squares(NodeId a) { return sum_all(mul(a, a)); }

double Tape::scalar_value(NodeId id) const {
  require(nodes_[id].value.size() == 1, "scalar_value: node is not a scalar");
  return nodes_[id].value(0, 0);
}

std::vector<NodeId> Tape::gradient(NodeId root, const std::vector<NodeId>& wrt) {
  require(nodes_[root].value.size() == 1, "gradient: root must be a scalar");

  // Restrict the backward walk to ancestors of root that can reach a wrt leaf.
  std::vector<uint8_t> ancestor(nodes_.size(), 0);
  ancestor[root] = 1;
  for (NodeId i = root; i >= 0; --i) {
    if (!ancestor[i]) continue;
    const Node& n = nodes_[i];
    // RowMaxDetached blocks differentiation; ReluGrad only through its first arg.
    if (n.op == Op::kRowMaxDetached) continue;
    if (n.a >= 0) ancestor[n.a] = 1;
    if (n.b >= 0 && n.op != Op::kReluGrad) ancestor[n.b] = 1;
  }
  std::vector<uint8_t> needed(nodes_.size(), 0);
  for (NodeId w : wrt) {
    require(w >= 0 && w < static_cast<NodeId>(nodes_.size()), "gradient: bad wrt id");
    needed[w] = 1;
  }
  for (NodeId i = 0; i <= root; ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::kRowMaxDetached) continue;
    bool dep = (n.a >= 0 && needed[n.a]) ||
               (n.b >= 0 && n.op != Op::kReluGrad && needed[n.b]);
    if (dep) needed[i] = 1;
  }

  std::unordered_map<NodeId, NodeId> adj;
  auto accumulate = [&](NodeId target, NodeId contribution) {
    if (!ancestor[target] || !needed[target]) return;
    auto it = adj.find(target);
    if (it == adj.end()) {
      adj.emplace(target, contribution);
    } else {
      it->second = add(it->second, contribution);
    }
  };

  adj.emplace(root, scalar_constant(1.0));

  for (NodeId i = root; i >= 0; --i) {
    if (!ancestor[i] || !needed[i]) continue;
    auto it = adj.find(i);
    if (it == adj.end()) continue;
    NodeId g = it->second;
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::kConstant:
      case Op::kLeaf:
      case Op::kRowMaxDetached:
        break;
      case Op::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::kSub:
        accumulate(n.a, g);
        accumulate(n.b, scale(g, -1.0));
        break;
      case Op::kMul:
        accumulate(n.a, mul(g, n.b));
        accumulate(n.b, mul(g, n.a));
        break;
      case Op::kDiv:
        accumulate(n.a, div(g, n.b));
        accumulate(n.b, scale(mul(div(g, mul(n.b, n.b)), n.a), -1.0));
        break;
      case Op::kScale:
        accumulate(n.a, scale(g, n.c));
        break;
      case Op::kMatMul:
        accumulate(n.a, matmul(g, transpose(n.b)));
        accumulate(n.b, matmul(transpose(n.a), g));
        break;
      case Op::kTranspose:
        accumulate(n.a, transpose(g));
        break;
      case Op::kRelu: {
        Node rg;
        rg.op = Op::kReluGrad;
        rg.a = g;
        rg.b = n.a;
        rg.grad_like = nodes_[g].grad_like;
        accumulate(n.a, push(std::move(rg)));
        break;
      }
      case Op::kReluGrad: {
        Node rg;
        rg.op = Op::kReluGrad;
        rg.a = g;
        rg.b = n.b;
        rg.grad_like = nodes_[g].grad_like;
        accumulate(n.a, push(std::move(rg)));
        break;
      }
      case Op::kExp:
        accumulate(n.a, mul(g, i));
        break;
      case Op::kLog:
        accumulate(n.a, div(g, n.a));
        break;
      case Op::kSumAll:
        accumulate(n.a, fill_scalar(g, static_cast<int>(nodes_[n.a].value.rows()),
                                    static_cast<int>(nodes_[n.a].value.cols())));
        break;
      case Op::kSumCols:
        accumulate(n.a, tile_cols(g, static_cast<int>(nodes_[n.a].value.cols())));
        break;
      case Op::kSumRows:
        accumulate(n.a, tile_rows(g, static_cast<int>(nodes_[n.a].value.rows())));
        break;
      case Op::kTileCols:
        accumulate(n.a, sum_cols(g));
        break;
      case Op::kTileRows:
        accumulate(n.a, sum_rows(g));
        break;
      case Op::kFillScalar:
        accumulate(n.a, sum_all(g));
        break;
      case Op::kGather:
        accumulate(n.a, scatter(g, n.labels,
                                static_cast<int>(nodes_[n.a].value.cols())));
        break;
      case Op::kScatter:
        accumulate(n.a, gather(g, n.labels));
        break;
      case Op::kPadZeroCol:
        accumulate(n.a, strip_first_col(g));
        break;
      case Op::kStripFirstCol:
        accumulate(n.a, pad_zero_col(g));
        break;
    }
  }

  std::vector<NodeId> out;
  out.reserve(wrt.size());
  for (NodeId w : wrt) {
    auto it = adj.find(w);
    if (it != adj.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(constant(MatrixXd::Zero(nodes_[w].value.rows(),
                                            nodes_[w].value.cols())));
    }
  }
  return out;
}

void Tape::set_leaf(NodeId id, const MatrixXd& value) {
  Node& n = nodes_[id];
  require(n.op == Op::kLeaf || n.op == Op::kConstant,
          "set_leaf: node is not a leaf or constant");
  require(n.value.rows() == value.rows() && n.value.cols() == value.cols(),
          "set_leaf: shape mismatch");
  n.value = value;
}

void Tape::set_labels(NodeId id, const std::vector<int>& labels) {
  Node& n = nodes_[id];
  require(n.op == Op::kGather || n.op == Op::kScatter,
          "set_labels: node has no labels");
  require(labels.size() == n.labels.size(), "set_labels: size mismatch");
  n.labels = labels;
}

void Tape::recompute() {
  for (Node& n : nodes_) eval(n);
  check_finite_all();
}

void Tape::check_finite_all() const {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.allFinite()) {
      throw NumericError(std::string("non-finite value in op ") +
                         op_name(nodes_[i].op) + " at node " + std::to_string(i));
    }
  }
}

namespace {

std::vector<NodeId> bind_leaves(Tape& t, const ParamVector& p) {
  std::vector<NodeId> ids;
  ids.reserve(p.shapes.size());
  for (int i = 0; i < p.layer_count(); ++i) ids.push_back(t.leaf(p.matrix(i)));
  return ids;
}

ParamVector collect(const Tape& t, const std::vector<NodeId>& grads,
                    const ParamVector& like) {
  ParamVector out = ParamVector::zeros(like.shapes);
  for (int i = 0; i < like.layer_count(); ++i) out.set_matrix(i, t.value(grads[i]));
  return out;
}

}  // namespace

ParamVector grad(const LossGraphFn& loss, const ParamVector& at) {
  at.validate();
  Tape t;
  std::vector<NodeId> leaves = bind_leaves(t, at);
  NodeId root = loss(t, leaves);
  std::vector<NodeId> g = t.gradient(root, leaves);
  return collect(t, g, at);
}

double eval_loss(const LossGraphFn& loss, const ParamVector& at) {
  Tape t;
  std::vector<NodeId> leaves = bind_leaves(t, at);
  return t.scalar_value(loss(t, leaves));
}

ParamVector grad_norm_sq_grad(const InnerLossGraphFn& inner_loss,
                              const ParamVector& inner_at,
                              const ParamVector& outer_at) {
  inner_at.validate();
  outer_at.validate();
  Tape t;
  std::vector<NodeId> inner = bind_leaves(t, inner_at);
  std::vector<NodeId> outer = bind_leaves(t, outer_at);
  NodeId root = inner_loss(t, inner, outer);
  std::vector<NodeId> g = t.gradient(root, inner);
  NodeId norm_sq = t.sum_squares(g[0]);
  for (size_t i = 1; i < g.size(); ++i)
    norm_sq = t.add(norm_sq, t.sum_squares(g[i]));
  std::vector<NodeId> outer_grad = t.gradient(norm_sq, outer);
  return collect(t, outer_grad, outer_at);
}

double finite_diff_check(const LossGraphFn& loss, const ParamVector& params,
                         double step) {
  if (!(step > 0.0)) throw InputError("finite_diff_check: step must be positive");
  ParamVector analytic = grad(loss, params);
  ParamVector probe = params;
  double worst = 0.0;
  for (int i = 0; i < params.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double up = eval_loss(loss, probe);
    probe.values[i] = saved - step;
    const double down = eval_loss(loss, probe);
    probe.values[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double err =
        std::fabs(analytic.values[i] - fd) / (std::fabs(analytic.values[i]) + step);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hilearn::ad
