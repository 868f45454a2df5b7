#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hilearn/tape.hpp"

namespace hilearn {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Feature map Phi (ReLU MLP) plus two linear heads: a |Y|-class softmax
// target head and a coarse head in reference-class logit form, i.e. plain
// logistic regression when |Z| = 2 (the head carries |Z|-1 logit columns and
// class 0 is the zero-logit reference).
struct Architecture {
  int input_dim = 0;
  std::vector<int> hidden;  // ReLU after every hidden layer
  int feature_dim = 0;
  int y_count = 0;
  int z_count = 2;
  // ReLU on the feature layer output. Off for the paper's bottleneck
  // features (e.g. 2->20->20->1), on when the head sits directly on the
  // last hidden activation (ERM / FT / FE style classifiers).
  bool relu_feature = false;

  int coarse_logit_cols() const { return z_count - 1; }

  // W/b pairs: phi layers, target head, coarse head — in this order.
  std::vector<std::pair<int, int>> param_shapes() const;
  int phi_layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int phi_param_count() const { return 2 * phi_layer_count(); }
  int param_count() const { return phi_param_count() + 4; }
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct ModelBundle {
  Architecture arch;
  ad::ParamVector params;

  MatrixXd weight(int layer) const { return params.matrix(2 * layer); }
  MatrixXd bias(int layer) const { return params.matrix(2 * layer + 1); }
  int target_head_index() const { return arch.phi_param_count(); }
  int coarse_head_index() const { return arch.phi_param_count() + 2; }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, seeded.
ModelBundle init_bundle(const Architecture& arch, uint64_t seed);

// Plain forward passes (no tape), batched over rows of X.
MatrixXd feature_forward(const ModelBundle& bundle, const MatrixXd& X);
MatrixXd target_log_probs(const ModelBundle& bundle, const MatrixXd& X);
MatrixXd coarse_log_probs(const ModelBundle& bundle, const MatrixXd& X);
// Single-sample convenience wrappers.
VectorXd feature_forward_one(const ModelBundle& bundle, const RowVectorXd& x);
VectorXd target_log_probs_one(const ModelBundle& bundle, const RowVectorXd& x);
VectorXd coarse_log_probs_one(const ModelBundle& bundle, const RowVectorXd& x);

// Rowwise log-softmax with max subtraction.
MatrixXd log_softmax_rows(const MatrixXd& logits);

// Argmax prediction; ties go to the smallest label index.
int predict_label(const VectorXd& log_probs);

// Tape builders used by the trainer. `param_leaves` follows param_shapes()
// order; x is an n x input_dim node.
ad::NodeId features_graph(ad::Tape& t, const Architecture& arch,
                          const std::vector<ad::NodeId>& param_leaves,
                          ad::NodeId x);
ad::NodeId target_logits_graph(ad::Tape& t, const Architecture& arch,
                               const std::vector<ad::NodeId>& param_leaves,
                               ad::NodeId features);
// Full |Z|-column logits with the zero reference column prepended.
ad::NodeId coarse_logits_graph(ad::Tape& t, const Architecture& arch,
                               const std::vector<ad::NodeId>& param_leaves,
                               ad::NodeId features);

// Checkpoint: raw little-endian float64 params at `path`, architecture
// descriptor in a JSON sidecar at `path`.json.
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace hilearn
