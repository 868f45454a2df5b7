#include "hilearn/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hilearn/rng.hpp"

namespace hilearn {

using nlohmann::ordered_json;

void Architecture::validate() const {
  if (input_dim < 1) throw InputError("Architecture: input_dim must be >= 1");
  if (feature_dim < 1) throw InputError("Architecture: feature_dim must be >= 1");
  if (y_count < 2) throw InputError("Architecture: y_count must be >= 2");
  if (z_count < 2) throw InputError("Architecture: z_count must be >= 2");
  for (int h : hidden)
    if (h < 1) throw InputError("Architecture: hidden dims must be >= 1");
}

std::vector<std::pair<int, int>> Architecture::param_shapes() const {
  validate();
  std::vector<std::pair<int, int>> shapes;
  int in = input_dim;
  for (int h : hidden) {
    shapes.emplace_back(in, h);
    shapes.emplace_back(1, h);
    in = h;
  }
  shapes.emplace_back(in, feature_dim);
  shapes.emplace_back(1, feature_dim);
  shapes.emplace_back(feature_dim, y_count);
  shapes.emplace_back(1, y_count);
  shapes.emplace_back(feature_dim, coarse_logit_cols());
  shapes.emplace_back(1, coarse_logit_cols());
  return shapes;
}

ModelBundle init_bundle(const Architecture& arch, uint64_t seed) {
  ModelBundle b;
  b.arch = arch;
  b.params = ad::ParamVector::zeros(arch.param_shapes());
  Rng rng(derive_seed(seed, "init"));
  for (int layer = 0; layer < b.params.layer_count(); layer += 2) {
    auto [rows, cols] = b.params.shapes[layer];
    double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    MatrixXd w(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
    b.params.set_matrix(layer, w);
    // biases (layer+1) stay zero
  }
  return b;
}

namespace {

MatrixXd affine(const MatrixXd& X, const MatrixXd& W, const MatrixXd& b) {
  return (X * W).rowwise() + b.row(0);
}

}  // namespace

MatrixXd feature_forward(const ModelBundle& bundle, const MatrixXd& X) {
  if (X.cols() != bundle.arch.input_dim)
    throw InputError("feature_forward: input dimension mismatch");
  MatrixXd h = X;
  const int layers = bundle.arch.phi_layer_count();
  for (int l = 0; l < layers; ++l) {
    h = affine(h, bundle.weight(l), bundle.bias(l));
    if (l + 1 < layers || bundle.arch.relu_feature) h = h.cwiseMax(0.0);
  }
  return h;
}

MatrixXd log_softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff();
    double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

MatrixXd target_log_probs(const ModelBundle& bundle, const MatrixXd& X) {
  MatrixXd h = feature_forward(bundle, X);
  int ti = bundle.target_head_index();
  return log_softmax_rows(affine(h, bundle.params.matrix(ti),
                                 bundle.params.matrix(ti + 1)));
}

MatrixXd coarse_log_probs(const ModelBundle& bundle, const MatrixXd& X) {
  MatrixXd h = feature_forward(bundle, X);
  int ci = bundle.coarse_head_index();
  MatrixXd partial = affine(h, bundle.params.matrix(ci),
                            bundle.params.matrix(ci + 1));
  MatrixXd logits = MatrixXd::Zero(partial.rows(), partial.cols() + 1);
  logits.rightCols(partial.cols()) = partial;
  return log_softmax_rows(logits);
}

VectorXd feature_forward_one(const ModelBundle& bundle, const RowVectorXd& x) {
  return feature_forward(bundle, x).row(0);
}
VectorXd target_log_probs_one(const ModelBundle& bundle, const RowVectorXd& x) {
  return target_log_probs(bundle, x).row(0);
}
VectorXd coarse_log_probs_one(const ModelBundle& bundle, const RowVectorXd& x) {
  return coarse_log_probs(bundle, x).row(0);
}

int predict_label(const VectorXd& log_probs) {
  int best = 0;
  for (int i = 1; i < log_probs.size(); ++i)
    if (log_probs[i] > log_probs[best]) best = i;
  return best;
}

ad::NodeId features_graph(ad::Tape& t, const Architecture& arch,
                          const std::vector<ad::NodeId>& param_leaves,
                          ad::NodeId x) {
  const int n = static_cast<int>(t.value(x).rows());
  ad::NodeId h = x;
  const int layers = arch.phi_layer_count();
  for (int l = 0; l < layers; ++l) {
    ad::NodeId z = t.add(t.matmul(h, param_leaves[2 * l]),
                         t.tile_rows(param_leaves[2 * l + 1], n));
    h = (l + 1 < layers || arch.relu_feature) ? t.relu(z) : z;
  }
  return h;
}

ad::NodeId target_logits_graph(ad::Tape& t, const Architecture& arch,
                               const std::vector<ad::NodeId>& param_leaves,
                               ad::NodeId features) {
  const int n = static_cast<int>(t.value(features).rows());
  const int ti = arch.phi_param_count();
  return t.add(t.matmul(features, param_leaves[ti]),
               t.tile_rows(param_leaves[ti + 1], n));
}

ad::NodeId coarse_logits_graph(ad::Tape& t, const Architecture& arch,
                               const std::vector<ad::NodeId>& param_leaves,
                               ad::NodeId features) {
  const int n = static_cast<int>(t.value(features).rows());
  const int ci = arch.phi_param_count() + 2;
  ad::NodeId partial = t.add(t.matmul(features, param_leaves[ci]),
                             t.tile_rows(param_leaves[ci + 1], n));
  return t.pad_zero_col(partial);
}

namespace {

ordered_json arch_to_json(const Architecture& a) {
  return ordered_json{{"input_dim", a.input_dim}, {"hidden", a.hidden},
                      {"feature_dim", a.feature_dim}, {"y_count", a.y_count},
                      {"z_count", a.z_count}, {"relu_feature", a.relu_feature}};
}

Architecture arch_from_json(const ordered_json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.feature_dim = j.at("feature_dim").get<int>();
  a.y_count = j.at("y_count").get<int>();
  a.z_count = j.at("z_count").get<int>();
  a.relu_feature = j.at("relu_feature").get<bool>();
  a.validate();
  return a;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  bundle.params.validate();
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw InputError("save_checkpoint: cannot open " + path);
  static_assert(sizeof(double) == 8);
  // Params are written little-endian; this targets little-endian hosts.
  bin.write(reinterpret_cast<const char*>(bundle.params.values.data()),
            static_cast<std::streamsize>(sizeof(double) * bundle.params.size()));
  if (!bin) throw InputError("save_checkpoint: write failed for " + path);

  ordered_json side{{"format", "hilearn-checkpoint-v1"},
                    {"architecture", arch_to_json(bundle.arch)},
                    {"param_count", bundle.params.size()},
                    {"byte_order", "little"}};
  std::ofstream js(path + ".json");
  js << side.dump(2) << "\n";
  if (!js) throw InputError("save_checkpoint: sidecar write failed");
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw InputError("load_checkpoint: missing sidecar " + path + ".json");
  ordered_json side = ordered_json::parse(js, nullptr, true);
  ModelBundle b;
  b.arch = arch_from_json(side.at("architecture"));
  b.params = ad::ParamVector::zeros(b.arch.param_shapes());
  if (side.at("param_count").get<int>() != b.params.size())
    throw InputError("load_checkpoint: parameter count does not match sidecar");
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw InputError("load_checkpoint: cannot open " + path);
  bin.read(reinterpret_cast<char*>(b.params.values.data()),
           static_cast<std::streamsize>(sizeof(double) * b.params.size()));
  if (bin.gcount() != static_cast<std::streamsize>(sizeof(double) * b.params.size()))
    throw InputError("load_checkpoint: truncated parameter file " + path);
  b.params.validate();
  return b;
}

}  // namespace hilearn
