#include "hilearn/objective.hpp"

#include <cmath>
#include <memory>
#include <numeric>

#include "hilearn/rng.hpp"

namespace hilearn {

double empirical_risk(const DomainDataset& dataset, const LogProbFn& log_probs) {
  dataset.validate();
  double acc = 0.0;
  for (int i = 0; i < dataset.n(); ++i) {
    VectorXd lp = log_probs(dataset.inputs.row(i));
    if (lp.size() != dataset.label_count)
      throw InputError("empirical_risk: predictor label space mismatch");
    acc -= lp[dataset.labels[i]];
  }
  return acc / dataset.n();
}

double empirical_risk_fine(const DomainDataset& dataset, const ModelBundle& bundle) {
  dataset.validate();
  if (dataset.level != LabelLevel::kFine || dataset.label_count != bundle.arch.y_count)
    throw InputError("empirical_risk_fine: dataset is not fine-level for this model");
  MatrixXd lp = target_log_probs(bundle, dataset.inputs);
  double acc = 0.0;
  for (int i = 0; i < dataset.n(); ++i) acc -= lp(i, dataset.labels[i]);
  return acc / dataset.n();
}

double empirical_risk_coarse_head(const DomainDataset& dataset,
                                  const ModelBundle& bundle) {
  dataset.validate();
  if (dataset.level != LabelLevel::kCoarse ||
      dataset.label_count != bundle.arch.z_count)
    throw InputError("empirical_risk_coarse_head: dataset is not coarse-level");
  MatrixXd lp = coarse_log_probs(bundle, dataset.inputs);
  double acc = 0.0;
  for (int i = 0; i < dataset.n(); ++i) acc -= lp(i, dataset.labels[i]);
  return acc / dataset.n();
}

double irm_penalty(const std::vector<DomainDataset>& ad_datasets,
                   const ModelBundle& bundle) {
  // Closed form: for the coarse logit head with reference class 0, the
  // gradient of the mean NLL w.r.t. (Wc, bc) is (1/n) [H; 1]^T (P - Z)
  // restricted to the non-reference columns.
  double total = 0.0;
  const int zc = bundle.arch.z_count;
  for (const DomainDataset& d : ad_datasets) {
    d.validate();
    if (d.level != LabelLevel::kCoarse || d.label_count != zc)
      throw InputError("irm_penalty: ad dataset is not coarse-level");
    MatrixXd h = feature_forward(bundle, d.inputs);
    MatrixXd lp = coarse_log_probs(bundle, d.inputs);  // n x z
    MatrixXd resid = lp.array().exp();                 // softmax probs
    for (int i = 0; i < d.n(); ++i) resid(i, d.labels[i]) -= 1.0;
    MatrixXd resid_nr = resid.rightCols(zc - 1);  // drop reference column
    MatrixXd gw = (h.transpose() * resid_nr) / d.n();
    Eigen::RowVectorXd gb = resid_nr.colwise().sum() / d.n();
    total += gw.squaredNorm() + gb.squaredNorm();
  }
  return total;
}

double total_objective(const DomainDataset& target,
                       const std::vector<DomainDataset>& ad_datasets,
                       const ModelBundle& bundle, double lambda) {
  if (lambda < 0.0) throw InputError("total_objective: lambda < 0");
  return empirical_risk_fine(target, bundle) +
         lambda * irm_penalty(ad_datasets, bundle);
}

double lambda_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw InputError("lambda_schedule: negative epoch");
  return epoch < config.t_threshold ? 1.0 : config.lambda_after;
}

namespace {

// One recorded objective graph, replayed with fresh batch/parameter values.
struct ObjectiveGraph {
  ad::Tape tape;
  std::vector<ad::NodeId> param_leaves;
  std::vector<ad::NodeId> wrt;      // trainable leaves
  std::vector<int> wrt_layers;      // layer index per wrt entry
  ad::NodeId x_target = -1;
  ad::NodeId target_gather = -1;
  std::vector<ad::NodeId> x_ads;
  std::vector<ad::NodeId> ad_gathers;
  ad::NodeId lambda_leaf = -1;
  ad::NodeId root = -1;
  std::vector<ad::NodeId> grads;
};

// Gather node ids are needed to swap labels between minibatches; nll_mean
// hides them, so the NLL is assembled here with the gather exposed.
struct NllNodes {
  ad::NodeId nll;
  ad::NodeId gather;
};

NllNodes build_nll(ad::Tape& t, ad::NodeId logits, const std::vector<int>& labels) {
  const int k = static_cast<int>(t.value(logits).cols());
  ad::NodeId m = t.row_max_detached(logits);
  ad::NodeId shifted = t.sub(logits, t.tile_cols(m, k));
  ad::NodeId lse = t.add(t.log(t.sum_cols(t.exp(shifted))), m);
  ad::NodeId picked = t.gather(logits, labels);
  return {t.mean_all(t.sub(lse, picked)), picked};
}

ObjectiveGraph build_objective_graph(const Architecture& arch,
                                     const ad::ParamVector& params,
                                     const DomainDataset& target_batch,
                                     const std::vector<DomainDataset>& ad_batches,
                                     const TrainConfig& cfg) {
  ObjectiveGraph g;
  g.tape.reserve(4096);
  ad::Tape& t = g.tape;

  for (int i = 0; i < params.layer_count(); ++i)
    g.param_leaves.push_back(t.leaf(params.matrix(i)));
  const int phi_params = arch.phi_param_count();
  for (int i = 0; i < params.layer_count(); ++i) {
    if (cfg.freeze_phi && i < phi_params) continue;
    g.wrt.push_back(g.param_leaves[i]);
    g.wrt_layers.push_back(i);
  }

  g.x_target = t.leaf(target_batch.inputs);
  ad::NodeId target_feat = features_graph(t, arch, g.param_leaves, g.x_target);
  ad::NodeId target_logits = target_logits_graph(t, arch, g.param_leaves, target_feat);
  NllNodes target_nll = build_nll(t, target_logits, target_batch.labels);
  g.target_gather = target_nll.gather;

  ad::NodeId obj = target_nll.nll;

  if (!ad_batches.empty()) {
    const int ci = phi_params + 2;
    std::vector<ad::NodeId> head = {g.param_leaves[ci], g.param_leaves[ci + 1]};
    ad::NodeId penalty = -1;
    ad::NodeId aux_risk = -1;
    for (const DomainDataset& d : ad_batches) {
      ad::NodeId x = t.leaf(d.inputs);
      g.x_ads.push_back(x);
      ad::NodeId feat = features_graph(t, arch, g.param_leaves, x);
      ad::NodeId logits = coarse_logits_graph(t, arch, g.param_leaves, feat);
      NllNodes nll = build_nll(t, logits, d.labels);
      g.ad_gathers.push_back(nll.gather);
      std::vector<ad::NodeId> inner = t.gradient(nll.nll, head);
      ad::NodeId norm_sq = t.add(t.sum_squares(inner[0]), t.sum_squares(inner[1]));
      penalty = penalty < 0 ? norm_sq : t.add(penalty, norm_sq);
      if (cfg.aux_coarse_weight > 0.0)
        aux_risk = aux_risk < 0 ? nll.nll : t.add(aux_risk, nll.nll);
    }
    g.lambda_leaf = t.leaf(MatrixXd::Constant(1, 1, 1.0));
    obj = t.add(obj, t.mul(g.lambda_leaf, penalty));
    if (aux_risk >= 0) obj = t.add(obj, t.scale(aux_risk, cfg.aux_coarse_weight));
  }

  if (cfg.l2_coef > 0.0) {
    ad::NodeId reg = -1;
    for (ad::NodeId p : g.param_leaves) {
      ad::NodeId sq = t.sum_squares(p);
      reg = reg < 0 ? sq : t.add(reg, sq);
    }
    obj = t.add(obj, t.scale(reg, cfg.l2_coef));
  }

  g.root = obj;
  g.grads = t.gradient(g.root, g.wrt);
  return g;
}

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m, v;
  long step = 0;

  explicit Adam(int size) : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}

  void update(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
              const std::vector<uint8_t>& mask, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (int i = 0; i < params.size(); ++i) {
      if (!mask[i]) continue;
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

void push_graph_params(ObjectiveGraph& g, const ad::ParamVector& params) {
  for (int i = 0; i < params.layer_count(); ++i)
    g.tape.set_leaf(g.param_leaves[i], params.matrix(i));
}

void pull_graph_grads(const ObjectiveGraph& g, const ad::ParamVector& like,
                      Eigen::VectorXd& out) {
  for (size_t k = 0; k < g.wrt.size(); ++k) {
    int layer = g.wrt_layers[k];
    const MatrixXd& gm = g.tape.value(g.grads[k]);
    double* dst = out.data() + like.offset_of(layer);
    for (int i = 0; i < gm.rows(); ++i)
      for (int j = 0; j < gm.cols(); ++j) dst[i * gm.cols() + j] = gm(i, j);
  }
}

// Equal split into `parts` chunks (sizes differ by at most one), after a
// seeded shuffle of sample indices.
std::vector<std::vector<int>> partition_indices(int n, int parts, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<std::vector<int>> out(parts);
  int base = n / parts, extra = n % parts;
  int at = 0;
  for (int p = 0; p < parts; ++p) {
    int len = base + (p < extra ? 1 : 0);
    out[p].assign(idx.begin() + at, idx.begin() + at + len);
    at += len;
  }
  return out;
}

ModelBundle run_training(ModelBundle bundle, const DomainDataset& target,
                         const std::vector<DomainDataset>& ad_datasets,
                         const TrainConfig& cfg) {
  cfg.validate();
  target.validate();
  if (target.level != LabelLevel::kFine)
    throw InputError("train: target dataset must be fine-level");

  std::vector<uint8_t> mask(bundle.params.size(), 1);
  if (cfg.freeze_phi) {
    int phi_total = 0;
    for (int i = 0; i < bundle.arch.phi_param_count(); ++i)
      phi_total += bundle.params.shapes[i].first * bundle.params.shapes[i].second;
    std::fill(mask.begin(), mask.begin() + phi_total, 0);
  }

  Adam adam(bundle.params.size());
  Eigen::VectorXd grad_flat = Eigen::VectorXd::Zero(bundle.params.size());
  const int epochs = cfg.max_epoch;

  auto fail = [&](const NumericError& e, int epoch) -> NumericError {
    return NumericError("train: numeric failure at epoch " + std::to_string(epoch) +
                        ": " + e.what());
  };

  if (cfg.batch_mode == BatchMode::kFull) {
    ObjectiveGraph g =
        build_objective_graph(bundle.arch, bundle.params, target, ad_datasets, cfg);
    for (int epoch = 0; epoch < epochs; ++epoch) {
      double lambda = lambda_schedule(epoch, cfg);
      if (g.lambda_leaf >= 0)
        g.tape.set_leaf(g.lambda_leaf, MatrixXd::Constant(1, 1, lambda));
      push_graph_params(g, bundle.params);
      try {
        g.tape.recompute();
      } catch (const NumericError& e) {
        throw fail(e, epoch);
      }
      pull_graph_grads(g, bundle.params, grad_flat);
      adam.update(bundle.params.values, grad_flat, mask, cfg.learning_rate);
    }
    return bundle;
  }

  // Minibatch mode: split every dataset into minibatch_count equal parts,
  // walk the parts of each dataset in an epoch-fresh shuffled order, one
  // optimizer step per tuple of parts.
  Rng rng(derive_seed(cfg.seed, "minibatch"));
  const int parts = cfg.minibatch_count;
  if (target.n() < parts)
    throw InputError("train: fewer target samples than minibatch parts");
  std::vector<std::vector<int>> target_parts = partition_indices(target.n(), parts, rng);
  std::vector<std::vector<std::vector<int>>> ad_parts;
  for (const DomainDataset& d : ad_datasets) {
    if (d.n() < parts)
      throw InputError("train: fewer ad samples than minibatch parts");
    ad_parts.push_back(partition_indices(d.n(), parts, rng));
  }

  std::vector<DomainDataset> target_slices;
  for (int p = 0; p < parts; ++p) target_slices.push_back(target.subset(target_parts[p]));
  std::vector<std::vector<DomainDataset>> ad_slices(ad_datasets.size());
  for (size_t e = 0; e < ad_datasets.size(); ++e)
    for (int p = 0; p < parts; ++p)
      ad_slices[e].push_back(ad_datasets[e].subset(ad_parts[e][p]));

  // Graphs are cached by the tuple of batch sizes; label payloads and leaf
  // values are swapped per step.
  std::vector<std::unique_ptr<ObjectiveGraph>> cache;
  std::vector<std::vector<int>> cache_sig;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    double lambda = lambda_schedule(epoch, cfg);
    std::vector<int> target_order(parts);
    std::iota(target_order.begin(), target_order.end(), 0);
    rng.shuffle(target_order);
    std::vector<std::vector<int>> ad_order(ad_datasets.size());
    for (size_t e = 0; e < ad_datasets.size(); ++e) {
      ad_order[e].resize(parts);
      std::iota(ad_order[e].begin(), ad_order[e].end(), 0);
      rng.shuffle(ad_order[e]);
    }

    for (int s = 0; s < parts; ++s) {
      const DomainDataset& tb = target_slices[target_order[s]];
      std::vector<const DomainDataset*> abs;
      std::vector<int> sig{tb.n()};
      for (size_t e = 0; e < ad_datasets.size(); ++e) {
        abs.push_back(&ad_slices[e][ad_order[e][s]]);
        sig.push_back(abs.back()->n());
      }

      ObjectiveGraph* g = nullptr;
      for (size_t c = 0; c < cache.size(); ++c)
        if (cache_sig[c] == sig) g = cache[c].get();
      if (g == nullptr) {
        std::vector<DomainDataset> ad_copy;
        for (auto* p : abs) ad_copy.push_back(*p);
        cache.push_back(std::make_unique<ObjectiveGraph>());
        *cache.back() = build_objective_graph(bundle.arch, bundle.params, tb,
                                              ad_copy, cfg);
        cache_sig.push_back(sig);
        g = cache.back().get();
      }

      g->tape.set_leaf(g->x_target, tb.inputs);
      g->tape.set_labels(g->target_gather, tb.labels);
      for (size_t e = 0; e < abs.size(); ++e) {
        g->tape.set_leaf(g->x_ads[e], abs[e]->inputs);
        g->tape.set_labels(g->ad_gathers[e], abs[e]->labels);
      }
      if (g->lambda_leaf >= 0)
        g->tape.set_leaf(g->lambda_leaf, MatrixXd::Constant(1, 1, lambda));
      push_graph_params(*g, bundle.params);
      try {
        g->tape.recompute();
      } catch (const NumericError& e) {
        throw fail(e, epoch);
      }
      pull_graph_grads(*g, bundle.params, grad_flat);
      adam.update(bundle.params.values, grad_flat, mask, cfg.learning_rate);
    }
  }
  return bundle;
}

}  // namespace

ModelBundle train(const DomainDataset& target,
                  const std::vector<DomainDataset>& ad_datasets,
                  const Architecture& arch, const TrainConfig& config) {
  return run_training(init_bundle(arch, config.seed), target, ad_datasets, config);
}

ModelBundle train_from(ModelBundle init, const DomainDataset& target,
                       const std::vector<DomainDataset>& ad_datasets,
                       const TrainConfig& config) {
  return run_training(std::move(init), target, ad_datasets, config);
}

ad::ParamVector objective_gradient(const DomainDataset& target,
                                   const std::vector<DomainDataset>& ad_datasets,
                                   const ModelBundle& bundle, double lambda) {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;  // unused
  cfg.max_epoch = 1;
  cfg.lambda_after = lambda;
  ObjectiveGraph g =
      build_objective_graph(bundle.arch, bundle.params, target, ad_datasets, cfg);
  if (g.lambda_leaf >= 0)
    g.tape.set_leaf(g.lambda_leaf, MatrixXd::Constant(1, 1, lambda));
  g.tape.recompute();
  ad::ParamVector out = ad::ParamVector::zeros(bundle.params.shapes);
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(bundle.params.size());
  pull_graph_grads(g, bundle.params, flat);
  out.values = flat;
  return out;
}

}  // namespace hilearn
