#include "hilearn/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "hilearn/parallel.hpp"
#include "hilearn/rng.hpp"

namespace hilearn::harness {

namespace {

const std::vector<std::string> kKnownMethods = {
    "ours+CVI", "ours+CVII", "ours+TrCV", "ours+LODCV", "ours+TDV",
    "ERM",      "FT",        "FE"};

std::string domain_string(double e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

ordered_json arch_json(const Architecture& a) {
  return ordered_json{{"input_dim", a.input_dim}, {"hidden", a.hidden},
                      {"feature_dim", a.feature_dim}, {"y_count", a.y_count},
                      {"z_count", a.z_count}, {"relu_feature", a.relu_feature}};
}

Architecture arch_from_json(const ordered_json& j, const Architecture& defaults) {
  Architecture a = defaults;
  if (j.contains("input_dim")) a.input_dim = j.at("input_dim").get<int>();
  if (j.contains("hidden")) a.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("feature_dim")) a.feature_dim = j.at("feature_dim").get<int>();
  if (j.contains("y_count")) a.y_count = j.at("y_count").get<int>();
  if (j.contains("z_count")) a.z_count = j.at("z_count").get<int>();
  if (j.contains("relu_feature")) a.relu_feature = j.at("relu_feature").get<bool>();
  a.validate();
  return a;
}

std::vector<cv::HyperPoint> grid_from_json(const ordered_json& j) {
  std::vector<cv::HyperPoint> grid;
  for (const auto& p : j)
    grid.push_back({p.at("t").get<int>(), p.at("lambda_after").get<double>()});
  return grid;
}

std::vector<cv::HyperPoint> product_grid(const std::vector<int>& ts,
                                         const std::vector<double>& lambdas) {
  std::vector<cv::HyperPoint> grid;
  for (int t : ts)
    for (double l : lambdas) grid.push_back({t, l});
  return grid;
}

}  // namespace

ExperimentConfig default_syn1_config(double e_star) {
  ExperimentConfig c;
  c.experiment = ExperimentKind::kSyn1;
  c.e_star = e_star;
  c.e_ad = {-100.0, -50.0, 0.0, 50.0, 100.0};
  c.n_target = 2000;
  c.n_ad = 1000;
  c.n_eval = 2000;
  c.eval_domains = {e_star == 0.0 ? 0.0 : -e_star};
  c.grid = product_grid({0, 100, 200}, {1e0, 1e1, 1e2, 1e3, 1e4});
  c.K = 10;
  c.seeds = {1, 2, 3, 4, 5};
  c.methods = {"ours+CVI", "ours+CVII", "ERM"};
  c.hierarchy_table = {0, 1, 1};
  c.arch = Architecture{2, {20, 20}, 1, 3, 2, false};
  c.baseline_arch = Architecture{2, {20}, 20, 3, 2, true};
  c.train_base.learning_rate = 0.0115;
  c.train_base.l2_coef = 0.01;
  c.train_base.max_epoch = 500;
  c.train_base.batch_mode = BatchMode::kFull;
  return c;
}

ExperimentConfig default_syn2_config(double e_ad) {
  ExperimentConfig c;
  c.experiment = ExperimentKind::kSyn2;
  c.e_star = 20.0;
  c.e_ad = {e_ad, 40.0};
  c.n_target = 60000;
  c.n_ad = 20000;
  c.n_eval = 2000;
  c.eval_domains = {-20.0};
  c.grid = product_grid({0}, {0.0, 0.001, 80.0, 100.0});
  c.K = 10;
  c.seeds = {1, 2, 3, 4, 5};
  c.methods = {"ours+CVI", "ours+CVII"};
  std::vector<int> parity(10);
  for (int y = 0; y < 10; ++y) parity[y] = y % 2;
  c.hierarchy_table = parity;
  c.arch = Architecture{2, {8, 8}, 1, 10, 2, false};
  c.baseline_arch = Architecture{2, {8}, 8, 10, 2, true};
  c.train_base.learning_rate = 0.05;
  c.train_base.l2_coef = 0.001;
  c.train_base.max_epoch = 500;
  c.train_base.batch_mode = BatchMode::kMinibatch;
  c.train_base.minibatch_count = 50;
  return c;
}

void ExperimentConfig::validate() const {
  if (experiment == ExperimentKind::kTheory) {
    if (theory_instance.empty())
      throw InputError("config: theory experiment needs theory_instance");
    return;
  }
  if (seeds.empty()) throw InputError("config: needs at least one seed");
  if (methods.empty()) throw InputError("config: needs at least one method");
  for (const std::string& m : methods)
    if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) ==
        kKnownMethods.end())
      throw InputError("config: unknown method '" + m + "'");
  if (experiment != ExperimentKind::kCustom) {
    if (n_target < 1 || n_ad < 1 || n_eval < 1)
      throw InputError("config: sample counts must be positive");
    if (eval_domains.empty()) throw InputError("config: needs eval domains");
  }
  bool needs_grid = false;
  for (const std::string& m : methods) needs_grid |= m.rfind("ours+", 0) == 0;
  if (needs_grid && grid.empty())
    throw InputError("config: selection methods need a hyperparameter grid");

  // The synthetic protocols pin the candidate sets; reject silent drift.
  auto check_grid = [&](const std::vector<int>& ts, const std::vector<double>& ls,
                        const char* which) {
    for (const cv::HyperPoint& p : grid) {
      bool ok_t = std::find(ts.begin(), ts.end(), p.t_threshold) != ts.end();
      bool ok_l = false;
      for (double l : ls) ok_l |= (p.lambda_after == l);
      if (!ok_t || !ok_l)
        throw InputError(std::string("config: grid point outside the declared ") +
                         which + " candidate set");
    }
  };
  if (experiment == ExperimentKind::kSyn1)
    check_grid({0, 100, 200}, {1e0, 1e1, 1e2, 1e3, 1e4}, "syn1");
  if (experiment == ExperimentKind::kSyn2)
    check_grid({0}, {0.0, 0.001, 80.0, 100.0}, "syn2");
  HierarchyMap::from_table(hierarchy_table);  // validates surjectivity
}

ExperimentConfig config_from_json(const ordered_json& j) {
  std::string kind = j.at("experiment").get<std::string>();
  ExperimentConfig c;
  if (kind == "syn1") {
    c = default_syn1_config(j.value("e_star", 0.0));
  } else if (kind == "syn2") {
    double first_ad = 0.0;
    if (j.contains("e_ad") && !j.at("e_ad").empty())
      first_ad = j.at("e_ad").front().get<double>();
    c = default_syn2_config(first_ad);
    if (j.contains("e_star")) c.e_star = j.at("e_star").get<double>();
  } else if (kind == "theory") {
    c.experiment = ExperimentKind::kTheory;
    c.theory_instance = j.at("theory_instance").get<std::string>();
    c.jobs = j.value("jobs", 0);
    return c;
  } else if (kind == "custom") {
    c.experiment = ExperimentKind::kCustom;
    c.manifest_dir = j.at("manifest_dir").get<std::string>();
    c.custom_target = j.at("target_file").get<std::string>();
    c.custom_ad = j.at("ad_files").get<std::vector<std::string>>();
    c.custom_eval_files = j.at("eval_files").get<std::vector<std::string>>();
    c.hierarchy_table = j.at("hierarchy").get<std::vector<int>>();
    c.arch = arch_from_json(j.at("arch"), Architecture{2, {20, 20}, 1, 3, 2, false});
    c.baseline_arch = arch_from_json(j.value("baseline_arch", ordered_json::object()),
                                     Architecture{2, {20}, 20, 3, 2, true});
  } else {
    throw InputError("config: experiment must be syn1, syn2, theory or custom");
  }

  if (j.contains("e_ad")) c.e_ad = j.at("e_ad").get<std::vector<double>>();
  if (j.contains("n_target")) c.n_target = j.at("n_target").get<int>();
  if (j.contains("n_ad")) c.n_ad = j.at("n_ad").get<int>();
  if (j.contains("n_eval")) c.n_eval = j.at("n_eval").get<int>();
  if (j.contains("eval_domains"))
    c.eval_domains = j.at("eval_domains").get<std::vector<double>>();
  if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
  if (j.contains("K")) c.K = j.at("K").get<int>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  if (j.contains("methods"))
    c.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("hierarchy"))
    c.hierarchy_table = j.at("hierarchy").get<std::vector<int>>();
  if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"), c.arch);
  if (j.contains("baseline_arch"))
    c.baseline_arch = arch_from_json(j.at("baseline_arch"), c.baseline_arch);
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (t.contains("learning_rate"))
      c.train_base.learning_rate = t.at("learning_rate").get<double>();
    if (t.contains("l2_coef")) c.train_base.l2_coef = t.at("l2_coef").get<double>();
    if (t.contains("max_epoch")) c.train_base.max_epoch = t.at("max_epoch").get<int>();
    if (t.contains("minibatch_count")) {
      int mc = t.at("minibatch_count").get<int>();
      c.train_base.minibatch_count = std::max(mc, 1);
      c.train_base.batch_mode = mc > 1 ? BatchMode::kMinibatch : BatchMode::kFull;
    }
    if (t.contains("aux_coarse_weight"))
      c.train_base.aux_coarse_weight = t.at("aux_coarse_weight").get<double>();
  }
  c.jobs = j.value("jobs", 0);
  c.validate();
  return c;
}

ordered_json ExperimentConfig::canonical_json() const {
  const char* kind = experiment == ExperimentKind::kSyn1     ? "syn1"
                     : experiment == ExperimentKind::kSyn2   ? "syn2"
                     : experiment == ExperimentKind::kTheory ? "theory"
                                                             : "custom";
  ordered_json grid_json = ordered_json::array();
  for (const cv::HyperPoint& p : grid)
    grid_json.push_back({{"t", p.t_threshold}, {"lambda_after", p.lambda_after}});
  ordered_json j{
      {"experiment", kind},
      {"e_star", e_star},
      {"e_ad", e_ad},
      {"n_target", n_target},
      {"n_ad", n_ad},
      {"n_eval", n_eval},
      {"eval_domains", eval_domains},
      {"grid", std::move(grid_json)},
      {"K", K},
      {"seeds", seeds},
      {"methods", methods},
      {"hierarchy", hierarchy_table},
      {"arch", arch_json(arch)},
      {"baseline_arch", arch_json(baseline_arch)},
      {"train",
       {{"learning_rate", train_base.learning_rate},
        {"l2_coef", train_base.l2_coef},
        {"max_epoch", train_base.max_epoch},
        {"minibatch_count", train_base.minibatch_count},
        {"aux_coarse_weight", train_base.aux_coarse_weight}}},
  };
  if (experiment == ExperimentKind::kTheory) j["theory_instance"] = theory_instance;
  if (experiment == ExperimentKind::kCustom) {
    j["manifest_dir"] = manifest_dir;
    j["target_file"] = custom_target;
    j["ad_files"] = custom_ad;
    j["eval_files"] = custom_eval_files;
  }
  return j;
}

std::string config_hash(const ordered_json& canonical) {
  std::string s = canonical.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

double accuracy(const ModelBundle& bundle, const DomainDataset& eval_set) {
  MatrixXd lp = target_log_probs(bundle, eval_set.inputs);
  int hits = 0;
  for (int i = 0; i < eval_set.n(); ++i)
    hits += (predict_label(lp.row(i)) == eval_set.labels[i]);
  return static_cast<double>(hits) / eval_set.n();
}

struct SeedData {
  DomainDataset target;
  std::vector<DomainDataset> ads;
  std::vector<DomainDataset> evals;
  DomainDataset tdv;
  bool has_tdv = false;
};

SeedData make_seed_data(const ExperimentConfig& cfg, uint64_t master,
                        const HierarchyMap& hier, bool want_tdv) {
  SeedData d;
  if (cfg.experiment == ExperimentKind::kCustom) {
    auto path = [&](const std::string& f) { return cfg.manifest_dir + "/" + f; };
    d.target = data::load_csv(path(cfg.custom_target));
    d.target.label_count = cfg.arch.y_count;
    d.target.level = LabelLevel::kFine;
    for (const std::string& f : cfg.custom_ad) {
      DomainDataset ad = data::load_csv(path(f));
      if (ad.level == LabelLevel::kFine) {
        ad.label_count = cfg.arch.y_count;
        ad = data::coarsen_dataset(ad, hier);
      } else {
        ad.label_count = cfg.arch.z_count;
      }
      d.ads.push_back(std::move(ad));
    }
    for (const std::string& f : cfg.custom_eval_files) {
      DomainDataset ev = data::load_csv(path(f));
      ev.label_count = cfg.arch.y_count;
      d.evals.push_back(std::move(ev));
    }
    if (want_tdv && !d.evals.empty()) {
      d.tdv = d.evals.front();
      d.has_tdv = true;
    }
    return d;
  }

  auto gen = [&](double e, int n, uint64_t s) {
    return cfg.experiment == ExperimentKind::kSyn1 ? data::gen_syn1(e, n, s)
                                                   : data::gen_syn2(e, n, s);
  };
  d.target = gen(cfg.e_star, cfg.n_target, derive_seed(master, "target"));
  for (size_t i = 0; i < cfg.e_ad.size(); ++i) {
    DomainDataset fine = gen(cfg.e_ad[i], cfg.n_ad, derive_seed(master, "ad", i));
    d.ads.push_back(data::coarsen_dataset(fine, hier));
  }
  for (size_t i = 0; i < cfg.eval_domains.size(); ++i)
    d.evals.push_back(
        gen(cfg.eval_domains[i], cfg.n_eval, derive_seed(master, "eval", i)));
  if (want_tdv) {
    d.tdv = gen(cfg.eval_domains.front(), cfg.n_eval, derive_seed(master, "tdv"));
    d.has_tdv = true;
  }
  return d;
}

std::string now_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

ResultReport run_theory_experiment(const ExperimentConfig& cfg) {
  std::ifstream in(cfg.theory_instance);
  if (!in) throw InputError("theory experiment: cannot open " + cfg.theory_instance);
  theory::Instance inst =
      theory::instance_from_json(ordered_json::parse(in, nullptr, true));
  HierarchyMap hier = inst.hierarchy();

  ResultReport rep;
  rep.config_echo = cfg.canonical_json();
  rep.config_hash = config_hash(rep.config_echo);
  rep.version = kVersion;
  rep.timestamp = now_utc();

  ordered_json verdicts;
  verdicts["method1"] =
      theory::verify_argmin_inclusion(inst.family, inst.projections,
                                      theory::CvCriterion::kMethodI, hier,
                                      inst.epsilon)
          .to_json();
  verdicts["method2"] =
      theory::verify_argmin_inclusion(inst.family, inst.projections,
                                      theory::CvCriterion::kMethodII, hier,
                                      inst.epsilon)
          .to_json();
  auto conditions = ordered_json::object();
  auto dump_condition = [&](theory::Condition c, const char* name) {
    ordered_json arr = ordered_json::array();
    for (const auto& v :
         theory::check_condition(inst.family, inst.projections, c, inst.epsilon, hier))
      arr.push_back({{"lambda", v.lambda},
                     {"applicable", v.applicable},
                     {"satisfied", v.satisfied},
                     {"witness_env", v.witness_env},
                     {"detail", v.detail}});
    conditions[name] = std::move(arr);
  };
  dump_condition(theory::Condition::kD, "d");
  dump_condition(theory::Condition::kDPrime, "d_prime");
  dump_condition(theory::Condition::kA, "a");
  dump_condition(theory::Condition::kAPrime, "a_prime");
  verdicts["conditions"] = std::move(conditions);
  rep.theory_verdicts = std::move(verdicts);
  return rep;
}

}  // namespace

const CellResult* ResultReport::cell(const std::string& method,
                                     const std::string& domain) const {
  for (const CellResult& c : cells)
    if (c.method == method && c.domain == domain) return &c;
  return nullptr;
}

ResultReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.experiment == ExperimentKind::kTheory)
    return run_theory_experiment(config);

  HierarchyMap hier = HierarchyMap::from_table(config.hierarchy_table);
  const size_t n_seeds = config.seeds.size();

  ResultReport rep;
  rep.config_echo = config.canonical_json();
  rep.config_hash = config_hash(rep.config_echo);
  rep.version = kVersion;
  rep.timestamp = now_utc();
  rep.methods = config.methods;
  if (config.experiment == ExperimentKind::kCustom) {
    for (const std::string& f : config.custom_eval_files) rep.eval_domains.push_back(f);
  } else {
    for (double e : config.eval_domains) rep.eval_domains.push_back(domain_string(e));
  }

  for (const std::string& m : config.methods)
    for (const std::string& d : rep.eval_domains) {
      CellResult c;
      c.method = m;
      c.domain = d;
      c.per_seed.assign(n_seeds, std::numeric_limits<double>::quiet_NaN());
      rep.cells.push_back(std::move(c));
    }
  auto cell_at = [&](size_t mi, size_t di) -> CellResult& {
    return rep.cells[mi * rep.eval_domains.size() + di];
  };

  const bool wants_core =
      std::count(config.methods.begin(), config.methods.end(), "ours+CVI") ||
      std::count(config.methods.begin(), config.methods.end(), "ours+CVII") ||
      std::count(config.methods.begin(), config.methods.end(), "ours+TrCV");
  const bool wants_tdv =
      std::count(config.methods.begin(), config.methods.end(), "ours+TDV") > 0;

  for (const std::string& m : config.methods) {
    SelectionRecord sr;
    sr.method = m;
    sr.oracle_selection = (m == "ours+TDV");
    rep.selections.push_back(std::move(sr));
  }

  cv::CvTrainPlan plan{config.arch, config.train_base};

  for (size_t si = 0; si < n_seeds; ++si) {
    uint64_t master = config.seeds[si];
    SeedData data = make_seed_data(config, master, hier, wants_tdv);

    std::optional<cv::CvCore> core;
    std::string core_error;
    if (wants_core) {
      try {
        core = cv::run_cv_core(config.grid, data.target, data.ads, hier, config.K,
                               derive_seed(master, "cv"), plan, config.jobs);
        for (const std::string& w : core->warnings)
          rep.warnings.push_back("seed " + std::to_string(master) + ": " + w);
      } catch (const std::exception& e) {
        core_error = e.what();
      }
    }

    // Full-data models per hyperparameter point are shared across selectors.
    std::map<std::pair<int, uint64_t>, ModelBundle> final_cache;
    auto final_model = [&](const cv::HyperPoint& p) -> const ModelBundle& {
      auto key = std::make_pair(p.t_threshold, std::bit_cast<uint64_t>(p.lambda_after));
      auto it = final_cache.find(key);
      if (it != final_cache.end()) return it->second;
      TrainConfig cfg = config.train_base;
      cfg.t_threshold = p.t_threshold;
      cfg.lambda_after = p.lambda_after;
      cfg.seed = cv::point_train_seed(derive_seed(master, "final"), p, 0);
      ModelBundle b = train(data.target, data.ads, config.arch, cfg);
      return final_cache.emplace(key, std::move(b)).first->second;
    };

    for (size_t mi = 0; mi < config.methods.size(); ++mi) {
      const std::string& method = config.methods[mi];
      try {
        const ModelBundle* bundle = nullptr;
        ModelBundle owned;

        if (method == "ours+CVI" || method == "ours+CVII" || method == "ours+TrCV") {
          if (!core) throw std::runtime_error("selection failed: " + core_error);
          cv::CvReport sel =
              method == "ours+CVI"    ? cv::select_from_core(*core, cv::CvMethod::kMethodI)
              : method == "ours+CVII" ? cv::select_from_core(*core, cv::CvMethod::kMethodII)
                                      : cv::select_trcv_from_core(*core);
          rep.selections[mi].per_seed_selected.push_back(sel.selected_point());
          rep.selections[mi].per_seed_scores.push_back(sel.scores);
          bundle = &final_model(sel.selected_point());
        } else if (method == "ours+LODCV") {
          cv::CvReport sel = cv::baseline_select(
              cv::BaselineSelector::kLODCV, config.grid, data.target, data.ads, hier,
              config.K, derive_seed(master, "cv"), plan, config.jobs);
          rep.selections[mi].per_seed_selected.push_back(sel.selected_point());
          rep.selections[mi].per_seed_scores.push_back(sel.scores);
          bundle = &final_model(sel.selected_point());
        } else if (method == "ours+TDV") {
          if (!data.has_tdv) throw InputError("TDV needs an eval domain");
          cv::CvReport sel = cv::baseline_select(
              cv::BaselineSelector::kTDV, config.grid, data.target, data.ads, hier,
              config.K, derive_seed(master, "cv"), plan, config.jobs, &data.tdv);
          rep.selections[mi].per_seed_selected.push_back(sel.selected_point());
          rep.selections[mi].per_seed_scores.push_back(sel.scores);
          bundle = &final_model(sel.selected_point());
        } else if (method == "ERM") {
          TrainConfig cfg = config.train_base;
          cfg.seed = derive_seed(master, "erm");
          owned = baselines::train_erm(data.target, config.baseline_arch, cfg);
          bundle = &owned;
        } else if (method == "FT") {
          TrainConfig cfg = config.train_base;
          cfg.seed = derive_seed(master, "ft");
          owned = baselines::train_finetune(data.target, data.ads,
                                            config.baseline_arch, cfg);
          bundle = &owned;
        } else if (method == "FE") {
          TrainConfig cfg = config.train_base;
          cfg.seed = derive_seed(master, "fe");
          owned = baselines::train_frozen(data.target, data.ads,
                                          config.baseline_arch, cfg);
          bundle = &owned;
        }

        for (size_t di = 0; di < data.evals.size(); ++di)
          cell_at(mi, di).per_seed[si] = accuracy(*bundle, data.evals[di]);
      } catch (const std::exception& e) {
        for (size_t di = 0; di < rep.eval_domains.size(); ++di) {
          CellResult& c = cell_at(mi, di);
          c.failed = true;
          if (!c.fail_reason.empty()) c.fail_reason += "; ";
          c.fail_reason +=
              "seed " + std::to_string(master) + ": " + e.what();
        }
      }
    }
  }

  for (CellResult& c : rep.cells) {
    std::vector<double> ok;
    for (double v : c.per_seed)
      if (std::isfinite(v)) ok.push_back(v);
    if (ok.empty()) {
      c.mean = c.se = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double mean = 0.0;
    for (double v : ok) mean += v;
    mean /= ok.size();
    double var = 0.0;
    for (double v : ok) var += (v - mean) * (v - mean);
    double sd = ok.size() > 1 ? std::sqrt(var / (ok.size() - 1)) : 0.0;
    c.mean = mean;
    c.se = sd / std::sqrt(static_cast<double>(ok.size()));
  }
  return rep;
}

ordered_json ResultReport::to_json(bool with_timestamp) const {
  ordered_json cells_json = ordered_json::array();
  for (const CellResult& c : cells) {
    ordered_json per_seed = ordered_json::array();
    for (double v : c.per_seed) {
      if (std::isfinite(v)) per_seed.push_back(v);
      else per_seed.push_back(nullptr);
    }
    cells_json.push_back({{"method", c.method},
                          {"domain", c.domain},
                          {"per_seed", std::move(per_seed)},
                          {"mean", c.mean},
                          {"se", c.se},
                          {"failed", c.failed},
                          {"fail_reason", c.fail_reason}});
  }
  ordered_json selections_json = ordered_json::array();
  for (const SelectionRecord& s : selections) {
    ordered_json pts = ordered_json::array();
    for (const cv::HyperPoint& p : s.per_seed_selected)
      pts.push_back({{"t", p.t_threshold}, {"lambda_after", p.lambda_after}});
    selections_json.push_back({{"method", s.method},
                               {"oracle_selection", s.oracle_selection},
                               {"per_seed_selected", std::move(pts)},
                               {"per_seed_scores", s.per_seed_scores}});
  }
  ordered_json j{{"provenance",
                  {{"version", version},
                   {"config_hash", config_hash},
                   {"timestamp", with_timestamp ? timestamp : ""}}},
                 {"config", config_echo},
                 {"methods", methods},
                 {"eval_domains", eval_domains},
                 {"cells", std::move(cells_json)},
                 {"selections", std::move(selections_json)},
                 {"warnings", warnings}};
  if (!theory_verdicts.is_null()) j["theory"] = theory_verdicts;
  return j;
}

namespace {

std::string format_cell(const CellResult& c) {
  if (c.failed) return "FAIL(" + c.fail_reason + ")";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f (%.3f)", c.mean, c.se);
  return buf;
}

}  // namespace

void emit_report(const ResultReport& report, ReportFormat format,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("emit_report: cannot open " + path);
  switch (format) {
    case ReportFormat::kJson:
      out << report.to_json().dump(2) << "\n";
      break;
    case ReportFormat::kCsv: {
      out << "method,domain,mean,se,failed\n";
      char buf[128];
      for (const CellResult& c : report.cells) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g", c.mean, c.se);
        out << c.method << "," << c.domain << "," << buf << ","
            << (c.failed ? 1 : 0) << "\n";
      }
      break;
    }
    case ReportFormat::kMarkdown: {
      out << "| method |";
      for (const std::string& d : report.eval_domains) out << " e=" << d << " |";
      out << "\n|---|";
      for (size_t i = 0; i < report.eval_domains.size(); ++i) out << "---|";
      out << "\n";
      for (const std::string& m : report.methods) {
        out << "| " << m << " |";
        for (const std::string& d : report.eval_domains) {
          const CellResult* c = report.cell(m, d);
          out << " " << (c ? format_cell(*c) : "-") << " |";
        }
        out << "\n";
      }
      break;
    }
  }
  if (!out) throw InputError("emit_report: write failed for " + path);
}

}  // namespace hilearn::harness
