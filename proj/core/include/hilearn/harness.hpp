#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilearn/baselines.hpp"
#include "hilearn/crossval.hpp"
#include "hilearn/datagen.hpp"
#include "hilearn/theory.hpp"

namespace hilearn::harness {

using nlohmann::ordered_json;

enum class ExperimentKind { kSyn1, kSyn2, kTheory, kCustom };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kSyn1;
  double e_star = 0.0;
  std::vector<double> e_ad;
  int n_target = 0;
  int n_ad = 0;
  int n_eval = 2000;
  std::vector<double> eval_domains;
  std::vector<cv::HyperPoint> grid;
  int K = 10;
  std::vector<uint64_t> seeds;
  std::vector<std::string> methods;
  std::vector<int> hierarchy_table;
  Architecture arch;           // penalty-trained model
  Architecture baseline_arch;  // ERM / FT / FE classifier
  TrainConfig train_base;      // t / lambda_after filled per grid point
  int jobs = 0;
  std::string theory_instance;  // when experiment == theory

  // the "custom" experiment reads prepared CSV datasets instead of sampling
  std::string manifest_dir;
  std::string custom_target;
  std::vector<std::string> custom_ad;
  std::vector<std::string> custom_eval_files;

  ordered_json canonical_json() const;
  void validate() const;
};

// Fills paper-protocol defaults for everything the JSON leaves out.
ExperimentConfig config_from_json(const ordered_json& j);
ExperimentConfig default_syn1_config(double e_star);
ExperimentConfig default_syn2_config(double e_ad);

struct CellResult {
  std::string method;
  std::string domain;
  std::vector<double> per_seed;  // accuracy per seed, NaN when failed
  double mean = 0.0;
  double se = 0.0;
  bool failed = false;
  std::string fail_reason;
};

struct SelectionRecord {
  std::string method;
  std::vector<cv::HyperPoint> per_seed_selected;
  std::vector<std::vector<double>> per_seed_scores;
  bool oracle_selection = false;
};

struct ResultReport {
  ordered_json config_echo;
  std::string config_hash;
  std::string version;
  std::string timestamp;
  std::vector<std::string> methods;
  std::vector<std::string> eval_domains;
  std::vector<CellResult> cells;  // method-major, domain-minor order
  std::vector<SelectionRecord> selections;
  std::vector<std::string> warnings;
  ordered_json theory_verdicts;  // only for theory experiments

  const CellResult* cell(const std::string& method, const std::string& domain) const;
  ordered_json to_json(bool with_timestamp = true) const;
};

ResultReport run_experiment(const ExperimentConfig& config);

enum class ReportFormat { kJson, kCsv, kMarkdown };
void emit_report(const ResultReport& report, ReportFormat format,
                 const std::string& path);

// FNV-1a hex digest of the canonical config dump.
std::string config_hash(const ordered_json& canonical);

double median(std::vector<double> v);

}  // namespace hilearn::harness
