#include "hilearn/datagen.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hilearn/rng.hpp"

namespace hilearn::data {

using nlohmann::ordered_json;

namespace {

std::string format_domain(double e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

DomainDataset gen_mixture(double e, int n, uint64_t seed,
                          const std::vector<std::array<double, 4>>& comps,
                          const std::string& tag) {
  if (n < 1) throw InputError("gen: sample_count must be >= 1");
  DomainDataset d;
  d.domain_id = format_domain(e);
  d.level = LabelLevel::kFine;
  d.label_count = static_cast<int>(comps.size());
  d.inputs.resize(n, 2);
  d.labels.resize(n);
  Rng rng(derive_seed(seed, tag));
  for (int i = 0; i < n; ++i) {
    int k = rng.uniform_int(d.label_count);  // uniform class priors
    const auto& [m1, s1, m2, s2] = comps[k];
    d.inputs(i, 0) = rng.normal(m1, s1);
    d.inputs(i, 1) = rng.normal(m2, s2);
    d.labels[i] = k;
  }
  return d;
}

}  // namespace

DomainDataset gen_syn1(double e, int n, uint64_t seed) {
  std::vector<std::array<double, 4>> comps = {
      {0.0, 10.0, e, 10.0},
      {30.0, 10.0, -4.0 * e, 10.0},
      {-30.0, 10.0, -e, 10.0},
  };
  return gen_mixture(e, n, seed, comps, "syn1");
}

DomainDataset gen_syn2(double e, int n, uint64_t seed) {
  std::vector<std::array<double, 4>> comps = {
      {-180.0, 20.0, -5.0 * e, 30.0}, {-100.0, 20.0, -3.0 * e, 30.0},
      {-20.0, 20.0, -1.0 * e, 30.0},  {60.0, 20.0, -2.0 * e, 30.0},
      {140.0, 20.0, -4.0 * e, 30.0},  {-140.0, 20.0, 4.0 * e, 30.0},
      {-60.0, 20.0, 2.0 * e, 30.0},   {20.0, 20.0, 1.0 * e, 30.0},
      {100.0, 20.0, 3.0 * e, 30.0},   {180.0, 20.0, 5.0 * e, 30.0},
  };
  return gen_mixture(e, n, seed, comps, "syn2");
}

DomainDataset generate(const SynSpec& spec) {
  return spec.which == SynKind::kSyn1
             ? gen_syn1(spec.e, spec.sample_count, spec.seed)
             : gen_syn2(spec.e, spec.sample_count, spec.seed);
}

HierarchyMap syn1_hierarchy() { return HierarchyMap(3, 2, {0, 1, 1}); }

HierarchyMap syn2_hierarchy() {
  // 0-based label y is component y+1, so odd components sit at even y.
  std::vector<int> table(10);
  for (int y = 0; y < 10; ++y) table[y] = y % 2;
  return HierarchyMap(10, 2, table);
}

DomainDataset coarsen_dataset(const DomainDataset& fine, const HierarchyMap& g) {
  fine.validate();
  if (fine.label_count != g.fine_count())
    throw InputError("coarsen_dataset: dataset label space does not match g");
  DomainDataset out;
  out.domain_id = fine.domain_id;
  out.level = LabelLevel::kCoarse;
  out.label_count = g.coarse_count();
  out.inputs = fine.inputs;
  out.labels.resize(fine.labels.size());
  for (size_t i = 0; i < fine.labels.size(); ++i)
    out.labels[i] = g.coarsen(fine.labels[i]);
  return out;
}

void save_csv(const DomainDataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw InputError("save_csv: cannot open " + path);
  for (int j = 0; j < dataset.dim(); ++j) out << "x" << (j + 1) << ",";
  out << "y,domain,level\n";
  char buf[64];
  for (int i = 0; i < dataset.n(); ++i) {
    for (int j = 0; j < dataset.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", dataset.inputs(i, j));
      out << buf << ",";
    }
    out << dataset.labels[i] << "," << dataset.domain_id << ","
        << (dataset.level == LabelLevel::kFine ? "fine" : "coarse") << "\n";
  }
  if (!out) throw InputError("save_csv: write failed for " + path);
}

DomainDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("load_csv: cannot open " + path);
  std::string header;
  if (!std::getline(in, header) || header.empty())
    throw InputError("load_csv: empty file " + path);

  int dim = 0;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.size() > 1 && col[0] == 'x') ++dim;
    }
    if (dim < 1) throw InputError("load_csv: no input columns in header");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string domain;
  LabelLevel level = LabelLevel::kFine;
  std::string line;
  int line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> x(dim);
    auto parse_fail = [&](const std::string& what) {
      return InputError("load_csv: " + what + " at line " +
                        std::to_string(line_no) + " of " + path);
    };
    for (int j = 0; j < dim; ++j) {
      if (!std::getline(ls, cell, ',')) throw parse_fail("missing input column");
      size_t used = 0;
      double v;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw parse_fail("bad float '" + cell + "'");
      }
      if (used != cell.size() || !std::isfinite(v))
        throw parse_fail("bad float '" + cell + "'");
      x[j] = v;
    }
    if (!std::getline(ls, cell, ',')) throw parse_fail("missing label column");
    int y;
    try {
      y = std::stoi(cell);
    } catch (const std::exception&) {
      throw parse_fail("bad label '" + cell + "'");
    }
    if (y < 0) throw parse_fail("negative label");
    if (!std::getline(ls, cell, ',')) throw parse_fail("missing domain column");
    domain = cell;
    if (!std::getline(ls, cell, ',') && !std::getline(ls, cell))
      throw parse_fail("missing level column");
    if (cell == "fine") level = LabelLevel::kFine;
    else if (cell == "coarse") level = LabelLevel::kCoarse;
    else throw parse_fail("bad level '" + cell + "'");
    rows.push_back(std::move(x));
    labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  if (rows.empty()) throw InputError("load_csv: no data rows in " + path);

  DomainDataset d;
  d.domain_id = domain;
  d.level = level;
  d.label_count = max_label + 1;
  d.inputs.resize(static_cast<int>(rows.size()), dim);
  d.labels = std::move(labels);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < dim; ++j) d.inputs(static_cast<int>(i), j) = rows[i][j];
  return d;
}

GenSpec gen_spec_from_json(const ordered_json& j) {
  GenSpec spec;
  std::string which = j.at("which").get<std::string>();
  if (which == "syn1") spec.which = SynKind::kSyn1;
  else if (which == "syn2") spec.which = SynKind::kSyn2;
  else throw InputError("gen spec: which must be syn1 or syn2");
  spec.domains = j.at("domains").get<std::vector<double>>();
  spec.sample_count = j.at("sample_count").get<int>();
  spec.seed = j.value("seed", 0ULL);
  spec.coarse = j.value("coarse", false);
  if (spec.domains.empty()) throw InputError("gen spec: no domains listed");
  return spec;
}

ordered_json write_dataset_files(const GenSpec& spec, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  HierarchyMap hier =
      spec.which == SynKind::kSyn1 ? syn1_hierarchy() : syn2_hierarchy();
  ordered_json files = ordered_json::array();
  for (size_t i = 0; i < spec.domains.size(); ++i) {
    double e = spec.domains[i];
    SynSpec one{spec.which, e, spec.sample_count,
                derive_seed(spec.seed, "gen-domain", i)};
    DomainDataset d = generate(one);
    if (spec.coarse) d = coarsen_dataset(d, hier);
    std::string name = std::string(spec.which == SynKind::kSyn1 ? "syn1" : "syn2") +
                       "_e" + format_domain(e) + (spec.coarse ? "_coarse" : "") +
                       ".csv";
    save_csv(d, out_dir + "/" + name);
    files.push_back({{"domain", d.domain_id}, {"file", name}, {"n", d.n()}});
  }
  ordered_json manifest{
      {"which", spec.which == SynKind::kSyn1 ? "syn1" : "syn2"},
      {"seed", spec.seed},
      {"hierarchy", hier.table()},
      // Component indexing note: classes are numbered 1..N in the usual
      // presentation; CSV labels are 0-based, so label y is component y+1.
      {"label_convention", "labels are 0-based; component k has label k-1"},
      {"files", std::move(files)}};
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw InputError("write_dataset_files: manifest write failed");
  return manifest;
}

}  // namespace hilearn::data
