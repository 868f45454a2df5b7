#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilearn/dataset.hpp"
#include "hilearn/hierarchy.hpp"

namespace hilearn::data {

enum class SynKind { kSyn1, kSyn2 };

struct SynSpec {
  SynKind which = SynKind::kSyn1;
  double e = 0.0;       // domain parameter
  int sample_count = 0;
  uint64_t seed = 0;
};

// Three balanced Gaussian components on R^2; the second coordinate carries
// the domain factor e (means e, -4e, -e), the first is invariant (0, 30, -30).
DomainDataset gen_syn1(double e, int n, uint64_t seed);

// Ten balanced components; first-coordinate means
// -180,-100,-20,60,140,-140,-60,20,100,180 and second-coordinate means
// -5e,-3e,-e,-2e,-4e,4e,2e,e,3e,5e (sd 20 and 30).
DomainDataset gen_syn2(double e, int n, uint64_t seed);

DomainDataset generate(const SynSpec& spec);

// Label table [0,1,1]: component 0 vs the outer two.
HierarchyMap syn1_hierarchy();
// Components are conventionally numbered 1..10; odd-numbered ones map to
// coarse 0 and even-numbered to coarse 1, so the 0-based label y maps to y%2.
HierarchyMap syn2_hierarchy();

// Same inputs, labels mapped through g, level switched to coarse.
DomainDataset coarsen_dataset(const DomainDataset& fine, const HierarchyMap& g);

// CSV with header x1,...,xd,y,domain,level; floats at 17 significant digits
// so a round trip is bit-lossless.
void save_csv(const DomainDataset& dataset, const std::string& path);
DomainDataset load_csv(const std::string& path);

// Dataset manifest: per-domain file list plus the hierarchy used.
struct GenSpec {
  SynKind which = SynKind::kSyn1;
  std::vector<double> domains;
  int sample_count = 0;
  uint64_t seed = 0;
  bool coarse = false;  // emit coarsened labels
};

GenSpec gen_spec_from_json(const nlohmann::ordered_json& j);
// Writes one CSV per domain plus manifest.json into out_dir.
nlohmann::ordered_json write_dataset_files(const GenSpec& spec,
                                           const std::string& out_dir);

}  // namespace hilearn::data
