#include "hilearn/hierarchy.hpp"

#include <algorithm>
#include <cmath>

namespace hilearn {

HierarchyMap::HierarchyMap(int fine_count, int coarse_count,
                           std::vector<int> table)
    : fine_count_(fine_count), coarse_count_(coarse_count), table_(std::move(table)) {
  if (fine_count_ < 2) throw InputError("HierarchyMap: |Y| must be >= 2");
  if (coarse_count_ < 2) throw InputError("HierarchyMap: |Z| must be >= 2");
  if (static_cast<int>(table_.size()) != fine_count_)
    throw InputError("HierarchyMap: table length must equal |Y|");
  preimages_.assign(coarse_count_, {});
  for (int y = 0; y < fine_count_; ++y) {
    int z = table_[y];
    if (z < 0 || z >= coarse_count_)
      throw InputError("HierarchyMap: table entry outside coarse label space");
    preimages_[z].push_back(y);
  }
  for (int z = 0; z < coarse_count_; ++z) {
    if (preimages_[z].empty())
      throw InputError("HierarchyMap: map must be surjective; coarse label " +
                       std::to_string(z) + " has no preimage");
  }
}

HierarchyMap HierarchyMap::from_table(std::vector<int> table) {
  int coarse = 0;
  for (int z : table) coarse = std::max(coarse, z + 1);
  int fine = static_cast<int>(table.size());
  return HierarchyMap(fine, coarse, std::move(table));
}

int HierarchyMap::coarsen(int y) const {
  if (y < 0 || y >= fine_count_)
    throw InputError("coarsen: fine label " + std::to_string(y) + " out of range");
  return table_[y];
}

const std::vector<int>& HierarchyMap::preimage(int z) const {
  if (z < 0 || z >= coarse_count_)
    throw InputError("preimage: coarse label out of range");
  return preimages_[z];
}

std::vector<int> HierarchyMap::ambiguous_labels() const {
  std::vector<int> out;
  for (int z = 0; z < coarse_count_; ++z)
    if (preimages_[z].size() > 1) out.push_back(z);
  return out;
}

Eigen::VectorXd HierarchyMap::renormalize(const Eigen::VectorXd& probs,
                                          int z) const {
  if (probs.size() != fine_count_)
    throw InputError("renormalize: probs length must equal |Y|");
  if (std::fabs(probs.sum() - 1.0) > 1e-9)
    throw InputError("renormalize: probs must sum to 1");
  const std::vector<int>& pre = preimage(z);
  double mass = 0.0;
  for (int y : pre) mass += probs[y];
  if (!(mass > 0.0))
    throw DegenerateConditionalError(
        "renormalize: zero probability mass on the preimage of coarse label " +
        std::to_string(z));
  Eigen::VectorXd out(static_cast<int>(pre.size()));
  for (size_t i = 0; i < pre.size(); ++i) out[static_cast<int>(i)] = probs[pre[i]] / mass;
  return out;
}

}  // namespace hilearn
