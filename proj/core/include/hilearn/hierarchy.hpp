#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hilearn/common.hpp"

namespace hilearn {

// Surjective coarsening g: Y -> Z between two label levels. Labels are dense
// integers 0..m-1. Immutable after construction.
class HierarchyMap {
 public:
  HierarchyMap(int fine_count, int coarse_count, std::vector<int> table);

  // Coarse count inferred as max(table)+1.
  static HierarchyMap from_table(std::vector<int> table);

  int fine_count() const { return fine_count_; }
  int coarse_count() const { return coarse_count_; }
  const std::vector<int>& table() const { return table_; }

  int coarsen(int y) const;

  // Fine labels mapping to z, in increasing order.
  const std::vector<int>& preimage(int z) const;

  // Coarse labels with more than one fine preimage, in increasing order.
  std::vector<int> ambiguous_labels() const;

  // Conditional distribution over the preimage of z given probs over Y.
  // Output is indexed like preimage(z). Zero preimage mass is an error:
  // silently returning uniform would corrupt downstream correction terms.
  Eigen::VectorXd renormalize(const Eigen::VectorXd& probs, int z) const;

 private:
  int fine_count_;
  int coarse_count_;
  std::vector<int> table_;
  std::vector<std::vector<int>> preimages_;
};

}  // namespace hilearn
