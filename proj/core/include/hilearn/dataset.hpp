#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hilearn/common.hpp"

namespace hilearn {

enum class LabelLevel { kFine, kCoarse };

// Labeled samples from one domain, at either label level.
struct DomainDataset {
  std::string domain_id;
  LabelLevel level = LabelLevel::kFine;
  Eigen::MatrixXd inputs;   // n x d
  std::vector<int> labels;  // length n
  int label_count = 0;      // size of the declared label space

  int n() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }

  void validate() const {
    if (n() < 1) throw InputError("DomainDataset: needs at least one sample");
    if (static_cast<int>(labels.size()) != n())
      throw InputError("DomainDataset: label count does not match sample count");
    if (label_count < 1) throw InputError("DomainDataset: empty label space");
    for (int y : labels)
      if (y < 0 || y >= label_count)
        throw InputError("DomainDataset: label outside declared space in domain " +
                         domain_id);
  }

  // Rows of this dataset selected by `idx`, in order.
  DomainDataset subset(const std::vector<int>& idx) const {
    DomainDataset out;
    out.domain_id = domain_id;
    out.level = level;
    out.label_count = label_count;
    out.inputs.resize(static_cast<int>(idx.size()), inputs.cols());
    out.labels.resize(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      out.inputs.row(static_cast<int>(i)) = inputs.row(idx[i]);
      out.labels[i] = labels[idx[i]];
    }
    return out;
  }
};

}  // namespace hilearn
