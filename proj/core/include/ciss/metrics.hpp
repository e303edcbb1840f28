#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ciss/dataset.hpp"
#include "ciss/model.hpp"

namespace ciss {

// Row = ground truth class, column = predicted class, over the full catalog.
// Ignored pixels contribute to no cell.
class ConfusionMatrix {
public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes)
      : n_(num_classes), counts_(static_cast<size_t>(num_classes) * num_classes, 0) {}

  int num_classes() const { return n_; }
  int64_t at(int truth, int pred) const {
    return counts_[static_cast<size_t>(truth) * n_ + pred];
  }
  int64_t& at(int truth, int pred) { return counts_[static_cast<size_t>(truth) * n_ + pred]; }

  void add(const IntTensor& truth, const IntTensor& pred, int ignore_id);
  int64_t total() const;
  int64_t row_sum(int c) const;
  int64_t col_sum(int c) const;
  void accumulate(const ConfusionMatrix& other);

  void to_csv(const std::filesystem::path& path, const std::vector<std::string>& names) const;
  static ConfusionMatrix from_csv(const std::filesystem::path& path);

private:
  int n_ = 0;
  std::vector<int64_t> counts_;
};

// Argmax predictions of the model tallied against ground truth. The model
// may cover fewer classes than the catalog (its channels are the leading
// class ids); predictions land in those columns.
ConfusionMatrix confusion_matrix(LayerTapModel& model, const std::vector<SegSample>& samples,
                                 const ClassCatalog& catalog, int batch_size = 8);

struct MiouResult {
  double value = 0.0;
  bool defined = false; // false when every subset class is absent from the data
  std::vector<double> per_class;        // IoU per subset entry; NaN-free
  std::vector<uint8_t> class_defined;   // whether the class had any mass
};

// Mean IoU over the subset; classes with empty row and column are excluded
// from the mean.
MiouResult miou(const ConfusionMatrix& cm, const std::vector<int>& class_subset);

// Share of pixels whose ground truth is in `truth_classes` but which were
// predicted as `pred_class` (the background-absorption probe).
double prediction_fraction(const ConfusionMatrix& cm, const std::vector<int>& truth_classes,
                           int pred_class);

} // namespace ciss
