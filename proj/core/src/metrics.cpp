#include "ciss/metrics.hpp"

#include <fstream>
#include <sstream>

#include "ciss/error.hpp"

namespace ciss {

void ConfusionMatrix::add(const IntTensor& truth, const IntTensor& pred, int ignore_id) {
  CISS_CHECK(truth.shape() == pred.shape(), shape, "confusion: truth/pred shape mismatch");
  for (int64_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    if (t == ignore_id) continue;
    const int p = pred[i];
    CISS_CHECK(t >= 0 && t < n_ && p >= 0 && p < n_, invalid_sample,
               "confusion: class id out of range");
    ++counts_[static_cast<size_t>(t) * n_ + p];
  }
}

int64_t ConfusionMatrix::total() const {
  int64_t s = 0;
  for (int64_t v : counts_) s += v;
  return s;
}

int64_t ConfusionMatrix::row_sum(int c) const {
  int64_t s = 0;
  for (int j = 0; j < n_; ++j) s += at(c, j);
  return s;
}

int64_t ConfusionMatrix::col_sum(int c) const {
  int64_t s = 0;
  for (int i = 0; i < n_; ++i) s += at(i, c);
  return s;
}

void ConfusionMatrix::accumulate(const ConfusionMatrix& other) {
  CISS_CHECK(n_ == other.n_, shape, "confusion: size mismatch");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void ConfusionMatrix::to_csv(const std::filesystem::path& path,
                             const std::vector<std::string>& names) const {
  std::ofstream out(path);
  CISS_CHECK(out.good(), io, "cannot write " + path.string());
  out << "truth\\pred";
  for (int j = 0; j < n_; ++j)
    out << "," << (j < static_cast<int>(names.size()) ? names[static_cast<size_t>(j)]
                                                      : std::to_string(j));
  out << "\n";
  for (int i = 0; i < n_; ++i) {
    out << (i < static_cast<int>(names.size()) ? names[static_cast<size_t>(i)]
                                               : std::to_string(i));
    for (int j = 0; j < n_; ++j) out << "," << at(i, j);
    out << "\n";
  }
}

ConfusionMatrix ConfusionMatrix::from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  CISS_CHECK(in.good(), io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line); // header
  std::vector<std::vector<int64_t>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<int64_t> row;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ','); // row label
    while (std::getline(ss, cell, ',')) row.push_back(std::stoll(cell));
    rows.push_back(std::move(row));
  }
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    CISS_CHECK(rows[i].size() == rows.size(), io, "confusion csv is not square");
    for (size_t j = 0; j < rows[i].size(); ++j)
      cm.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  }
  return cm;
}

ConfusionMatrix confusion_matrix(LayerTapModel& model, const std::vector<SegSample>& samples,
                                 const ClassCatalog& catalog, int batch_size) {
  ConfusionMatrix cm(catalog.num_classes);
  if (samples.empty()) return cm;
  const int h = samples[0].height(), w = samples[0].width();
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
    const int b = static_cast<int>(end - start);
    Tensor x({b, 3, h, w});
    IntTensor y({b, h, w});
    for (int i = 0; i < b; ++i) {
      const SegSample& s = samples[start + static_cast<size_t>(i)];
      std::copy(s.image.data(), s.image.data() + s.image.size(),
                x.data() + static_cast<int64_t>(i) * 3 * h * w);
      std::copy(s.label.data(), s.label.data() + s.label.size(),
                y.data() + static_cast<int64_t>(i) * h * w);
    }
    const Tensor logits = model.forward(x, /*train=*/false);
    const IntTensor pred = argmax_channels(logits);
    cm.add(y, pred, catalog.ignore_id);
  }
  return cm;
}

MiouResult miou(const ConfusionMatrix& cm, const std::vector<int>& class_subset) {
  MiouResult res;
  double sum = 0.0;
  int defined = 0;
  for (int c : class_subset) {
    CISS_CHECK(c >= 0 && c < cm.num_classes(), config,
               "miou: class " + std::to_string(c) + " outside the matrix");
    const int64_t rs = cm.row_sum(c), cs = cm.col_sum(c), d = cm.at(c, c);
    const int64_t denom = rs + cs - d;
    if (denom <= 0) {
      res.per_class.push_back(0.0);
      res.class_defined.push_back(0);
      continue;
    }
    const double iou = static_cast<double>(d) / static_cast<double>(denom);
    res.per_class.push_back(iou);
    res.class_defined.push_back(1);
    sum += iou;
    ++defined;
  }
  if (defined > 0) {
    res.defined = true;
    res.value = sum / defined;
  }
  return res;
}

double prediction_fraction(const ConfusionMatrix& cm, const std::vector<int>& truth_classes,
                           int pred_class) {
  int64_t hits = 0, total = 0;
  for (int c : truth_classes) {
    total += cm.row_sum(c);
    hits += cm.at(c, pred_class);
  }
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

} // namespace ciss
