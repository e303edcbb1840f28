#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciss/metrics.hpp"
#include "ciss/model.hpp"
#include "ciss/taskstream.hpp"
#include "ciss/trainer.hpp"

namespace ciss {

// Final-layer bias per class, grouped into background / old / new.
struct BiasProfile {
  std::vector<double> bias;       // one entry per output class (channel order)
  std::vector<std::string> group; // "background", "old", "new"

  double mean_of(const std::string& group_tag) const;
  nlohmann::json to_json() const;
};

// first_task_classes = C_0 (including background); everything beyond is new.
BiasProfile classifier_bias_profile(const LayerTapModel& model,
                                    const std::vector<int>& first_task_classes);

struct DecoderRetrainConfig {
  int epochs = 30;
  double lr = 0.07;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  int batch_size = 8;
  uint64_t seed = 23;
};

struct DecoderRetrainResult {
  double miou_initial = 0.0;  // all-class mIoU before retraining
  double miou_retrained = 0.0;
  LayerTapModel retrained;    // frozen encoder, decoder retrained on all classes
  ConfusionMatrix cm_initial;
  ConfusionMatrix cm_retrained;
};

// Freezes the encoder (parameters and normalization statistics), retrains
// the decoder blocks and head on joint all-class data under a cosine
// learning-rate schedule, and reports all-class mIoU before and after.
DecoderRetrainResult decoder_retrain_accuracy(const LayerTapModel& f1,
                                              const std::vector<SegSample>& joint_train,
                                              const std::vector<SegSample>& joint_test,
                                              const ClassCatalog& catalog,
                                              const DecoderRetrainConfig& config);

} // namespace ciss
