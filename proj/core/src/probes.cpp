#include "ciss/probes.hpp"

#include <algorithm>

#include "ciss/error.hpp"
#include "ciss/losses.hpp"
#include "ciss/optim.hpp"

namespace ciss {

using nlohmann::json;

double BiasProfile::mean_of(const std::string& group_tag) const {
  double sum = 0.0;
  int n = 0;
  for (size_t i = 0; i < bias.size(); ++i) {
    if (group[i] == group_tag) {
      sum += bias[i];
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

json BiasProfile::to_json() const { return json{{"bias", bias}, {"group", group}}; }

BiasProfile classifier_bias_profile(const LayerTapModel& model,
                                    const std::vector<int>& first_task_classes) {
  const ClassifierHead& head = model.head();
  BiasProfile profile;
  for (int c = 0; c < head.num_classes(); ++c) {
    profile.bias.push_back(head.bias_values()[c]);
    if (c == 0)
      profile.group.push_back("background");
    else if (std::find(first_task_classes.begin(), first_task_classes.end(), c) !=
             first_task_classes.end())
      profile.group.push_back("old");
    else
      profile.group.push_back("new");
  }
  return profile;
}

DecoderRetrainResult decoder_retrain_accuracy(const LayerTapModel& f1,
                                              const std::vector<SegSample>& joint_train,
                                              const std::vector<SegSample>& joint_test,
                                              const ClassCatalog& catalog,
                                              const DecoderRetrainConfig& config) {
  CISS_CHECK(f1.num_classes() == catalog.num_classes, config,
             "decoder retraining needs a head covering all classes");
  CISS_CHECK(!joint_train.empty() && !joint_test.empty(), empty_dataset,
             "decoder retraining needs joint train and test data");

  DecoderRetrainResult result;
  result.retrained = f1.clone();
  LayerTapModel& model = result.retrained;

  result.cm_initial = confusion_matrix(model, joint_test, catalog, config.batch_size);
  result.miou_initial = miou(result.cm_initial, catalog.all_classes()).value;

  model.freeze_encoder();
  SgdOptimizer opt(config.lr, config.momentum, config.weight_decay);
  Rng shuffle_rng(config.seed);
  std::vector<int> order(joint_train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const int h = joint_train[0].height(), w = joint_train[0].width();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_lr(cosine_lr(config.lr, epoch, config.epochs));
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const int b = static_cast<int>(end - start);
      Tensor x({b, 3, h, w});
      IntTensor y({b, h, w});
      for (int i = 0; i < b; ++i) {
        const SegSample& s = joint_train[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
        std::copy(s.image.data(), s.image.data() + s.image.size(),
                  x.data() + static_cast<int64_t>(i) * 3 * h * w);
        std::copy(s.label.data(), s.label.data() + s.label.size(),
                  y.data() + static_cast<int64_t>(i) * h * w);
      }
      model.zero_grad();
      const Tensor logits = model.forward(x, /*train=*/true);
      LossResult ce = cross_entropy(logits, y, catalog.ignore_id);
      CISS_CHECK(std::isfinite(ce.value), numeric, "non-finite loss during decoder retraining");
      model.backward(ce.grad);
      opt.step(model.parameters());
    }
  }

  result.cm_retrained = confusion_matrix(model, joint_test, catalog, config.batch_size);
  result.miou_retrained = miou(result.cm_retrained, catalog.all_classes()).value;
  return result;
}

} // namespace ciss
