#include "ciss/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ciss/error.hpp"
#include "ciss/losses.hpp"
#include "ciss/metrics.hpp"
#include "ciss/optim.hpp"

namespace ciss {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::finetune: return "finetune";
    case Method::ewc: return "ewc";
    case Method::mas: return "mas";
    case Method::lwf: return "lwf";
    case Method::replay: return "replay";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "finetune") return Method::finetune;
  if (s == "ewc") return Method::ewc;
  if (s == "mas") return Method::mas;
  if (s == "lwf") return Method::lwf;
  if (s == "replay") return Method::replay;
  raise(ErrorKind::config,
        "unknown method '" + s + "' (valid: finetune, ewc, mas, lwf, replay)");
}

std::string to_string(LossKind k) { return k == LossKind::ce ? "ce" : "unce"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "ce") return LossKind::ce;
  if (s == "unce") return LossKind::unce;
  raise(ErrorKind::config, "unknown loss '" + s + "' (valid: ce, unce)");
}

void TrainConfig::validate() const {
  CISS_CHECK(lr_first > 0 && lr_later > 0, config, "learning rates must be positive");
  CISS_CHECK(momentum >= 0 && weight_decay >= 0, config, "momentum/weight decay negative");
  CISS_CHECK(epochs >= 1 && batch_size >= 1, config, "epochs and batch size must be >= 1");
  CISS_CHECK(plateau_patience >= 1, config, "plateau patience must be positive");
  CISS_CHECK(plateau_factor > 0 && plateau_factor < 1, config, "plateau factor must be in (0,1)");
  CISS_CHECK(temperature > 0, config, "temperature must be positive");
  CISS_CHECK(lambda >= 0, config, "lambda must be nonnegative");
  if (grad_clip_norm) CISS_CHECK(*grad_clip_norm > 0, config, "grad clip norm must be positive");
}

json TrainConfig::to_json() const {
  json j{{"lr_first", lr_first},
         {"lr_later", lr_later},
         {"momentum", momentum},
         {"weight_decay", weight_decay},
         {"epochs", epochs},
         {"batch_size", batch_size},
         {"plateau_patience", plateau_patience},
         {"plateau_factor", plateau_factor},
         {"method", to_string(method)},
         {"loss_kind", to_string(loss_kind)},
         {"head_kind", to_string(head_kind)},
         {"lambda", lambda},
         {"temperature", temperature},
         {"importance_samples", importance_samples},
         {"replay_capacity", replay_capacity},
         {"seed", seed}};
  if (grad_clip_norm) j["grad_clip_norm"] = *grad_clip_norm;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.lr_first = j.value("lr_first", c.lr_first);
  c.lr_later = j.value("lr_later", c.lr_later);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
  if (j.contains("grad_clip_norm") && !j["grad_clip_norm"].is_null())
    c.grad_clip_norm = j["grad_clip_norm"].get<double>();
  c.method = method_from_string(j.value("method", "finetune"));
  c.loss_kind = loss_kind_from_string(j.value("loss_kind", "ce"));
  c.head_kind = head_kind_from_string(j.value("head_kind", "standard"));
  c.lambda = j.value("lambda", c.lambda);
  c.temperature = j.value("temperature", c.temperature);
  c.importance_samples = j.value("importance_samples", c.importance_samples);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void fill_batch(const std::vector<const SegSample*>& items, Tensor& x, IntTensor& y) {
  const int b = static_cast<int>(items.size());
  const int h = items[0]->height(), w = items[0]->width();
  x = Tensor({b, 3, h, w});
  y = IntTensor({b, h, w});
  for (int i = 0; i < b; ++i) {
    const SegSample& s = *items[static_cast<size_t>(i)];
    CISS_CHECK(s.height() == h && s.width() == w, shape, "mixed sample sizes in one batch");
    std::copy(s.image.data(), s.image.data() + s.image.size(),
              x.data() + static_cast<int64_t>(i) * 3 * h * w);
    std::copy(s.label.data(), s.label.data() + s.label.size(),
              y.data() + static_cast<int64_t>(i) * h * w);
  }
}

std::vector<int> old_classes_of(const TaskDefinition& task) {
  std::vector<int> old;
  for (int c : task.seen_classes)
    if (!task.is_new(c)) old.push_back(c); // includes background
  return old;
}

double evaluate_val_loss(LayerTapModel& model, const std::vector<SegSample>& val,
                         const TaskDefinition& task, const TrainConfig& cfg, int ignore_id) {
  if (val.empty()) return std::numeric_limits<double>::infinity();
  const std::vector<int> old = old_classes_of(task);
  double total = 0.0;
  int64_t batches = 0;
  for (size_t start = 0; start < val.size(); start += static_cast<size_t>(cfg.batch_size)) {
    const size_t end = std::min(val.size(), start + static_cast<size_t>(cfg.batch_size));
    std::vector<const SegSample*> items;
    for (size_t i = start; i < end; ++i) items.push_back(&val[i]);
    Tensor x;
    IntTensor y;
    fill_batch(items, x, y);
    const Tensor logits = model.forward(x, /*train=*/false);
    const LossResult base =
        cfg.loss_kind == LossKind::ce
            ? cross_entropy(logits, y, ignore_id, /*with_grad=*/false)
            : unbiased_cross_entropy(logits, y, task.index == 0 ? std::vector<int>{} : old,
                                     ignore_id, /*with_grad=*/false);
    total += base.value;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

} // namespace

RunRecord train_task(LayerTapModel& model, const TaskData& data, const TaskDefinition& task,
                     const TrainConfig& config, const MethodContext& context) {
  config.validate();
  CISS_CHECK(!data.train.empty(), empty_task, "task has no training samples");
  const bool later_task = task.index > 0;
  if (later_task) {
    if (config.method == Method::lwf)
      CISS_CHECK(context.old_model != nullptr, config, "lwf needs the previous model");
    if (config.method == Method::ewc || config.method == Method::mas)
      CISS_CHECK(context.importance != nullptr, config,
                 to_string(config.method) + " needs an importance estimate");
    if (config.method == Method::replay)
      CISS_CHECK(context.buffer != nullptr, config, "replay needs a buffer");
  }

  constexpr int kIgnore = 255;
  const double lr0 = later_task ? config.lr_later : config.lr_first;
  SgdOptimizer opt(lr0, config.momentum, config.weight_decay);
  PlateauScheduler plateau(config.plateau_patience, config.plateau_factor);
  const std::vector<int> old_classes = later_task ? old_classes_of(task) : std::vector<int>{};

  Rng shuffle_rng(mix_seed(config.seed, static_cast<uint64_t>(task.index), 1));
  Rng replay_rng(mix_seed(config.seed, static_cast<uint64_t>(task.index), 2));

  const bool use_replay = config.method == Method::replay && context.buffer != nullptr &&
                          !context.buffer->empty();
  const int replay_per_batch =
      use_replay ? (config.batch_size + 3) / 4 : 0; // ceil(B/4)
  const int task_per_batch = std::max(1, config.batch_size - replay_per_batch);

  // a non-const view of the teacher for inference (forward in eval mode does
  // not mutate it)
  LayerTapModel* teacher = const_cast<LayerTapModel*>(context.old_model);

  RunRecord rec;
  rec.task_index = task.index;
  const auto t_start = std::chrono::steady_clock::now();

  std::vector<int> order(data.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t batch_count = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(task_per_batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(task_per_batch));
      std::vector<const SegSample*> items;
      for (size_t i = start; i < end; ++i)
        items.push_back(&data.train[static_cast<size_t>(order[i])]);
      if (use_replay) {
        for (const SegSample* s : context.buffer->sample_batch(replay_per_batch, replay_rng))
          items.push_back(s);
      }
      Tensor x;
      IntTensor y;
      fill_batch(items, x, y);

      model.zero_grad();
      const Tensor logits = model.forward(x, /*train=*/true);

      LossResult base = config.loss_kind == LossKind::ce
                            ? cross_entropy(logits, y, kIgnore)
                            : unbiased_cross_entropy(logits, y, old_classes, kIgnore);
      if (base.empty_support) rec.empty_loss_batches = true;
      double total = base.value;
      Tensor dlogits = std::move(base.grad);

      if (later_task && config.method == Method::lwf && config.lambda != 0.0) {
        const Tensor teacher_logits = teacher->forward(x, /*train=*/false);
        const LossResult distill =
            masked_distillation(logits, teacher_logits, y, config.temperature, 0);
        total += config.lambda * distill.value;
        if (!distill.empty_support)
          for (int64_t i = 0; i < dlogits.size(); ++i)
            dlogits[i] += config.lambda * distill.grad[i];
      }

      model.backward(dlogits);

      if (later_task && config.lambda != 0.0 &&
          (config.method == Method::ewc || config.method == Method::mas)) {
        total += add_penalty_gradient(model, *context.importance, config.lambda);
      }

      if (!std::isfinite(total)) {
        if (config.diagnostic_dir) {
          std::filesystem::create_directories(*config.diagnostic_dir);
          ParameterSnapshot snap = take_snapshot(
              model, json{{"reason", "nan_abort"}, {"task", task.index}, {"epoch", epoch}});
          save_snapshot_file(*config.diagnostic_dir / "nan_abort.ckpt", snap);
        }
        raise(ErrorKind::numeric, "non-finite loss at task " + std::to_string(task.index) +
                                      ", epoch " + std::to_string(epoch));
      }

      std::vector<ParamRef> params = model.parameters();
      if (config.grad_clip_norm) clip_grad_norm(params, *config.grad_clip_norm);
      opt.step(params);

      epoch_loss += total;
      ++batch_count;
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / static_cast<double>(std::max<int64_t>(1, batch_count));
    stats.val_loss = evaluate_val_loss(model, data.val.empty() ? data.train : data.val, task,
                                       config, kIgnore);
    stats.lr = opt.lr();
    rec.epochs.push_back(stats);

    opt.set_lr(opt.lr() * plateau.observe(stats.val_loss));
  }

  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                         .count();
  return rec;
}

namespace {

void check_contiguous_channels(const TaskDefinition& task) {
  for (size_t i = 0; i < task.seen_classes.size(); ++i)
    CISS_CHECK(task.seen_classes[i] == static_cast<int>(i), config,
               "the compact head requires class splits that keep seen classes contiguous "
               "from 0");
}

} // namespace

SequenceResult run_sequence(const Dataset& dataset, const TaskStream& stream,
                            const TrainConfig& config) {
  config.validate();
  CISS_CHECK(stream.tasks.size() >= 2, config, "run_sequence needs at least two tasks");
  for (const TaskDefinition& t : stream.tasks) check_contiguous_channels(t);

  SequenceResult result;
  Rng init_rng(mix_seed(config.seed, 0xA11CE, 0));
  MinisegConfig mcfg;
  mcfg.input_height = dataset.samples.at(0).height();
  mcfg.input_width = dataset.samples.at(0).width();
  mcfg.num_classes = static_cast<int>(stream.tasks[0].seen_classes.size());
  mcfg.head_kind = config.head_kind;
  LayerTapModel model = make_miniseg(mcfg, init_rng);

  MethodContext context;
  LayerTapModel teacher;
  for (size_t t = 0; t < stream.tasks.size(); ++t) {
    const TaskDefinition& task = stream.tasks[t];
    result.records.push_back(train_task(model, stream.task_data[t], task, config, context));

    if (t == 0) result.f0 = model.clone();
    if (t + 1 == stream.tasks.size()) break;

    // consolidate on the task-t training split before moving on
    if (config.method == Method::ewc || config.method == Method::mas) {
      std::vector<const SegSample*> ptrs;
      for (const SegSample& s : stream.task_data[t].train) ptrs.push_back(&s);
      // gradients are taken on a clone: estimation forward passes must not
      // move the training model's normalization statistics
      LayerTapModel probe = model.clone();
      result.importance = std::make_unique<ImportanceEstimate>(estimate_importance(
          probe, ptrs,
          config.method == Method::ewc ? ImportanceMethod::ewc : ImportanceMethod::mas,
          config.importance_samples, stream.catalog.ignore_id));
      context.importance = result.importance.get();
    } else if (config.method == Method::replay) {
      if (!result.buffer)
        result.buffer = std::make_unique<ReplayBuffer>(config.replay_capacity);
      Rng buffer_rng(mix_seed(config.seed, 0xB0FFE, t));
      if (config.replay_capacity > 0) {
        result.buffer->populate(gather(dataset, stream.task_data[t].train_source_ids),
                                task.new_classes, task, stream.catalog, buffer_rng);
      }
      context.buffer = result.buffer.get();
    } else if (config.method == Method::lwf) {
      teacher = model.clone();
      context.old_model = &teacher;
    }

    const TaskDefinition& next = stream.tasks[t + 1];
    Rng extend_rng(mix_seed(config.seed, 0xE87E4D, t));
    model.extend_classifier(static_cast<int>(next.new_classes.size()), extend_rng);
  }

  result.f1 = std::move(model);
  return result;
}

SequenceResult train_offline(const Dataset& dataset, const TaskStream& joint_stream,
                             const TrainConfig& config) {
  config.validate();
  CISS_CHECK(joint_stream.tasks.size() == 1, config,
             "train_offline expects a single joint task");
  check_contiguous_channels(joint_stream.tasks[0]);

  SequenceResult result;
  Rng init_rng(mix_seed(config.seed, 0xA11CE, 0));
  MinisegConfig mcfg;
  mcfg.input_height = dataset.samples.at(0).height();
  mcfg.input_width = dataset.samples.at(0).width();
  mcfg.num_classes = static_cast<int>(joint_stream.tasks[0].seen_classes.size());
  mcfg.head_kind = config.head_kind;
  LayerTapModel model = make_miniseg(mcfg, init_rng);

  result.records.push_back(train_task(model, joint_stream.task_data[0], joint_stream.tasks[0],
                                      config, MethodContext{}));
  result.f0 = model.clone();
  result.f1 = std::move(model);
  return result;
}

HyperChoice select_hyperparameters(Method method, const HyperGrid& grid, const Dataset& dataset,
                                   const TaskStream& stream, const TrainConfig& base_config) {
  CISS_CHECK(!grid.learning_rates.empty(), config, "hyperparameter grid has no learning rates");
  CISS_CHECK(stream.tasks.size() >= 2, config, "hyperparameter selection needs two tasks");
  const bool needs_lambda =
      method == Method::ewc || method == Method::mas || method == Method::lwf;
  CISS_CHECK(!needs_lambda || !grid.lambdas.empty(), config,
             "hyperparameter grid has no lambda values");

  HyperChoice choice;
  choice.config = base_config;
  choice.config.method = method;
  json trace;

  // shared task-0 state for every candidate
  TrainConfig stage0 = base_config;
  stage0.method = method;
  SequenceResult seq;
  {
    TrainConfig probe = stage0;
    probe.method = method;
    // run the full sequence machinery once to obtain f0 + consolidation
    // artifacts, then retrain task 1 per candidate from that state
    probe.epochs = base_config.epochs;
    seq = run_sequence(dataset, stream, probe);
  }
  const TaskDefinition& task1 = stream.tasks[1];
  const std::vector<SegSample>& eval_set = stream.val_at_step[1];

  auto train_candidate = [&](Method m, double lr, double lambda) {
    LayerTapModel model = seq.f0.clone();
    Rng extend_rng(mix_seed(base_config.seed, 0xE87E4D, 0));
    model.extend_classifier(static_cast<int>(task1.new_classes.size()), extend_rng);
    TrainConfig cfg = base_config;
    cfg.method = m;
    cfg.lr_later = lr;
    cfg.lambda = lambda;
    MethodContext ctx;
    if (m == Method::ewc || m == Method::mas) ctx.importance = seq.importance.get();
    if (m == Method::replay) ctx.buffer = seq.buffer.get();
    if (m == Method::lwf) ctx.old_model = &seq.f0;
    train_task(model, stream.task_data[1], task1, cfg, ctx);
    return model;
  };

  // stage 1: learning rate by new-task validation mIoU under fine-tuning
  double best_lr = grid.learning_rates[0];
  if (grid.learning_rates.size() > 1) {
    double best_score = -1.0;
    for (double lr : grid.learning_rates) {
      LayerTapModel model = train_candidate(Method::finetune, lr, 0.0);
      const ConfusionMatrix cm = confusion_matrix(model, eval_set, stream.catalog);
      const MiouResult r = miou(cm, task1.new_classes);
      trace["stage1"].push_back({{"lr", lr}, {"new_miou", r.value}});
      if (r.value > best_score) {
        best_score = r.value;
        best_lr = lr;
      }
    }
    choice.stage1_new_miou = best_score;
  }
  choice.config.lr_later = best_lr;

  // stage 2: lambda by all-class validation mIoU with the actual method
  if (needs_lambda) {
    double best_lambda = grid.lambdas[0];
    if (grid.lambdas.size() > 1) {
      double best_score = -1.0;
      for (double lambda : grid.lambdas) {
        LayerTapModel model = train_candidate(method, best_lr, lambda);
        const ConfusionMatrix cm = confusion_matrix(model, eval_set, stream.catalog);
        const MiouResult r = miou(cm, task1.seen_classes);
        trace["stage2"].push_back({{"lambda", lambda}, {"all_miou", r.value}});
        if (r.value > best_score) {
          best_score = r.value;
          best_lambda = lambda;
        }
      }
      choice.stage2_all_miou = best_score;
    }
    choice.config.lambda = best_lambda;
  }
  choice.trace = std::move(trace);
  return choice;
}

} // namespace ciss
