#include "ciss/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ciss/cka.hpp"
#include "ciss/error.hpp"
#include "ciss/metrics.hpp"
#include "ciss/plots.hpp"
#include "ciss/probes.hpp"
#include "ciss/snapshot.hpp"
#include "ciss/stitch.hpp"

namespace ciss {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reference penalty weights; EWC additionally clips the gradient norm.
constexpr double kLambdaEwc = 10000.0;
constexpr double kLambdaMas = 5000.0;
constexpr double kLambdaLwf = 6.0;
constexpr double kEwcGradClip = 10.0;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  CISS_CHECK(in.good(), io, "cannot read " + path.string());
  return json::parse(in);
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  CISS_CHECK(out.good(), io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

} // namespace

void apply_method_defaults(TrainConfig& train, Method method) {
  train.method = method;
  switch (method) {
    case Method::ewc:
      train.lambda = kLambdaEwc;
      train.grad_clip_norm = kEwcGradClip;
      break;
    case Method::mas:
      train.lambda = kLambdaMas;
      break;
    case Method::lwf:
      train.lambda = kLambdaLwf;
      break;
    default:
      train.lambda = 0.0;
      break;
  }
}

json DiagnosticsConfig::to_json() const {
  return json{{"probes", probes},
              {"retrain_epochs", retrain_epochs},
              {"cka_positions", cka_positions},
              {"prediction_samples", prediction_samples}};
}

DiagnosticsConfig DiagnosticsConfig::from_json(const json& j) {
  DiagnosticsConfig c;
  if (j.contains("probes")) c.probes = j["probes"].get<std::vector<std::string>>();
  c.retrain_epochs = j.value("retrain_epochs", c.retrain_epochs);
  c.cka_positions = j.value("cka_positions", c.cka_positions);
  c.prediction_samples = j.value("prediction_samples", c.prediction_samples);
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["output_root"] = output_root.string();
  if (dataset_path)
    j["dataset"] = json{{"path", *dataset_path}};
  else
    j["dataset"] = dataset.to_json();
  j["tasks"] = json{{"splits", splits}, {"regime", to_string(regime)}};
  json t = train.to_json();
  t["approach"] = offline ? "offline" : to_string(train.method);
  j["train"] = t;
  j["diagnostics"] = diagnostics.to_json();
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("output_root")) c.output_root = j["output_root"].get<std::string>();
  if (j.contains("dataset")) {
    if (j["dataset"].contains("path"))
      c.dataset_path = j["dataset"]["path"].get<std::string>();
    else
      c.dataset = SyntheticSceneConfig::from_json(j["dataset"]);
  }
  if (j.contains("tasks")) {
    const json& t = j["tasks"];
    if (t.contains("splits")) c.splits = t["splits"].get<std::vector<std::vector<int>>>();
    if (t.contains("regime")) c.regime = regime_from_string(t["regime"].get<std::string>());
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    std::string approach = t.value("approach", t.value("method", "finetune"));
    c.offline = approach == "offline";
    json tj = t;
    if (c.offline) tj["method"] = "finetune";
    c.train = TrainConfig::from_json(tj);
    if (!c.offline && !t.contains("lambda")) {
      // fall back to the method's reference penalty weight
      const auto clip = c.train.grad_clip_norm;
      apply_method_defaults(c.train, c.train.method);
      if (t.contains("grad_clip_norm")) c.train.grad_clip_norm = clip;
    }
  }
  if (j.contains("diagnostics")) c.diagnostics = DiagnosticsConfig::from_json(j["diagnostics"]);
  c.train.seed = c.seed;
  const char* env_out = std::getenv("CISSBENCH_OUT");
  if (env_out && *env_out) c.output_root = env_out;
  return c;
}

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  if (name == "voc15-5-mini") {
    ExperimentConfig c;
    c.dataset = SyntheticSceneConfig{};
    c.splits = {{1, 2, 3, 4}, {5, 6}};
    c.regime = Regime::disjoint;
    c.train = TrainConfig{};
    return c;
  }
  raise(ErrorKind::config, "unknown preset '" + name + "' (valid: voc15-5-mini)");
}

void ExperimentConfig::apply_override(json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  CISS_CHECK(eq != std::string::npos && eq > 0, config,
             "--set expects key.path=value, got '" + assignment + "'");
  const std::string keypath = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &j;
  std::stringstream ss(keypath);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  CISS_CHECK(!keys.empty(), config, "--set has an empty key path");
  for (size_t i = 0; i + 1 < keys.size(); ++i) node = &((*node)[keys[i]]);

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value; // plain string
  }
  (*node)[keys.back()] = parsed;
}

std::string json_hash(const json& j) {
  const std::string s = j.dump(); // nlohmann objects iterate in sorted key order
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::dataset_hash() const {
  if (dataset_path) return json_hash(json{{"path", *dataset_path}});
  return json_hash(dataset.to_json());
}

std::string ExperimentConfig::run_hash() const {
  json j;
  j["dataset"] = dataset_path ? json{{"path", *dataset_path}} : dataset.to_json();
  j["tasks"] = json{{"splits", splits}, {"regime", to_string(regime)}};
  json t = train.to_json();
  t["approach"] = offline ? "offline" : to_string(train.method);
  j["train"] = t;
  j["seed"] = seed;
  return json_hash(j);
}

std::string ExperimentConfig::run_id() const {
  std::ostringstream id;
  id << (offline ? "offline" : to_string(train.method)) << "-" << to_string(regime) << "-"
     << to_string(train.loss_kind);
  if (train.head_kind == HeadKind::weight_normalized) id << "+wn";
  id << "-s" << seed << "-" << run_hash().substr(0, 8);
  return id.str();
}

Dataset ensure_dataset(const ExperimentConfig& config) {
  if (config.dataset_path) return load_dataset(*config.dataset_path);
  const fs::path dir = config.output_root / "datasets" / ("ds-" + config.dataset_hash().substr(0, 12));
  if (!fs::exists(dir / "manifest.json")) {
    Dataset ds = generate_synthetic_dataset(config.dataset);
    fs::create_directories(dir);
    save_dataset(ds, dir);
    return ds;
  }
  return load_dataset(dir);
}

TaskStream stream_for(const ExperimentConfig& config, const Dataset& dataset) {
  const auto tasks = make_task_sequence(dataset.catalog, config.splits, config.regime);
  TaskStreamOptions opt;
  opt.seed = config.dataset.seed;
  return build_task_stream(dataset, tasks, opt);
}

TaskStream joint_stream_for(const ExperimentConfig& config, const Dataset& dataset) {
  std::vector<std::vector<int>> joint{{dataset.catalog.entity_classes()}};
  const auto tasks = make_task_sequence(dataset.catalog, joint, Regime::overlapped);
  TaskStreamOptions opt;
  opt.seed = config.dataset.seed;
  return build_task_stream(dataset, tasks, opt);
}

fs::path cmd_generate(const ExperimentConfig& config, bool force) {
  CISS_CHECK(!config.dataset_path, config,
             "cmd_generate needs a synthetic dataset recipe, not an external path");
  const fs::path dir =
      config.output_root / "datasets" / ("ds-" + config.dataset_hash().substr(0, 12));
  if (fs::exists(dir / "manifest.json") && !force) {
    std::cerr << "[generate] dataset exists, skipping: " << dir.string() << "\n";
    return dir;
  }
  Dataset ds = generate_synthetic_dataset(config.dataset);
  fs::create_directories(dir);
  save_dataset(ds, dir);
  std::cerr << "[generate] wrote " << ds.samples.size() << " samples to " << dir.string()
            << "\n";
  return dir;
}

namespace {

json miou_block(const ConfusionMatrix& cm, const std::vector<int>& old_cls,
                const std::vector<int>& new_cls, const std::vector<int>& all_cls) {
  const MiouResult o = miou(cm, old_cls);
  const MiouResult n = miou(cm, new_cls);
  const MiouResult a = miou(cm, all_cls);
  return json{{"old", o.value}, {"new", n.value}, {"all", a.value},
              {"old_defined", o.defined}, {"new_defined", n.defined},
              {"all_defined", a.defined}};
}

} // namespace

fs::path cmd_train(const ExperimentConfig& config, bool force) {
  const fs::path run_dir = config.output_root / "runs" / config.run_id();
  if (fs::exists(run_dir / "metrics.json") && !force) {
    const json existing = read_json_file(run_dir / "config.json");
    if (ExperimentConfig::from_json(existing).run_hash() == config.run_hash()) {
      std::cerr << "[train] run exists, skipping: " << run_dir.string() << "\n";
      return run_dir;
    }
    raise(ErrorKind::config, "run directory " + run_dir.string() +
                                 " holds a different configuration; use --force");
  }
  fs::create_directories(run_dir);

  const Dataset dataset = ensure_dataset(config);
  TrainConfig train = config.train;
  train.diagnostic_dir = run_dir;

  SequenceResult result;
  TaskStream stream;
  if (config.offline) {
    stream = joint_stream_for(config, dataset);
    result = train_offline(dataset, stream, train);
  } else {
    stream = stream_for(config, dataset);
    result = run_sequence(dataset, stream, train);
  }

  // class groups relative to the first/last task of the split
  std::vector<int> old_cls{dataset.catalog.background_id};
  for (int c : config.splits.front()) old_cls.push_back(c);
  std::sort(old_cls.begin(), old_cls.end());
  std::vector<int> new_cls;
  for (size_t t = 1; t < config.splits.size(); ++t)
    for (int c : config.splits[static_cast<size_t>(t)]) new_cls.push_back(c);
  std::sort(new_cls.begin(), new_cls.end());
  const std::vector<int> all_cls = dataset.catalog.all_classes();

  // final evaluation on the last step's cumulative test set
  const TaskStream eval_stream =
      config.offline ? stream_for(config, dataset) : std::move(stream);
  const std::vector<SegSample>& final_test = eval_stream.test_at_step.back();
  const ConfusionMatrix cm = confusion_matrix(result.f1, final_test, dataset.catalog);

  json metrics;
  metrics["run_id"] = config.run_id();
  metrics["config_hash"] = config.run_hash();
  metrics["approach"] = config.offline ? "offline" : to_string(config.train.method);
  metrics["regime"] = to_string(config.regime);
  metrics["loss"] = to_string(config.train.loss_kind);
  metrics["head"] = to_string(config.train.head_kind);
  metrics["seed"] = config.seed;
  metrics["miou"] = miou_block(cm, old_cls, new_cls, all_cls);
  {
    const MiouResult a = miou(cm, all_cls);
    metrics["per_class_iou"] = a.per_class;
  }
  metrics["background_fraction_of_old_truth"] =
      prediction_fraction(cm, [&] {
        std::vector<int> v;
        for (int c : old_cls)
          if (c != dataset.catalog.background_id) v.push_back(c);
        return v;
      }(), dataset.catalog.background_id);
  {
    // f0 on the first step's test data, first-task classes
    const ConfusionMatrix cm0 =
        confusion_matrix(result.f0, eval_stream.test_at_step.front(), dataset.catalog);
    metrics["miou_f0_task0"] = miou(cm0, old_cls).value;
  }
  json epochs = json::array();
  double wall = 0.0;
  for (const RunRecord& rec : result.records) {
    json per_task = json::array();
    for (const EpochStats& e : rec.epochs)
      per_task.push_back(
          json{{"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}});
    epochs.push_back(json{{"task", rec.task_index}, {"epochs", per_task}});
    wall += rec.wall_seconds;
  }
  metrics["records"] = epochs;
  metrics["wall_seconds"] = wall;

  cm.to_csv(run_dir / "confusion.csv", dataset.catalog.names);
  {
    json meta0 = take_model_meta(result.f0);
    meta0["task_index"] = 0;
    meta0["method"] = config.offline ? "offline" : to_string(config.train.method);
    meta0["config_hash"] = config.run_hash();
    save_snapshot_file(run_dir / "f0.ckpt", take_snapshot(result.f0, meta0));
    json meta1 = take_model_meta(result.f1);
    meta1["task_index"] = static_cast<int>(config.splits.size()) - 1;
    meta1["method"] = config.offline ? "offline" : to_string(config.train.method);
    meta1["config_hash"] = config.run_hash();
    save_snapshot_file(run_dir / "f1.ckpt", take_snapshot(result.f1, meta1));
  }
  if (result.buffer && !result.buffer->empty()) result.buffer->save(run_dir / "buffer");
  write_json_file(run_dir / "config.json", config.to_json());
  write_json_file(run_dir / "metrics.json", metrics);
  std::cerr << "[train] " << config.run_id() << ": all-class mIoU "
            << metrics["miou"]["all"].get<double>() << " (" << wall << " s)\n";
  return run_dir;
}

void cmd_diagnose(const fs::path& run_dir, const std::vector<std::string>& probes_in,
                  bool force) {
  const ExperimentConfig config =
      ExperimentConfig::from_json(read_json_file(run_dir / "config.json"));
  std::vector<std::string> probes =
      probes_in.empty() ? config.diagnostics.probes : probes_in;
  const Dataset dataset = ensure_dataset(config);
  const TaskStream stream = stream_for(config, dataset);

  LayerTapModel f0 = model_from_snapshot(load_snapshot_file(run_dir / "f0.ckpt"));
  LayerTapModel f1 = model_from_snapshot(load_snapshot_file(run_dir / "f1.ckpt"));

  std::vector<int> first_classes = stream.tasks.front().seen_classes;

  auto wants = [&](const std::string& p) {
    return std::find(probes.begin(), probes.end(), p) != probes.end();
  };
  auto fresh = [&](const fs::path& artifact) { return force || !fs::exists(artifact); };

  if (wants("confusion") && fresh(run_dir / "confusion.csv")) {
    const ConfusionMatrix cm =
        confusion_matrix(f1, stream.test_at_step.back(), dataset.catalog);
    cm.to_csv(run_dir / "confusion.csv", dataset.catalog.names);
  }
  if (wants("stitch") && fresh(run_dir / "stitch.json")) {
    StitchReport report = stitch_profile(f1, f0, stream.test_at_step.front(), first_classes,
                                         dataset.catalog);
    write_json_file(run_dir / "stitch.json", report.to_json());
  }
  if (wants("cka") && fresh(run_dir / "cka.json")) {
    CkaProfileOptions opt;
    opt.positions = config.diagnostics.cka_positions;
    std::vector<SegSample> probe(stream.test_at_step.front().begin(),
                                 stream.test_at_step.front().end());
    const auto profile = cka_profile(f0, f1, probe, opt);
    json j;
    j["cka"] = json::array();
    for (const CkaResult& r : profile)
      j["cka"].push_back(r.defined ? json(r.value) : json(nullptr));
    j["encoder_end"] = f0.encoder_end();
    write_json_file(run_dir / "cka.json", j);
  }
  if (wants("bias") && fresh(run_dir / "bias.json")) {
    const BiasProfile profile = classifier_bias_profile(f1, first_classes);
    write_json_file(run_dir / "bias.json", profile.to_json());
  }
  if (wants("retrain") && fresh(run_dir / "retrain.json")) {
    DecoderRetrainConfig rc;
    rc.epochs = config.diagnostics.retrain_epochs;
    rc.batch_size = config.train.batch_size;
    std::vector<SegSample> joint_train, joint_test;
    for (int id : dataset.train_ids) joint_train.push_back(dataset.samples[static_cast<size_t>(id)]);
    for (int id : dataset.test_ids) joint_test.push_back(dataset.samples[static_cast<size_t>(id)]);
    const DecoderRetrainResult r =
        decoder_retrain_accuracy(f1, joint_train, joint_test, dataset.catalog, rc);
    write_json_file(run_dir / "retrain.json", json{{"miou_initial", r.miou_initial},
                                                   {"miou_retrained", r.miou_retrained},
                                                   {"epochs", rc.epochs}});
    r.cm_retrained.to_csv(run_dir / "confusion_retrained.csv", dataset.catalog.names);
  }
  if (wants("predictions") && fresh(run_dir / "predictions.png")) {
    const int k = std::min<int>(config.diagnostics.prediction_samples,
                                static_cast<int>(stream.test_at_step.back().size()));
    std::vector<std::vector<ImageU8>> rows;
    for (int i = 0; i < k; ++i) {
      const SegSample& s = stream.test_at_step.back()[static_cast<size_t>(i)];
      Tensor x({1, 3, s.height(), s.width()});
      std::copy(s.image.data(), s.image.data() + s.image.size(), x.data());
      const IntTensor pred1 = argmax_channels(f1.forward(x, false));
      const IntTensor pred0 = argmax_channels(f0.forward(x, false));
      IntTensor p1({s.height(), s.width()}), p0({s.height(), s.width()});
      std::copy(pred1.data(), pred1.data() + pred1.size(), p1.data());
      std::copy(pred0.data(), pred0.data() + pred0.size(), p0.data());
      rows.push_back({render_image(s.image), render_labels(s.label, dataset.catalog.ignore_id),
                      render_labels(p0, dataset.catalog.ignore_id),
                      render_labels(p1, dataset.catalog.ignore_id)});
    }
    write_image_grid(run_dir / "predictions", rows,
                     {"input", "ground truth", "f0 prediction", "f1 prediction"});
  }
}

fs::path cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& report_dir) {
  fs::create_directories(report_dir);
  std::vector<std::string> missing;
  std::ostringstream md, csv;
  md << "# Experiment report\n\n";
  md << "| run | approach | regime | loss | seed | old mIoU | new mIoU | all mIoU | mIoU_I | "
        "mIoU_R |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|\n";
  csv << "run,approach,regime,loss,seed,miou_old,miou_new,miou_all,miou_initial,"
         "miou_retrained\n";

  LinePlotSpec stitch_plot;
  stitch_plot.title = "Stitched relative mIoU on first-task data";
  stitch_plot.x_label = "cut block index";
  stitch_plot.y_label = "relative mIoU (%)";
  LinePlotSpec cka_plot;
  cka_plot.title = "Per-block linear CKA";
  cka_plot.x_label = "block index";
  cka_plot.y_label = "CKA";

  int plot_count = 0;
  for (const fs::path& dir : run_dirs) {
    if (!fs::exists(dir / "metrics.json")) {
      missing.push_back(dir.string() + ": metrics.json");
      continue;
    }
    const json metrics = read_json_file(dir / "metrics.json");
    const std::string id = metrics.value("run_id", dir.filename().string());
    auto fmt = [](const json& v) {
      if (!v.is_number()) return std::string("-");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
      return std::string(buf);
    };
    json retrain = json::object();
    if (fs::exists(dir / "retrain.json")) retrain = read_json_file(dir / "retrain.json");
    const json miou = metrics.value("miou", json::object());
    md << "| " << id << " | " << metrics.value("approach", "?") << " | "
       << metrics.value("regime", "?") << " | " << metrics.value("loss", "?") << " | "
       << metrics.value("seed", 0) << " | " << fmt(miou.value("old", json()))
       << " | " << fmt(miou.value("new", json())) << " | " << fmt(miou.value("all", json()))
       << " | " << fmt(retrain.value("miou_initial", json())) << " | "
       << fmt(retrain.value("miou_retrained", json())) << " |\n";
    csv << id << "," << metrics.value("approach", "?") << "," << metrics.value("regime", "?")
        << "," << metrics.value("loss", "?") << "," << metrics.value("seed", 0) << ","
        << fmt(miou.value("old", json())) << "," << fmt(miou.value("new", json())) << ","
        << fmt(miou.value("all", json())) << "," << fmt(retrain.value("miou_initial", json()))
        << "," << fmt(retrain.value("miou_retrained", json())) << "\n";

    if (fs::exists(dir / "confusion.csv")) {
      const ConfusionMatrix cm = ConfusionMatrix::from_csv(dir / "confusion.csv");
      HeatmapSpec spec;
      spec.n = cm.num_classes();
      spec.title = "Confusion (row-normalized): " + id;
      for (int i = 0; i < spec.n; ++i) {
        const int64_t rs = cm.row_sum(i);
        for (int j = 0; j < spec.n; ++j)
          spec.values.push_back(rs > 0 ? static_cast<double>(cm.at(i, j)) / rs : 0.0);
      }
      write_heatmap(report_dir / ("confusion_" + id), spec);
      ++plot_count;
    } else {
      missing.push_back(dir.string() + ": confusion.csv");
    }
    if (fs::exists(dir / "stitch.json")) {
      const json s = read_json_file(dir / "stitch.json");
      Series series;
      series.name = metrics.value("approach", id);
      for (const auto& v : s.at("relative_miou")) series.values.push_back(v.get<double>());
      stitch_plot.series.push_back(series);
      stitch_plot.shade_until_x = s.value("encoder_end", 8) - 0.5;
    } else {
      missing.push_back(dir.string() + ": stitch.json");
    }
    if (fs::exists(dir / "cka.json")) {
      const json s = read_json_file(dir / "cka.json");
      Series series;
      series.name = metrics.value("approach", id);
      for (const auto& v : s.at("cka"))
        series.values.push_back(v.is_null() ? 0.0 : v.get<double>());
      cka_plot.series.push_back(series);
      cka_plot.shade_until_x = s.value("encoder_end", 8) - 0.5;
    } else {
      missing.push_back(dir.string() + ": cka.json");
    }
    if (fs::exists(dir / "bias.json")) {
      const json b = read_json_file(dir / "bias.json");
      BarPlotSpec spec;
      spec.title = "Final-layer bias: " + id;
      spec.values = b.at("bias").get<std::vector<double>>();
      spec.groups = b.at("group").get<std::vector<std::string>>();
      for (size_t i = 0; i < spec.values.size(); ++i) spec.labels.push_back(std::to_string(i));
      write_bar_plot(report_dir / ("bias_" + id), spec);
      ++plot_count;
    } else {
      missing.push_back(dir.string() + ": bias.json");
    }
    if (fs::exists(dir / "predictions.png")) {
      fs::copy_file(dir / "predictions.png", report_dir / ("predictions_" + id + ".png"),
                    fs::copy_options::overwrite_existing);
    }
  }

  if (!stitch_plot.series.empty()) {
    write_line_plot(report_dir / "stitch_profile", stitch_plot);
    ++plot_count;
  }
  if (!cka_plot.series.empty()) {
    write_line_plot(report_dir / "cka_profile", cka_plot);
    ++plot_count;
  }

  if (!missing.empty()) {
    md << "\n## Missing artifacts\n\n";
    for (const std::string& m : missing) md << "- missing: " << m << "\n";
  }
  md << "\n(" << plot_count << " plots)\n";
  std::ofstream(report_dir / "summary.md") << md.str();
  std::ofstream(report_dir / "summary.csv") << csv.str();
  return report_dir;
}

fs::path cmd_matrix(const ExperimentConfig& base, const std::vector<std::string>& methods,
                    const std::vector<std::string>& regimes,
                    const std::vector<std::string>& losses, bool force) {
  std::vector<fs::path> run_dirs;
  std::vector<json> rows;
  for (const std::string& regime_name : regimes) {
    for (const std::string& loss_name : losses) {
      for (const std::string& method_name : methods) {
        ExperimentConfig cfg = base;
        cfg.regime = regime_from_string(regime_name);
        if (loss_name == "ce" || loss_name == "unce") {
          cfg.train.loss_kind = loss_kind_from_string(loss_name);
          cfg.train.head_kind = HeadKind::standard;
        } else if (loss_name == "unce+wn") {
          cfg.train.loss_kind = LossKind::unce;
          cfg.train.head_kind = HeadKind::weight_normalized;
        } else {
          raise(ErrorKind::config,
                "unknown loss '" + loss_name + "' (valid: ce, unce, unce+wn)");
        }
        if (method_name == "offline") {
          cfg.offline = true;
          apply_method_defaults(cfg.train, Method::finetune);
        } else {
          cfg.offline = false;
          apply_method_defaults(cfg.train, method_from_string(method_name));
        }
        const fs::path dir = cmd_train(cfg, force);
        run_dirs.push_back(dir);
        json row = read_json_file(dir / "metrics.json");
        rows.push_back(row);
      }
    }
  }

  const fs::path matrix_dir = base.output_root / "matrix";
  fs::create_directories(matrix_dir);
  std::ostringstream md, csv;
  csv << "method,regime,loss,miou_old,miou_new,miou_all\n";
  md << "# Method x regime x loss matrix\n\n";
  for (const std::string& loss_name : losses) {
    md << "\n## Loss: " << loss_name << "\n\n| method |";
    for (const std::string& r : regimes) md << " " << r << " old/new/all |";
    md << "\n|---|";
    for (size_t i = 0; i < regimes.size(); ++i) md << "---|";
    md << "\n";
    for (const std::string& method_name : methods) {
      md << "| " << method_name << " |";
      for (const std::string& regime_name : regimes) {
        for (const json& row : rows) {
          const std::string loss_tag =
              row.value("loss", "") + (row.value("head", "") == "weight_normalized" ? "+wn" : "");
          if (row.value("approach", "") ==
                  (method_name == "offline" ? "offline" : method_name) &&
              row.value("regime", "") == regime_name && loss_tag == loss_name) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), " %.3f / %.3f / %.3f |",
                          row["miou"]["old"].get<double>(), row["miou"]["new"].get<double>(),
                          row["miou"]["all"].get<double>());
            md << buf;
            csv << method_name << "," << regime_name << "," << loss_name << ","
                << row["miou"]["old"].get<double>() << "," << row["miou"]["new"].get<double>()
                << "," << row["miou"]["all"].get<double>() << "\n";
          }
        }
      }
      md << "\n";
    }
  }
  std::ofstream(matrix_dir / "matrix_summary.md") << md.str();
  std::ofstream(matrix_dir / "matrix_summary.csv") << csv.str();
  return matrix_dir;
}

} // namespace ciss
