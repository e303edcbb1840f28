#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ciss/rng.hpp"
#include "ciss/tensor.hpp"

namespace ciss {

// Label space of a dataset. Class ids are contiguous from 0, background is
// class 0, and 255 marks pixels excluded from loss and metrics.
struct ClassCatalog {
  int num_classes = 0;
  int background_id = 0;
  int ignore_id = 255;
  std::vector<std::string> names;

  bool contains(int id) const { return id >= 0 && id < num_classes; }
  std::vector<int> all_classes() const;
  std::vector<int> entity_classes() const; // every class except background
  void validate() const;
};

// One image/label pair. image is CHW in [0,1], label is HW with class ids or
// ignore_id. Image values are quantized to the 8-bit grid so that the
// in-memory dataset and its PNG round-trip are identical.
struct SegSample {
  Tensor image;   // {3, H, W}
  IntTensor label; // {H, W}

  int height() const { return image.dim(1); }
  int width() const { return image.dim(2); }
};

struct SyntheticSceneConfig {
  int num_classes = 7; // including background
  int height = 64;
  int width = 64;
  int shapes_min = 2;
  int shapes_max = 3;
  int num_train = 300;
  int num_val = 60;
  int num_test = 80;
  uint64_t seed = 7;

  nlohmann::json to_json() const;
  static SyntheticSceneConfig from_json(const nlohmann::json& j);
};

struct Dataset {
  ClassCatalog catalog;
  std::vector<SegSample> samples;
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  std::vector<int> test_ids;
  uint64_t seed = 0;
  std::string config_echo; // serialized generator config, "" for external data
};

// Deterministic scene generator: flat-color shapes on a textured noise
// background. Each entity class is a fixed (shape, hue) archetype; the
// archetype table deliberately places near-hue shape pairs (square/diamond,
// up/down triangle) so that later tasks introduce look-alikes of earlier
// classes. The first shape of image i cycles through a seeded permutation of
// the entity classes, which guarantees every class appears in at least
// 1/(num_classes-1) of the images of every contiguous split.
Dataset generate_synthetic_dataset(const SyntheticSceneConfig& config);

// Directory layout: images/%06d.png (RGB), labels/%06d.png (single channel
// class ids, 255 = ignore), manifest.json (config echo, class names, split
// membership, seed). Any dataset in this layout can be loaded, so externally
// converted corpora (e.g. a PascalVOC subset) plug in the same way.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<const SegSample*> gather(const Dataset& ds, const std::vector<int>& ids);

} // namespace ciss
