#include "ciss/replay.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ciss/error.hpp"
#include "ciss/image_io.hpp"

namespace ciss {

using nlohmann::json;

bool ReplayBuffer::empty() const { return total_samples() == 0; }

int64_t ReplayBuffer::total_samples() const {
  int64_t n = 0;
  for (const auto& [cls, v] : store_) n += static_cast<int64_t>(v.size());
  return n;
}

const std::vector<SegSample>& ReplayBuffer::samples_for(int cls) const {
  static const std::vector<SegSample> kEmpty;
  auto it = store_.find(cls);
  return it == store_.end() ? kEmpty : it->second;
}

std::vector<int> ReplayBuffer::stored_classes() const {
  std::vector<int> out;
  for (const auto& [cls, v] : store_)
    if (!v.empty()) out.push_back(cls);
  return out;
}

ReplayBuffer::PopulateReport ReplayBuffer::populate(
    const std::vector<const SegSample*>& candidates, const std::vector<int>& classes,
    const TaskDefinition& seen_task, const ClassCatalog& catalog, Rng& rng) {
  PopulateReport report;
  for (int cls : classes) {
    std::vector<const SegSample*> with_cls;
    for (const SegSample* s : candidates) {
      for (int64_t i = 0; i < s->label.size(); ++i) {
        if (s->label[i] == cls) {
          with_cls.push_back(s);
          break;
        }
      }
    }
    if (with_cls.empty()) {
      report.stored[cls] = 0;
      report.warnings.push_back("class " + std::to_string(cls) +
                                " absent from the candidate set; stored 0 samples");
      continue;
    }
    rng.shuffle(with_cls);
    const int take = std::min<int>(capacity_, static_cast<int>(with_cls.size()));
    std::vector<SegSample>& slot = store_[cls];
    slot.clear();
    for (int i = 0; i < take; ++i) {
      // restrict to classes seen at storage time
      slot.push_back(restrict_to_seen(*with_cls[static_cast<size_t>(i)], seen_task, catalog));
      if (seen_task.regime != Regime::full_disjoint) {
        // unseen pixels fold into the background rather than being ignored
        SegSample& s = slot.back();
        for (int64_t j = 0; j < s.label.size(); ++j)
          if (s.label[j] == catalog.ignore_id &&
              with_cls[static_cast<size_t>(i)]->label[j] != catalog.ignore_id)
            s.label[j] = catalog.background_id;
      }
    }
    report.stored[cls] = take;
    if (take < capacity_)
      report.warnings.push_back("class " + std::to_string(cls) + " has only " +
                                std::to_string(take) + " candidates (capacity " +
                                std::to_string(capacity_) + ")");
  }
  return report;
}

std::vector<const SegSample*> ReplayBuffer::sample_batch(int k, Rng& rng) const {
  std::vector<const SegSample*> all;
  for (const auto& [cls, v] : store_)
    for (const SegSample& s : v) all.push_back(&s);
  CISS_CHECK(!all.empty(), empty_dataset, "sampling from an empty replay buffer");
  std::vector<const SegSample*> out;
  out.reserve(static_cast<size_t>(k));
  if (k <= static_cast<int>(all.size())) {
    rng.shuffle(all);
    out.assign(all.begin(), all.begin() + k);
  } else {
    for (int i = 0; i < k; ++i)
      out.push_back(all[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(all.size())))]);
  }
  return out;
}

void ReplayBuffer::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  json index;
  index["capacity_per_class"] = capacity_;
  json entries = json::array();
  int file_id = 0;
  char buf[32];
  for (const auto& [cls, v] : store_) {
    for (const SegSample& s : v) {
      std::snprintf(buf, sizeof(buf), "%06d.png", file_id);
      const int h = s.height(), w = s.width();
      ImageU8 rgb{w, h, 3, std::vector<uint8_t>(static_cast<size_t>(w) * h * 3)};
      ImageU8 lab{w, h, 1, std::vector<uint8_t>(static_cast<size_t>(w) * h)};
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < 3; ++c)
            rgb.pixels[(static_cast<size_t>(y) * w + x) * 3 + c] =
                static_cast<uint8_t>(std::lround(s.image.at(c, y, x) * 255.0));
          lab.pixels[static_cast<size_t>(y) * w + x] = static_cast<uint8_t>(s.label.at(y, x));
        }
      write_png(dir / "images" / buf, rgb);
      write_png(dir / "labels" / buf, lab);
      entries.push_back({{"file", buf}, {"class", cls}});
      ++file_id;
    }
  }
  index["entries"] = entries;
  std::ofstream out(dir / "index.json");
  out << index.dump(2) << "\n";
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  CISS_CHECK(in.good(), io, "replay buffer index missing in " + dir.string());
  json index = json::parse(in);
  ReplayBuffer buf(index.at("capacity_per_class").get<int>());
  for (const auto& e : index.at("entries")) {
    const std::string file = e.at("file").get<std::string>();
    const int cls = e.at("class").get<int>();
    const ImageU8 rgb = read_png(dir / "images" / file);
    const ImageU8 lab = read_png(dir / "labels" / file);
    SegSample s;
    s.image = Tensor({3, rgb.height, rgb.width});
    s.label = IntTensor({lab.height, lab.width});
    for (int y = 0; y < rgb.height; ++y)
      for (int x = 0; x < rgb.width; ++x) {
        for (int c = 0; c < 3; ++c)
          s.image.at(c, y, x) =
              rgb.pixels[(static_cast<size_t>(y) * rgb.width + x) * 3 + c] / 255.0;
        s.label.at(y, x) = lab.pixels[static_cast<size_t>(y) * lab.width + x];
      }
    buf.store_[cls].push_back(std::move(s));
  }
  return buf;
}

} // namespace ciss
