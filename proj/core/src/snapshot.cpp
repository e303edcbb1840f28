#include "ciss/snapshot.hpp"

#include <cstring>
#include <fstream>

#include "ciss/error.hpp"

namespace ciss {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'C', 'I', 'S', 'S', 'N', 'A', 'P', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
} // namespace

ParameterSnapshot take_snapshot(LayerTapModel& model, json meta) {
  ParameterSnapshot snap;
  snap.meta = std::move(meta);
  for (const ParamRef& p : model.parameters()) snap.arrays[p.name] = *p.value;
  if (!snap.meta.contains("architecture_id"))
    snap.meta["architecture_id"] = model.architecture_id();
  snap.meta["class_count"] = model.num_classes();
  return snap;
}

void load_snapshot(LayerTapModel& model, const ParameterSnapshot& snap) {
  std::vector<ParamRef> params = model.parameters();
  CISS_CHECK(params.size() == snap.arrays.size(), missing_key,
             "snapshot has " + std::to_string(snap.arrays.size()) + " arrays, model has " +
                 std::to_string(params.size()));
  for (ParamRef& p : params) {
    auto it = snap.arrays.find(p.name);
    CISS_CHECK(it != snap.arrays.end(), missing_key, "snapshot is missing array " + p.name);
    CISS_CHECK(it->second.shape() == p.value->shape(), shape,
               "snapshot array " + p.name + " has shape " + it->second.shape_str() +
                   ", model expects " + p.value->shape_str());
    *p.value = it->second;
  }
}

void save_snapshot_file(const std::filesystem::path& path, const ParameterSnapshot& snap) {
  std::ofstream out(path, std::ios::binary);
  CISS_CHECK(out.good(), io, "cannot open snapshot file for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string meta = snap.meta.dump();
  write_pod<uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_pod<uint64_t>(out, snap.arrays.size());
  for (const auto& [name, tensor] : snap.arrays) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.ndim()));
    for (int d = 0; d < tensor.ndim(); ++d) write_pod<int32_t>(out, tensor.dim(d));
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  CISS_CHECK(out.good(), io, "failed writing snapshot: " + path.string());
}

ParameterSnapshot load_snapshot_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  CISS_CHECK(in.good(), io, "cannot open snapshot file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  CISS_CHECK(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, io,
             "not a snapshot file: " + path.string());
  ParameterSnapshot snap;
  const uint64_t meta_len = read_pod<uint64_t>(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  snap.meta = json::parse(meta);
  const uint64_t count = read_pod<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(in);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int32_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    CISS_CHECK(in.good(), io, "truncated snapshot: " + path.string());
    snap.arrays.emplace(std::move(name), std::move(t));
  }
  return snap;
}

json take_model_meta(const LayerTapModel& model) {
  const MinisegConfig& c = model.config();
  return json{{"architecture_id", model.architecture_id()},
              {"input_height", c.input_height},
              {"input_width", c.input_width},
              {"num_classes", model.num_classes()},
              {"head_kind", to_string(model.head_kind())},
              {"head_init_scale", c.head_init_scale},
              {"width0", c.width0},
              {"width1", c.width1},
              {"width2", c.width2}};
}

LayerTapModel model_from_snapshot(const ParameterSnapshot& snap) {
  const json& m = snap.meta;
  CISS_CHECK(m.contains("width0") && m.contains("num_classes"), missing_key,
             "snapshot metadata lacks model geometry");
  MinisegConfig cfg;
  cfg.input_height = m.at("input_height").get<int>();
  cfg.input_width = m.at("input_width").get<int>();
  cfg.num_classes = m.at("num_classes").get<int>();
  cfg.head_kind = head_kind_from_string(m.at("head_kind").get<std::string>());
  cfg.head_init_scale = m.value("head_init_scale", 0.01);
  cfg.width0 = m.at("width0").get<int>();
  cfg.width1 = m.at("width1").get<int>();
  cfg.width2 = m.at("width2").get<int>();
  Rng rng(0);
  LayerTapModel model = make_miniseg(cfg, rng);
  load_snapshot(model, snap);
  return model;
}

} // namespace ciss
