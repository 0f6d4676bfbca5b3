#include "gcahng/checkpoint.hpp"

#include "binary_io.hpp"
#include "gcahng/error.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <set>

namespace gcahng {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'C', 'A', 'P'};

std::vector<TensorRecord> records_of(const ParameterList& params) {
  std::vector<TensorRecord> out;
  for (const auto& p : params) {
    const Matrix& v = p.var.value();
    TensorRecord r;
    r.name = p.name;
    r.rows = static_cast<std::uint32_t>(v.rows());
    r.cols = static_cast<std::uint32_t>(v.cols());
    r.values.reserve(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < v.cols(); ++j) r.values.push_back(static_cast<float>(v(i, j)));
    out.push_back(std::move(r));
  }
  return out;
}

void write_blob(const fs::path& path, const std::vector<TensorRecord>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_le<std::uint32_t>(out, t.rows);
    detail::write_le<std::uint32_t>(out, t.cols);
    for (float v : t.values) detail::write_le<float>(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<TensorRecord> read_blob(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing parameter blob " + path.string());
  try {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kMagic)
      throw CheckpointError(path.string() + ": bad magic, expected GCAP");
    const auto version = detail::read_le<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion)
      throw CheckpointError(path.string() + ": blob version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    const auto count = detail::read_le<std::uint32_t>(in, "tensor count");
    std::vector<TensorRecord> out(count);
    for (auto& t : out) {
      const auto len = detail::read_le<std::uint32_t>(in, "name length");
      if (len > 4096) throw CheckpointError(path.string() + ": implausible tensor name length");
      t.name.resize(len);
      if (!in.read(t.name.data(), len)) throw CheckpointError(path.string() + ": truncated tensor name");
      t.rows = detail::read_le<std::uint32_t>(in, "rows");
      t.cols = detail::read_le<std::uint32_t>(in, "cols");
      const std::uint64_t n = std::uint64_t{t.rows} * t.cols;
      if (n > (std::uint64_t{1} << 30)) throw CheckpointError(path.string() + ": implausible tensor size");
      t.values.resize(static_cast<std::size_t>(n));
      for (float& v : t.values) v = detail::read_le<float>(in, "tensor values");
    }
    if (in.peek() != std::char_traits<char>::eof())
      throw CheckpointError(path.string() + ": trailing bytes after last tensor");
    return out;
  } catch (const ParseError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string config_hash(const nlohmann::ordered_json& j) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Checkpoint snapshot(const Model& model, const TrainConfig& cfg, int epoch) {
  Checkpoint c;
  c.config = to_json(cfg);
  c.config_hash = config_hash(c.config);
  c.epoch = epoch;
  c.input_dim = model.input_dim();
  c.num_classes = model.num_classes();
  for (const auto& [group, params] : model.parameter_groups()) c.groups[group] = records_of(params);
  return c;
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
  const auto groups = model.parameter_groups();
  std::set<std::string> want, have;
  for (const auto& [g, p] : groups) want.insert(g);
  for (const auto& [g, t] : ckpt.groups) have.insert(g);
  if (want != have) {
    auto join = [](const std::set<std::string>& s) {
      std::string out;
      for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
      return out;
    };
    throw CheckpointError("parameter groups differ: model has {" + join(want) + "}, checkpoint has {" +
                          join(have) + "}");
  }
  for (const auto& [g, params] : groups) {
    const auto& tensors = ckpt.groups.at(g);
    if (tensors.size() != params.size())
      throw CheckpointError("group " + g + ": expected " + std::to_string(params.size()) + " tensors, found " +
                            std::to_string(tensors.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& p = params[k];
      const auto& t = tensors[k];
      Var var = p.var;
      Matrix& v = var.mutable_value();
      if (t.name != p.name || t.rows != v.rows() || t.cols != v.cols())
        throw CheckpointError("group " + g + ": tensor " + t.name + " (" + std::to_string(t.rows) + "x" +
                              std::to_string(t.cols) + ") does not match " + p.name + " (" +
                              std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + ")");
      for (Index i = 0; i < v.rows(); ++i)
        for (Index j = 0; j < v.cols(); ++j)
          v(i, j) = static_cast<double>(t.values[static_cast<std::size_t>(i * v.cols() + j)]);
    }
  }
}

TrainConfig config_from_checkpoint(const Checkpoint& ckpt) {
  TrainConfig cfg = train_config_from_json(nlohmann::json::parse(ckpt.config.dump()));
  cfg.backbone.input_dim = ckpt.input_dim;
  return cfg;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  const TrainConfig cfg = config_from_checkpoint(ckpt);
  Rng rng(cfg.seed);
  Model model(cfg, ckpt.input_dim, ckpt.num_classes, rng);
  load_parameters(model, ckpt);
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json manifest;
  manifest["format"] = "gcahng-checkpoint";
  manifest["version"] = ckpt.version;
  manifest["epoch"] = ckpt.epoch;
  manifest["input_dim"] = ckpt.input_dim;
  manifest["num_classes"] = ckpt.num_classes;
  manifest["config_hash"] = ckpt.config_hash;
  manifest["config"] = ckpt.config;
  manifest["metric_history"] = ckpt.metric_history;
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (const auto& [g, tensors] : ckpt.groups) {
    const std::string file = g + ".bin";
    write_blob(dir / file, tensors);
    nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
    for (const auto& t : tensors) shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    groups[g] = {{"file", file}, {"tensors", shapes}};
  }
  manifest["groups"] = groups;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw CheckpointError("no manifest.json in " + dir.string());
  nlohmann::ordered_json m;
  try {
    m = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(mpath.string() + ": " + e.what());
  }
  try {
    Checkpoint c;
    c.version = m.at("version").get<int>();
    if (c.version != kCheckpointVersion)
      throw CheckpointError("checkpoint version " + std::to_string(c.version) + " cannot be read by this build (version " +
                            std::to_string(kCheckpointVersion) + "); migrate it by re-exporting with a matching build");
    c.epoch = m.at("epoch").get<int>();
    c.input_dim = m.at("input_dim").get<Index>();
    c.num_classes = m.at("num_classes").get<int>();
    c.config = m.at("config");
    c.config_hash = m.at("config_hash").get<std::string>();
    if (config_hash(c.config) != c.config_hash)
      throw CheckpointError("config hash mismatch in " + mpath.string());
    c.metric_history = m.value("metric_history", nlohmann::ordered_json::array());
    for (const auto& [g, entry] : m.at("groups").items()) {
      auto tensors = read_blob(dir / entry.at("file").get<std::string>());
      const auto& shapes = entry.at("tensors");
      if (shapes.size() != tensors.size())
        throw CheckpointError("group " + g + ": manifest lists " + std::to_string(shapes.size()) +
                              " tensors, blob holds " + std::to_string(tensors.size()));
      for (std::size_t k = 0; k < tensors.size(); ++k) {
        const auto& s = shapes[k];
        if (s.at("name").get<std::string>() != tensors[k].name || s.at("rows").get<std::uint32_t>() != tensors[k].rows ||
            s.at("cols").get<std::uint32_t>() != tensors[k].cols)
          throw CheckpointError("group " + g + ": manifest and blob disagree on tensor " + tensors[k].name);
      }
      c.groups[g] = std::move(tensors);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(mpath.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace gcahng
