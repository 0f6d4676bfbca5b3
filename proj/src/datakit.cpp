#include "gcahng/datakit.hpp"

#include "gcahng/error.hpp"
#include "binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gcahng {

namespace fs = std::filesystem;
using detail::read_le;
using detail::write_le;

std::vector<std::vector<Index>> Dataset::rows_by_class() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t r = 0; r < labels.size(); ++r)
    out[static_cast<std::size_t>(labels[r] - 1)].push_back(static_cast<Index>(r));
  return out;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Index>(rows.size()), dim());
  out.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Index>(k)) = features.row(rows[k]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[k])]);
  }
  return out;
}

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (samples_per_class < 2)
    throw ConfigError("samples_per_class must be >= 2 (got " + std::to_string(samples_per_class) +
                      "): every anchor needs a same-class positive in its batch");
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1, got " + std::to_string(input_dim));
  if (!(within_class_stddev > 0.0)) throw ConfigError("within_class_stddev must be > 0");
  if (!(class_center_scale >= 0.0)) throw ConfigError("class_center_scale must be >= 0");
  if (!(overlap_factor >= 0.0 && overlap_factor <= 1.0))
    throw ConfigError("overlap_factor must lie in [0, 1]");
}

Matrix synthetic_centers(const SyntheticDatasetSpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).split(0);
  Matrix centers(spec.num_classes, spec.input_dim);
  for (Index c = 0; c < centers.rows(); ++c) {
    Eigen::RowVectorXd v;
    do {
      v = rng.normal_matrix(1, spec.input_dim, 1.0);
    } while (v.norm() == 0.0);
    centers.row(c) = spec.class_center_scale * v / v.norm();
  }
  const Eigen::RowVectorXd centroid = centers.colwise().mean();
  centers = ((centers.rowwise() - centroid) * (1.0 - spec.overlap_factor)).rowwise() + centroid;
  return centers;
}

Dataset make_synthetic(const SyntheticDatasetSpec& spec) {
  const Matrix centers = synthetic_centers(spec);
  Rng rng = Rng(spec.seed).split(1);
  Dataset out;
  out.num_classes = spec.num_classes;
  out.features.resize(static_cast<Index>(spec.num_classes) * spec.samples_per_class, spec.input_dim);
  Index row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      out.features.row(row) =
          centers.row(c) + rng.normal_matrix(1, spec.input_dim, spec.within_class_stddev);
      out.labels.push_back(c + 1);
    }
  }
  return out;
}

FeatureFormat format_from_path(const fs::path& path) {
  return path.extension() == ".csv" ? FeatureFormat::csv : FeatureFormat::binary;
}

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'C', 'A', 'F'};
constexpr std::uint32_t kBinaryVersion = 1;

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

int parse_label(double value, std::size_t line_no) {
  if (value != std::floor(value) || value < 1.0 || value > 1e9) {
    throw ParseError("line " + std::to_string(line_no) + ": label must be a positive integer class id");
  }
  return static_cast<int>(value);
}

Dataset finish(std::vector<int> labels, std::vector<double> values, Index dim) {
  Dataset out;
  out.labels = std::move(labels);
  out.num_classes = *std::max_element(out.labels.begin(), out.labels.end());
  out.features.resize(static_cast<Index>(out.labels.size()), dim);
  for (Index r = 0; r < out.features.rows(); ++r)
    for (Index c = 0; c < dim; ++c) out.features(r, c) = values[static_cast<std::size_t>(r * dim + c)];
  return out;
}

Dataset load_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<int> labels;
  std::vector<double> values;
  Index dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_commas(line);
    double first;
    if (!parse_double(fields[0], first)) {
      if (labels.empty() && dim < 0) {
        dim = 0;  // header row; dimension still comes from the first record
        continue;
      }
      throw ParseError("line " + std::to_string(line_no) + ": non-numeric label field");
    }
    const auto width = static_cast<Index>(fields.size()) - 1;
    if (width < 1) throw ParseError("line " + std::to_string(line_no) + ": record has no features");
    if (labels.empty()) {
      dim = width;
    } else if (width != dim) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                       " features, found " + std::to_string(width));
    }
    labels.push_back(parse_label(first, line_no));
    for (std::size_t f = 1; f < fields.size(); ++f) {
      double v;
      if (!parse_double(fields[f], v))
        throw ParseError("line " + std::to_string(line_no) + ": field " + std::to_string(f) +
                         " is not a number");
      values.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(path.string() + ": no records");
  return finish(std::move(labels), std::move(values), dim);
}

Dataset load_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4)) throw ParseError(path.string() + ": empty or truncated file");
  if (magic != kMagic) throw ParseError(path.string() + ": bad magic, expected GCAF");
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kBinaryVersion)
    throw ParseError(path.string() + ": unsupported version " + std::to_string(version));
  const auto count = read_le<std::uint64_t>(in, "record count");
  const auto dim = read_le<std::uint32_t>(in, "dim");
  if (count == 0) throw ParseError(path.string() + ": no records");
  if (dim == 0) throw ParseError(path.string() + ": zero feature dimension");
  std::vector<int> labels;
  std::vector<double> values;
  labels.reserve(count);
  values.reserve(count * dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto label = read_le<std::uint32_t>(in, "label");
    if (label == 0) throw ParseError("record " + std::to_string(r) + ": label 0 is not a class id");
    labels.push_back(static_cast<int>(label));
    for (std::uint32_t c = 0; c < dim; ++c) values.push_back(read_le<float>(in, "feature"));
  }
  return finish(std::move(labels), std::move(values), dim);
}

}  // namespace

Dataset load_features(const fs::path& path, FeatureFormat format) {
  return format == FeatureFormat::csv ? load_csv(path) : load_binary(path);
}

void save_features(const Dataset& data, const fs::path& path, FeatureFormat format) {
  if (format == FeatureFormat::csv) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    for (Index r = 0; r < data.size(); ++r) {
      out << data.labels[static_cast<std::size_t>(r)];
      for (Index c = 0; c < data.dim(); ++c) out << ',' << data.features(r, c);
      out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), 4);
  write_le<std::uint32_t>(out, kBinaryVersion);
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.dim()));
  for (Index r = 0; r < data.size(); ++r) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.labels[static_cast<std::size_t>(r)]));
    for (Index c = 0; c < data.dim(); ++c) write_le<float>(out, static_cast<float>(data.features(r, c)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

LabeledBatch sample_balanced(const Dataset& data, int classes_per_batch, int instances_per_class,
                             Rng& rng) {
  if (instances_per_class < 2) {
    throw SamplingError("m = " + std::to_string(instances_per_class) +
                        " instances per class leaves no anchor-positive pair; need m >= 2");
  }
  if (classes_per_batch < 2) throw SamplingError("N must be >= 2 classes per batch");
  if (data.num_classes < classes_per_batch) {
    throw SamplingError("dataset has " + std::to_string(data.num_classes) +
                        " classes, batch needs N = " + std::to_string(classes_per_batch));
  }
  const auto by_class = data.rows_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (static_cast<int>(by_class[c].size()) < instances_per_class) {
      throw SamplingError("class " + std::to_string(c + 1) + " has " +
                          std::to_string(by_class[c].size()) + " samples, batch needs m = " +
                          std::to_string(instances_per_class));
    }
  }

  std::vector<int> classes(by_class.size());
  for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = static_cast<int>(c);
  rng.shuffle(classes.begin(), classes.end());
  classes.resize(static_cast<std::size_t>(classes_per_batch));  // fresh order per batch

  const int n = classes_per_batch, m = instances_per_class;
  LabeledBatch batch;
  batch.classes_per_batch = n;
  batch.instances_per_class = m;
  batch.x.resize(static_cast<Index>(n) * m, data.dim());
  batch.labels.assign(static_cast<std::size_t>(n * m), 0);
  batch.indices.assign(static_cast<std::size_t>(n * m), 0);
  for (int slot = 0; slot < n; ++slot) {
    std::vector<Index> pool = by_class[static_cast<std::size_t>(classes[static_cast<std::size_t>(slot)])];
    // Partial Fisher-Yates: first m entries are a uniform draw without replacement.
    for (int g = 0; g < m; ++g) {
      const auto pick = static_cast<std::size_t>(g) + rng.below(pool.size() - static_cast<std::size_t>(g));
      std::swap(pool[static_cast<std::size_t>(g)], pool[pick]);
      const auto pos = static_cast<std::size_t>(slot + g * n);
      batch.indices[pos] = pool[static_cast<std::size_t>(g)];
      batch.labels[pos] = data.labels[static_cast<std::size_t>(pool[static_cast<std::size_t>(g)])];
      batch.x.row(static_cast<Index>(pos)) = data.features.row(pool[static_cast<std::size_t>(g)]);
    }
  }
  return batch;
}

bool has_group_layout(std::span<const int> labels, int n, int m) {
  if (n <= 0 || m <= 0 || static_cast<int>(labels.size()) != n * m) return false;
  for (int g = 1; g < m; ++g)
    for (int i = 0; i < n; ++i)
      if (labels[static_cast<std::size_t>(i + g * n)] != labels[static_cast<std::size_t>(i)]) return false;
  std::vector<int> first(labels.begin(), labels.begin() + n);
  std::sort(first.begin(), first.end());
  return std::adjacent_find(first.begin(), first.end()) == first.end();
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& data, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  std::vector<Index> keep, held;
  for (auto rows : data.rows_by_class()) {
    if (rows.empty()) continue;
    rng.shuffle(rows.begin(), rows.end());
    auto n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
    n_held = std::clamp<std::size_t>(n_held, rows.size() > 1 ? 1 : 0, rows.size() - 1);
    const auto cut = rows.size() - n_held;
    keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
    held.insert(held.end(), rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
  }
  std::sort(keep.begin(), keep.end());
  std::sort(held.begin(), held.end());
  return {data.subset(keep), data.subset(held)};
}

}  // namespace gcahng
