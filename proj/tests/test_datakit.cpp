#include "gcahng/datakit.hpp"
#include "gcahng/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace gcahng;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gcahng_datakit_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

double mean_center_distance(const Matrix& c) {
  double s = 0;
  int n = 0;
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = i + 1; j < c.rows(); ++j, ++n) s += (c.row(i) - c.row(j)).norm();
  return s / n;
}

}  // namespace

TEST_CASE("make_synthetic cardinality and labels") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 3;
  spec.input_dim = 4;
  spec.seed = 7;
  const Dataset d = make_synthetic(spec);
  CHECK(d.size() == 6);
  CHECK(d.dim() == 4);
  std::multiset<int> labels(d.labels.begin(), d.labels.end());
  CHECK(labels == std::multiset<int>{1, 1, 1, 2, 2, 2});
}

TEST_CASE("make_synthetic is a pure function of its spec") {
  SyntheticDatasetSpec spec;
  spec.seed = 3;
  const Dataset a = make_synthetic(spec), b = make_synthetic(spec);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  spec.seed = 4;
  CHECK(make_synthetic(spec).features != a.features);
}

TEST_CASE("overlap factor shrinks inter-center distances") {
  SyntheticDatasetSpec spec;
  spec.seed = 11;
  const double far = mean_center_distance(synthetic_centers(spec));
  spec.overlap_factor = 0.9;
  const double near = mean_center_distance(synthetic_centers(spec));
  CHECK(far > near);
  CHECK(near == doctest::Approx(0.1 * far).epsilon(1e-9));
}

TEST_CASE("invalid synthetic specs name the offending field") {
  SyntheticDatasetSpec spec;
  spec.samples_per_class = 1;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("samples_per_class"), ConfigError);
  spec = {};
  spec.num_classes = 1;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("num_classes"), ConfigError);
  spec = {};
  spec.within_class_stddev = 0.0;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("within_class_stddev"), ConfigError);
  spec = {};
  spec.overlap_factor = 1.5;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("overlap_factor"), ConfigError);
}

TEST_CASE("CSV parsing: single record, header, errors") {
  const auto p = temp_path("one.csv");
  write_file(p, "1,0.5,0.5\n");
  Dataset d = load_features(p, FeatureFormat::csv);
  CHECK(d.size() == 1);
  CHECK(d.dim() == 2);
  CHECK(d.labels[0] == 1);
  CHECK(d.features(0, 1) == 0.5);

  write_file(p, "label,f0,f1\n2,1,2\n1,3,4\n");
  d = load_features(p, FeatureFormat::csv);
  CHECK(d.size() == 2);
  CHECK(d.num_classes == 2);

  write_file(p, "");
  CHECK_THROWS_AS(load_features(p, FeatureFormat::csv), ParseError);

  write_file(p, "1,0.5,0.5\n2,0.1\n");
  CHECK_THROWS_WITH_AS(load_features(p, FeatureFormat::csv), doctest::Contains("line 2"), ParseError);

  write_file(p, "0,0.5,0.5\n");
  CHECK_THROWS_AS(load_features(p, FeatureFormat::csv), ParseError);
  write_file(p, "1.5,0.5,0.5\n");
  CHECK_THROWS_AS(load_features(p, FeatureFormat::csv), ParseError);
  write_file(p, "1,abc,0.5\n");
  CHECK_THROWS_AS(load_features(p, FeatureFormat::csv), ParseError);
  CHECK_THROWS_AS(load_features(temp_path("missing.csv"), FeatureFormat::csv), IoError);
}

TEST_CASE("feature files round-trip") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 3;
  spec.samples_per_class = 5;
  spec.input_dim = 6;
  const Dataset d = make_synthetic(spec);

  const auto csv = temp_path("rt.csv");
  save_features(d, csv, format_from_path(csv));
  const Dataset c = load_features(csv, FeatureFormat::csv);
  CHECK(c.labels == d.labels);
  CHECK(c.features == d.features);  // 17 significant digits round-trip exactly

  const auto bin = temp_path("rt.bin");
  CHECK(format_from_path(bin) == FeatureFormat::binary);
  save_features(d, bin, FeatureFormat::binary);
  const Dataset b = load_features(bin, FeatureFormat::binary);
  CHECK(b.labels == d.labels);
  CHECK(b.features.isApprox(d.features, 1e-6));
  CHECK(b.features == d.features.cast<float>().cast<double>());
}

TEST_CASE("binary format header and corruption") {
  Dataset d;
  d.features = Matrix::Ones(2, 3);
  d.labels = {1, 2};
  d.num_classes = 2;
  const auto p = temp_path("h.bin");
  save_features(d, p, FeatureFormat::binary);
  {
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes.size() == 4 + 4 + 8 + 4 + 2 * (4 + 3 * 4));
    CHECK(bytes.substr(0, 4) == "GCAF");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);   // record count, little-endian
    CHECK(static_cast<unsigned char>(bytes[16]) == 3);  // dim
    write_file(p, "XXXX" + bytes.substr(4));
    CHECK_THROWS_AS(load_features(p, FeatureFormat::binary), ParseError);
    write_file(p, bytes.substr(0, bytes.size() - 2));
    CHECK_THROWS_AS(load_features(p, FeatureFormat::binary), ParseError);
  }
}

TEST_CASE("balanced sampler keeps the group layout and never repeats a sample") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 6;
  spec.samples_per_class = 4;
  spec.input_dim = 3;
  const Dataset d = make_synthetic(spec);
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const LabeledBatch b = sample_balanced(d, 3, 2, rng);
    REQUIRE(b.size() == 6);
    CHECK(has_group_layout(b.labels, 3, 2));
    std::set<Index> idx(b.indices.begin(), b.indices.end());
    CHECK(idx.size() == b.indices.size());
    for (Index r = 0; r < b.size(); ++r) {
      CHECK(b.x.row(r) == d.features.row(b.indices[static_cast<std::size_t>(r)]));
      CHECK(b.labels[static_cast<std::size_t>(r)] == d.labels[static_cast<std::size_t>(b.indices[static_cast<std::size_t>(r)])]);
    }
  }
}

TEST_CASE("sampler preconditions") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 3;
  spec.samples_per_class = 2;
  spec.input_dim = 2;
  const Dataset d = make_synthetic(spec);
  Rng rng(1);
  CHECK_THROWS_WITH_AS(sample_balanced(d, 2, 1, rng), doctest::Contains("positive"), SamplingError);
  CHECK_THROWS_AS(sample_balanced(d, 4, 2, rng), SamplingError);
  CHECK_THROWS_WITH_AS(sample_balanced(d, 2, 3, rng), doctest::Contains("class 1"), SamplingError);
}

TEST_CASE("sampler class frequencies pass a chi-square test") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 3;
  spec.input_dim = 2;
  const Dataset d = make_synthetic(spec);
  Rng rng(2024);
  std::map<int, int> count;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const LabeledBatch b = sample_balanced(d, 2, 2, rng);
    count[b.labels[0]]++;
    count[b.labels[1]]++;
  }
  const double expected = draws * 0.5;
  double chi2 = 0.0;
  for (int c = 1; c <= 4; ++c) chi2 += (count[c] - expected) * (count[c] - expected) / expected;
  CHECK(chi2 < 11.345);  // df = 3, alpha = 0.01
}

TEST_CASE("group layout detector") {
  CHECK(has_group_layout(std::vector<int>{3, 1, 2, 3, 1, 2}, 3, 2));
  CHECK_FALSE(has_group_layout(std::vector<int>{3, 1, 2, 1, 3, 2}, 3, 2));
  CHECK_FALSE(has_group_layout(std::vector<int>{1, 1, 1, 1}, 2, 2));
  CHECK_FALSE(has_group_layout(std::vector<int>{1, 2, 1}, 2, 2));
}

TEST_CASE("per-class split keeps every class on both sides") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 10;
  spec.input_dim = 3;
  const Dataset d = make_synthetic(spec);
  Rng rng(3);
  const auto [train, held] = split_per_class(d, 0.2, rng);
  CHECK(train.size() == 32);
  CHECK(held.size() == 8);
  for (const auto& rows : held.rows_by_class()) CHECK(rows.size() == 2);
  CHECK(train.num_classes == 4);
  Rng rng2(3);
  CHECK(split_per_class(d, 0.2, rng2).second.features == held.features);
}
