#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "prepguard/codecs.hpp"
#include "prepguard/dataset.hpp"
#include "prepguard/errors.hpp"
#include "prepguard/png_io.hpp"
#include "test_support.hpp"

using namespace prepguard;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};
}  // namespace

TEST_CASE("synthetic datasets are deterministic, balanced, and 8-bit aligned") {
  const Dataset a = synth_dataset(60, 10, 32, 32, 123);
  const Dataset b = synth_dataset(60, 10, 32, 32, 123);
  REQUIRE(a.examples.size() == 60);
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    CHECK(a.examples[i].label == b.examples[i].label);
    CHECK(a.examples[i].image.data == b.examples[i].image.data);
  }
  int counts[10] = {};
  for (const auto& ex : a.examples) {
    ++counts[ex.label];
    for (const double v : ex.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(v == doctest::Approx(std::round(v * 255.0) / 255.0).epsilon(1e-12));
    }
  }
  for (const int c : counts) CHECK(c == 6);

  const Dataset c = synth_dataset(60, 10, 32, 32, 124);
  CHECK(c.examples[0].image.data != a.examples[0].image.data);
}

TEST_CASE("synthetic generation validates its arguments") {
  CHECK_THROWS_AS(synth_dataset(10, 1, 32, 32, 1), RejectedInput);
  CHECK_THROWS_AS(synth_dataset(10, 11, 32, 32, 1), RejectedInput);
  CHECK_THROWS_AS(synth_dataset(5, 10, 32, 32, 1), RejectedInput);
  CHECK_THROWS_AS(synth_dataset(10, 2, 4, 32, 1), RejectedInput);
}

TEST_CASE("designated asymmetric classes are far from their mirror image") {
  const Dataset ds = synth_dataset(400, 10, 32, 32, 77);
  double sum[10] = {};
  int count[10] = {};
  for (const auto& ex : ds.examples) {
    sum[ex.label] += l2_distance(ex.image, flip_lr(ex.image));
    ++count[ex.label];
  }
  int asym = 0;
  for (int k = 0; k < 10; ++k) {
    if (synth_class_is_asymmetric(k)) {
      ++asym;
      CHECK(sum[k] / count[k] > 0.1);
    }
  }
  CHECK(asym >= 5);  // at least half the classes
}

TEST_CASE("png files round-trip images") {
  TempDir dir("pg_png_test");
  const ImageTensor img = test_support::random_image(13, 9, 3, 5);
  const std::string path = (dir.path / "x.png").string();
  write_png(path, img);
  const ImageTensor back = read_png(path);
  REQUIRE(back.same_shape(img));
  CHECK(linf_distance(img, back) <= 1.0 / 255.0);
  // 8-bit aligned pixels survive exactly
  const ImageTensor q = quantize8(img);
  write_png(path, q);
  CHECK(read_png(path).data == q.data);

  const ImageTensor gray = quantize8(test_support::random_image(6, 7, 1, 6));
  write_png(path, gray);
  const ImageTensor gback = read_png(path);
  CHECK(gback.channels == 1);
  CHECK(gback.data == gray.data);

  CHECK_THROWS(read_png((dir.path / "missing.png").string()));
}

TEST_CASE("datasets round-trip through a PNG directory with manifest") {
  TempDir dir("pg_ds_test");
  const Dataset ds = synth_dataset(20, 4, 16, 16, 9);
  save_dataset(ds, dir.path.string());
  const Dataset back = load_dataset(dir.path.string(), "manifest.csv");
  REQUIRE(back.examples.size() == ds.examples.size());
  CHECK(back.desc.class_count == 4);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(back.examples[i].label == ds.examples[i].label);
    CHECK(back.examples[i].image.data == ds.examples[i].image.data);
  }
}

TEST_CASE("manifest problems are reported with their row") {
  TempDir dir("pg_manifest_test");

  {  // empty manifest
    std::ofstream mf(dir.path / "manifest.csv");
    mf << "path,label\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.path.string(), "manifest.csv"), IngestionError);

  {  // missing file
    std::ofstream mf(dir.path / "manifest.csv");
    mf << "path,label\nnothere.png,0\n";
  }
  try {
    load_dataset(dir.path.string(), "manifest.csv");
    CHECK(false);
  } catch (const IngestionError& e) {
    CHECK(e.row == 2);
  }

  const ImageTensor img(8, 8, 3, 0.5);
  write_png((dir.path / "a.png").string(), img);
  write_png((dir.path / "b.png").string(), ImageTensor(9, 8, 3, 0.5));

  {  // shape mismatch on row 3
    std::ofstream mf(dir.path / "manifest.csv");
    mf << "path,label\na.png,0\nb.png,1\n";
  }
  try {
    load_dataset(dir.path.string(), "manifest.csv");
    CHECK(false);
  } catch (const IngestionError& e) {
    CHECK(e.row == 3);
  }

  {  // label outside the declared class count
    std::ofstream mf(dir.path / "manifest.csv");
    mf << "path,label\na.png,0\na.png,5\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.path.string(), "manifest.csv", 2), IngestionError);

  {  // duplicates are kept, not rejected
    std::ofstream mf(dir.path / "manifest.csv");
    mf << "path,label\na.png,0\na.png,1\na.png,1\n";
  }
  CHECK(load_dataset(dir.path.string(), "manifest.csv").examples.size() == 3);

  {  // gap in the label range
    std::ofstream mf(dir.path / "manifest.csv");
    mf << "path,label\na.png,0\na.png,2\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.path.string(), "manifest.csv"), IngestionError);
}

TEST_CASE("missing manifest is an ingestion error") {
  CHECK_THROWS_AS(load_dataset("/nonexistent_dir_pg", "manifest.csv"), IngestionError);
}

TEST_CASE("the codec corpus is deterministic and in range") {
  const auto a = codec_test_corpus(5, 32, 32, 3, 42);
  const auto b = codec_test_corpus(5, 32, 32, 3, 42);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
  for (const auto& img : a)
    for (const double v : img.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
}
