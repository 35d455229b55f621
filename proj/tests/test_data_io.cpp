#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "eos/data_io.hpp"
#include "eos/errors.hpp"
#include "eos/synth_data.hpp"

namespace fs = std::filesystem;

namespace {

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

struct IdxFixture {
  std::string images = "fixture-images-idx3-ubyte";
  std::string labels = "fixture-labels-idx1-ubyte";

  IdxFixture(int n, bool gz = false, std::uint32_t img_magic = 0x803,
             std::uint32_t lab_magic = 0x801, bool truncate = false,
             int label_count = -1) {
    std::vector<std::uint8_t> img;
    push_be32(img, img_magic);
    push_be32(img, static_cast<std::uint32_t>(n));
    push_be32(img, 28);
    push_be32(img, 28);
    for (int i = 0; i < n * 28 * 28; ++i)
      img.push_back(static_cast<std::uint8_t>(i % 251));
    if (truncate) img.resize(img.size() - 100);

    std::vector<std::uint8_t> lab;
    push_be32(lab, lab_magic);
    const int nl = label_count < 0 ? n : label_count;
    push_be32(lab, static_cast<std::uint32_t>(nl));
    for (int i = 0; i < nl; ++i) lab.push_back(static_cast<std::uint8_t>((3 + i * 4) % 10));

    write(images, img, gz);
    write(labels, lab, gz);
  }

  ~IdxFixture() {
    std::remove(images.c_str());
    std::remove(labels.c_str());
  }

  static void write(const std::string& path, const std::vector<std::uint8_t>& bytes,
                    bool gz) {
    std::ofstream out(path, std::ios::binary);
    if (gz) {
      const auto packed = eos::gzip_bytes(bytes);
      out.write(reinterpret_cast<const char*>(packed.data()),
                static_cast<std::streamsize>(packed.size()));
    } else {
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }
  }
};

}  // namespace

TEST_CASE("loads a hand-built 2-image IDX fixture") {
  IdxFixture fx(2);
  const eos::Dataset ds = eos::load_idx(fx.images, fx.labels);
  CHECK(ds.images.rows() == 2);
  CHECK(ds.images.cols() == 784);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 7);
  CHECK(ds.images(0, 0) == doctest::Approx(0.0));
  CHECK(ds.images(0, 1) == doctest::Approx(1.0 / 255.0));
  CHECK(ds.images.maxCoeff() <= 1.0);
  CHECK(ds.images.minCoeff() >= 0.0);
}

TEST_CASE("gzip IDX payloads load identically") {
  IdxFixture raw(3);
  const eos::Dataset a = eos::load_idx(raw.images, raw.labels);

  IdxFixture gz(3, /*gz=*/true);
  const eos::Dataset b = eos::load_idx(gz.images, gz.labels);
  CHECK((a.images - b.images).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.labels - b.labels).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("IDX error paths: magic, truncation, count mismatch") {
  {
    IdxFixture fx(2, false, 0x803, /*lab_magic=*/0x99);
    CHECK_THROWS_AS(eos::load_idx(fx.images, fx.labels), eos::BadMagic);
  }
  {
    IdxFixture fx(2, false, /*img_magic=*/0x807);
    CHECK_THROWS_AS(eos::load_idx(fx.images, fx.labels), eos::BadMagic);
  }
  {
    IdxFixture fx(2, false, 0x803, 0x801, /*truncate=*/true);
    CHECK_THROWS_AS(eos::load_idx(fx.images, fx.labels), eos::TruncatedFile);
  }
  {
    IdxFixture fx(2, false, 0x803, 0x801, false, /*label_count=*/3);
    CHECK_THROWS_AS(eos::load_idx(fx.images, fx.labels), eos::CountMismatch);
  }
}

TEST_CASE("normalization: constant pixels, unit statistics, train stats reuse") {
  eos::Dataset constant;
  constant.images = Eigen::MatrixXd::Constant(4, 10, 0.4);
  constant.labels = Eigen::VectorXi::Zero(4);
  const eos::Dataset z = eos::normalize(constant, constant);
  CHECK(z.images.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  IdxFixture fx(5);
  const eos::Dataset raw = eos::load_idx(fx.images, fx.labels);
  const eos::Dataset norm = eos::normalize(raw, raw);
  CHECK(std::abs(norm.images.mean()) < 1e-10);
  const double var = (norm.images.array() - norm.images.mean()).square().sum() /
                     static_cast<double>(norm.images.size());
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);

  // eval normalized with train stats, not its own
  eos::Dataset eval;
  eval.images = Eigen::MatrixXd::Constant(2, 784, 0.9);
  eval.labels = Eigen::VectorXi::Zero(2);
  const eos::Dataset eval_n = eos::normalize(eval, raw);
  CHECK(eval_n.mean == norm.mean);
  CHECK(eval_n.std == norm.std);
  CHECK(eval_n.images(0, 0) == doctest::Approx((0.9 - norm.mean) / norm.std));
}

TEST_CASE("subset: first_n split and seeded shuffle determinism") {
  eos::Dataset ds;
  ds.images.resize(1200, 3);
  for (int i = 0; i < 1200; ++i)
    for (int j = 0; j < 3; ++j) ds.images(i, j) = i * 3 + j;
  ds.labels.resize(1200);
  for (int i = 0; i < 1200; ++i) ds.labels[i] = i % 10;

  eos::SubsetSpec spec;
  spec.train_count = 1000;
  spec.eval_count = 200;
  const auto [train, eval] = eos::subset(ds, spec);
  CHECK(train.size() == 1000);
  CHECK(eval.size() == 200);
  CHECK(train.images(0, 0) == 0.0);
  CHECK(train.images(999, 0) == 999.0 * 3);
  CHECK(eval.images(0, 0) == 1000.0 * 3);
  CHECK(eval.images(199, 0) == 1199.0 * 3);

  spec.selection = eos::SubsetSelection::kSeededShuffle;
  spec.seed = 99;
  const auto [t1, e1] = eos::subset(ds, spec);
  const auto [t2, e2] = eos::subset(ds, spec);
  CHECK((t1.images - t2.images).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e1.images - e2.images).cwiseAbs().maxCoeff() == 0.0);
  // train/eval stay disjoint: no row appears twice
  CHECK(t1.images.rows() + e1.images.rows() == 1200);

  spec.train_count = 1100;
  spec.eval_count = 200;
  CHECK_THROWS_AS(eos::subset(ds, spec), eos::InsufficientData);
}

TEST_CASE("dataset cache round-trips bit-identically") {
  IdxFixture fx(4);
  const eos::Dataset ds = eos::normalize(eos::load_idx(fx.images, fx.labels),
                                         eos::load_idx(fx.images, fx.labels));
  const std::string path = "test_cache.eosd";
  eos::save_dataset_cache(path, ds);
  const eos::Dataset back = eos::load_dataset_cache(path);
  CHECK((ds.images - back.images).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds.labels - back.labels).cwiseAbs().maxCoeff() == 0);
  CHECK(ds.mean == back.mean);
  CHECK(ds.std == back.std);
  CHECK(ds.normalized == back.normalized);

  // write/reload twice: byte-identical files
  eos::save_dataset_cache("test_cache2.eosd", back);
  CHECK(eos::sha256_file(path) == eos::sha256_file("test_cache2.eosd"));
  std::remove(path.c_str());
  std::remove("test_cache2.eosd");
}

TEST_CASE("manifest write/read and checksum verification warnings") {
  IdxFixture fx(2);
  std::vector<eos::ManifestEntry> entries;
  entries.push_back({fx.images, eos::sha256_file(fx.images), 42});
  entries.push_back({fx.labels, "deadbeef", 10});  // wrong on purpose
  eos::write_data_manifest("test_manifest.txt", entries);

  const auto back = eos::read_data_manifest("test_manifest.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].file == fx.images);
  CHECK(back[0].bytes == 42);

  const auto warnings = eos::verify_against_manifest("test_manifest.txt", ".");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find(fx.labels) != std::string::npos);
  std::remove("test_manifest.txt");
}

TEST_CASE("synthetic IDX corpus: loadable, labeled, deterministic") {
  const std::string dir = "test_synth_data";
  const auto files = eos::generate_synth_idx(dir, 64, 32, 7);
  const eos::Dataset train = eos::load_idx(files.train_images, files.train_labels);
  const eos::Dataset test = eos::load_idx(files.test_images, files.test_labels);
  CHECK(train.size() == 64);
  CHECK(test.size() == 32);
  CHECK(train.labels.minCoeff() >= 0);
  CHECK(train.labels.maxCoeff() <= 9);
  CHECK(train.images.maxCoeff() > 0.3);  // non-trivial content

  const std::string sha_before = eos::sha256_file(files.train_images);
  eos::generate_synth_idx(dir, 64, 32, 7);
  CHECK(eos::sha256_file(files.train_images) == sha_before);

  fs::remove_all(dir);
}
