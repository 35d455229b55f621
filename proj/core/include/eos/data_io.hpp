#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace eos {

/// An image-classification dataset with flattened rows in [0,1] (raw) or
/// standardized units (after normalize()). `mean`/`std` record the scalar
/// normalization statistics that produced the features.
struct Dataset {
  Eigen::MatrixXd images;  ///< N x (rows*cols)
  Eigen::VectorXi labels;  ///< N entries in [0, 9]
  double mean = 0.0;
  double std = 1.0;
  bool normalized = false;

  Eigen::Index size() const { return images.rows(); }
};

enum class SubsetSelection { kFirstN, kSeededShuffle };

struct SubsetSpec {
  int train_count = 1000;
  int eval_count = 200;
  SubsetSelection selection = SubsetSelection::kFirstN;
  std::uint64_t seed = 0;
};

/// Reads an IDX image/label pair (raw or gzip; detected by the 0x1f 0x8b
/// prefix). Pixel bytes map to [0,1]. Throws BadMagic, TruncatedFile,
/// CountMismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Scalar standardization: x <- (x - mean)/std with mean/std computed over
/// every pixel of `stats_source` (the train subset); std is floored at 1e-8.
Dataset normalize(const Dataset& dataset, const Dataset& stats_source);

/// Deterministic disjoint split of one dataset. first_n takes rows
/// [0, train) and [train, train+eval); seeded_shuffle permutes first.
/// Throws InsufficientData when the dataset is too small.
std::pair<Dataset, Dataset> subset(const Dataset& dataset, const SubsetSpec& spec);

/// Binary dataset cache, magic "EOSD"; a written file reloads bit-identically.
void save_dataset_cache(const std::string& path, const Dataset& dataset);
Dataset load_dataset_cache(const std::string& path);

/// SHA-256 of a file, lowercase hex.
std::string sha256_file(const std::string& path);

struct ManifestEntry {
  std::string file;
  std::string sha256;
  std::uint64_t bytes = 0;
};

/// Plain-text manifest: repeated `file=... sha256=... bytes=...` blocks, one
/// key=value per line.
void write_data_manifest(const std::string& path,
                         const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_data_manifest(const std::string& path);

/// Verifies files named by a manifest that exist on disk. Returns warnings
/// (one per mismatch); a mismatch is not an error since mirrors vary.
std::vector<std::string> verify_against_manifest(
    const std::string& manifest_path, const std::string& base_dir);

}  // namespace eos
