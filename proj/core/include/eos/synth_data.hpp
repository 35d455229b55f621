#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eos {

/// Deterministic synthetic 10-class 28x28 image dataset written as standard
/// IDX files (train-images-idx3-ubyte etc.), optionally gzipped. Classes are
/// built from overlapping blob/stripe patterns with per-sample shifts,
/// intensity jitter and pixel noise, so full-batch training on it exhibits
/// the usual progressive-sharpening dynamics. Used as the stand-in corpus
/// when the real fMNIST files are not on disk.
struct SynthDataFiles {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
};

SynthDataFiles generate_synth_idx(const std::string& dir, int n_train, int n_test,
                                  std::uint64_t seed, bool gzip_files = false);

/// gzip-compresses `bytes` (used for IDX fixtures and synthetic files).
std::vector<std::uint8_t> gzip_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace eos
