#include "eos/data_io.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "eos/errors.hpp"
#include "eos/rng.hpp"

namespace eos {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in_bytes) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
    throw IoError("zlib: inflateInit2 failed");

  std::vector<std::uint8_t> out;
  out.reserve(in_bytes.size() * 4);
  std::uint8_t buf[1 << 16];
  zs.next_in = const_cast<Bytef*>(in_bytes.data());
  zs.avail_in = static_cast<uInt>(in_bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw TruncatedFile("zlib: corrupt gzip stream");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

std::vector<std::uint8_t> load_payload(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (is_gzip(bytes)) return gunzip(bytes);
  return bytes;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = load_payload(images_path);
  if (img.size() < 16) throw TruncatedFile("IDX images: header truncated");
  if (be32(img.data()) != kImagesMagic)
    throw BadMagic("IDX images: magic != 0x00000803");
  const std::uint32_t n = be32(img.data() + 4);
  const std::uint32_t rows = be32(img.data() + 8);
  const std::uint32_t cols = be32(img.data() + 12);
  const std::size_t pixels = std::size_t(n) * rows * cols;
  if (img.size() < 16 + pixels) throw TruncatedFile("IDX images: payload truncated");

  const auto lab = load_payload(labels_path);
  if (lab.size() < 8) throw TruncatedFile("IDX labels: header truncated");
  if (be32(lab.data()) != kLabelsMagic)
    throw BadMagic("IDX labels: magic != 0x00000801");
  const std::uint32_t nl = be32(lab.data() + 4);
  if (nl != n) throw CountMismatch("IDX: image and label counts differ");
  if (lab.size() < 8 + nl) throw TruncatedFile("IDX labels: payload truncated");

  Dataset ds;
  ds.images.resize(n, rows * cols);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < rows * cols; ++j)
      ds.images(i, j) =
          static_cast<double>(img[16 + std::size_t(i) * rows * cols + j]) / 255.0;
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i)
    ds.labels[i] = static_cast<int>(lab[8 + i]);
  return ds;
}

Dataset normalize(const Dataset& dataset, const Dataset& stats_source) {
  if (stats_source.size() == 0)
    throw InsufficientData("normalize: empty statistics source");
  const double mean = stats_source.images.mean();
  const double var =
      (stats_source.images.array() - mean).square().sum() /
      static_cast<double>(stats_source.images.size());
  const double sd = std::max(std::sqrt(var), 1e-8);

  Dataset out = dataset;
  out.images = (dataset.images.array() - mean) / sd;
  out.mean = mean;
  out.std = sd;
  out.normalized = true;
  return out;
}

std::pair<Dataset, Dataset> subset(const Dataset& dataset, const SubsetSpec& spec) {
  if (spec.train_count < 0 || spec.eval_count < 0)
    throw InsufficientData("subset: negative counts");
  const Eigen::Index need = spec.train_count + spec.eval_count;
  if (need > dataset.size())
    throw InsufficientData("subset: train+eval exceeds dataset size");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), 0);
  if (spec.selection == SubsetSelection::kSeededShuffle) {
    CounterRng rng(spec.seed, /*stream=*/0xD5);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }
  }

  const auto take = [&](Eigen::Index from, Eigen::Index count) {
    Dataset d;
    d.images.resize(count, dataset.images.cols());
    d.labels.resize(count);
    d.mean = dataset.mean;
    d.std = dataset.std;
    d.normalized = dataset.normalized;
    for (Eigen::Index i = 0; i < count; ++i) {
      d.images.row(i) = dataset.images.row(order[static_cast<std::size_t>(from + i)]);
      d.labels[i] = dataset.labels[order[static_cast<std::size_t>(from + i)]];
    }
    return d;
  };
  return {take(0, spec.train_count), take(spec.train_count, spec.eval_count)};
}

void save_dataset_cache(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open cache for writing: " + path);
  out.write("EOSD", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t n = static_cast<std::uint64_t>(dataset.images.rows());
  const std::uint64_t d = static_cast<std::uint64_t>(dataset.images.cols());
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&d), 8);
  out.write(reinterpret_cast<const char*>(&dataset.mean), 8);
  out.write(reinterpret_cast<const char*>(&dataset.std), 8);
  const std::uint8_t norm = dataset.normalized ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&norm), 1);
  out.write(reinterpret_cast<const char*>(dataset.images.data()),
            static_cast<std::streamsize>(n * d * sizeof(double)));
  out.write(reinterpret_cast<const char*>(dataset.labels.data()),
            static_cast<std::streamsize>(n * sizeof(int)));
  if (!out) throw IoError("short write: " + path);
}

Dataset load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cache: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "EOSD", 4) != 0)
    throw BadMagic("dataset cache magic mismatch: " + path);
  std::uint32_t version = 0;
  std::uint64_t n = 0, d = 0;
  Dataset ds;
  std::uint8_t norm = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&d), 8);
  in.read(reinterpret_cast<char*>(&ds.mean), 8);
  in.read(reinterpret_cast<char*>(&ds.std), 8);
  in.read(reinterpret_cast<char*>(&norm), 1);
  if (!in) throw TruncatedFile("dataset cache header truncated: " + path);
  ds.normalized = norm != 0;
  ds.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(ds.images.data()),
          static_cast<std::streamsize>(n * d * sizeof(double)));
  in.read(reinterpret_cast<char*>(ds.labels.data()),
          static_cast<std::streamsize>(n * sizeof(int)));
  if (!in) throw TruncatedFile("dataset cache payload truncated: " + path);
  return ds;
}

std::string sha256_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

void write_data_manifest(const std::string& path,
                         const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  for (const auto& e : entries) {
    out << "file=" << e.file << '\n';
    out << "sha256=" << e.sha256 << '\n';
    out << "bytes=" << e.bytes << '\n';
  }
}

std::vector<ManifestEntry> read_data_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  ManifestEntry cur;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "file") {
      if (!cur.file.empty()) entries.push_back(cur);
      cur = ManifestEntry{};
      cur.file = value;
    } else if (key == "sha256") {
      cur.sha256 = value;
    } else if (key == "bytes") {
      cur.bytes = std::stoull(value);
    }
  }
  if (!cur.file.empty()) entries.push_back(cur);
  return entries;
}

std::vector<std::string> verify_against_manifest(const std::string& manifest_path,
                                                 const std::string& base_dir) {
  std::vector<std::string> warnings;
  for (const auto& e : read_data_manifest(manifest_path)) {
    const auto full = std::filesystem::path(base_dir) / e.file;
    if (!std::filesystem::exists(full)) continue;
    const std::string got = sha256_file(full.string());
    if (got != e.sha256)
      warnings.push_back("checksum mismatch for " + e.file + ": expected " +
                         e.sha256 + ", got " + got);
  }
  return warnings;
}

}  // namespace eos
