#include "eos/synth_data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "eos/errors.hpp"
#include "eos/rng.hpp"

namespace eos {

namespace {

constexpr int kSide = 28;
constexpr int kClasses = 10;

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

/// Class prototypes: two blobs on a circle plus an oriented stripe field.
double prototype(int cls, double x, double y) {
  const double pi = 3.14159265358979323846;
  const double cx = kSide / 2.0 - 0.5, cy = kSide / 2.0 - 0.5;
  const double ang = 2.0 * pi * cls / kClasses;
  const double r = 7.0;

  const double m1x = cx + r * std::cos(ang), m1y = cy + r * std::sin(ang);
  const double ang2 = ang + pi * (cls % 2 ? 0.5 : 1.0);
  const double m2x = cx + 0.6 * r * std::cos(ang2), m2y = cy + 0.6 * r * std::sin(ang2);

  const double d1 = (x - m1x) * (x - m1x) + (y - m1y) * (y - m1y);
  const double d2 = (x - m2x) * (x - m2x) + (y - m2y) * (y - m2y);
  const double blob = 0.9 * std::exp(-d1 / (2.0 * 9.0)) +
                      0.7 * std::exp(-d2 / (2.0 * 16.0));

  const double freq = 0.35 + 0.05 * cls;
  const double theta = pi * cls / kClasses;
  const double stripe =
      0.25 * (1.0 + std::cos(freq * ((x - cx) * std::cos(theta) +
                                     (y - cy) * std::sin(theta))));
  return blob + stripe;
}

void render_sample(int cls, CounterRng& rng, std::uint8_t* pixels) {
  const double dx = std::floor(rng.uniform(-2.0, 3.0));
  const double dy = std::floor(rng.uniform(-2.0, 3.0));
  const double gain = rng.uniform(0.85, 1.15);
  for (int yy = 0; yy < kSide; ++yy) {
    for (int xx = 0; xx < kSide; ++xx) {
      double v = gain * prototype(cls, xx - dx, yy - dy);
      v += 0.08 * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      pixels[yy * kSide + xx] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes,
                 bool gz) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  if (gz) {
    const auto packed = gzip_bytes(bytes);
    out.write(reinterpret_cast<const char*>(packed.data()),
              static_cast<std::streamsize>(packed.size()));
  } else {
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
}

}  // namespace

std::vector<std::uint8_t> gzip_bytes(const std::vector<std::uint8_t>& bytes) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 16 + MAX_WBITS, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw IoError("zlib: deflateInit2 failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())));
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  if (deflate(&zs, Z_FINISH) != Z_STREAM_END) {
    deflateEnd(&zs);
    throw IoError("zlib: deflate failed");
  }
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

SynthDataFiles generate_synth_idx(const std::string& dir, int n_train, int n_test,
                                  std::uint64_t seed, bool gzip_files) {
  std::filesystem::create_directories(dir);
  const std::string suffix = gzip_files ? ".gz" : "";

  const auto emit = [&](int count, std::uint64_t stream_base,
                        const std::string& img_name, const std::string& lab_name) {
    std::vector<std::uint8_t> img;
    img.reserve(16 + std::size_t(count) * kSide * kSide);
    push_be32(img, 0x00000803);
    push_be32(img, static_cast<std::uint32_t>(count));
    push_be32(img, kSide);
    push_be32(img, kSide);

    std::vector<std::uint8_t> lab;
    push_be32(lab, 0x00000801);
    push_be32(lab, static_cast<std::uint32_t>(count));

    std::vector<std::uint8_t> pix(kSide * kSide);
    for (int i = 0; i < count; ++i) {
      CounterRng rng(seed, stream_base + static_cast<std::uint64_t>(i));
      const int cls = static_cast<int>(rng.next_u64() % kClasses);
      render_sample(cls, rng, pix.data());
      img.insert(img.end(), pix.begin(), pix.end());
      lab.push_back(static_cast<std::uint8_t>(cls));
    }
    write_bytes(img_name, img, gzip_files);
    write_bytes(lab_name, lab, gzip_files);
  };

  SynthDataFiles files;
  const auto base = std::filesystem::path(dir);
  files.train_images = (base / ("train-images-idx3-ubyte" + suffix)).string();
  files.train_labels = (base / ("train-labels-idx1-ubyte" + suffix)).string();
  files.test_images = (base / ("t10k-images-idx3-ubyte" + suffix)).string();
  files.test_labels = (base / ("t10k-labels-idx1-ubyte" + suffix)).string();

  emit(n_train, 0, files.train_images, files.train_labels);
  emit(n_test, 1u << 30, files.test_images, files.test_labels);
  return files;
}

}  // namespace eos
