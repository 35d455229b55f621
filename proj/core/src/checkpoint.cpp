#include "eos/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "eos/errors.hpp"

namespace eos {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

constexpr std::uint32_t kVersion = 1;

void write_vector(const std::string& path, const char magic[4],
                  const double* data, std::uint64_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw IoError("short write: " + path);
}

Eigen::VectorXd read_vector(const std::string& path, const char magic[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char got[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  in.read(got, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 8);
  if (!in) throw TruncatedFile("checkpoint header truncated: " + path);
  if (std::memcmp(got, magic, 4) != 0)
    throw BadMagic("checkpoint magic mismatch: " + path);
  Eigen::VectorXd v(static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw TruncatedFile("checkpoint payload truncated: " + path);
  return v;
}

}  // namespace

void save_param_checkpoint(const std::string& path, const Eigen::VectorXd& params) {
  write_vector(path, "EOSP", params.data(),
               static_cast<std::uint64_t>(params.size()));
}

Eigen::VectorXd load_param_checkpoint(const std::string& path) {
  return read_vector(path, "EOSP");
}

void save_eigvec_checkpoint(const std::string& path,
                            const std::vector<Eigen::VectorXd>& vectors) {
  if (vectors.empty()) {
    write_vector(path, "EOSV", nullptr, 0);
    return;
  }
  const Eigen::Index dim = vectors.front().size();
  Eigen::VectorXd flat(static_cast<Eigen::Index>(vectors.size()) * dim);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim)
      throw ShapeMismatch("eigvec checkpoint: vectors differ in length");
    flat.segment(static_cast<Eigen::Index>(i) * dim, dim) = vectors[i];
  }
  write_vector(path, "EOSV", flat.data(), static_cast<std::uint64_t>(flat.size()));
}

std::vector<Eigen::VectorXd> load_eigvec_checkpoint(const std::string& path,
                                                    Eigen::Index dim) {
  const Eigen::VectorXd flat = read_vector(path, "EOSV");
  if (dim <= 0 || flat.size() % dim != 0)
    throw ShapeMismatch("eigvec checkpoint: payload not a multiple of dim");
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index off = 0; off < flat.size(); off += dim)
    out.push_back(flat.segment(off, dim));
  return out;
}

}  // namespace eos
