#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace eos {

/// Binary vector files: 16-byte header (4-byte magic, u32 version, u64 count
/// of doubles), then the payload as little-endian 64-bit floats.
/// Parameter checkpoints use magic "EOSP"; eigenvector sets use "EOSV" with
/// the vectors concatenated (count = k * dim).

void save_param_checkpoint(const std::string& path, const Eigen::VectorXd& params);
Eigen::VectorXd load_param_checkpoint(const std::string& path);

void save_eigvec_checkpoint(const std::string& path,
                            const std::vector<Eigen::VectorXd>& vectors);
std::vector<Eigen::VectorXd> load_eigvec_checkpoint(const std::string& path,
                                                    Eigen::Index dim);

}  // namespace eos
