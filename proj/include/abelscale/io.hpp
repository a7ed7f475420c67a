#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "abelscale/kernel.hpp"

namespace abelscale {

struct Series {
  Eigen::VectorXd t;
  Eigen::VectorXd value;
};

/// Two-column CSV with header `t,value`.
Series read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, const Eigen::VectorXd& t,
                      const Eigen::VectorXd& value);

/// Row-major dense matrix, no header.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

/**
 * CSV `t,s,value` on a uniform grid of the triangle 0 <= s <= t <= 1 with both
 * end points included. Returns a bilinear tabulated kernel.
 */
Kernel read_kernel_table(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

/// Shortest representation that round-trips.
std::string format_double(double v);

}  // namespace abelscale
