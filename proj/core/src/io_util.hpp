#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>

namespace del::detail {

void write_f64(const std::filesystem::path& path, const double* data, std::size_t count);
/// Reads exactly `count` values; trailing or missing bytes are IoErrors.
Eigen::VectorXd read_f64(const std::filesystem::path& path, std::size_t count);

/// Fresh sibling directory `<dir>.tmp` for staging a write.
std::filesystem::path staging_dir(const std::filesystem::path& dir);
/// Moves a fully written staging directory into place, replacing `dir`.
void commit_dir(const std::filesystem::path& staging, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace del::detail
