#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gwinfer::io {

/// Write-temp-then-rename so readers never see a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// chains.csv / design_points.csv style tables: header row then numeric rows.
struct Table {
    std::vector<std::string> header;
    Eigen::MatrixXd rows;
};
Table read_csv(const std::filesystem::path& path);
std::string to_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& rows);

/// FNV-1a over the canonical serialized config, for run metadata.
std::uint64_t fnv1a(const std::string& text);

} // namespace gwinfer::io
