#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace kenkf {

/// Shortest-round-trip decimal form of x (17 significant digits), "inf"/"nan"
/// spelled out so CSV readers see consistent tokens.
std::string format_g17(double x);

/// A rectangular CSV document with a mandatory header row. All numeric cells
/// are written with 17 significant digits so files round-trip bit-exactly.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void add_row(const std::vector<double>& row);
  void add_row(const Eigen::VectorXd& row);

  /// Write via a temp file in the same directory plus atomic rename, so
  /// readers never observe a half-written file. Throws std::runtime_error on
  /// I/O failure.
  void write(const std::string& path) const;

  std::size_t rows() const { return cells_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> cells_;
};

/// Atomically replace `path` with `content` (temp file + rename).
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace kenkf
