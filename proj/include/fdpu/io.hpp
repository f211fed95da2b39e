#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fdpu::io {

// Shortest 17-significant-digit representation; round-trips exactly.
std::string format_double(double v);

// CSV matrix: rows = samples, columns = variables, header row required,
// '.' decimal, no missing values. Errors carry row/column coordinates.
struct CsvMatrix {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

CsvMatrix read_csv_matrix(const std::string& path);
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

// Compact binary container for large matrices: magic "FDPB", u32 version,
// u64 rows, u64 cols (little-endian), then row-major float64 payload.
Eigen::MatrixXd read_binary_matrix(const std::string& path);
void write_binary_matrix(const std::string& path, const Eigen::MatrixXd& m);

// Dispatch by extension: .csv or .bin.
Eigen::MatrixXd read_matrix(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace fdpu::io
