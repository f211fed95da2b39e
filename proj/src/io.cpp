#include "fdpu/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fdpu/errors.hpp"

namespace fdpu::io {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvMatrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw config_error("empty CSV file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvMatrix out;
  out.header = split_csv_line(line);
  const std::size_t p = out.header.size();
  if (p == 0) throw config_error("CSV header has no columns: " + path);
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != p) {
      throw config_error(path + ": row " + std::to_string(lineno) + " has " +
                         std::to_string(cells.size()) + " cells, expected " + std::to_string(p));
    }
    std::vector<double> vals(p);
    for (std::size_t c = 0; c < p; ++c) {
      if (cells[c].empty()) {
        throw config_error(path + ": missing value at row " + std::to_string(lineno) +
                           ", column " + std::to_string(c + 1));
      }
      char* end = nullptr;
      vals[c] = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0') {
        throw config_error(path + ": bad number '" + cells[c] + "' at row " +
                           std::to_string(lineno) + ", column " + std::to_string(c + 1));
      }
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw config_error("CSV has no data rows: " + path);
  out.values.resize(static_cast<long>(rows.size()), static_cast<long>(p));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < p; ++c) out.values(r, c) = rows[r][c];
  }
  return out;
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  std::ostringstream os;
  for (long c = 0; c < m.cols(); ++c) {
    if (c) os << ',';
    os << (static_cast<std::size_t>(c) < header.size() ? header[c] : "v" + std::to_string(c + 1));
  }
  os << '\n';
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
  write_text_file(path, os.str());
}

namespace {
constexpr char kMagic[4] = {'F', 'D', 'P', 'B'};
}

Eigen::MatrixXd read_binary_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open binary matrix: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != 1) {
    throw config_error("not a FDPB v1 matrix file: " + path);
  }
  if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
    throw config_error("bad matrix dimensions in " + path);
  }
  Eigen::MatrixXd m(static_cast<long>(rows), static_cast<long>(cols));
  std::vector<double> buf(cols);
  for (std::uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(8 * cols));
    if (!in) throw config_error("truncated matrix payload in " + path);
    for (std::uint64_t c = 0; c < cols; ++c) m(static_cast<long>(r), static_cast<long>(c)) = buf[c];
  }
  return m;
}

void write_binary_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write binary matrix: " + path);
  const std::uint32_t version = 1;
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  std::vector<double> buf(m.cols());
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) buf[c] = m(r, c);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(8 * m.cols()));
  }
  if (!out) throw config_error("failed writing " + path);
}

Eigen::MatrixXd read_matrix(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    return read_csv_matrix(path).values;
  }
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".bin") {
    return read_binary_matrix(path);
  }
  throw config_error("unknown matrix extension (want .csv or .bin): " + path);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write file: " + path);
  out << content;
  if (!out) throw config_error("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fdpu::io
