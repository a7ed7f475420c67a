#include "abelscale/io.hpp"

#include <unistd.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "abelscale/error.hpp"

namespace abelscale {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ValidationError("cannot parse number '" + field + "' in " + where);
  return v;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path,
                                                const std::string& header) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool seen_header = header.empty();
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!seen_header) {
      if (t != header)
        throw ValidationError(path.string() + ": expected header '" + header + "', found '" + t + "'");
      seen_header = true;
      continue;
    }
    rows.push_back(split(t));
    rows.back().push_back(std::to_string(line_no));
  }
  if (!seen_header) throw ValidationError(path.string() + ": file is empty");
  return rows;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Series read_series_csv(const std::filesystem::path& path) {
  const auto rows = read_rows(path, "t,value");
  Series s;
  s.t.resize(static_cast<Eigen::Index>(rows.size()));
  s.value.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::string where = path.string() + " line " + rows[k].back();
    if (rows[k].size() != 3) throw ValidationError("expected 2 columns in " + where);
    s.t[k] = parse_double(rows[k][0], where);
    s.value[k] = parse_double(rows[k][1], where);
  }
  return s;
}

void write_series_csv(const std::filesystem::path& path, const Eigen::VectorXd& t,
                      const Eigen::VectorXd& value) {
  if (t.size() != value.size()) throw ValidationError("series columns differ in length");
  std::string out = "t,value\n";
  for (Eigen::Index i = 0; i < t.size(); ++i)
    out += format_double(t[i]) + "," + format_double(value[i]) + "\n";
  write_file_atomic(path, out);
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  const auto rows = read_rows(path, "");
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size() - 1;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path.string() + " line " + rows[i].back();
    if (rows[i].size() - 1 != cols) throw ValidationError("ragged row in " + where);
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = parse_double(rows[i][j], where);
  }
  return m;
}

Kernel read_kernel_table(const std::filesystem::path& path) {
  const auto rows = read_rows(path, "t,s,value");
  std::map<double, int> ts;
  for (const auto& row : rows) {
    const std::string where = path.string() + " line " + row.back();
    if (row.size() != 4) throw ValidationError("expected 3 columns in " + where);
    ts.emplace(parse_double(row[0], where), 0);
  }
  const int m = static_cast<int>(ts.size());
  if (m < 2) throw ValidationError(path.string() + ": kernel table needs at least 2 distinct t values");
  auto index = [&](double v, const std::string& where) {
    const double scaled = v * (m - 1);
    const double idx = std::round(scaled);
    if (std::abs(scaled - idx) > 1e-6 || idx < 0 || idx > m - 1)
      throw ValidationError("value " + format_double(v) + " is off the uniform grid in " + where);
    return static_cast<int>(idx);
  };
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(m, m, std::nan(""));
  for (const auto& row : rows) {
    const std::string where = path.string() + " line " + row.back();
    const int i = index(parse_double(row[0], where), where);
    const int j = index(parse_double(row[1], where), where);
    if (j > i) throw ValidationError("entry above the diagonal (s > t) in " + where);
    values(i, j) = parse_double(row[2], where);
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j)
      if (std::isnan(values(i, j)))
        throw ValidationError(path.string() + ": kernel table misses (t, s) = (" +
                              format_double(static_cast<double>(i) / (m - 1)) + ", " +
                              format_double(static_cast<double>(j) / (m - 1)) + ")");
  return Kernel::tabulated(values);
}

}  // namespace abelscale
