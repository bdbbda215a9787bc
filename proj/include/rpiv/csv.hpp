#pragma once

// CSV ingestion and export for Dataset.
//
// Format: UTF-8, comma separated, one header row, no quoting, '.' decimal
// point. The cluster column may hold arbitrary tokens; they are mapped to
// dense integers in order of first appearance.

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"

namespace rpiv {

/// Assignment of CSV columns to dataset roles.
struct ColumnRoles {
  std::string response;
  std::vector<std::string> endogenous;
  std::vector<std::string> instruments;
  std::vector<std::string> controls;
  std::optional<std::string> cluster;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

/// 17 significant digits: enough to reproduce every double exactly.
inline std::string format_exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline Dataset read_csv(std::istream& in, const ColumnRoles& roles) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw DataError("empty file");

  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.emplace_back(f);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t j = 0; j < header.size(); ++j) position.emplace(header[j], j);

  std::set<std::string> assigned;
  auto resolve = [&](const std::string& name) {
    if (!assigned.insert(name).second) throw DataError("duplicate role assignment for column '" + name + "'");
    const auto it = position.find(name);
    if (it == position.end()) throw DataError("column '" + name + "' not found in header");
    return it->second;
  };
  auto resolve_all = [&](const std::vector<std::string>& names) {
    std::vector<std::size_t> cols;
    for (const auto& name : names) cols.push_back(resolve(name));
    return cols;
  };

  if (roles.response.empty()) throw DataError("response column required");
  if (roles.endogenous.empty()) throw DataError("at least one endogenous column required");
  if (roles.instruments.empty()) throw DataError("at least one instrument column required");
  const std::size_t y_col = resolve(roles.response);
  const auto x_cols = resolve_all(roles.endogenous);
  const auto z_cols = resolve_all(roles.instruments);
  const auto c_cols = resolve_all(roles.controls);
  const std::optional<std::size_t> g_col = roles.cluster ? std::optional(resolve(*roles.cluster)) : std::nullopt;

  std::vector<double> y;
  std::vector<std::vector<double>> x(x_cols.size()), z(z_cols.size()), c(c_cols.size());
  ClusterLabels clusters;
  std::unordered_map<std::string, std::int64_t> cluster_code;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    auto number = [&](std::size_t col) {
      const auto v = detail::parse_number(fields[col]);
      if (!v) throw DataError("non-numeric cell in column '" + header[col] + "' at row " + std::to_string(row));
      if (!std::isfinite(*v))
        throw DataError("non-finite value in column '" + header[col] + "' at row " + std::to_string(row));
      return *v;
    };
    y.push_back(number(y_col));
    for (std::size_t k = 0; k < x_cols.size(); ++k) x[k].push_back(number(x_cols[k]));
    for (std::size_t k = 0; k < z_cols.size(); ++k) z[k].push_back(number(z_cols[k]));
    for (std::size_t k = 0; k < c_cols.size(); ++k) c[k].push_back(number(c_cols[k]));
    if (g_col) {
      const std::string token(fields[*g_col]);
      if (token.empty()) throw DataError("missing cluster label at row " + std::to_string(row));
      const auto [it, inserted] = cluster_code.try_emplace(token, static_cast<std::int64_t>(cluster_code.size()));
      clusters.push_back(it->second);
    }
  }
  if (row == 0) throw DataError("empty file");

  const auto n = static_cast<Index>(row);
  auto to_matrix = [n](const std::vector<std::vector<double>>& cols) {
    Matrix m(n, static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
      m.col(static_cast<Index>(k)) = Eigen::Map<const Vector>(cols[k].data(), n);
    return m;
  };

  Dataset ds;
  ds.y = Eigen::Map<const Vector>(y.data(), n);
  ds.x = to_matrix(x);
  ds.z = to_matrix(z);
  if (!c_cols.empty()) ds.controls = to_matrix(c);
  if (g_col) ds.cluster_ids = std::move(clusters);
  ds.names = {roles.response, roles.endogenous, roles.instruments, roles.controls, roles.cluster.value_or("")};
  return ds;
}

inline Dataset load_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, roles);
}

/// Writes the dataset with its column names; doubles use 17 significant
/// digits so read_csv reproduces them bit for bit.
inline void write_csv(std::ostream& out, const Dataset& ds) {
  validate(ds);
  std::vector<std::string> header{ds.names.response.empty() ? "y" : ds.names.response};
  for (Index j = 0; j < ds.p(); ++j) header.push_back(detail::column_name(ds.names.endogenous, j, "x"));
  for (Index j = 0; j < ds.d(); ++j) header.push_back(detail::column_name(ds.names.instruments, j, "z"));
  for (Index j = 0; j < ds.q(); ++j) header.push_back(detail::column_name(ds.names.controls, j, "control"));
  if (ds.cluster_ids) header.push_back(ds.names.cluster.empty() ? "cluster" : ds.names.cluster);

  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (Index i = 0; i < ds.n(); ++i) {
    out << detail::format_exact(ds.y(i));
    for (Index j = 0; j < ds.p(); ++j) out << ',' << detail::format_exact(ds.x(i, j));
    for (Index j = 0; j < ds.d(); ++j) out << ',' << detail::format_exact(ds.z(i, j));
    for (Index j = 0; j < ds.q(); ++j) out << ',' << detail::format_exact((*ds.controls)(i, j));
    if (ds.cluster_ids) out << ',' << (*ds.cluster_ids)[static_cast<std::size_t>(i)];
    out << '\n';
  }
}

/// Role mapping matching the header written by write_csv.
inline ColumnRoles roles_of(const Dataset& ds) {
  ColumnRoles roles;
  roles.response = ds.names.response.empty() ? "y" : ds.names.response;
  for (Index j = 0; j < ds.p(); ++j) roles.endogenous.push_back(detail::column_name(ds.names.endogenous, j, "x"));
  for (Index j = 0; j < ds.d(); ++j) roles.instruments.push_back(detail::column_name(ds.names.instruments, j, "z"));
  for (Index j = 0; j < ds.q(); ++j) roles.controls.push_back(detail::column_name(ds.names.controls, j, "control"));
  if (ds.cluster_ids) roles.cluster = ds.names.cluster.empty() ? "cluster" : ds.names.cluster;
  return roles;
}

}  // namespace rpiv
