#include "droem/json_io.hpp"

#include <cstdio>

namespace droem {

nlohmann::json to_json(const Matrix<Rational>& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(to_string(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix<Rational> rational_matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) throw ParseError("matrix JSON must be a nested array");
  Matrix<Rational> m(j.size(), j.front().size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != m.cols()) throw ParseError("ragged matrix JSON");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = parse_rational(j[r][c].get<std::string>());
  }
  return m;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace droem
