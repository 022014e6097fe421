#pragma once

#include <json.hpp>

#include "droem/matrix.hpp"
#include "droem/scalar.hpp"

namespace droem {

/// Exact matrices dump as nested arrays of "num/den" strings, row-major.
nlohmann::json to_json(const Matrix<Rational>& m);
Matrix<Rational> rational_matrix_from_json(const nlohmann::json& j);

/// Writes a double so that parsing the text gives back the same bits.
std::string format_double(double x);

}  // namespace droem
