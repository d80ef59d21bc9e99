#pragma once

// Exact rational linear algebra used for structural questions (span ranks,
// replicability) where floating point would misreport near-degeneracy.
// Internal to the library; not installed.

#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace bnm::exact {

using Rational = boost::multiprecision::cpp_rational;
// Row-major, rows need not be normalized.
using RationalMatrix = std::vector<std::vector<Rational>>;

int rank(RationalMatrix a);

// Any exact solution of a x = b, free variables pinned to zero.  Empty when
// the system is inconsistent.
std::optional<std::vector<Rational>> solve(RationalMatrix a, std::vector<Rational> b);

// Solves for coefficients expressing target over the given column vectors.
std::optional<std::vector<Rational>> coordinates_in_span(
    const std::vector<std::vector<Rational>>& columns, const std::vector<Rational>& target);

}  // namespace bnm::exact
