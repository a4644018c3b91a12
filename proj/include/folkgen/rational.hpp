#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <boost/rational.hpp>

namespace folkgen {

/// Exact note durations, in units of whole notes. Always kept in lowest terms.
using Rational = boost::rational<std::int64_t>;

/// "3/2", or "2" when the denominator is one.
std::string to_string(const Rational& r);

/// Parses "n", "n/d" or "/d". Throws std::invalid_argument on malformed text
/// or a zero denominator.
Rational parse_rational(std::string_view text);

/// True when numerator and denominator both fit in a signed 32-bit integer.
bool fits_32_bits(const Rational& r);

}  // namespace folkgen
