#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include <json.hpp>

namespace deskrec {

// Positive rational used for frame rates so that sample index arithmetic stays exact
// (e.g. 30000/1001 for NTSC material).
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d = 1);

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;

  // Accepts a JSON number (converted through its shortest decimal form) or a
  // string "N/D" / "N" / "N.M". Throws std::invalid_argument on anything else.
  static Rational from_json(const nlohmann::json& value);
  static Rational parse(const std::string& text);
  nlohmann::json to_json() const;

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
};

}  // namespace deskrec
