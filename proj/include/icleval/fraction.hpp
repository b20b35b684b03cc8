#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace icleval {

// Non-negative reduced rational; enough for accuracies and their means.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Fraction make(std::uint64_t n, std::uint64_t d) {
    if (d == 0) throw std::invalid_argument("fraction with zero denominator");
    const std::uint64_t g = std::gcd(n, d);
    return g == 0 ? Fraction{0, 1} : Fraction{n / g, d / g};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  bool operator==(const Fraction&) const = default;
};

}  // namespace icleval
