#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace co2hm {

// Errors ---------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside an operation's admissible domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Units ----------------------------------------------------------------------

namespace units {
inline constexpr double millidarcy = 9.869233e-16;  // m^2
inline constexpr double year = 365.25 * 86400.0;    // s
inline constexpr double day = 86400.0;              // s
inline constexpr double GPa = 1.0e9;
inline constexpr double MPa = 1.0e6;
inline constexpr double cm = 1.0e-2;
inline constexpr double gravity = 9.80665;  // m/s^2
}  // namespace units

// Random numbers -------------------------------------------------------------

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a stream index
/// (case number, chain number, ...). Stable across platforms and releases.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Same as derive_seed with a string tag for the purpose (e.g. "truth-noise").
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag);

}  // namespace co2hm
