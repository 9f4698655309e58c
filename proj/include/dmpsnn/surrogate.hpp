#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dmpsnn/errors.hpp"

namespace dmpsnn {

enum class SurrogateKind { rectangular, fast_sigmoid, atan, zero };

// Smooth stand-in for the Heaviside derivative. Every kind except `zero`
// integrates to 1 over the real line and is symmetric about the threshold.
// `param` is the window width for rectangular and the slope otherwise.
struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::rectangular;
  double param = 1.0;

  void validate() const {
    if (!(param > 0.0) || !std::isfinite(param)) throw ConfigError("surrogate parameter must be positive");
  }

  // v = u - threshold
  double derivative(double v) const {
    switch (kind) {
      case SurrogateKind::rectangular:
        return std::abs(v) < 0.5 * param ? 1.0 / param : 0.0;
      case SurrogateKind::fast_sigmoid: {
        const double den = 1.0 + param * std::abs(v);
        return 0.5 * param / (den * den);
      }
      case SurrogateKind::atan: {
        const double z = 0.5 * std::numbers::pi * param * v;
        return 0.5 * param / (1.0 + z * z);
      }
      case SurrogateKind::zero:
        return 0.0;
    }
    return 0.0;
  }

  // Antiderivative with limits 0 and 1; used as the spike function in the
  // smoothed forward pass.
  double smooth_step(double v) const {
    switch (kind) {
      case SurrogateKind::rectangular:
        return std::clamp(v / param + 0.5, 0.0, 1.0);
      case SurrogateKind::fast_sigmoid:
        return 0.5 + 0.5 * param * v / (1.0 + param * std::abs(v));
      case SurrogateKind::atan:
        return std::atan(0.5 * std::numbers::pi * param * v) / std::numbers::pi + 0.5;
      case SurrogateKind::zero:
        return v >= 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
  }
};

inline SurrogateKind parse_surrogate_kind(const std::string& s) {
  if (s == "rectangular") return SurrogateKind::rectangular;
  if (s == "fast-sigmoid") return SurrogateKind::fast_sigmoid;
  if (s == "atan") return SurrogateKind::atan;
  if (s == "zero") return SurrogateKind::zero;
  throw ConfigError("unknown surrogate kind '" + s + "'");
}

inline std::string to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::rectangular: return "rectangular";
    case SurrogateKind::fast_sigmoid: return "fast-sigmoid";
    case SurrogateKind::atan: return "atan";
    case SurrogateKind::zero: return "zero";
  }
  return "?";
}

}  // namespace dmpsnn
