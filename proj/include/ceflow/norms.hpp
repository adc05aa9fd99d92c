#pragma once

// Norm selection for the ambient coordinate space. The default everywhere is
// L2: several uniqueness-sensitive routines (reduced flux, arclength
// reparametrization) assume a strictly convex norm.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "ceflow/common.hpp"

namespace ceflow {

enum class NormKind { L1, L2, Linf };

struct NormSpec {
  NormKind kind = NormKind::L2;

  bool strictly_convex() const { return kind == NormKind::L2; }

  double operator()(std::span<const double> v) const {
    switch (kind) {
      case NormKind::L1: {
        double s = 0.0;
        for (double x : v) s += std::abs(x);
        return s;
      }
      case NormKind::L2: {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
      }
      case NormKind::Linf: {
        double s = 0.0;
        for (double x : v) s = std::max(s, std::abs(x));
        return s;
      }
    }
    return 0.0;
  }

  /// Dual norm (L1 <-> Linf, L2 self-dual).
  NormSpec dual() const {
    switch (kind) {
      case NormKind::L1: return {NormKind::Linf};
      case NormKind::Linf: return {NormKind::L1};
      default: return {NormKind::L2};
    }
  }

  std::string name() const {
    switch (kind) {
      case NormKind::L1: return "l1";
      case NormKind::Linf: return "linf";
      default: return "l2";
    }
  }

  static NormSpec parse(const std::string& s) {
    if (s == "l1") return {NormKind::L1};
    if (s == "l2") return {NormKind::L2};
    if (s == "linf") return {NormKind::Linf};
    throw std::invalid_argument("unknown norm: " + s);
  }
};

/// Norm of the stacked vector (a, b) without materializing it.
inline double joint_norm(const NormSpec& n, double a, std::span<const double> b) {
  switch (n.kind) {
    case NormKind::L1: {
      double s = std::abs(a);
      for (double x : b) s += std::abs(x);
      return s;
    }
    case NormKind::L2: {
      double s = a * a;
      for (double x : b) s += x * x;
      return std::sqrt(s);
    }
    case NormKind::Linf: {
      double s = std::abs(a);
      for (double x : b) s = std::max(s, std::abs(x));
      return s;
    }
  }
  return 0.0;
}

}  // namespace ceflow
