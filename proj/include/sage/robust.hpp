#pragma once

#include <cmath>
#include <stdexcept>

namespace sage {

// "Fair" loss on a squared residual a with bound b:
// rho(a; b) = 2 (sqrt(a/b) - ln(1 + sqrt(a/b))).
inline double fair_loss(double a, double b) {
  if (a < 0.0) throw std::domain_error("fair_loss: negative argument");
  const double u = std::sqrt(a / b);
  return 2.0 * (u - std::log1p(u));
}

// d rho_fair / d a = 1 / (b (1 + sqrt(a/b))).
inline double fair_loss_derivative(double a, double b) {
  if (a < 0.0) throw std::domain_error("fair_loss: negative argument");
  return 1.0 / (b * (1.0 + std::sqrt(a / b)));
}

// Cauchy loss on a squared residual: rho(a; b) = ln(1 + a/b).
inline double cauchy_loss(double a, double b) {
  if (a < 0.0) throw std::domain_error("cauchy_loss: negative argument");
  return std::log1p(a / b);
}

inline double cauchy_loss_derivative(double a, double b) {
  if (a < 0.0) throw std::domain_error("cauchy_loss: negative argument");
  return 1.0 / (a + b);
}

struct RobustKernel {
  enum class Type { None, Fair, Cauchy };
  Type type = Type::None;
  double bound = 1.0;

  static RobustKernel none() { return {Type::None, 1.0}; }
  static RobustKernel fair(double b) { return {Type::Fair, b}; }
  static RobustKernel cauchy(double b) { return {Type::Cauchy, b}; }

  double value(double a) const {
    switch (type) {
      case Type::Fair: return fair_loss(a, bound);
      case Type::Cauchy: return cauchy_loss(a, bound);
      default: return a;
    }
  }

  double derivative(double a) const {
    switch (type) {
      case Type::Fair: return fair_loss_derivative(a, bound);
      case Type::Cauchy: return cauchy_loss_derivative(a, bound);
      default: return 1.0;
    }
  }
};

}  // namespace sage
