#pragma once

#include <cmath>

namespace ctsftm {

// Exact integrals of u^m * exp(c*u) over [a, b], m = 0, 1, 2, written in the
// shifted form int_0^L (a+s)^m e^{cs} ds * e^{ca} so small c*L is stable.
// They back the closed-form compensator masses of the piecewise log-linear
// hazard and its score/information.

namespace detail {

// theta1(x) = (e^x - 1)/x, theta1(0) = 1
inline double theta1(double x) {
  if (x == 0.0) return 1.0;
  return std::expm1(x) / x;
}

// theta2(x) = int_0^1 t e^{xt} dt = (e^x (x-1) + 1)/x^2, theta2(0) = 1/2
inline double theta2(double x) {
  if (std::abs(x) > 0.5) return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
  // sum_{m>=0} x^m (m+1)/(m+2)!
  double term = 0.5, sum = 0.5;
  for (int m = 1; m < 16; ++m) {
    term *= x * (m + 1) / (static_cast<double>(m) * (m + 2));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

// theta3(x) = int_0^1 t^2 e^{xt} dt = (e^x (x^2-2x+2) - 2)/x^3, theta3(0) = 1/3
inline double theta3(double x) {
  if (std::abs(x) > 0.5) return (std::exp(x) * (x * x - 2.0 * x + 2.0) - 2.0) / (x * x * x);
  // sum_{m>=0} x^m (m+1)(m+2)/(m+3)!
  double term = 1.0 / 3.0, sum = term;
  for (int m = 1; m < 16; ++m) {
    term *= x * (m + 2) / (static_cast<double>(m) * (m + 3));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace detail

// int_a^b e^{cu} du
inline double exp_int0(double a, double b, double c) {
  const double len = b - a;
  return std::exp(c * a) * len * detail::theta1(c * len);
}

// int_a^b u e^{cu} du
inline double exp_int1(double a, double b, double c) {
  const double len = b - a;
  const double x = c * len;
  return std::exp(c * a) * (a * len * detail::theta1(x) + len * len * detail::theta2(x));
}

// int_a^b u^2 e^{cu} du
inline double exp_int2(double a, double b, double c) {
  const double len = b - a;
  const double x = c * len;
  return std::exp(c * a) * (a * a * len * detail::theta1(x) +
                            2.0 * a * len * len * detail::theta2(x) +
                            len * len * len * detail::theta3(x));
}

}  // namespace ctsftm
