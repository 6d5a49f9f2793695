#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace dsshift::quad {

namespace detail {

inline double simpson(const std::function<double(double)>& f, double a, double fa, double b,
                      double fb, double m, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive(const std::function<double(double)>& f, double a, double fa, double b,
                       double fb, double m, double fm, double whole, double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(f, a, fa, m, fm, lm, flm);
  double right = simpson(f, m, fm, b, fb, rm, frm);
  double delta = left + right - whole;
  if (depth <= 0) throw std::runtime_error("adaptive Simpson: recursion limit reached");
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson integration of f over [a, b] to absolute tolerance tol.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-9) {
  if (!(b > a)) throw std::invalid_argument("integrate: need b > a");
  double m = 0.5 * (a + b);
  double fa = f(a), fb = f(b), fm = f(m);
  double whole = detail::simpson(f, a, fa, b, fb, m, fm);
  return detail::adaptive(f, a, fa, b, fb, m, fm, whole, tol, 60);
}

}  // namespace dsshift::quad
