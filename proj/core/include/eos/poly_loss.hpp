#pragma once

#include <vector>

namespace eos {

/// Even-degree convex polynomial z(T) = sum_i a_{2i} T^{2i}, i >= 1, with
/// nonnegative coefficients and at least one strictly positive.
///
/// This certifies z(0) = 0, z(T) > 0 for T != 0, convexity on all of R, and
/// z'(T)*T >= 0, which is what the DLN analytics rely on.
class PolyLoss {
 public:
  /// coeffs[i] is the coefficient of T^{2(i+1)}: {a2, a4, ...}.
  /// Throws std::invalid_argument on a negative coefficient, an empty list,
  /// or an all-zero list.
  explicit PolyLoss(std::vector<double> coeffs);

  static PolyLoss quadratic(double a2 = 1.0) { return PolyLoss({a2}); }
  static PolyLoss quartic(double a2, double a4) { return PolyLoss({a2, a4}); }

  double value(double t) const;
  double d1(double t) const;  ///< z'(T)
  double d2(double t) const;  ///< z''(T)

  int degree() const { return 2 * static_cast<int>(coeffs_.size()); }
  const std::vector<double>& coefficients() const { return coeffs_; }

  /// True iff z = a2*T^2 (a single quadratic monomial).
  bool is_quadratic() const;

 private:
  std::vector<double> coeffs_;
};

}  // namespace eos
