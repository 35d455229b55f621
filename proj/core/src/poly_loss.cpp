#include "eos/poly_loss.hpp"

#include <stdexcept>

namespace eos {

PolyLoss::PolyLoss(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  if (coeffs_.empty())
    throw std::invalid_argument("PolyLoss: coefficient list is empty");
  bool any_positive = false;
  for (double a : coeffs_) {
    if (a < 0.0)
      throw std::invalid_argument("PolyLoss: negative coefficient");
    if (a > 0.0) any_positive = true;
  }
  if (!any_positive)
    throw std::invalid_argument("PolyLoss: all coefficients are zero");
}

double PolyLoss::value(double t) const {
  // Horner in t^2.
  const double t2 = t * t;
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * t2 + *it;
  return acc * t2;
}

double PolyLoss::d1(double t) const {
  const double t2 = t * t;
  double acc = 0.0;
  double p = 2.0 * static_cast<double>(coeffs_.size());
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it, p -= 2.0)
    acc = acc * t2 + p * (*it);
  return acc * t;
}

double PolyLoss::d2(double t) const {
  const double t2 = t * t;
  double acc = 0.0;
  double p = 2.0 * static_cast<double>(coeffs_.size());
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it, p -= 2.0)
    acc = acc * t2 + p * (p - 1.0) * (*it);
  return acc;
}

bool PolyLoss::is_quadratic() const {
  for (std::size_t i = 1; i < coeffs_.size(); ++i)
    if (coeffs_[i] != 0.0) return false;
  return true;
}

}  // namespace eos
