#pragma once
// Small numeric helpers shared across modules: compensated summation,
// running moments, ordinary least squares, and the interpolated empirical
// quantile. Nothing here owns randomness.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace varcurv {

// Kahan-Neumaier compensated accumulator. Mode sums must stay accurate for
// spectra with up to ~1e7 entries, where naive summation loses digits.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double kahan_total(const std::vector<double>& xs) {
  KahanSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

// Welford running mean/variance.
class RunningMoments {
 public:
  void add(double x) {
    ++count_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const {  // sample variance, n-1 denominator
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double standard_error() const {
    return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_))
                      : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty sample");
  KahanSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

inline double variance_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  KahanSum s;
  for (double x : xs) s.add((x - m) * (x - m));
  return s.value() / static_cast<double>(xs.size() - 1);
}

inline double standard_error_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(variance_of(xs) / static_cast<double>(xs.size()));
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
  std::vector<double> residuals;
};

// OLS of y on x with intercept. For a zero-variance response the fit is the
// constant and r_squared is reported as exactly 1 (0 residual, 0 total).
inline LinearFit fit_line(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("fit_line: size mismatch");
  if (x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 points");
  const std::size_t n = x.size();
  const double xm = mean_of(x);
  const double ym = mean_of(y);
  KahanSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((x[i] - xm) * (x[i] - xm));
    sxy.add((x[i] - xm) * (y[i] - ym));
  }
  if (sxx.value() <= 0.0)
    throw std::invalid_argument("fit_line: degenerate x values");
  LinearFit fit;
  fit.slope = sxy.value() / sxx.value();
  fit.intercept = ym - fit.slope * xm;
  KahanSum ss_res, ss_tot;
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    fit.residuals[i] = r;
    ss_res.add(r * r);
    ss_tot.add((y[i] - ym) * (y[i] - ym));
  }
  fit.r_squared = ss_tot.value() > 0.0
                      ? 1.0 - ss_res.value() / ss_tot.value()
                      : (ss_res.value() == 0.0 ? 1.0 : 0.0);
  return fit;
}

// Empirical quantile with linear interpolation between closest ranks:
// h = (n-1) p, q = x_(floor(h)) + frac(h) (x_(floor(h)+1) - x_(floor(h))).
// For {1..100} at level 0.95 this gives 95.05.
inline double quantile_linear(std::vector<double> xs, double level) {
  if (xs.empty()) throw std::invalid_argument("quantile_linear: empty sample");
  if (!(level >= 0.0 && level <= 1.0))
    throw std::invalid_argument("quantile_linear: level outside [0, 1]");
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * level;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= xs.size()) return xs.back();
  const double frac = h - static_cast<double>(lo);
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

inline bool all_finite(const std::vector<double>& xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace varcurv
