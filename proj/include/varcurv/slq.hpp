#pragma once
// Stochastic Lanczos quadrature for spectral functionals of a symmetric
// operator accessed only through matrix-vector products.
//
// Each probe z gives an m-point Gauss quadrature for the spectral measure
// of A seen from z: run m Lanczos steps from q1 = z / |z| with full
// reorthogonalization, eigendecompose the tridiagonal T = V diag(theta) V',
// and take nodes theta_k with weights w_k = V(1,k)^2 (which sum to 1).
// Then tau = |z|^2 sum_k w_k f(theta_k) estimates z' f(A) z, and averaging
// tau over probes estimates tr f(A).
//
// Spectral-shape metrics are functionals of the direction-level measure the
// quadrature represents: an atom (theta, w) stands for w * D directions of
// magnitude |theta|, giving
//   participation ratio  D (sum w |theta|)^2 / sum (w theta^2)
//   effective rank       exp of the matching entropy,
// both clamped to [1, D]; lambda_min is the most negative pooled node and
// negative mass the quadrature weight on theta < 0.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "varcurv/landscape.hpp"
#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

struct MatVecOperator {
  int dimension = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
};

inline MatVecOperator dense_operator(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols())
    throw std::invalid_argument("dense_operator: matrix not square");
  Eigen::MatrixXd m = matrix;
  return {static_cast<int>(m.rows()),
          [m](const Eigen::VectorXd& v) { return (m * v).eval(); }};
}

inline MatVecOperator diagonal_operator(const Eigen::VectorXd& diagonal) {
  Eigen::VectorXd d = diagonal;
  return {static_cast<int>(d.size()),
          [d](const Eigen::VectorXd& v) {
            return (d.array() * v.array()).matrix().eval();
          }};
}

// Randomized symmetry check: |u'Av - v'Au| <= tol * |u| |v| |A|_est must
// hold on every trial. Throws on failure; SLQ runs call this first.
inline void check_symmetry(const MatVecOperator& op, RandomStream& stream,
                           int trials = 4, double tol = 1e-8) {
  if (op.dimension <= 0 || !op.apply)
    throw std::invalid_argument("check_symmetry: empty operator");
  double norm_est = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::VectorXd u = stream.gaussian_vector(op.dimension);
    const Eigen::VectorXd v = stream.gaussian_vector(op.dimension);
    const Eigen::VectorXd au = op.apply(u);
    const Eigen::VectorXd av = op.apply(v);
    if (!au.allFinite() || !av.allFinite())
      throw std::runtime_error("check_symmetry: non-finite operator output");
    norm_est = std::max({norm_est, au.norm() / u.norm(), av.norm() / v.norm()});
    const double defect = std::abs(u.dot(av) - v.dot(au));
    const double scale = u.norm() * v.norm() * std::max(norm_est, 1e-300);
    if (defect > tol * scale) {
      throw std::runtime_error(
          "check_symmetry: operator asymmetry " + std::to_string(defect) +
          " exceeds tolerance at scale " + std::to_string(scale));
    }
  }
}

struct Tridiagonal {
  std::vector<double> diag;     // alpha_1..alpha_k
  std::vector<double> offdiag;  // beta_1..beta_{k-1}
  bool breakdown = false;       // stopped early on beta < tolerance
};

// Lanczos with full reorthogonalization (twice per step, desk scale).
// Breakdown at beta < 1e-12 truncates: the Krylov space is exhausted, which
// happens after g steps when the start vector touches only g eigenspaces.
inline Tridiagonal lanczos(const MatVecOperator& op,
                           const Eigen::VectorXd& start, int steps,
                           double breakdown_tol = 1e-12) {
  if (op.dimension <= 0 || !op.apply)
    throw std::invalid_argument("lanczos: empty operator");
  if (start.size() != op.dimension)
    throw std::invalid_argument("lanczos: start vector dimension mismatch");
  if (steps < 1 || steps > op.dimension)
    throw std::invalid_argument("lanczos: steps must lie in [1, dimension]");
  const double nrm = start.norm();
  if (!(nrm > 0.0))
    throw std::invalid_argument("lanczos: zero start vector");

  Tridiagonal t;
  Eigen::MatrixXd q(op.dimension, steps);
  q.col(0) = start / nrm;
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(op.dimension);
  double beta_prev = 0.0;
  for (int k = 0; k < steps; ++k) {
    Eigen::VectorXd w = op.apply(q.col(k));
    if (!w.allFinite())
      throw std::runtime_error("lanczos: non-finite operator output");
    const double alpha = q.col(k).dot(w);
    w -= alpha * q.col(k);
    if (k > 0) w -= beta_prev * prev;
    // Full reorthogonalization against all stored vectors, applied twice.
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coeffs =
          q.leftCols(k + 1).transpose() * w;
      w -= q.leftCols(k + 1) * coeffs;
    }
    t.diag.push_back(alpha);
    const double beta = w.norm();
    if (k + 1 == steps) break;
    if (beta < breakdown_tol) {
      t.breakdown = true;
      break;
    }
    t.offdiag.push_back(beta);
    prev = q.col(k);
    q.col(k + 1) = w / beta;
    beta_prev = beta;
  }
  return t;
}

struct ProbeQuadrature {
  Eigen::VectorXd nodes;    // Ritz values
  Eigen::VectorXd weights;  // squared first eigenvector components, sum 1
  double probe_norm_sq = 0.0;
};

inline ProbeQuadrature ritz_quadrature(const Tridiagonal& t,
                                       double probe_norm_sq) {
  const int k = static_cast<int>(t.diag.size());
  if (k == 0) throw std::invalid_argument("ritz_quadrature: empty tridiagonal");
  Eigen::MatrixXd tm = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) tm(i, i) = t.diag[static_cast<size_t>(i)];
  for (int i = 0; i + 1 < k; ++i) {
    tm(i, i + 1) = t.offdiag[static_cast<size_t>(i)];
    tm(i + 1, i) = t.offdiag[static_cast<size_t>(i)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tm);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("ritz_quadrature: eigendecomposition failed");
  ProbeQuadrature q;
  q.nodes = es.eigenvalues();
  q.weights = es.eigenvectors().row(0).transpose().array().square();
  q.probe_norm_sq = probe_norm_sq;
  return q;
}

enum class ProbeKind { rademacher, gaussian };

struct SlqResult {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::vector<double> per_probe;            // tau_j
  std::vector<ProbeQuadrature> quadratures; // one per probe
};

inline SlqResult slq_trace(const MatVecOperator& op,
                           const std::function<double(double)>& f, int probes,
                           int steps, RandomStream& stream,
                           ProbeKind kind = ProbeKind::rademacher) {
  if (probes < 1) throw std::invalid_argument("slq_trace: probes must be >= 1");
  if (!f) throw std::invalid_argument("slq_trace: empty node function");
  check_symmetry(op, stream);

  SlqResult result;
  result.per_probe.reserve(static_cast<size_t>(probes));
  result.quadratures.reserve(static_cast<size_t>(probes));
  RunningMoments moments;
  for (int j = 0; j < probes; ++j) {
    const Eigen::VectorXd z = kind == ProbeKind::rademacher
                                  ? stream.rademacher_vector(op.dimension)
                                  : stream.gaussian_vector(op.dimension);
    const Tridiagonal t = lanczos(op, z, steps);
    const ProbeQuadrature q = ritz_quadrature(t, z.squaredNorm());
    KahanSum s;
    for (int k = 0; k < q.nodes.size(); ++k)
      s.add(q.weights[k] * f(q.nodes[k]));
    const double tau = q.probe_norm_sq * s.value();
    if (!std::isfinite(tau))
      throw std::runtime_error("slq_trace: non-finite probe estimate");
    result.per_probe.push_back(tau);
    result.quadratures.push_back(q);
    moments.add(tau);
  }
  result.estimate = moments.mean();
  result.standard_error = moments.standard_error();
  return result;
}

struct SpectralShape {
  double lambda_min = 0.0;
  double negative_mass = 0.0;
  double participation_ratio = 1.0;
  double effective_rank = 1.0;
};

// Metrics of one pooled node/weight cloud (weights renormalized to sum 1).
inline SpectralShape spectral_shape_of_cloud(
    const std::vector<std::pair<double, double>>& nodes_and_weights,
    int dimension) {
  if (nodes_and_weights.empty())
    throw std::invalid_argument("spectral_shape_of_cloud: empty cloud");
  KahanSum total_w, neg, m_abs, m_sq, entropy;
  double lambda_min = std::numeric_limits<double>::infinity();
  for (const auto& [node, weight] : nodes_and_weights) {
    total_w.add(weight);
    lambda_min = std::min(lambda_min, node);
    if (node < 0.0) neg.add(weight);
  }
  const double w_norm = total_w.value();
  if (!(w_norm > 0.0))
    throw std::invalid_argument("spectral_shape_of_cloud: zero total weight");
  for (const auto& [node, weight] : nodes_and_weights) {
    const double w = weight / w_norm;
    const double mag = std::abs(node);
    m_abs.add(w * mag);
    m_sq.add(w * node * node);
    if (mag > 0.0) entropy.add(w * mag * std::log(mag));
  }
  SpectralShape shape;
  shape.lambda_min = lambda_min;
  shape.negative_mass = neg.value() / w_norm;
  const double d = static_cast<double>(dimension);
  if (m_abs.value() > 0.0 && m_sq.value() > 0.0) {
    shape.participation_ratio =
        std::clamp(d * m_abs.value() * m_abs.value() / m_sq.value(), 1.0, d);
    // Direction-level entropy: -sum p log p with p proportional to |theta|
    // over w * D directions per atom.
    const double h =
        -entropy.value() / m_abs.value() + std::log(d * m_abs.value());
    shape.effective_rank = std::clamp(std::exp(h), 1.0, d);
  } else {
    // All quadrature mass at zero: shape carries no information.
    shape.participation_ratio = std::numeric_limits<double>::quiet_NaN();
    shape.effective_rank = std::numeric_limits<double>::quiet_NaN();
  }
  return shape;
}

struct SpectralMetrics {
  int seeds = 0;
  std::vector<SpectralShape> per_seed;
  SpectralShape mean;
  SpectralShape standard_error;
};

// Repeats the probe set over independent seeds and reports mean +- SE of
// each metric across seeds.
inline SpectralMetrics spectral_metrics(const MatVecOperator& op, int probes,
                                        int steps, const StreamKey& key,
                                        int seeds,
                                        ProbeKind kind = ProbeKind::rademacher) {
  if (seeds < 1)
    throw std::invalid_argument("spectral_metrics: seeds must be >= 1");
  SpectralMetrics metrics;
  metrics.seeds = seeds;
  RunningMoments m_min, m_neg, m_pr, m_er;
  for (int s = 0; s < seeds; ++s) {
    RandomStream stream = derive_stream(key.child("seed", s));
    const SlqResult slq =
        slq_trace(op, [](double x) { return x; }, probes, steps, stream, kind);
    std::vector<std::pair<double, double>> cloud;
    for (const ProbeQuadrature& q : slq.quadratures)
      for (int k = 0; k < q.nodes.size(); ++k)
        cloud.emplace_back(q.nodes[k], q.weights[k]);
    const SpectralShape shape = spectral_shape_of_cloud(cloud, op.dimension);
    metrics.per_seed.push_back(shape);
    m_min.add(shape.lambda_min);
    m_neg.add(shape.negative_mass);
    m_pr.add(shape.participation_ratio);
    m_er.add(shape.effective_rank);
  }
  metrics.mean = {m_min.mean(), m_neg.mean(), m_pr.mean(), m_er.mean()};
  metrics.standard_error = {m_min.standard_error(), m_neg.standard_error(),
                            m_pr.standard_error(), m_er.standard_error()};
  return metrics;
}

// Central-difference Hessian-vector product of a gradient field:
// A v ~= (g(theta + h v) - g(theta - h v)) / (2 h), exact on quadratics.
inline MatVecOperator hvp_operator(
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient,
    const Eigen::VectorXd& theta, double fd_scale) {
  if (!(fd_scale > 0.0) || !std::isfinite(fd_scale))
    throw std::invalid_argument("hvp_operator: fd_scale must be > 0");
  if (!gradient) throw std::invalid_argument("hvp_operator: empty gradient");
  Eigen::VectorXd base = theta;
  auto grad = std::move(gradient);
  const double h = fd_scale;
  return {static_cast<int>(base.size()),
          [base, grad, h](const Eigen::VectorXd& v) {
            const Eigen::VectorXd hi = grad(base + h * v);
            const Eigen::VectorXd lo = grad(base - h * v);
            Eigen::VectorXd out = (hi - lo) / (2.0 * h);
            if (!out.allFinite())
              throw std::runtime_error("hvp_operator: non-finite product");
            return out;
          }};
}

inline MatVecOperator hvp_operator(const QuadraticLandscape& landscape,
                                   const Eigen::VectorXd& theta,
                                   double fd_scale) {
  QuadraticLandscape copy = landscape;
  return hvp_operator(
      [copy](const Eigen::VectorXd& x) { return copy.gradient(x); }, theta,
      fd_scale);
}

// Reward convention: the field is -grad L, so curvature at a minimum of L
// shows up negative.
inline MatVecOperator hvp_operator(const DoubleWellLandscape& landscape,
                                   const Eigen::VectorXd& theta,
                                   double fd_scale) {
  DoubleWellLandscape copy = landscape;
  return hvp_operator(
      [copy](const Eigen::VectorXd& x) { return copy.reward_gradient(x); },
      theta, fd_scale);
}

// Evaluation-only variant: the gradient field itself is the isotropic ES
// estimate with `samples` perturbations. Each apply uses a fresh derived
// stream, so the operator is deterministic given the key but carries
// Monte Carlo noise; symmetry holds only to that noise level.
inline MatVecOperator hvp_operator_sampled(const Objective& objective,
                                           const Eigen::VectorXd& theta,
                                           double fd_scale,
                                           double smoothing_sigma, int samples,
                                           const StreamKey& key) {
  if (!(smoothing_sigma > 0.0))
    throw std::invalid_argument("hvp_operator_sampled: sigma must be > 0");
  if (samples < 1)
    throw std::invalid_argument("hvp_operator_sampled: samples must be >= 1");
  Objective obj = objective;
  auto counter = std::make_shared<std::uint64_t>(0);
  const double h = fd_scale;
  const double sig = smoothing_sigma;
  Eigen::VectorXd base = theta;
  auto estimate = [obj, sig, samples](const Eigen::VectorXd& at,
                                      RandomStream& stream) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(obj.dimension());
    for (int k = 0; k < samples; ++k) {
      const Eigen::VectorXd eps = stream.gaussian_vector(obj.dimension());
      g += obj.evaluate(at + sig * eps, &stream) * eps;
    }
    return (g / (static_cast<double>(samples) * sig)).eval();
  };
  return {obj.dimension(),
          [base, estimate, h, key, counter](const Eigen::VectorXd& v) {
            RandomStream stream = derive_stream(key.child("hvp", (*counter)++));
            const Eigen::VectorXd hi = estimate(base + h * v, stream);
            const Eigen::VectorXd lo = estimate(base - h * v, stream);
            Eigen::VectorXd out = (hi - lo) / (2.0 * h);
            if (!out.allFinite())
              throw std::runtime_error(
                  "hvp_operator_sampled: non-finite product");
            return out;
          }};
}

}  // namespace varcurv
