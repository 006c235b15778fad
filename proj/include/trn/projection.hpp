#pragma once

// Per-element spectral filtering of symmetric Hessian blocks: numeric
// eigendecomposition plus clamp / abs / blend / threshold reconstruction,
// and the trust-region-ratio rule that picks a filter per Newton iteration.

#include <cmath>

#include <Eigen/Eigenvalues>

#include "trn/core.hpp"

namespace trn {

enum class FilterKind { clamp, abs, blend };

// The per-iteration resolved filter applied to every element Hessian.
struct SpectralMode {
  FilterKind kind = FilterKind::clamp;
  double blend_w = 0.5;  // used by blend only
};

enum class StrategyKind {
  unprojected,
  clamp,
  abs,
  adaptive,
  fixed_blend,
  threshold_abs,
  pod_shift
};

// Which spectral filter the Newton loop applies each iteration, with the
// parameters the chosen kind needs.
struct ProjectionStrategy {
  StrategyKind kind = StrategyKind::adaptive;
  double clamp_floor = 0.0;   // clamp: eigenvalue floor, >= 0
  double blend_w = 0.5;       // fixed_blend: weight in [0, 1]
  double rho_eps = 0.01;      // adaptive: |rho - 1| threshold, in (0, 1)
  double tau = 0.0;           // threshold_abs: magnitude threshold, > 0
  double shift_growth = 10.0; // pod_shift: diagonal-shift growth factor, > 1
};

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::unprojected: return "unprojected";
    case StrategyKind::clamp: return "clamp";
    case StrategyKind::abs: return "abs";
    case StrategyKind::adaptive: return "adaptive";
    case StrategyKind::fixed_blend: return "fixed_blend";
    case StrategyKind::threshold_abs: return "threshold_abs";
    case StrategyKind::pod_shift: return "pod_shift";
  }
  return "?";
}

template <class Mat>
struct EigPair {
  Eigen::Matrix<double, Mat::RowsAtCompileTime, 1> eigenvalues;  // ascending
  Mat eigenvectors;
};

template <class Mat>
EigPair<Mat> eig_sym(const Mat& h) {
  const double scale = h.cwiseAbs().maxCoeff();
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(scale, 1e-300))
    throw Error("eig_sym: input matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success) throw Error("eig_sym: eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

template <class Vec>
Vec filter_spectrum(const Vec& eigs, const SpectralMode& mode, double clamp_floor = 0.0) {
  Vec out = eigs;
  switch (mode.kind) {
    case FilterKind::clamp:
      for (int i = 0; i < out.size(); ++i) out[i] = std::max(out[i], clamp_floor);
      break;
    case FilterKind::abs:
      for (int i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
      break;
    case FilterKind::blend:
      for (int i = 0; i < out.size(); ++i)
        out[i] = (1.0 - mode.blend_w) * out[i] + mode.blend_w * std::abs(out[i]);
      break;
  }
  return out;
}

// abs when the magnitude exceeds tau, clamp at zero otherwise.
template <class Vec>
Vec resolve_threshold_abs(const Vec& eigs, double tau) {
  if (!(tau > 0)) throw ParameterError("threshold_abs requires tau > 0");
  Vec out = eigs;
  for (int i = 0; i < out.size(); ++i)
    out[i] = std::abs(out[i]) > tau ? std::abs(out[i]) : std::max(out[i], 0.0);
  return out;
}

namespace detail {

template <class Mat, class Vec>
Mat reconstruct(const EigPair<Mat>& eg, const Vec& filtered) {
  Mat out = eg.eigenvectors * filtered.asDiagonal() * eg.eigenvectors.transpose();
  return Mat(0.5 * (out + out.transpose()));
}

}  // namespace detail

template <class Mat>
Mat project_element(const Mat& h, const SpectralMode& mode, double clamp_floor = 0.0) {
  const auto eg = eig_sym(h);
  return detail::reconstruct(eg, filter_spectrum(eg.eigenvalues, mode, clamp_floor));
}

template <class Mat>
Mat project_element_threshold(const Mat& h, double tau) {
  const auto eg = eig_sym(h);
  return detail::reconstruct(eg, resolve_threshold_abs(eg.eigenvalues, tau));
}

// The adaptive switch: clamp (w = 0.5) while the quadratic model tracks the
// energy, abs (w = 1) otherwise. The boundary is inclusive.
inline SpectralMode resolve_adaptive(double rho, double rho_eps) {
  return std::abs(rho - 1.0) <= rho_eps ? SpectralMode{FilterKind::clamp, 0.5}
                                        : SpectralMode{FilterKind::abs, 1.0};
}

}  // namespace trn
