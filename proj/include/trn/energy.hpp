#pragma once

// Strain-energy densities (stable Neo-Hookean, ARAP + (J-1)^2, symmetric
// Dirichlet + (J-1)^2) with analytic per-element value / gradient / Hessian,
// plus central-finite-difference oracles.
//
// Derivatives are taken w.r.t. vec(F) in column-major order and chained to
// the 12 vertex coordinates through the constant 9x12 map dvec(F)/dx.

#include <array>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/SVD>

#include "trn/core.hpp"
#include "trn/mesh.hpp"

namespace trn {

struct MaterialParams {
  double young = 0;
  double poisson = 0;
  double mu = 0;
  double lambda = 0;
};

enum class EnergyModel { stable_neo_hookean, arap_vol, symmetric_dirichlet_vol };

inline std::pair<double, double> lame_from_young_poisson(double young, double poisson) {
  if (!(young > 0)) throw ParameterError("Young's modulus must be positive");
  if (!(poisson >= 0) || poisson >= 0.5)
    throw ParameterError("Poisson's ratio must lie in [0, 0.5)");
  const double mu = young / (2.0 * (1.0 + poisson));
  const double lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  return {mu, lambda};
}

inline MaterialParams make_material(double young, double poisson) {
  auto [mu, lambda] = lame_from_young_poisson(young, poisson);
  return {young, poisson, mu, lambda};
}

// F = Ds * dm_inv with Ds columns x_k - x_0. Inverted configurations are
// allowed; J = det F may be <= 0.
inline Mat3 deformation_gradient(const std::array<Vec3, 4>& x, const Mat3& dm_inv) {
  Mat3 ds;
  for (int k = 0; k < 3; ++k) ds.col(k) = x[k + 1] - x[0];
  return ds * dm_inv;
}

inline Mat3 cofactor(const Mat3& f) {
  Mat3 c;
  c.col(0) = f.col(1).cross(f.col(2));
  c.col(1) = f.col(2).cross(f.col(0));
  c.col(2) = f.col(0).cross(f.col(1));
  return c;  // dJ/dF
}

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v[2], v[1], v[2], 0, -v[0], -v[1], v[0], 0;
  return m;
}

// d^2 det / dvecF^2, evaluated with the columns of M; linear in M. The same
// block structure gives d vec(cof F) = det_hessian(F) dvec(F) and, by the
// symmetry of the constant third derivative of det, the derivative of
// det_hessian(F) g contractions against a fixed g.
inline Mat9 det_hessian(const Mat3& m) {
  const Mat3 m0 = cross_matrix(m.col(0));
  const Mat3 m1 = cross_matrix(m.col(1));
  const Mat3 m2 = cross_matrix(m.col(2));
  Mat9 h = Mat9::Zero();
  h.block<3, 3>(0, 3) = -m2;
  h.block<3, 3>(0, 6) = m1;
  h.block<3, 3>(3, 0) = m2;
  h.block<3, 3>(3, 6) = -m0;
  h.block<3, 3>(6, 0) = -m1;
  h.block<3, 3>(6, 3) = m0;
  return h;
}

// SVD with det(U) = det(V) = +1; sigma[2] may be negative under inversion.
inline void signed_svd(const Mat3& f, Mat3& u, Vec3& sigma, Mat3& v) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  u = svd.matrixU();
  v = svd.matrixV();
  sigma = svd.singularValues();
  if (u.determinant() < 0) {
    u.col(2) *= -1;
    sigma[2] *= -1;
  }
  if (v.determinant() < 0) {
    v.col(2) *= -1;
    sigma[2] *= -1;
  }
}

inline Mat3 polar_rotation(const Mat3& f) {
  Mat3 u, v;
  Vec3 sigma;
  signed_svd(f, u, sigma, v);
  return u * v.transpose();
}

inline double energy_density(EnergyModel model, const MaterialParams& p, const Mat3& f) {
  const double j = f.determinant();
  switch (model) {
    case EnergyModel::stable_neo_hookean: {
      const double ic = f.squaredNorm();
      const double d = j - 1.0 - p.mu / p.lambda;
      return 0.5 * p.mu * (ic - 3.0) + 0.5 * p.lambda * d * d;
    }
    case EnergyModel::arap_vol: {
      const Mat3 r = polar_rotation(f);
      return 0.5 * p.mu * (f - r).squaredNorm() + 0.5 * p.lambda * (j - 1.0) * (j - 1.0);
    }
    case EnergyModel::symmetric_dirichlet_vol: {
      if (j <= 0) return std::numeric_limits<double>::infinity();
      const double inv2 = cofactor(f).squaredNorm() / (j * j);
      return 0.5 * p.mu * (f.squaredNorm() + inv2 - 6.0) +
             0.5 * p.lambda * (j - 1.0) * (j - 1.0);
    }
  }
  return 0;
}

struct DensityDerivs {
  double value = 0;
  Vec9 grad = Vec9::Zero();
  Mat9 hess = Mat9::Zero();
};

namespace detail {

inline Vec9 vec9(const Mat3& m) { return Eigen::Map<const Vec9>(m.data()); }

inline DensityDerivs snh_derivs(const MaterialParams& p, const Mat3& f) {
  DensityDerivs d;
  const double j = f.determinant();
  const Mat3 cof = cofactor(f);
  const Vec9 g = vec9(cof);
  const double shift = j - 1.0 - p.mu / p.lambda;
  d.value = 0.5 * p.mu * (f.squaredNorm() - 3.0) + 0.5 * p.lambda * shift * shift;
  d.grad = p.mu * vec9(f) + p.lambda * shift * g;
  d.hess = p.mu * Mat9::Identity() + p.lambda * (g * g.transpose()) +
           p.lambda * shift * det_hessian(f);
  return d;
}

inline DensityDerivs arap_derivs(const MaterialParams& p, const Mat3& f) {
  DensityDerivs d;
  Mat3 u, v;
  Vec3 sigma;
  signed_svd(f, u, sigma, v);
  const Mat3 r = u * v.transpose();
  const double j = f.determinant();
  const Mat3 cof = cofactor(f);
  const Vec9 g = vec9(cof);

  d.value = 0.5 * p.mu * (f - r).squaredNorm() + 0.5 * p.lambda * (j - 1.0) * (j - 1.0);
  d.grad = p.mu * vec9(f - r) + p.lambda * (j - 1.0) * g;

  // dR/dF from the three twist modes of the signed SVD.
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Mat3 w[3];
  w[0] << 0, -1, 0, 1, 0, 0, 0, 0, 0;   // couples sigma_0, sigma_1
  w[1] << 0, 0, 0, 0, 0, 1, 0, -1, 0;   // couples sigma_1, sigma_2
  w[2] << 0, 0, 1, 0, 0, 0, -1, 0, 0;   // couples sigma_0, sigma_2
  const double denom[3] = {sigma[0] + sigma[1], sigma[1] + sigma[2], sigma[0] + sigma[2]};
  Mat9 rot_grad = Mat9::Zero();
  for (int k = 0; k < 3; ++k) {
    const Vec9 q = vec9(Mat3(inv_sqrt2 * u * w[k] * v.transpose()));
    rot_grad += (2.0 / denom[k]) * (q * q.transpose());
  }
  d.hess = p.mu * (Mat9::Identity() - rot_grad) + p.lambda * (g * g.transpose()) +
           p.lambda * (j - 1.0) * det_hessian(f);
  return d;
}

inline DensityDerivs symdir_derivs(const MaterialParams& p, const Mat3& f) {
  DensityDerivs d;
  const double j = f.determinant();
  if (j <= 0) {
    d.value = std::numeric_limits<double>::infinity();
    return d;
  }
  const Mat3 cof = cofactor(f);
  const Vec9 g = vec9(cof);
  const Mat9 t = det_hessian(f);
  const double psum = g.squaredNorm();  // |F^{-1}|^2 = psum / J^2
  const double j2 = j * j, j3 = j2 * j, j4 = j2 * j2;

  d.value = 0.5 * p.mu * (f.squaredNorm() + psum / j2 - 6.0) +
            0.5 * p.lambda * (j - 1.0) * (j - 1.0);

  const Vec9 tg = t * g;
  const Vec9 grad_s = (2.0 / j2) * tg - (2.0 * psum / j3) * g;
  d.grad = p.mu * (vec9(f) + 0.5 * grad_s) + p.lambda * (j - 1.0) * g;

  Mat9 hess_s = (2.0 / j2) * (det_hessian(cof) + t * t);
  hess_s -= (4.0 / j3) * (tg * g.transpose() + g * tg.transpose());
  hess_s -= (2.0 * psum / j3) * t;
  hess_s += (6.0 * psum / j4) * (g * g.transpose());
  d.hess = p.mu * (Mat9::Identity() + 0.5 * hess_s) + p.lambda * (g * g.transpose()) +
           p.lambda * (j - 1.0) * t;
  return d;
}

}  // namespace detail

inline DensityDerivs density_derivs(EnergyModel model, const MaterialParams& p, const Mat3& f) {
  switch (model) {
    case EnergyModel::stable_neo_hookean: return detail::snh_derivs(p, f);
    case EnergyModel::arap_vol: return detail::arap_derivs(p, f);
    case EnergyModel::symmetric_dirichlet_vol: return detail::symdir_derivs(p, f);
  }
  return {};
}

// dvec(F)/dx: constant per element, x packs the four vertices contiguously.
inline Eigen::Matrix<double, 9, 12> vecF_jacobian(const Mat3& dm_inv) {
  Eigen::Matrix<double, 9, 12> g = Eigen::Matrix<double, 9, 12>::Zero();
  Eigen::Matrix<double, 4, 3> w;
  w.row(0) = -(dm_inv.row(0) + dm_inv.row(1) + dm_inv.row(2));
  w.row(1) = dm_inv.row(0);
  w.row(2) = dm_inv.row(1);
  w.row(3) = dm_inv.row(2);
  for (int k = 0; k < 4; ++k)
    for (int b = 0; b < 3; ++b)
      for (int a = 0; a < 3; ++a) g(a + 3 * b, 3 * k + a) = w(k, b);
  return g;
}

struct ElementQuadratics {
  double value = 0;       // volume-weighted energy
  Vec12 gradient = Vec12::Zero();
  Mat12 hessian = Mat12::Zero();
};

// Exact analytic derivatives of volume * psi(F(x)) w.r.t. the 12 vertex
// coordinates. An infinite density propagates into value; gradient/Hessian
// are not meaningful there and the caller must not use them.
inline ElementQuadratics element_quadratics(EnergyModel model, const MaterialParams& p,
                                            const std::array<Vec3, 4>& x, const Mat3& dm_inv,
                                            double volume) {
  ElementQuadratics q;
  const Mat3 f = deformation_gradient(x, dm_inv);
  const DensityDerivs d = density_derivs(model, p, f);
  q.value = volume * d.value;
  if (!std::isfinite(d.value)) return q;
  const auto g = vecF_jacobian(dm_inv);
  q.gradient = volume * (g.transpose() * d.grad);
  const Mat12 h = volume * (g.transpose() * d.hess * g);
  q.hessian = 0.5 * (h + h.transpose());
  return q;
}

inline double characteristic_edge(const std::array<Vec3, 4>& x) {
  double sum = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) sum += (x[a] - x[b]).norm();
  return sum / 6.0;
}

namespace fd {

// Central differences of a scalar function of the element's 12 coordinates.
// Independent of the analytic derivative path; used as the test oracle.
template <class Fn>
Vec12 gradient(Fn&& energy, std::array<Vec3, 4> x, double h) {
  Vec12 g;
  for (int i = 0; i < 12; ++i) {
    double& xi = x[i / 3][i % 3];
    const double orig = xi;
    xi = orig + h;
    const double fp = energy(x);
    xi = orig - h;
    const double fm = energy(x);
    xi = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("finite-difference oracle hit an infeasible state");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

template <class Fn>
Mat12 hessian(Fn&& energy, std::array<Vec3, 4> x, double h) {
  Mat12 hess;
  auto eval = [&](int i, double di, int j, double dj) {
    double& xi = x[i / 3][i % 3];
    double& xj = x[j / 3][j % 3];
    const double oi = xi, oj = xj;
    xi += di;
    xj += dj;
    const double f = energy(x);
    xi = oi;
    xj = oj;
    if (!std::isfinite(f)) throw Error("finite-difference oracle hit an infeasible state");
    return f;
  };
  for (int i = 0; i < 12; ++i) {
    for (int j = i; j < 12; ++j) {
      double v;
      if (i == j) {
        const double f0 = eval(i, 0, j, 0);
        v = (eval(i, h, j, 0) - 2.0 * f0 + eval(i, -h, j, 0)) / (h * h);
      } else {
        v = (eval(i, h, j, h) - eval(i, h, j, -h) - eval(i, -h, j, h) + eval(i, -h, j, -h)) /
            (4.0 * h * h);
      }
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace fd

inline Vec12 fd_gradient(EnergyModel model, const MaterialParams& p,
                         const std::array<Vec3, 4>& x, const Mat3& dm_inv, double volume,
                         double h = 0.0) {
  if (h <= 0) h = 1e-5 * characteristic_edge(x);
  auto energy = [&](const std::array<Vec3, 4>& xe) {
    return volume * energy_density(model, p, deformation_gradient(xe, dm_inv));
  };
  return fd::gradient(energy, x, h);
}

inline Mat12 fd_hessian(EnergyModel model, const MaterialParams& p, const std::array<Vec3, 4>& x,
                        const Mat3& dm_inv, double volume, double h = 0.0) {
  if (h <= 0) h = 1e-5 * characteristic_edge(x);
  auto energy = [&](const std::array<Vec3, 4>& xe) {
    return volume * energy_density(model, p, deformation_gradient(xe, dm_inv));
  };
  return fd::hessian(energy, x, h);
}

}  // namespace trn
