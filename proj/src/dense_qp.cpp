#include "formula/dense_qp.hpp"

#include "formula/types.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace formula {
namespace {

// Largest step in (0, 1] keeping v + t * dv nonnegative, with a fraction-to-boundary factor.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double t = 1.0;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (dv[k] < 0.0) t = std::min(t, -v[k] / dv[k]);
  return t;
}

}  // namespace

DenseQpResult solve_dense_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                             const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                             const DenseQpOptions& options) {
  const Eigen::Index n = H.rows();
  const Eigen::Index m = A.rows();
  if (H.cols() != n || g.size() != n || (m > 0 && A.cols() != n) || b.size() != m)
    throw ConfigError("dense_qp: inconsistent dimensions");

  DenseQpResult result;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (m == 0) {
    llt.compute(H);
    result.z = llt.solve(-g);
    result.converged = llt.info() == Eigen::Success;
    return result;
  }

  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd s = (b - A * z).cwiseMax(1.0);
  Eigen::VectorXd lam = Eigen::VectorXd::Ones(m);
  const double scale = 1.0 + std::max(g.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>());

  // Rows with a single nonzero (bounds) go straight onto the diagonal of K.
  std::vector<Eigen::Index> dense_rows;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> single;  // (row, column)
  for (Eigen::Index r = 0; r < m; ++r) {
    Eigen::Index nnz = 0;
    Eigen::Index col = 0;
    for (Eigen::Index c = 0; c < n; ++c)
      if (A(r, c) != 0.0) {
        ++nnz;
        col = c;
      }
    if (nnz == 1)
      single.emplace_back(r, col);
    else if (nnz > 1)
      dense_rows.push_back(r);
  }
  Eigen::MatrixXd A_dense(static_cast<Eigen::Index>(dense_rows.size()), n);
  for (std::size_t k = 0; k < dense_rows.size(); ++k)
    A_dense.row(static_cast<Eigen::Index>(k)) = A.row(dense_rows[k]);
  Eigen::VectorXd w_dense(A_dense.rows());

  Eigen::MatrixXd K(n, n);
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    const Eigen::VectorXd r_dual = H * z + g + A.transpose() * lam;
    const Eigen::VectorXd r_prim = A * z + s - b;
    const double mu = s.dot(lam) / static_cast<double>(m);
    if (r_dual.lpNorm<Eigen::Infinity>() <= options.tolerance * scale &&
        r_prim.lpNorm<Eigen::Infinity>() <= options.tolerance * scale &&
        mu <= options.tolerance) {
      result.converged = true;
      break;
    }

    const Eigen::VectorXd w = lam.cwiseQuotient(s);
    K = H;
    for (std::size_t k = 0; k < dense_rows.size(); ++k)
      w_dense[static_cast<Eigen::Index>(k)] = w[dense_rows[k]];
    if (A_dense.rows() > 0) K.noalias() += A_dense.transpose() * w_dense.asDiagonal() * A_dense;
    for (const auto& [r, c] : single) K(c, c) += w[r] * A(r, c) * A(r, c);
    llt.compute(K);
    if (llt.info() != Eigen::Success) break;

    // Newton direction for a given complementarity residual r_c = s.*lam - target.
    auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dz, Eigen::VectorXd& ds,
                         Eigen::VectorXd& dlam) {
      const Eigen::VectorXd t = (-r_c + lam.cwiseProduct(r_prim)).cwiseQuotient(s);
      dz = llt.solve(-r_dual - A.transpose() * t);
      ds = -r_prim - A * dz;
      dlam = (-r_c - lam.cwiseProduct(ds)).cwiseQuotient(s);
    };

    Eigen::VectorXd dz, ds, dlam;
    direction(s.cwiseProduct(lam), dz, ds, dlam);
    const double alpha_aff = std::min(max_step(s, ds), max_step(lam, dlam));
    const double mu_aff =
        (s + alpha_aff * ds).dot(lam + alpha_aff * dlam) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3);

    const Eigen::VectorXd r_c =
        s.cwiseProduct(lam) + ds.cwiseProduct(dlam) - Eigen::VectorXd::Constant(m, sigma * mu);
    direction(r_c, dz, ds, dlam);
    const double alpha = 0.99 * std::min(max_step(s, ds), max_step(lam, dlam));
    z += alpha * dz;
    s += alpha * ds;
    lam += alpha * dlam;
    s = s.cwiseMax(1e-300);
    lam = lam.cwiseMax(1e-300);
  }
  result.z = z;
  result.multipliers = lam;
  return result;
}

}  // namespace formula
