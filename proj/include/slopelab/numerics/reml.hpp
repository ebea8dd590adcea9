#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "slopelab/numerics/covariance.hpp"
#include "slopelab/numerics/linalg.hpp"

namespace slopelab::numerics {

/// One subject's response and design. Z is used by random-effects
/// covariances, `visits` (indices into the visit grid) by unstructured ones.
struct SubjectBlock {
  Vector y;
  Matrix X;
  Matrix Z;
  std::vector<int> visits;
};

/// Subjects sharing an identical design, reduced to sufficient statistics:
/// count, mean response and within-group scatter about that mean.
struct DesignGroup {
  Matrix X;
  Matrix Z;
  std::vector<int> visits;
  int n = 0;
  Vector ybar;
  Matrix scatter;
};

struct GroupedData {
  std::vector<DesignGroup> groups;
  int n_obs = 0;
  int n_subjects = 0;
  int n_fixed = 0;
  /// Added to every diagonal of V. Keeps the deviance bounded below when
  /// the data are fit exactly; callers pick it far below any real variance.
  double nugget = 0.0;
};

namespace detail {

inline std::vector<double> design_key(const SubjectBlock& b) {
  std::vector<double> key;
  key.reserve(3 + b.X.size() + b.Z.size() + b.visits.size());
  key.push_back(static_cast<double>(b.X.rows()));
  key.push_back(static_cast<double>(b.X.cols()));
  key.push_back(static_cast<double>(b.Z.cols()));
  key.insert(key.end(), b.X.data(), b.X.data() + b.X.size());
  key.insert(key.end(), b.Z.data(), b.Z.data() + b.Z.size());
  for (int v : b.visits) key.push_back(v);
  return key;
}

}  // namespace detail

/// Collapses subjects with identical (X, Z, visits) into design groups.
/// Group order follows first appearance.
inline GroupedData group_blocks(std::span<const SubjectBlock> blocks, double nugget = 0.0) {
  GroupedData data;
  data.nugget = nugget;
  std::map<std::vector<double>, std::size_t> index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.y.size() == 0) continue;
    auto [it, inserted] = index.try_emplace(detail::design_key(b), members.size());
    if (inserted) {
      members.emplace_back();
      DesignGroup g;
      g.X = b.X;
      g.Z = b.Z;
      g.visits = b.visits;
      data.groups.push_back(std::move(g));
    }
    members[it->second].push_back(i);
    data.n_obs += static_cast<int>(b.y.size());
    ++data.n_subjects;
    data.n_fixed = static_cast<int>(b.X.cols());
  }
  for (std::size_t gi = 0; gi < data.groups.size(); ++gi) {
    auto& g = data.groups[gi];
    const auto m = g.X.rows();
    g.n = static_cast<int>(members[gi].size());
    g.ybar = Vector::Zero(m);
    for (auto i : members[gi]) g.ybar += blocks[i].y;
    g.ybar /= g.n;
    g.scatter = Matrix::Zero(m, m);
    for (auto i : members[gi]) {
      Vector d = blocks[i].y - g.ybar;
      g.scatter.noalias() += d * d.transpose();
    }
  }
  return data;
}

/// Marginal covariance of one design group under a decoded parameter.
struct DecodedCovariance {
  CovKind kind = CovKind::RandomEffects;
  Matrix block;  // Psi or Sigma
  double residual = 0.0;

  explicit DecodedCovariance(const CovarianceParam& p)
      : kind(p.kind), block(p.matrix()), residual(p.residual_variance()) {}

  Matrix operator()(const DesignGroup& g, double nugget) const {
    Matrix v;
    if (kind == CovKind::RandomEffects) {
      v = g.Z * block * g.Z.transpose();
      v.diagonal().array() += residual + nugget;
    } else {
      const auto m = static_cast<Eigen::Index>(g.visits.size());
      v.resize(m, m);
      for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b) v(a, b) = block(g.visits[a], g.visits[b]);
      v.diagonal().array() += nugget;
    }
    return v;
  }
};

struct GlsResult {
  /// -2 * restricted log-likelihood, including the (N - p) log(2 pi) term.
  double deviance = 0.0;
  Vector beta;
  /// (sum X' V^-1 X)^-1
  Matrix cov_beta;
  /// sum X' V^-1 (y - X beta); zero up to rounding at the GLS solution.
  Vector score;
};

/// Generalized least squares at a fixed covariance plus the REML deviance
///   sum log|V_i| + log|sum X_i' V_i^-1 X_i| + sum r_i' V_i^-1 r_i + (N - p) log(2 pi)
/// where r_i are residuals at the profiled beta. `cov` maps a group to V.
///
/// When `dev_by_v` is non-null it receives, per group, the matrix M_g with
/// d(deviance) = sum_g tr(M_g dV_g):
///   M_g = n V^-1 - V^-1 (W + n r r') V^-1 - n V^-1 X A^-1 X' V^-1.
template <class CovFn>
GlsResult gls_evaluate(const GroupedData& data, CovFn&& cov, std::vector<Matrix>* dev_by_v = nullptr) {
  const int p = data.n_fixed;
  Matrix a = Matrix::Zero(p, p);
  Vector b = Vector::Zero(p);
  double logdet_v = 0.0;
  double trace_terms = 0.0;

  std::vector<Eigen::LLT<Matrix>> factors;
  factors.reserve(data.groups.size());
  for (const auto& g : data.groups) {
    factors.push_back(factor_psd(cov(g, data.nugget)));
    const auto& llt = factors.back();
    logdet_v += g.n * log_det(llt);
    Matrix vinv_x = llt.solve(g.X);
    a.noalias() += g.n * (g.X.transpose() * vinv_x);
    b.noalias() += g.n * (vinv_x.transpose() * g.ybar);
    if (g.n > 1) trace_terms += llt.solve(g.scatter).trace();
  }

  Eigen::LLT<Matrix> a_llt(a);
  if (a_llt.info() != Eigen::Success || !(a_llt.matrixLLT().diagonal().array() > 0.0).all())
    throw Error(ErrorCode::SingularDesign, "fixed-effect information matrix is singular");

  GlsResult out;
  out.beta = a_llt.solve(b);
  out.cov_beta = a_llt.solve(Matrix::Identity(p, p));
  out.score = Vector::Zero(p);

  double quad = trace_terms;
  for (std::size_t i = 0; i < data.groups.size(); ++i) {
    const auto& g = data.groups[i];
    Vector r = g.ybar - g.X * out.beta;
    Vector vinv_r = factors[i].solve(r);
    quad += g.n * r.dot(vinv_r);
    out.score.noalias() += g.n * (g.X.transpose() * vinv_r);
  }

  if (dev_by_v) {
    dev_by_v->clear();
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
      const auto& g = data.groups[i];
      const auto m = g.X.rows();
      Matrix vinv = factors[i].solve(Matrix::Identity(m, m));
      Vector r = g.ybar - g.X * out.beta;
      Matrix outer = g.scatter + g.n * (r * r.transpose());
      Matrix vinv_x = vinv * g.X;
      Matrix mg = g.n * vinv - vinv * outer * vinv - g.n * (vinv_x * out.cov_beta * vinv_x.transpose());
      dev_by_v->push_back(std::move(mg));
    }
  }

  out.deviance = logdet_v + log_det(a_llt) + quad +
                 (data.n_obs - p) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.deviance)) throw Error(ErrorCode::NotPD, "non-finite deviance");
  return out;
}

inline GlsResult reml_evaluate(const GroupedData& data, const CovarianceParam& param) {
  DecodedCovariance cov(param);
  return gls_evaluate(data, cov);
}

struct RemlGradient {
  double deviance = 0.0;
  Vector gradient;
};

/// Deviance and its exact gradient with respect to the log-Cholesky theta.
inline RemlGradient reml_deviance_gradient(const GroupedData& data, const CovarianceParam& param) {
  DecodedCovariance cov(param);
  std::vector<Matrix> dev_by_v;
  auto gls = gls_evaluate(data, cov, &dev_by_v);

  const int dim = param.dim;
  Matrix g_block = Matrix::Zero(dim, dim);
  double g_resid = 0.0;
  for (std::size_t i = 0; i < data.groups.size(); ++i) {
    const auto& grp = data.groups[i];
    const auto& mg = dev_by_v[i];
    if (param.kind == CovKind::RandomEffects) {
      g_block.noalias() += grp.Z.transpose() * mg * grp.Z;
      g_resid += mg.trace();
    } else {
      for (std::size_t a = 0; a < grp.visits.size(); ++a)
        for (std::size_t b = 0; b < grp.visits.size(); ++b) g_block(grp.visits[a], grp.visits[b]) += mg(a, b);
    }
  }

  // Block = L L'  =>  d dev / dL = 2 G L on the lower triangle.
  const Matrix l = param.cholesky();
  const Matrix dl = 2.0 * g_block * l;
  RemlGradient out;
  out.deviance = gls.deviance;
  out.gradient.resize(param.n_params());
  int k = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j, ++k) out.gradient[k] = (i == j) ? dl(i, j) * l(i, i) : dl(i, j);
  if (param.kind == CovKind::RandomEffects) out.gradient[k] = 2.0 * param.residual_variance() * g_resid;
  return out;
}

inline double reml_deviance(const GroupedData& data, const CovarianceParam& param) {
  return reml_evaluate(data, param).deviance;
}

inline double reml_deviance(std::span<const SubjectBlock> blocks, const CovarianceParam& param) {
  return reml_deviance(group_blocks(blocks), param);
}

}  // namespace slopelab::numerics
