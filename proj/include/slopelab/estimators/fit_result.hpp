#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slopelab/core.hpp"
#include "slopelab/numerics/covariance.hpp"
#include "slopelab/numerics/optimize.hpp"

namespace slopelab {

enum class Method { LM, LME, TwoSlopeLME, TwoStage, MMRM };

inline constexpr std::array<Method, 5> kAllMethods{Method::LM, Method::LME, Method::TwoSlopeLME,
                                                   Method::TwoStage, Method::MMRM};

inline constexpr std::string_view method_name(Method m) {
  switch (m) {
    case Method::LM: return "lm";
    case Method::LME: return "lme";
    case Method::TwoSlopeLME: return "two-slope";
    case Method::TwoStage: return "two-stage";
    case Method::MMRM: return "mmrm";
  }
  return "?";
}

inline std::optional<Method> method_from_name(std::string_view name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  return std::nullopt;
}

struct FitDiagnostics {
  std::optional<numerics::OptResult> opt;
  bool converged = true;
  int subjects_used = 0;
  int subjects_excluded = 0;
  int n_obs = 0;
};

/// Column positions of the per-(arm, visit) cell means in an MMRM fit.
struct MmrmLayout {
  bool separate_baseline = false;
  /// cell_column[arm][visit]; -1 when the cell has no observations.
  std::vector<std::vector<int>> cell_column;
};

struct FitResult {
  Method method = Method::LM;
  int n_arms = 2;
  std::vector<std::string> coef_names;
  numerics::Vector beta;
  numerics::Matrix cov_beta;
  std::optional<numerics::CovarianceParam> cov_params;
  std::optional<double> tau0;
  std::vector<double> grid;
  std::optional<MmrmLayout> mmrm;
  std::optional<double> deviance;
  std::optional<double> aic;
  /// Residual variance estimate (LM only).
  std::optional<double> sigma2;
  FitDiagnostics diagnostics;

  bool converged() const { return diagnostics.converged; }

  int coef_index(std::string_view name) const {
    for (std::size_t i = 0; i < coef_names.size(); ++i)
      if (coef_names[i] == name) return static_cast<int>(i);
    return -1;
  }

  double coef(std::string_view name) const {
    int i = coef_index(name);
    if (i < 0) throw Error(ErrorCode::DomainError, "no coefficient named " + std::string(name));
    return beta[i];
  }
};

struct FitOptions {
  std::optional<double> tau0;
  /// MMRM: estimate a separate baseline mean per arm instead of a shared one.
  bool mmrm_separate_baseline = false;
  numerics::OptOptions optimizer;
};

}  // namespace slopelab
