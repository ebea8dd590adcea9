#pragma once

#include "slopelab/estimators/contrast.hpp"
#include "slopelab/estimators/design.hpp"
#include "slopelab/estimators/fit_result.hpp"
#include "slopelab/estimators/linear.hpp"
#include "slopelab/estimators/mmrm.hpp"
#include "slopelab/estimators/two_stage.hpp"

namespace slopelab {

/// Dispatches to the estimator for `method`. The two-slope model needs
/// options.tau0.
inline FitResult fit_method(const LongitudinalDataset& ds, Method method, const FitOptions& options = {}) {
  switch (method) {
    case Method::LM: return fit_lm(ds);
    case Method::LME: return fit_lme(ds, options.optimizer);
    case Method::TwoSlopeLME:
      if (!options.tau0) throw Error(ErrorCode::InvalidConfig, "two-slope model requires a change-point");
      return fit_two_slope_lme(ds, *options.tau0, options.optimizer);
    case Method::TwoStage: return fit_two_stage(ds);
    case Method::MMRM: return fit_mmrm(ds, options);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown method");
}

}  // namespace slopelab
