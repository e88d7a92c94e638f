#pragma once

#include <vector>

namespace cnsc {

/// One observed patient: covariates, follow-up time, event indicator,
/// treatment, and (for synthetic cohorts only) the true subgroup label.
struct PatientRecord {
  std::vector<double> x;
  double t = 0.0;  // observed time, min(censoring, chosen potential time)
  int d = 0;       // 1 = event observed, 0 = censored
  int a = 0;       // treatment arm
  int z = -1;      // ground-truth subgroup; -1 when unknown
};

}  // namespace cnsc
