#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcnn/model.hpp"

namespace tcnn {

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;  // ||analytic - fd||_inf / max(1, ||fd||_inf)
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double worst = 0.0;
    bool passed(double tol = 1e-4) const { return worst <= tol; }
};

/// Checks every parameter-group gradient of the full training objective
/// against central finite differences (eps = 1e-5) on a small config
/// (s=7, l=8, d=6, w=3, L=2) with `n_batches` random batches.
GradCheckReport gradient_check(Variant variant, std::uint64_t seed, std::size_t n_batches = 3,
                               bool use_answer = true);

}  // namespace tcnn
