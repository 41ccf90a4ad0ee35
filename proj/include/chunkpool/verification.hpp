#pragma once

#include <string>
#include <vector>

namespace chunkpool {

struct CheckRow {
    std::string name;
    double max_rel_err = 0.0;
};

inline constexpr double kGradTolerance = 1e-4;

// Finite-difference checks for every differentiable op, a small two-layer
// encoder, and each aggregator+head composite. With corrupt_fixture set, an
// extra row exercises a deliberately wrong backward rule so callers can
// confirm the harness actually detects failures.
std::vector<CheckRow> run_grad_check_suite(bool corrupt_fixture = false);

bool suite_passes(const std::vector<CheckRow>& rows, double tol = kGradTolerance);

}  // namespace chunkpool
