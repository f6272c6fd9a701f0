#pragma once

#include <string>
#include <vector>

#include "styleddg/graph.hpp"

namespace styleddg::checks {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string details;
    double seconds = 0.0;
};

std::vector<std::string> check_names();
CheckResult run_check(const std::string& name, int threads = 1);
std::vector<CheckResult> run_all(int threads = 1);

// single-line report, deterministic (timing goes to a separate column the
// caller may drop)
std::string format_line(const CheckResult& r, bool with_time = false);

// building block shared with unit tests: symmetry/stochasticity/spectral
// requirements on a mixing matrix
CheckResult mixing_matrix_ok(const MixingMatrix& w, const std::string& label);

CheckResult gradient_correctness();
CheckResult operator_identities();
CheckResult lemma1_bounds();
CheckResult prop1_lipschitz();
CheckResult style_vector_size();
CheckResult consensus_contraction();
CheckResult mode_nesting();
CheckResult convergence_trend(int threads = 1);
CheckResult dg_ordering(int threads = 1);
CheckResult radius_sweep(int threads = 1);

}  // namespace styleddg::checks
