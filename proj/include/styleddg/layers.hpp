#pragma once

#include <vector>

#include "styleddg/stats.hpp"
#include "styleddg/tape.hpp"

namespace styleddg {

// Per-layer random draw for the composed style layer. Sampled once per
// forward pass by the caller; operators never own RNG state.
struct LayerRandomness {
    std::vector<double> eps_mu;     // channels
    std::vector<double> eps_sigma;  // channels
    double lambda = 0.0;
    std::vector<int> shift_mask;    // I_s: 0-1, length B, exactly B/2 ones
    std::vector<int> explore_mask;  // I_e: 0-1, length B, exactly B/2 ones
    std::vector<int> mix_perm;      // I_m: permutation of {0..B-1}
    int neighbor = -1;              // j_l
};

bool valid_half_mask(const std::vector<int>& mask);
bool valid_permutation(const std::vector<int>& perm);

enum class StyleMode { none, mixstyle, dsu, styleddg };

const char* to_string(StyleMode m);
StyleMode style_mode_from_string(const std::string& s);

struct StyleLayerConfig {
    double p_layer = 0.5;        // per-layer activation probability
    double alpha_explore = 3.0;  // extrapolation coefficient
    double beta_a = 0.1;         // Beta prior for lambda
    double beta_b = 0.1;
    double eps_var = kEpsVar;    // variance guard for normalizing sigma
    double lambda_fixed = -1.0;  // >= 0 pins lambda (test/nesting runs)
    double eps_scale = 1.0;      // scales the Gaussian draws (0 disables)
};

// Instance stats of x on the tape: mu (B,C,1,1) and guarded
// sigma = sqrt(var + eps_var) (B,C,1,1). Both carry gradient.
struct StatsNodes {
    Tape::NodeId mu;
    Tape::NodeId sigma;
};
StatsNodes instance_stats_node(Tape& t, Tape::NodeId x, double eps_var);

// sigma_t * (x - mu(x)) / sigma(x) + mu_t, broadcasting targets per (b,c).
Tape::NodeId adain(Tape& t, Tape::NodeId x, Tape::NodeId mu_t, Tape::NodeId sigma_t,
                   double eps_var);
// Variant reusing precomputed own stats so composed operators normalize and
// self-target with identical values.
Tape::NodeId adain_from(Tape& t, Tape::NodeId x, StatsNodes own, Tape::NodeId mu_t,
                        Tape::NodeId sigma_t);

// AdaIN onto the convex combination lambda*own + (1-lambda)*target.
// lambda == 1 returns x unchanged (exact identity, keeps trajectories
// bit-comparable with the unaugmented model).
Tape::NodeId mixstyle(Tape& t, Tape::NodeId x, Tape::NodeId mu_t, Tape::NodeId sigma_t,
                      double lambda, double eps_var);

// MixStyle against the stats of a batch permutation of x itself.
Tape::NodeId mixstyle_shuffle(Tape& t, Tape::NodeId x, const std::vector<int>& perm,
                              double lambda, double eps_var);

// Gaussian style perturbation scaled by the batch's own style deviations.
// eps vectors are length C (one row) or B*C; all-zero eps returns x.
Tape::NodeId dsu(Tape& t, Tape::NodeId x, const std::vector<double>& eps_mu,
                 const std::vector<double>& eps_sigma, double eps_var);

// Shift x_s onto a neighbor's batch-level style (perturbed by eps * the
// neighbor's style deviations); pass x_sc through unchanged; concatenate.
Tape::NodeId style_shift(Tape& t, Tape::NodeId x_s, Tape::NodeId x_sc,
                         const StyleLayerSlice& psi, const std::vector<double>& eps_mu,
                         const std::vector<double>& eps_sigma, double eps_var);

// Extrapolate the selected half's instance stats away from the batch mean
// by alpha, permute the targets by I_m, and MixStyle onto them.
Tape::NodeId style_explore(Tape& t, Tape::NodeId x, const std::vector<int>& explore_mask,
                           const std::vector<int>& mix_perm, double lambda, double alpha,
                           double eps_var);

// The composed per-layer transform: partition by I_s, style_shift, then
// style_explore, then restore original batch order. Call only when the
// layer is active; an inactive layer is the caller passing h through.
Tape::NodeId styleddg_layer(Tape& t, Tape::NodeId h, const StyleLayerSlice& psi,
                            const LayerRandomness& r, const StyleLayerConfig& cfg);

}  // namespace styleddg
