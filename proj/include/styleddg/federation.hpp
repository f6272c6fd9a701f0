#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "styleddg/data.hpp"
#include "styleddg/graph.hpp"
#include "styleddg/model.hpp"
#include "styleddg/rng.hpp"

namespace styleddg {

enum class LrSchedule { constant, sqrt_horizon, cosine };
LrSchedule lr_schedule_from_string(const std::string& s);
const char* to_string(LrSchedule s);
// step size at iteration k of a K-iteration run
double lr_at(LrSchedule s, double lr0, int k, int iters);

struct RunConfig {
    // graph
    GraphKind graph = GraphKind::complete;
    int m = 3;
    double radius = 0.8;
    std::vector<std::pair<int, int>> custom_edges;
    // training
    std::uint64_t seed = 1;
    StyleMode mode = StyleMode::none;
    ModelSpec model;
    StyleLayerConfig style;
    int batch = 16;
    int iters = 400;
    double lr = 0.05;
    LrSchedule sched = LrSchedule::cosine;
    bool dsu_per_instance = true;  // per-(b,c) Gaussian draws for the dsu baseline
    // data
    DataConfig data;
    int target_domain = 0;
    // engine
    int threads = 1;
    bool distinct_init = false;  // per-device random init (consensus-only runs)
    int probe_batch = 32;
    bool probe_grad = true;
    bool record_iterations = true;
};

// the model's input geometry and class count always follow the dataset
void sync_model_to_data(RunConfig& cfg);

// Style statistics as sent over the wire: tagged with the iteration and the
// hash of the mini-batch they were computed from.
struct StylePayload {
    int iter = -1;
    std::uint64_t batch_hash = 0;
    StyleVector sv;
};

struct DeviceState {
    int id = 0;
    ModelParams params;
    Shard shard;
    std::vector<int> neighbors;
    std::map<int, StylePayload> inbox_styles;
    std::map<int, ModelParams> inbox_models;
    Rng batch_rng{0};
    Rng style_rng{0};

    // iteration scratch
    std::vector<int> order;  // shuffled shard order, wrap-around cursor
    int cursor = 0;
    Tensor4 batch_x;
    std::vector<int> batch_y;
    std::uint64_t batch_hash = 0;
    StylePayload outbox;
    std::vector<double> grad;
    double loss = 0.0;
};

struct IterationRecord {
    int k = 0;
    std::vector<double> losses;  // per device
    double disagreement = 0.0;   // (1/m) sum ||theta_i - theta_bar||^2
    double grad_norm_probe = 0.0;
    double wall_ms = 0.0;
    std::int64_t bytes_model = 0;
    std::int64_t bytes_style = 0;
};

struct RunResult {
    std::vector<IterationRecord> records;
    std::vector<ModelParams> final_params;
    ModelParams average_params;
    double rho = 0.0;
    MixingMatrix mixing;
    std::vector<double> probe_sq;  // ||grad F(theta_bar^k)||^2, k = 0..K
    std::vector<double> device_target_acc;
    double avg_model_target_acc = 0.0;
    double avg_model_source_acc = 0.0;
    std::int64_t total_bytes_model = 0;
    std::int64_t total_bytes_style = 0;
    double wall_seconds = 0.0;

    double probe_running_avg() const;
};

std::uint64_t hash_batch(const Tensor4& x, const std::vector<int>& y);

Tensor4 stack_batch(const std::vector<const Sample*>& set, const std::vector<int>& idx);

// Draw one realization of the per-layer style randomness for a forward pass.
// All draws come from rng in a fixed order (hook order; per active layer the
// operator's own parameters) so trajectories are reproducible.
StylePlan sample_plan(const Model& model, StyleMode mode, const StyleLayerConfig& cfg,
                      int batch, Rng& rng, bool dsu_per_instance,
                      const std::map<int, StylePayload>* inbox,
                      const std::vector<int>* neighbors, int expected_iter);

struct GradResult {
    std::vector<double> grad;
    double loss = 0.0;
    StylePlan plan;
};

// One stochastic sample of the style-augmented local gradient on a batch.
GradResult local_gradient(const Model& model, const ModelParams& params, const Tensor4& bx,
                          const std::vector<int>& by, StyleMode mode,
                          const StyleLayerConfig& cfg, bool dsu_per_instance,
                          const std::map<int, StylePayload>& inbox,
                          const std::vector<int>& neighbors, Rng& style_rng,
                          int expected_iter);

// Gradient of the cross-entropy under a frozen plan (used by the
// finite-difference checks, where randomness must not be resampled).
GradResult gradient_with_plan(const Model& model, const ModelParams& params, const Tensor4& bx,
                              const std::vector<int>& by, const StylePlan& plan);

// Simultaneous consensus update from the iteration-k snapshot:
// theta_i <- theta_i + sum_j W_ij (theta_j - theta_i) - alpha g_i
void consensus_step(std::vector<ModelParams>& params, const MixingMatrix& w, double alpha,
                    const std::vector<std::vector<double>>& grads);

double consensus_disagreement(const std::vector<ModelParams>& params);

ModelParams average_params(const std::vector<ModelParams>& params);

double accuracy(const Model& model, const ModelParams& params,
                const std::vector<const Sample*>& set, int eval_batch = 64);

class Engine {
public:
    explicit Engine(RunConfig cfg);
    RunResult run();

    const RunConfig& config() const { return cfg_; }

private:
    RunConfig cfg_;
};

}  // namespace styleddg
