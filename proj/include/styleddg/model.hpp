#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleddg/layers.hpp"
#include "styleddg/stats.hpp"
#include "styleddg/tape.hpp"

namespace styleddg {

struct ModelSpec {
    int in_channels = 3;
    int in_h = 16;
    int in_w = 16;
    // style hooks sit on the first three blocks; the final block stays
    // unhooked so the pooled classifier features are computed from the
    // augmented activations rather than replaced by them
    std::vector<int> blocks{8, 16, 32, 32};
    int kernel = 3;
    int classes = 5;
    int pool = 2;                 // average pooling between blocks
    std::vector<int> hooks{1, 2, 3};  // 1-based block indices with style hooks
    double init_scale = 1.0;      // multiplies the fan-in uniform bound

    int layer_count() const { return static_cast<int>(blocks.size()); }
};

// Flat parameter vector; block boundaries come from the owning Model.
struct ModelParams {
    std::vector<double> theta;

    int size() const { return static_cast<int>(theta.size()); }
};

// One hooked layer's style application for a single forward pass.
struct PlanEntry {
    bool active = false;
    // mixstyle
    double lambda = 1.0;
    std::vector<int> perm;
    // dsu (C or B*C entries); styleddg shift (C entries)
    std::vector<double> eps_mu, eps_sigma;
    // styleddg
    LayerRandomness r;
    StyleLayerSlice psi;
};

struct StylePlan {
    StyleMode mode = StyleMode::none;
    StyleLayerConfig cfg;
    std::vector<PlanEntry> layers;  // one per hooked layer, in hook order

    static StylePlan plain() { return StylePlan{}; }
};

class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    int param_count() const { return total_; }
    int layer_count() const { return spec_.layer_count(); }
    const std::vector<int>& hook_channels() const { return hook_channels_; }

    ModelParams init_params(std::uint64_t seed) const;

    struct Segment {
        std::string name;
        int offset = 0;
        Shape shape;
        int block = 0;  // 1-based block, 0 = head
    };
    const std::vector<Segment>& segments() const { return segments_; }
    // [begin, end) offsets of theta_l (1-based l); block 0 gives the head
    std::pair<int, int> block_range(int l) const;

    struct ParamNodes {
        std::vector<Tape::NodeId> conv_w, conv_b;
        Tape::NodeId head_w = -1, head_b = -1;
    };
    ParamNodes emit_params(Tape& t, const ModelParams& p) const;

    struct Forward {
        Tape::NodeId logits = -1;
        std::vector<Tape::NodeId> hooks;  // pre-style activation per hooked layer
    };
    Forward forward(Tape& t, const ParamNodes& pn, Tape::NodeId x,
                    const StylePlan& plan) const;

    // flat gradient in layout order after t.backward()
    std::vector<double> collect_grad(const Tape& t, const ParamNodes& pn) const;

private:
    ModelSpec spec_;
    std::vector<Segment> segments_;
    std::vector<int> hook_channels_;
    int total_ = 0;
    int feat_ = 0;  // classifier input width (last block channels after GAP)
};

// Plain-forward style capture on a batch: the shareable style vector plus
// the per-layer activation bound U and minimum instance sigma observed on
// the same batch (inputs to the statistic bound checks).
struct StyleCapture {
    StyleVector sv;
    std::vector<double> u_per_layer;  // max |activation| per hooked layer
    std::vector<double> min_sigma;    // min instance sigma (eps_var applied)
};
StyleCapture capture_style(const Model& m, const ModelParams& p, const Tensor4& x,
                           double eps_var = kEpsVar);

inline StyleVector device_style_vector(const Model& m, const ModelParams& p, const Tensor4& x,
                                       double eps_var = kEpsVar) {
    return capture_style(m, p, x, eps_var).sv;
}

}  // namespace styleddg
