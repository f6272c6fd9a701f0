#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleddg/tensor.hpp"

namespace styleddg {

// Per-channel affine style plus a texture signature. Class content is
// shared across domains; only these parameters differ.
struct DomainSpec {
    int id = 0;
    std::vector<double> scale{1.0, 1.0, 1.0};
    std::vector<double> shift{0.0, 0.0, 0.0};
    double tex_freq = 0.0;   // cycles across the image
    double tex_amp = 0.0;
    double tex_angle = 0.0;  // radians
    double noise_amp = 0.0;
};

struct Sample {
    Tensor4 image;  // (1,C,H,W)
    int label = 0;
    int domain = 0;
};

struct Dataset {
    int channels = 3, height = 16, width = 16;
    int classes = 5;
    std::vector<int> domain_ids;
    std::vector<Sample> train;
    std::vector<Sample> test;

    std::vector<const Sample*> domain_train(int d) const;
    std::vector<const Sample*> domain_test(int d) const;
};

struct DataConfig {
    int domains = 4;
    int classes = 5;
    int train_per_domain = 600;
    int test_per_domain = 300;
    int channels = 3, height = 16, width = 16;
    double style_gap = 1.0;   // scales the default inter-domain style spread
    double noise_amp = 0.03;  // per-pixel Gaussian noise in every domain
    double label_noise = 0.0; // fraction of samples with a resampled label
    // strength of the class-correlated brightness/contrast cue. It predicts
    // the class within any single domain but is scrambled by unseen domain
    // styles, so models leaning on it lose accuracy out of domain.
    double shortcut = 0.8;
};

// Default domain styles: widening per-channel affine + texture signatures,
// spread controlled by style_gap.
std::vector<DomainSpec> default_domains(const DataConfig& cfg);

// Deterministic given seed. Content depends on (seed, class, index) only,
// so domains differing just in style render the same underlying pattern.
Dataset generate(const std::vector<DomainSpec>& domains, const DataConfig& cfg,
                 std::uint64_t seed);

struct Shard {
    int device = 0;
    int domain = 0;
    std::vector<const Sample*> samples;
};

struct LeaveOneOutSplit {
    std::vector<Shard> shards;                 // one per device, single-domain each
    std::vector<const Sample*> target_set;     // held-out target domain (test half)
    std::vector<const Sample*> source_eval;    // source-domain test pool
};

// Source domains round-robin over devices (each device exactly one domain);
// the target domain held out entirely.
LeaveOneOutSplit split_leave_one_domain_out(const Dataset& ds, int target_domain, int m);

// flat binary: magic, counts, dims, then per-sample label/domain and
// little-endian doubles
void dump_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace styleddg
