#pragma once

#include <optional>
#include <string>
#include <vector>

#include "styleddg/config.hpp"
#include "styleddg/federation.hpp"

namespace styleddg {

// CSV schema for per-iteration records; bumped when columns change.
inline constexpr const char* kItersCsvSchema = "styleddg-iters-v1";

void write_iterations_csv(const std::string& path, const RunResult& res, int m);

// checkpoint: flat little-endian doubles + JSON sidecar with the block map
void save_checkpoint(const std::string& stem, const Model& model, const ModelParams& p);
ModelParams load_checkpoint(const std::string& stem);

struct CellSummary {
    std::string method;
    int target = 0;
    std::uint64_t seed = 0;
    double radius = 0.0;
    double rho = 0.0;
    double target_acc = 0.0;        // average-model accuracy on the target
    double source_acc = 0.0;
    std::vector<double> device_acc;
    double final_loss_mean = 0.0;
    double bytes_ratio = 0.0;       // style bytes / model bytes
    double wall_seconds = 0.0;
    std::string run_dir;
};

struct ExperimentMatrix {
    std::vector<StyleMode> methods{StyleMode::none};
    std::vector<int> targets;            // empty = config target only
    std::vector<std::uint64_t> seeds{1};
    std::vector<double> radii;           // empty = config radius only
    RunConfig base;
    std::string out_dir;
    int threads = 1;                     // cells in parallel
    bool write_outputs = true;
};

struct MatrixResult {
    std::vector<CellSummary> cells;

    // mean/population-std of avg-model target accuracy over seeds
    struct Agg {
        std::string method;
        int target = 0;
        double radius = 0.0;
        double mean = 0.0;
        double stddev = 0.0;
        double rho_mean = 0.0;
    };
    std::vector<Agg> aggregate() const;
    // per-method mean over targets (the Avg column)
    double method_avg(const std::string& method) const;
};

MatrixResult run_matrix(const ExperimentMatrix& mx);

// Table-1-style text table: methods as rows, targets as columns, Avg last.
std::string format_table(const MatrixResult& mr);

void write_summary_json(const std::string& path, const RunConfig& cfg, const CellSummary& cell,
                        const RunResult& res);
void write_matrix_outputs(const std::string& out_dir, const MatrixResult& mr);

double mean_of(const std::vector<double>& v);
double population_std(const std::vector<double>& v);

}  // namespace styleddg
