#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "styleddg/tensor.hpp"

namespace styleddg {

class Rng;

struct DeviceGraph {
    int m = 0;
    std::vector<std::uint8_t> adj;  // m*m symmetric, zero diagonal

    bool edge(int i, int j) const { return adj[static_cast<std::size_t>(i) * m + j] != 0; }
    int degree(int i) const;
    std::vector<int> neighbors(int i) const;
    bool connected() const;
};

enum class GraphKind { complete, ring, random_geometric, custom };

GraphKind graph_kind_from_string(const std::string& s);
const char* to_string(GraphKind k);

DeviceGraph build_complete(int m);
DeviceGraph build_ring(int m);
// m points uniform in the unit square, edges at distance <= radius,
// resampled until connected (bounded retries).
DeviceGraph build_random_geometric(int m, double radius, Rng& rng, int max_retries = 1000);
DeviceGraph build_custom(int m, const std::vector<std::pair<int, int>>& edges);

// "i j" per line, 0-indexed
DeviceGraph load_edge_list(const std::string& path);
void dump_edge_list(const DeviceGraph& g, const std::string& path);

struct MixingMatrix {
    int m = 0;
    std::vector<double> w;  // m*m row-major

    double at(int i, int j) const { return w[static_cast<std::size_t>(i) * m + j]; }
    double& at(int i, int j) { return w[static_cast<std::size_t>(i) * m + j]; }

    bool symmetric(double tol = 1e-12) const;
    // max |row sum - 1| and |col sum - 1|
    double stochasticity_error() const;
    void dump_csv(const std::string& path) const;
};

MixingMatrix metropolis_weights(const DeviceGraph& g);

struct Spectral {
    double rho = 0.0;  // second-largest eigenvalue magnitude
    double gap = 0.0;  // 1 - rho
    std::vector<double> eigenvalues;  // ascending
};

// Symmetric eigensolve via cyclic Jacobi rotations; m stays desk-scale so
// no external linear algebra is pulled in.
Spectral spectral_gap(const MixingMatrix& w);

std::vector<double> symmetric_eigenvalues(const std::vector<double>& a, int n);

}  // namespace styleddg
