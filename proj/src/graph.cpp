#include "styleddg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "styleddg/rng.hpp"

namespace styleddg {

int DeviceGraph::degree(int i) const {
    int d = 0;
    for (int j = 0; j < m; ++j) d += edge(i, j) ? 1 : 0;
    return d;
}

std::vector<int> DeviceGraph::neighbors(int i) const {
    std::vector<int> out;
    for (int j = 0; j < m; ++j)
        if (edge(i, j)) out.push_back(j);
    return out;
}

bool DeviceGraph::connected() const {
    if (m == 0) return false;
    std::vector<char> seen(m, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < m; ++j)
            if (edge(i, j) && !seen[j]) {
                seen[j] = 1;
                ++count;
                stack.push_back(j);
            }
    }
    return count == m;
}

GraphKind graph_kind_from_string(const std::string& s) {
    if (s == "complete") return GraphKind::complete;
    if (s == "ring") return GraphKind::ring;
    if (s == "rgg" || s == "random_geometric") return GraphKind::random_geometric;
    if (s == "custom") return GraphKind::custom;
    throw ConfigError("unknown graph kind '" + s + "'");
}

const char* to_string(GraphKind k) {
    switch (k) {
        case GraphKind::complete: return "complete";
        case GraphKind::ring: return "ring";
        case GraphKind::random_geometric: return "rgg";
        case GraphKind::custom: return "custom";
    }
    return "?";
}

namespace {
// m = 1 yields the trivial single-node graph (plain centralized training)
DeviceGraph empty_graph(int m) {
    if (m < 1) throw ConfigError("graph: need at least 1 device, got " + std::to_string(m));
    DeviceGraph g;
    g.m = m;
    g.adj.assign(static_cast<std::size_t>(m) * m, 0);
    return g;
}
void set_edge(DeviceGraph& g, int i, int j) {
    if (i == j) throw InputError("graph: self-loop at node " + std::to_string(i));
    if (i < 0 || j < 0 || i >= g.m || j >= g.m)
        throw InputError("graph: edge endpoint out of range");
    g.adj[static_cast<std::size_t>(i) * g.m + j] = 1;
    g.adj[static_cast<std::size_t>(j) * g.m + i] = 1;
}
}  // namespace

DeviceGraph build_complete(int m) {
    DeviceGraph g = empty_graph(m);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) set_edge(g, i, j);
    return g;
}

DeviceGraph build_ring(int m) {
    DeviceGraph g = empty_graph(m);
    for (int i = 0; i < m; ++i) set_edge(g, i, (i + 1) % m);
    return g;
}

DeviceGraph build_random_geometric(int m, double radius, Rng& rng, int max_retries) {
    if (radius <= 0.0) throw ConfigError("rgg: radius must be positive");
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        DeviceGraph g = empty_graph(m);
        std::vector<double> px(m), py(m);
        for (int i = 0; i < m; ++i) {
            px[i] = rng.uniform();
            py[i] = rng.uniform();
        }
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const double dx = px[i] - px[j], dy = py[i] - py[j];
                if (std::sqrt(dx * dx + dy * dy) <= radius) set_edge(g, i, j);
            }
        if (g.connected()) return g;
    }
    throw ConfigError("rgg: no connected graph within " + std::to_string(max_retries) +
                      " attempts (radius " + std::to_string(radius) + ")");
}

DeviceGraph build_custom(int m, const std::vector<std::pair<int, int>>& edges) {
    DeviceGraph g = empty_graph(m);
    for (const auto& [i, j] : edges) set_edge(g, i, j);
    if (!g.connected()) throw ConfigError("custom graph is not connected");
    return g;
}

DeviceGraph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open edge list '" + path + "'");
    std::vector<std::pair<int, int>> edges;
    int maxn = -1, a, b;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        if (!(ls >> a >> b)) throw InputError("edge list: bad line '" + line + "'");
        edges.emplace_back(a, b);
        maxn = std::max({maxn, a, b});
    }
    return build_custom(maxn + 1, edges);
}

void dump_edge_list(const DeviceGraph& g, const std::string& path) {
    std::ofstream out(path);
    for (int i = 0; i < g.m; ++i)
        for (int j = i + 1; j < g.m; ++j)
            if (g.edge(i, j)) out << i << " " << j << "\n";
}

bool MixingMatrix::symmetric(double tol) const {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < i; ++j)
            if (std::fabs(at(i, j) - at(j, i)) > tol) return false;
    return true;
}

double MixingMatrix::stochasticity_error() const {
    double err = 0.0;
    for (int i = 0; i < m; ++i) {
        double rs = 0.0, cs = 0.0;
        for (int j = 0; j < m; ++j) {
            rs += at(i, j);
            cs += at(j, i);
        }
        err = std::max({err, std::fabs(rs - 1.0), std::fabs(cs - 1.0)});
    }
    return err;
}

void MixingMatrix::dump_csv(const std::string& path) const {
    std::ofstream out(path);
    out.precision(17);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) out << (j ? "," : "") << at(i, j);
        out << "\n";
    }
}

MixingMatrix metropolis_weights(const DeviceGraph& g) {
    if (!g.connected()) throw InputError("metropolis_weights: graph must be connected");
    MixingMatrix w;
    w.m = g.m;
    w.w.assign(static_cast<std::size_t>(g.m) * g.m, 0.0);
    std::vector<int> deg(g.m);
    for (int i = 0; i < g.m; ++i) deg[i] = g.degree(i);
    for (int i = 0; i < g.m; ++i) {
        double off = 0.0;
        for (int j = 0; j < g.m; ++j) {
            if (!g.edge(i, j)) continue;
            const double p = 1.0 / (1.0 + std::max(deg[i], deg[j]));
            w.at(i, j) = p;
            off += p;
        }
        w.at(i, i) = 1.0 - off;
    }
    return w;
}

std::vector<double> symmetric_eigenvalues(const std::vector<double>& a_in, int n) {
    std::vector<double> a = a_in;
    auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-30) {
            std::vector<double> ev(n);
            for (int i = 0; i < n; ++i) ev[i] = at(i, i);
            std::sort(ev.begin(), ev.end());
            return ev;
        }
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double sgn = theta >= 0.0 ? 1.0 : -1.0;
                const double tt =
                    sgn / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(tt * tt + 1.0);
                const double s = tt * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    throw NumericError("symmetric_eigenvalues: Jacobi sweep did not converge");
}

Spectral spectral_gap(const MixingMatrix& w) {
    if (!w.symmetric(1e-9))
        throw InputError("spectral_gap: mixing matrix must be symmetric");
    Spectral sp;
    sp.eigenvalues = symmetric_eigenvalues(w.w, w.m);
    // exclude one Perron eigenvalue (the one closest to 1)
    int perron = 0;
    double best = 1e300;
    for (int i = 0; i < w.m; ++i) {
        const double d = std::fabs(sp.eigenvalues[i] - 1.0);
        if (d < best) {
            best = d;
            perron = i;
        }
    }
    double rho = 0.0;
    for (int i = 0; i < w.m; ++i)
        if (i != perron) rho = std::max(rho, std::fabs(sp.eigenvalues[i]));
    sp.rho = rho;
    sp.gap = 1.0 - rho;
    return sp;
}

}  // namespace styleddg
