#include "styleddg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace styleddg {

namespace fs = std::filesystem;
using nlohmann::json;

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

void write_iterations_csv(const std::string& path, const RunResult& res, int m) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "# " << kItersCsvSchema << "\n";
    out << "k,disagreement,grad_norm_probe,bytes_model,bytes_style";
    for (int i = 0; i < m; ++i) out << ",loss_" << i;
    out << "\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : res.records) {
        out << r.k << "," << fmt(r.disagreement) << "," << fmt(r.grad_norm_probe) << ","
            << r.bytes_model << "," << r.bytes_style;
        for (double l : r.losses) out << "," << fmt(l);
        out << "\n";
    }
}

void save_checkpoint(const std::string& stem, const Model& model, const ModelParams& p) {
    {
        std::ofstream out(stem + ".bin", std::ios::binary);
        if (!out) throw InputError("cannot write '" + stem + ".bin'");
        out.write(reinterpret_cast<const char*>(p.theta.data()),
                  static_cast<std::streamsize>(p.theta.size() * sizeof(double)));
    }
    json side;
    side["count"] = p.theta.size();
    side["format"] = "f64le";
    json blocks = json::array();
    for (const auto& s : model.segments()) {
        blocks.push_back({{"name", s.name},
                          {"offset", s.offset},
                          {"count", s.shape.size()},
                          {"block", s.block},
                          {"shape", {s.shape.b, s.shape.c, s.shape.h, s.shape.w}}});
    }
    side["segments"] = blocks;
    std::ofstream out(stem + ".json");
    out << side.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::string& stem) {
    std::ifstream side(stem + ".json");
    if (!side) throw InputError("cannot read '" + stem + ".json'");
    json j;
    side >> j;
    const std::size_t count = j.at("count").get<std::size_t>();
    ModelParams p;
    p.theta.resize(count);
    std::ifstream in(stem + ".bin", std::ios::binary);
    if (!in) throw InputError("cannot read '" + stem + ".bin'");
    in.read(reinterpret_cast<char*>(p.theta.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw InputError("checkpoint '" + stem + ".bin' truncated");
    return p;
}

void write_summary_json(const std::string& path, const RunConfig& cfg, const CellSummary& cell,
                        const RunResult& res) {
    json j;
    j["method"] = to_string(cfg.mode);
    j["target"] = cfg.target_domain;
    j["seed"] = cfg.seed;
    j["graph"] = to_string(cfg.graph);
    j["m"] = cfg.m;
    j["radius"] = cfg.radius;
    j["rho"] = res.rho;
    j["iters"] = cfg.iters;
    j["target_acc_avg_model"] = res.avg_model_target_acc;
    j["source_acc_avg_model"] = res.avg_model_source_acc;
    j["target_acc_per_device"] = res.device_target_acc;
    j["bytes_model_total"] = res.total_bytes_model;
    j["bytes_style_total"] = res.total_bytes_style;
    j["bytes_ratio_style_to_model"] = cell.bytes_ratio;
    j["final_loss_mean"] = cell.final_loss_mean;
    j["probe_running_avg"] = res.probe_running_avg();
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

namespace {

std::string cell_dir_name(const CellSummary& c, bool with_radius) {
    std::string s = c.method + "_t" + std::to_string(c.target) + "_s" + std::to_string(c.seed);
    if (with_radius) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "_r%g", c.radius);
        s += buf;
    }
    return s;
}

}  // namespace

MatrixResult run_matrix(const ExperimentMatrix& mx) {
    std::vector<RunConfig> cfgs;
    std::vector<CellSummary> cells;
    const std::vector<int> targets =
        mx.targets.empty() ? std::vector<int>{mx.base.target_domain} : mx.targets;
    const std::vector<double> radii =
        mx.radii.empty() ? std::vector<double>{mx.base.radius} : mx.radii;
    const bool with_radius = mx.radii.size() > 1;

    for (double radius : radii)
        for (StyleMode method : mx.methods)
            for (int target : targets)
                for (std::uint64_t seed : mx.seeds) {
                    RunConfig cfg = mx.base;
                    cfg.mode = method;
                    cfg.target_domain = target;
                    cfg.seed = seed;
                    cfg.radius = radius;
                    CellSummary cell;
                    cell.method = to_string(method);
                    cell.target = target;
                    cell.seed = seed;
                    cell.radius = radius;
                    cfgs.push_back(std::move(cfg));
                    cells.push_back(std::move(cell));
                }

    if (mx.write_outputs) fs::create_directories(mx.out_dir);

    const int n = static_cast<int>(cfgs.size());
    std::vector<std::string> errors(n);
    const int threads = std::max(1, std::min(mx.threads, n));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += threads) {
                try {
                    RunConfig cfg = cfgs[i];
                    CellSummary& cell = cells[i];
                    std::string dir;
                    std::ofstream csv;
                    if (mx.write_outputs) {
                        dir = (fs::path(mx.out_dir) / cell_dir_name(cell, with_radius)).string();
                        fs::create_directories(dir);
                        std::ofstream cfg_out(fs::path(dir) / "config.txt");
                        cfg_out << config_to_text(cfg);
                        // mark in-flight; removed on completion so an
                        // interrupted cell can be spotted and redone
                        std::ofstream(fs::path(dir) / "RESUMABLE") << "incomplete\n";
                        csv.open(fs::path(dir) / "iters.csv");
                        csv << "# " << kItersCsvSchema << "\n";
                        csv << "k,disagreement,grad_norm_probe,bytes_model,bytes_style";
                        for (int d = 0; d < cfg.m; ++d) csv << ",loss_" << d;
                        csv << "\n";
                    }
                    Engine eng(cfg);
                    RunResult res = eng.run();
                    if (mx.write_outputs) {
                        char buf[64];
                        auto fmt = [&buf](double v) {
                            std::snprintf(buf, sizeof(buf), "%.17g", v);
                            return std::string(buf);
                        };
                        for (const auto& r : res.records) {
                            csv << r.k << "," << fmt(r.disagreement) << ","
                                << fmt(r.grad_norm_probe) << "," << r.bytes_model << ","
                                << r.bytes_style;
                            for (double l : r.losses) csv << "," << fmt(l);
                            csv << "\n";
                            csv.flush();
                        }
                    }
                    cell.rho = res.rho;
                    cell.target_acc = res.avg_model_target_acc;
                    cell.source_acc = res.avg_model_source_acc;
                    cell.device_acc = res.device_target_acc;
                    cell.bytes_ratio =
                        res.total_bytes_model > 0
                            ? static_cast<double>(res.total_bytes_style) / res.total_bytes_model
                            : 0.0;
                    cell.final_loss_mean =
                        res.records.empty() ? 0.0 : mean_of(res.records.back().losses);
                    cell.wall_seconds = res.wall_seconds;
                    cell.run_dir = dir;
                    if (mx.write_outputs) {
                        const Model model(cfg.model);
                        write_summary_json((fs::path(dir) / "summary.json").string(), cfg, cell,
                                           res);
                        save_checkpoint((fs::path(dir) / "avg_model").string(), model,
                                        res.average_params);
                        fs::remove(fs::path(dir) / "RESUMABLE");
                    }
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (int i = 0; i < n; ++i)
        if (!errors[i].empty())
            throw StateError("matrix cell " + cells[i].method + "_t" +
                             std::to_string(cells[i].target) + "_s" +
                             std::to_string(cells[i].seed) + " failed: " + errors[i]);

    MatrixResult mr;
    mr.cells = std::move(cells);
    if (mx.write_outputs) write_matrix_outputs(mx.out_dir, mr);
    return mr;
}

std::vector<MatrixResult::Agg> MatrixResult::aggregate() const {
    std::vector<Agg> out;
    for (const auto& c : cells) {
        auto it = std::find_if(out.begin(), out.end(), [&](const Agg& a) {
            return a.method == c.method && a.target == c.target && a.radius == c.radius;
        });
        if (it == out.end()) {
            out.push_back(Agg{c.method, c.target, c.radius, 0, 0, 0});
            it = out.end() - 1;
        }
    }
    for (auto& a : out) {
        std::vector<double> accs, rhos;
        for (const auto& c : cells)
            if (c.method == a.method && c.target == a.target && c.radius == a.radius) {
                accs.push_back(c.target_acc);
                rhos.push_back(c.rho);
            }
        a.mean = mean_of(accs);
        a.stddev = population_std(accs);
        a.rho_mean = mean_of(rhos);
    }
    return out;
}

double MatrixResult::method_avg(const std::string& method) const {
    std::vector<double> means;
    for (const auto& a : aggregate())
        if (a.method == method) means.push_back(a.mean);
    return mean_of(means);
}

std::string format_table(const MatrixResult& mr) {
    const auto aggs = mr.aggregate();
    std::vector<std::string> methods;
    std::vector<int> targets;
    for (const auto& a : aggs) {
        if (std::find(methods.begin(), methods.end(), a.method) == methods.end())
            methods.push_back(a.method);
        if (std::find(targets.begin(), targets.end(), a.target) == targets.end())
            targets.push_back(a.target);
    }
    std::sort(targets.begin(), targets.end());

    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-16s", "method");
    out += buf;
    for (int t : targets) {
        std::snprintf(buf, sizeof(buf), "  target%-8d", t);
        out += buf;
    }
    out += "  Avg\n";
    for (const auto& m : methods) {
        std::snprintf(buf, sizeof(buf), "%-16s", m.c_str());
        out += buf;
        std::vector<double> means;
        for (int t : targets)
            for (const auto& a : aggs)
                if (a.method == m && a.target == t) {
                    std::snprintf(buf, sizeof(buf), "  %5.1f +- %-4.1f",
                                  100.0 * a.mean, 100.0 * a.stddev);
                    out += buf;
                    means.push_back(a.mean);
                }
        std::snprintf(buf, sizeof(buf), "  %5.1f\n", 100.0 * mean_of(means));
        out += buf;
    }
    return out;
}

void write_matrix_outputs(const std::string& out_dir, const MatrixResult& mr) {
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "matrix.csv");
        out << "# styleddg-matrix-v1\n";
        out << "method,target,seed,radius,rho,target_acc,source_acc,bytes_ratio,final_loss\n";
        char buf[64];
        auto fmt = [&buf](double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        for (const auto& c : mr.cells)
            out << c.method << "," << c.target << "," << c.seed << "," << fmt(c.radius) << ","
                << fmt(c.rho) << "," << fmt(c.target_acc) << "," << fmt(c.source_acc) << ","
                << fmt(c.bytes_ratio) << "," << fmt(c.final_loss_mean) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "table.txt");
        out << format_table(mr);
    }
    {
        json j;
        for (const auto& a : mr.aggregate())
            j.push_back({{"method", a.method},
                         {"target", a.target},
                         {"radius", a.radius},
                         {"acc_mean", a.mean},
                         {"acc_std", a.stddev},
                         {"rho_mean", a.rho_mean}});
        std::ofstream out(fs::path(out_dir) / "summary.json");
        out << j.dump(2) << "\n";
    }
}

}  // namespace styleddg
