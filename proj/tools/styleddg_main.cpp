#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "styleddg/checks.hpp"
#include "styleddg/config.hpp"
#include "styleddg/data.hpp"
#include "styleddg/experiment.hpp"

namespace fs = std::filesystem;
using namespace styleddg;

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("STYLEDDG_OUT")) return env;
    return "runs";
}

RunConfig load_with_overrides(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    RunConfig cfg = config_path.empty() ? parse_config_text("") : load_config(config_path);
    for (const auto& ov : overrides) apply_override(cfg, ov);
    return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoull(item));
    return out;
}

std::vector<StyleMode> parse_method_list(const std::string& s) {
    std::vector<StyleMode> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(style_mode_from_string(item));
    return out;
}

template <typename T>
std::vector<T> parse_num_list(const std::string& s) {
    std::vector<T> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(static_cast<T>(std::stod(item)));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decentralized style-sharing domain generalization simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds_str, methods_str, targets_str, radii_str;
    std::vector<std::string> overrides;
    int threads = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (key = value lines)");
        sub->add_option("--override", overrides, "override KEY=VAL (repeatable)");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--threads", threads, "worker threads");
    };

    CLI::App* run = app.add_subcommand("run", "run the experiment matrix from a config");
    add_common(run);
    run->add_option("--seeds", seeds_str, "comma-separated seeds (default: config seed)");
    run->add_option("--methods", methods_str, "comma-separated methods");
    run->add_option("--targets", targets_str, "comma-separated target domain ids");

    CLI::App* sweep = app.add_subcommand("sweep-radius", "repeat runs across graph radii");
    add_common(sweep);
    sweep->add_option("--seeds", seeds_str, "comma-separated seeds");
    sweep->add_option("--methods", methods_str, "comma-separated methods");
    sweep->add_option("--radii", radii_str, "comma-separated radii")->required();

    CLI::App* verify = app.add_subcommand("verify", "run the full property/acceptance suite");
    verify->add_option("--threads", threads, "worker threads");
    std::string only_check;
    verify->add_option("--only", only_check, "run a single named check");
    bool list_checks = false;
    verify->add_flag("--list", list_checks, "list check names");
    bool corrupt_mixing = false;
    verify->add_flag("--corrupt-mixing", corrupt_mixing,
                     "negative control: feed a corrupted mixing matrix to the checker");

    CLI::App* gen = app.add_subcommand("gen-data", "generate and dump the synthetic dataset");
    add_common(gen);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || sweep->parsed()) {
            ExperimentMatrix mx;
            mx.base = load_with_overrides(config_path, overrides);
            mx.base.threads = 1;  // parallelism across cells
            mx.threads = threads;
            if (!seeds_str.empty()) mx.seeds = parse_seed_list(seeds_str);
            else mx.seeds = {mx.base.seed};
            if (!methods_str.empty()) mx.methods = parse_method_list(methods_str);
            else mx.methods = {mx.base.mode};
            if (!targets_str.empty()) mx.targets = parse_num_list<int>(targets_str);
            if (sweep->parsed()) mx.radii = parse_num_list<double>(radii_str);
            if (sweep->parsed()) mx.base.graph = GraphKind::random_geometric;
            mx.out_dir = out_dir.empty()
                             ? (fs::path(default_out_root()) /
                                (sweep->parsed() ? "sweep" : "run"))
                                   .string()
                             : out_dir;
            const MatrixResult mr = run_matrix(mx);
            std::cout << format_table(mr);
            if (sweep->parsed()) {
                std::cout << "\nper-radius mixing (3-seed mean rho):\n";
                for (const auto& a : mr.aggregate()) {
                    char buf[128];
                    std::snprintf(buf, sizeof(buf), "  r=%-4g %-10s rho=%.4f acc=%.3f\n",
                                  a.radius, a.method.c_str(), a.rho_mean, a.mean);
                    std::cout << buf;
                }
            }
            std::cout << "outputs in " << mx.out_dir << "\n";
            return 0;
        }
        if (verify->parsed()) {
            if (list_checks) {
                for (const auto& n : checks::check_names()) std::cout << n << "\n";
                return 0;
            }
            if (corrupt_mixing) {
                MixingMatrix w;
                w.m = 3;
                w.w = {0.5, 0.5, 0.0, 0.5, 0.25, 0.25, 0.0, 0.25, 0.70};  // broken row sums
                const auto r = checks::mixing_matrix_ok(w, "corrupted-fixture");
                std::cout << checks::format_line(r) << "\n";
                return r.pass ? 1 : 2;  // the fixture must fail
            }
            std::vector<checks::CheckResult> results;
            if (!only_check.empty())
                results.push_back(checks::run_check(only_check, threads));
            else
                results = checks::run_all(threads);
            bool all = true;
            for (const auto& r : results) {
                std::cout << checks::format_line(r) << "\n";
                std::fprintf(stderr, "%-24s %.1fs\n", r.name.c_str(), r.seconds);
                all = all && r.pass;
            }
            std::cout << (all ? "ALL CHECKS PASSED" : "CHECK FAILURES PRESENT") << "\n";
            return all ? 0 : 1;
        }
        if (gen->parsed()) {
            RunConfig cfg = load_with_overrides(config_path, overrides);
            const auto domains = default_domains(cfg.data);
            const Dataset ds = generate(domains, cfg.data, mix_seed(cfg.seed, 0x64617461ULL));
            const std::string dir =
                out_dir.empty() ? (fs::path(default_out_root()) / "data").string() : out_dir;
            fs::create_directories(dir);
            const std::string path = (fs::path(dir) / "dataset.bin").string();
            dump_dataset(ds, path);
            std::cout << "wrote " << path << " (" << ds.train.size() << " train, "
                      << ds.test.size() << " test, " << ds.domain_ids.size() << " domains)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
