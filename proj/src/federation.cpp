#include "styleddg/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <mutex>
#include <thread>

namespace styleddg {

LrSchedule lr_schedule_from_string(const std::string& s) {
    if (s == "const" || s == "constant") return LrSchedule::constant;
    if (s == "sqrtk" || s == "sqrt_horizon") return LrSchedule::sqrt_horizon;
    if (s == "cosine") return LrSchedule::cosine;
    throw ConfigError("unknown lr schedule '" + s + "'");
}

const char* to_string(LrSchedule s) {
    switch (s) {
        case LrSchedule::constant: return "const";
        case LrSchedule::sqrt_horizon: return "sqrtk";
        case LrSchedule::cosine: return "cosine";
    }
    return "?";
}

double lr_at(LrSchedule s, double lr0, int k, int iters) {
    switch (s) {
        case LrSchedule::constant: return lr0;
        case LrSchedule::sqrt_horizon: return lr0 / std::sqrt(static_cast<double>(iters) + 1.0);
        case LrSchedule::cosine:
            return iters <= 1 ? lr0
                              : lr0 * 0.5 *
                                    (1.0 + std::cos(3.14159265358979323846 * k / (iters - 1.0)));
    }
    return lr0;
}

std::uint64_t hash_batch(const Tensor4& x, const std::vector<int>& y) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    feed(x.data(), static_cast<std::size_t>(x.size()) * sizeof(double));
    feed(y.data(), y.size() * sizeof(int));
    return h;
}

Tensor4 stack_batch(const std::vector<const Sample*>& set, const std::vector<int>& idx) {
    if (idx.empty()) throw InputError("stack_batch: empty index list");
    const Shape one = set[idx[0]]->image.shape();
    Tensor4 out(Shape{static_cast<int>(idx.size()), one.c, one.h, one.w});
    const std::size_t inst = static_cast<std::size_t>(one.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::memcpy(out.data() + i * inst, set[idx[i]]->image.data(), inst * sizeof(double));
    return out;
}

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < n; i += threads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

double sampled_lambda(const StyleLayerConfig& cfg, Rng& rng) {
    if (cfg.lambda_fixed >= 0.0) return cfg.lambda_fixed;
    return rng.beta(cfg.beta_a, cfg.beta_b);
}

}  // namespace

StylePlan sample_plan(const Model& model, StyleMode mode, const StyleLayerConfig& cfg,
                      int batch, Rng& rng, bool dsu_per_instance,
                      const std::map<int, StylePayload>* inbox,
                      const std::vector<int>* neighbors, int expected_iter) {
    StylePlan plan;
    plan.mode = mode;
    plan.cfg = cfg;
    const auto& chans = model.hook_channels();
    plan.layers.resize(chans.size());
    if (mode == StyleMode::none) return plan;
    if (mode == StyleMode::styleddg) {
        if (batch % 2 != 0)
            throw ConfigError("styleddg needs an even batch size, got " +
                              std::to_string(batch));
        if (inbox == nullptr || inbox->empty())
            throw ProtocolError("styleddg gradient requires neighbor styles in the inbox");
    }
    for (std::size_t l = 0; l < chans.size(); ++l) {
        PlanEntry& e = plan.layers[l];
        e.active = rng.uniform() < cfg.p_layer;
        if (!e.active) continue;
        const int c = chans[l];
        switch (mode) {
            case StyleMode::none:
                break;
            case StyleMode::mixstyle:
                e.lambda = sampled_lambda(cfg, rng);
                e.perm = rng.permutation(batch);
                break;
            case StyleMode::dsu: {
                const int rows = dsu_per_instance ? batch : 1;
                e.eps_mu.resize(static_cast<std::size_t>(rows) * c);
                e.eps_sigma.resize(e.eps_mu.size());
                for (auto& v : e.eps_mu) v = cfg.eps_scale * rng.normal();
                for (auto& v : e.eps_sigma) v = cfg.eps_scale * rng.normal();
                break;
            }
            case StyleMode::styleddg: {
                const int j = (*neighbors)[rng.uniform_int(static_cast<int>(neighbors->size()))];
                const auto it = inbox->find(j);
                if (it == inbox->end())
                    throw ProtocolError("styleddg: no style payload from neighbor " +
                                        std::to_string(j));
                if (expected_iter >= 0 && it->second.iter != expected_iter)
                    throw ProtocolError("styleddg: stale style payload from neighbor " +
                                        std::to_string(j) + " (iteration " +
                                        std::to_string(it->second.iter) + ", expected " +
                                        std::to_string(expected_iter) + ")");
                if (static_cast<int>(l) >= it->second.sv.layer_count())
                    throw ProtocolError("styleddg: neighbor style vector lacks layer " +
                                        std::to_string(l));
                e.r.neighbor = j;
                e.psi = it->second.sv.layers[l];
                e.r.eps_mu.resize(c);
                e.r.eps_sigma.resize(c);
                for (auto& v : e.r.eps_mu) v = cfg.eps_scale * rng.normal();
                for (auto& v : e.r.eps_sigma) v = cfg.eps_scale * rng.normal();
                e.r.lambda = sampled_lambda(cfg, rng);
                e.r.shift_mask = rng.mask_with_ones(batch, batch / 2);
                e.r.explore_mask = rng.mask_with_ones(batch, batch / 2);
                e.r.mix_perm = rng.permutation(batch);
                break;
            }
        }
    }
    return plan;
}

GradResult gradient_with_plan(const Model& model, const ModelParams& params, const Tensor4& bx,
                              const std::vector<int>& by, const StylePlan& plan) {
    Tape t;
    const auto pn = model.emit_params(t, params);
    const Tape::NodeId x = t.constant(bx);
    const auto f = model.forward(t, pn, x, plan);
    const Tape::NodeId loss = t.softmax_cross_entropy(f.logits, by);
    t.backward(loss);
    GradResult out;
    out.loss = t.val(loss).data()[0];
    out.grad = model.collect_grad(t, pn);
    out.plan = plan;
    return out;
}

GradResult local_gradient(const Model& model, const ModelParams& params, const Tensor4& bx,
                          const std::vector<int>& by, StyleMode mode,
                          const StyleLayerConfig& cfg, bool dsu_per_instance,
                          const std::map<int, StylePayload>& inbox,
                          const std::vector<int>& neighbors, Rng& style_rng,
                          int expected_iter) {
    const StylePlan plan = sample_plan(model, mode, cfg, bx.shape().b, style_rng,
                                       dsu_per_instance, &inbox, &neighbors, expected_iter);
    return gradient_with_plan(model, params, bx, by, plan);
}

void consensus_step(std::vector<ModelParams>& params, const MixingMatrix& w, double alpha,
                    const std::vector<std::vector<double>>& grads) {
    const int m = static_cast<int>(params.size());
    if (w.m != m || static_cast<int>(grads.size()) != m)
        throw InputError("consensus_step: device count mismatch");
    const int n = params[0].size();
    std::vector<ModelParams> next(m);
    for (int i = 0; i < m; ++i) {
        next[i].theta = params[i].theta;
        auto& out = next[i].theta;
        for (int j = 0; j < m; ++j) {
            if (j == i) continue;
            const double wij = w.at(i, j);
            if (wij == 0.0) continue;
            const auto& tj = params[j].theta;
            const auto& ti = params[i].theta;
            for (int p = 0; p < n; ++p) out[p] += wij * (tj[p] - ti[p]);
        }
        const auto& g = grads[i];
        if (!g.empty())
            for (int p = 0; p < n; ++p) out[p] -= alpha * g[p];
    }
    params = std::move(next);
}

double consensus_disagreement(const std::vector<ModelParams>& params) {
    const int m = static_cast<int>(params.size());
    const int n = params[0].size();
    std::vector<double> mean(n, 0.0);
    for (const auto& p : params)
        for (int i = 0; i < n; ++i) mean[i] += p.theta[i];
    for (auto& v : mean) v /= m;
    double acc = 0.0;
    for (const auto& p : params)
        for (int i = 0; i < n; ++i) {
            const double d = p.theta[i] - mean[i];
            acc += d * d;
        }
    return acc / m;
}

ModelParams average_params(const std::vector<ModelParams>& params) {
    ModelParams avg;
    avg.theta.assign(params[0].theta.size(), 0.0);
    for (const auto& p : params)
        for (std::size_t i = 0; i < avg.theta.size(); ++i) avg.theta[i] += p.theta[i];
    for (auto& v : avg.theta) v /= static_cast<double>(params.size());
    return avg;
}

double accuracy(const Model& model, const ModelParams& params,
                const std::vector<const Sample*>& set, int eval_batch) {
    if (set.empty()) throw InputError("accuracy: empty evaluation set");
    int correct = 0;
    for (std::size_t off = 0; off < set.size(); off += eval_batch) {
        const int count = static_cast<int>(std::min<std::size_t>(eval_batch, set.size() - off));
        std::vector<int> idx(count);
        for (int i = 0; i < count; ++i) idx[i] = static_cast<int>(off) + i;
        const Tensor4 bx = stack_batch(set, idx);
        Tape t;
        const auto pn = model.emit_params(t, params);
        const auto f = model.forward(t, pn, t.constant(bx), StylePlan::plain());
        const Tensor4& logits = t.val(f.logits);
        for (int b = 0; b < count; ++b) {
            int best = 0;
            for (int k = 1; k < logits.shape().c; ++k)
                if (logits.at(b, k, 0, 0) > logits.at(b, best, 0, 0)) best = k;
            if (best == set[off + b]->label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

double RunResult::probe_running_avg() const {
    if (probe_sq.empty()) return 0.0;
    double s = 0.0;
    for (double v : probe_sq) s += v;
    return s / static_cast<double>(probe_sq.size());
}

void sync_model_to_data(RunConfig& cfg) {
    cfg.model.in_channels = cfg.data.channels;
    cfg.model.in_h = cfg.data.height;
    cfg.model.in_w = cfg.data.width;
    cfg.model.classes = cfg.data.classes;
}

Engine::Engine(RunConfig cfg) : cfg_(std::move(cfg)) {
    sync_model_to_data(cfg_);
    if (cfg_.batch < 1) throw ConfigError("batch size must be positive");
    if (cfg_.mode == StyleMode::styleddg && cfg_.batch % 2 != 0)
        throw ConfigError("styleddg mode needs an even batch size");
    if (cfg_.iters < 1) throw ConfigError("iteration count must be positive");
}

RunResult Engine::run() {
    const auto t_start = std::chrono::steady_clock::now();
    const RunConfig& cfg = cfg_;

    // graph and mixing matrix
    DeviceGraph graph;
    switch (cfg.graph) {
        case GraphKind::complete: graph = build_complete(cfg.m); break;
        case GraphKind::ring: graph = build_ring(cfg.m); break;
        case GraphKind::random_geometric: {
            Rng grng(mix_seed(cfg.seed, 0x6772617068ULL));
            graph = build_random_geometric(cfg.m, cfg.radius, grng);
            break;
        }
        case GraphKind::custom: graph = build_custom(cfg.m, cfg.custom_edges); break;
    }
    const MixingMatrix w = metropolis_weights(graph);
    const Spectral sp = spectral_gap(w);

    // data
    const auto domains = default_domains(cfg.data);
    const Dataset ds = generate(domains, cfg.data, mix_seed(cfg.seed, 0x64617461ULL));
    const LeaveOneOutSplit split = split_leave_one_domain_out(ds, cfg.target_domain, cfg.m);

    const Model model(cfg.model);
    const int n = model.param_count();

    // devices; all start from the same theta^(0) unless a consensus-only
    // run asks for distinct initial points
    std::vector<DeviceState> devs(cfg.m);
    const ModelParams theta0 = model.init_params(cfg.seed);
    for (int i = 0; i < cfg.m; ++i) {
        DeviceState& d = devs[i];
        d.id = i;
        d.params = cfg.distinct_init
                       ? model.init_params(mix_seed(cfg.seed, 0x696e6974ULL, i + 1))
                       : theta0;
        d.shard = split.shards[i];
        d.neighbors = graph.neighbors(i);
        d.batch_rng = Rng(mix_seed(cfg.seed, 0x626174636800ULL, i));
        d.style_rng = Rng(mix_seed(cfg.seed, 0x7374796c6500ULL, i));
        d.order = d.batch_rng.permutation(static_cast<int>(d.shard.samples.size()));
        d.cursor = 0;
    }

    // fixed probe batch from the held-out source pool
    std::vector<int> probe_idx;
    std::vector<int> probe_labels;
    Tensor4 probe_x;
    if (cfg.probe_grad && !split.source_eval.empty()) {
        Rng prng(mix_seed(cfg.seed, 0x70726f6265ULL));
        const auto perm = prng.permutation(static_cast<int>(split.source_eval.size()));
        const int count = std::min<int>(cfg.probe_batch, static_cast<int>(perm.size()));
        probe_idx.assign(perm.begin(), perm.begin() + count);
        probe_x = stack_batch(split.source_eval, probe_idx);
        probe_labels.resize(count);
        for (int i = 0; i < count; ++i) probe_labels[i] = split.source_eval[probe_idx[i]]->label;
    }

    auto probe_grad_sq = [&](const std::vector<ModelParams>& params) -> double {
        if (probe_labels.empty()) return 0.0;
        const ModelParams avg = average_params(params);
        const GradResult g = gradient_with_plan(model, avg, probe_x, probe_labels,
                                                StylePlan::plain());
        double s = 0.0;
        for (double v : g.grad) s += v * v;
        return s;
    };

    const std::int64_t style_bytes_each = [&]() -> std::int64_t {
        if (cfg.mode != StyleMode::styleddg) return 0;
        StyleVector sv;
        for (int c : model.hook_channels())
            sv.layers.push_back(StyleLayerSlice{std::vector<double>(c), std::vector<double>(c),
                                                std::vector<double>(c), std::vector<double>(c)});
        return static_cast<std::int64_t>(sv.byte_size());
    }();
    std::int64_t edges2 = 0;  // directed edge count
    for (int i = 0; i < cfg.m; ++i) edges2 += graph.degree(i);

    RunResult res;
    res.mixing = w;
    res.rho = sp.rho;
    res.probe_sq.reserve(cfg.iters + 1);

    std::vector<ModelParams> params_snapshot(cfg.m);
    std::vector<std::vector<double>> grads(cfg.m);

    for (int k = 0; k < cfg.iters; ++k) {
        const auto t_iter = std::chrono::steady_clock::now();
        if (cfg.probe_grad) {
            std::vector<ModelParams> cur(cfg.m);
            for (int i = 0; i < cfg.m; ++i) cur[i] = devs[i].params;
            res.probe_sq.push_back(probe_grad_sq(cur));
        }

        // phase 1: mini-batch + own style statistics
        parallel_for(cfg.m, cfg.threads, [&](int i) {
            DeviceState& d = devs[i];
            const int sz = static_cast<int>(d.shard.samples.size());
            std::vector<int> idx(cfg.batch);
            for (int b = 0; b < cfg.batch; ++b) {
                if (d.cursor == sz) {
                    d.order = d.batch_rng.permutation(sz);
                    d.cursor = 0;
                }
                idx[b] = d.order[d.cursor++];
            }
            d.batch_x = stack_batch(d.shard.samples, idx);
            d.batch_y.resize(cfg.batch);
            for (int b = 0; b < cfg.batch; ++b) d.batch_y[b] = d.shard.samples[idx[b]]->label;
            d.batch_hash = hash_batch(d.batch_x, d.batch_y);
            d.outbox.iter = k;
            d.outbox.batch_hash = d.batch_hash;
            // only the style-sharing mode computes and ships psi
            if (cfg.mode == StyleMode::styleddg)
                d.outbox.sv =
                    device_style_vector(model, d.params, d.batch_x, cfg.style.eps_var);
        });

        // exchange barrier: deliver styles and model snapshots
        parallel_for(cfg.m, cfg.threads, [&](int i) {
            DeviceState& d = devs[i];
            d.inbox_styles.clear();
            d.inbox_models.clear();
            for (int j : d.neighbors) {
                if (cfg.mode == StyleMode::styleddg) d.inbox_styles[j] = devs[j].outbox;
                d.inbox_models[j] = devs[j].params;
            }
        });

        // phase 2: style-augmented local gradients on the same mini-batch
        parallel_for(cfg.m, cfg.threads, [&](int i) {
            DeviceState& d = devs[i];
            GradResult g =
                local_gradient(model, d.params, d.batch_x, d.batch_y, cfg.mode, cfg.style,
                               cfg.dsu_per_instance, d.inbox_styles, d.neighbors, d.style_rng,
                               k);
            d.grad = std::move(g.grad);
            d.loss = g.loss;
        });

        // consensus barrier: simultaneous update from the iteration-k state
        const double alpha = lr_at(cfg.sched, cfg.lr, k, cfg.iters);
        for (int i = 0; i < cfg.m; ++i) params_snapshot[i] = devs[i].params;
        parallel_for(cfg.m, cfg.threads, [&](int i) {
            DeviceState& d = devs[i];
            std::vector<double>& out = params_snapshot[i].theta;  // copy of theta_i^(k)
            std::vector<double> next = out;
            for (int j : d.neighbors) {
                const double wij = w.at(i, j);
                const auto& tj = d.inbox_models.at(j).theta;
                for (int p = 0; p < n; ++p) next[p] += wij * (tj[p] - out[p]);
            }
            for (int p = 0; p < n; ++p) next[p] -= alpha * d.grad[p];
            devs[i].params.theta = std::move(next);
        });

        if (cfg.record_iterations) {
            IterationRecord rec;
            rec.k = k;
            rec.losses.resize(cfg.m);
            for (int i = 0; i < cfg.m; ++i) rec.losses[i] = devs[i].loss;
            std::vector<ModelParams> cur(cfg.m);
            for (int i = 0; i < cfg.m; ++i) cur[i] = devs[i].params;
            rec.disagreement = consensus_disagreement(cur);
            rec.grad_norm_probe = cfg.probe_grad && !res.probe_sq.empty()
                                      ? res.probe_sq.back()
                                      : 0.0;
            rec.bytes_model = edges2 * static_cast<std::int64_t>(n) * 8;
            rec.bytes_style = edges2 * style_bytes_each;
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t_iter)
                              .count();
            res.records.push_back(std::move(rec));
        }
    }

    res.final_params.resize(cfg.m);
    for (int i = 0; i < cfg.m; ++i) res.final_params[i] = devs[i].params;
    res.average_params = average_params(res.final_params);
    if (cfg.probe_grad) res.probe_sq.push_back(probe_grad_sq(res.final_params));

    for (const auto& rec : res.records) {
        res.total_bytes_model += rec.bytes_model;
        res.total_bytes_style += rec.bytes_style;
    }

    if (!split.target_set.empty()) {
        res.device_target_acc.resize(cfg.m);
        parallel_for(cfg.m, cfg.threads, [&](int i) {
            res.device_target_acc[i] =
                accuracy(model, res.final_params[i], split.target_set);
        });
        res.avg_model_target_acc = accuracy(model, res.average_params, split.target_set);
    }
    if (!split.source_eval.empty())
        res.avg_model_source_acc = accuracy(model, res.average_params, split.source_eval);

    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace styleddg
