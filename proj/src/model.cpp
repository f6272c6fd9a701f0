#include "styleddg/model.hpp"

#include <algorithm>
#include <cmath>

#include "styleddg/rng.hpp"

namespace styleddg {

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.layer_count() < 1) throw ConfigError("model: need at least one block");
    if (spec_.in_channels < 1 || spec_.in_h < 1 || spec_.in_w < 1 || spec_.classes < 2 ||
        spec_.kernel < 1 || spec_.pool < 1)
        throw ConfigError("model: invalid spec dimensions");
    for (int h : spec_.hooks)
        if (h < 1 || h > spec_.layer_count())
            throw ConfigError("model: hook references nonexistent block " + std::to_string(h));

    int hh = spec_.in_h, ww = spec_.in_w;
    int cin = spec_.in_channels;
    const int k = spec_.kernel;
    for (int l = 0; l < spec_.layer_count(); ++l) {
        const int cout = spec_.blocks[l];
        segments_.push_back({"block" + std::to_string(l + 1) + ".w", total_,
                             Shape{cout, cin, k, k}, l + 1});
        total_ += cout * cin * k * k;
        segments_.push_back(
            {"block" + std::to_string(l + 1) + ".b", total_, Shape{1, cout, 1, 1}, l + 1});
        total_ += cout;
        cin = cout;
        if (l + 1 < spec_.layer_count()) {
            if (hh % spec_.pool != 0 || ww % spec_.pool != 0)
                throw ConfigError("model: pooling " + std::to_string(spec_.pool) +
                                  " does not divide spatial dims at block " +
                                  std::to_string(l + 1));
            hh /= spec_.pool;
            ww /= spec_.pool;
        }
    }
    feat_ = spec_.blocks.back();
    segments_.push_back({"head.w", total_, Shape{spec_.classes, feat_, 1, 1}, 0});
    total_ += spec_.classes * feat_;
    segments_.push_back({"head.b", total_, Shape{1, spec_.classes, 1, 1}, 0});
    total_ += spec_.classes;

    for (int h : spec_.hooks) hook_channels_.push_back(spec_.blocks[h - 1]);
}

std::pair<int, int> Model::block_range(int l) const {
    int lo = total_, hi = 0;
    for (const auto& s : segments_)
        if (s.block == l) {
            lo = std::min(lo, s.offset);
            hi = std::max(hi, s.offset + static_cast<int>(s.shape.size()));
        }
    if (hi == 0) throw InputError("block_range: no such block " + std::to_string(l));
    return {lo, hi};
}

ModelParams Model::init_params(std::uint64_t seed) const {
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    ModelParams p;
    p.theta.assign(total_, 0.0);
    for (const auto& s : segments_) {
        const bool is_weight = s.name.size() >= 2 && s.name.back() == 'w';
        if (!is_weight) continue;  // biases start at zero
        int fan_in;
        if (s.block == 0)
            fan_in = s.shape.c;
        else
            fan_in = s.shape.c * s.shape.h * s.shape.w;
        const double bound = spec_.init_scale * std::sqrt(3.0 / fan_in);
        for (std::int64_t i = 0; i < s.shape.size(); ++i)
            p.theta[s.offset + i] = rng.uniform(-bound, bound);
    }
    return p;
}

Model::ParamNodes Model::emit_params(Tape& t, const ModelParams& p) const {
    if (p.size() != total_)
        throw ShapeError("emit_params: parameter vector has " + std::to_string(p.size()) +
                         " entries, model needs " + std::to_string(total_));
    ParamNodes pn;
    for (const auto& s : segments_) {
        std::vector<double> v(p.theta.begin() + s.offset,
                              p.theta.begin() + s.offset + s.shape.size());
        const Tape::NodeId id = t.param(Tensor4(s.shape, std::move(v)));
        if (s.block == 0) {
            (s.name == "head.w" ? pn.head_w : pn.head_b) = id;
        } else {
            (s.name.back() == 'w' ? pn.conv_w : pn.conv_b).push_back(id);
        }
    }
    return pn;
}

Model::Forward Model::forward(Tape& t, const ParamNodes& pn, Tape::NodeId x,
                              const StylePlan& plan) const {
    if (!plan.layers.empty() &&
        plan.layers.size() != spec_.hooks.size())
        throw InputError("forward: style plan must carry one entry per hooked layer");
    const int pad = spec_.kernel / 2;
    Forward f;
    Tape::NodeId cur = x;
    for (int l = 0; l < spec_.layer_count(); ++l) {
        cur = t.relu(t.conv2d(cur, pn.conv_w[l], pn.conv_b[l], 1, pad));
        const auto hook_it =
            std::find(spec_.hooks.begin(), spec_.hooks.end(), l + 1);
        if (hook_it != spec_.hooks.end()) {
            f.hooks.push_back(cur);
            const std::size_t hpos = hook_it - spec_.hooks.begin();
            if (hpos < plan.layers.size() && plan.layers[hpos].active) {
                const PlanEntry& e = plan.layers[hpos];
                switch (plan.mode) {
                    case StyleMode::none:
                        throw InputError("forward: active style entry in plain mode");
                    case StyleMode::mixstyle:
                        cur = mixstyle_shuffle(t, cur, e.perm, e.lambda, plan.cfg.eps_var);
                        break;
                    case StyleMode::dsu:
                        cur = dsu(t, cur, e.eps_mu, e.eps_sigma, plan.cfg.eps_var);
                        break;
                    case StyleMode::styleddg:
                        if (e.psi.channels() == 0)
                            throw InputError(
                                "forward: styleddg layer active without neighbor style");
                        cur = styleddg_layer(t, cur, e.psi, e.r, plan.cfg);
                        break;
                }
            }
        }
        if (l + 1 < spec_.layer_count()) cur = t.avg_pool2d(cur, spec_.pool);
    }
    cur = t.global_avg_pool(cur);
    f.logits = t.linear(cur, pn.head_w, pn.head_b);
    return f;
}

std::vector<double> Model::collect_grad(const Tape& t, const ParamNodes& pn) const {
    std::vector<double> g(total_, 0.0);
    std::size_t wi = 0, bi = 0;
    for (const auto& s : segments_) {
        Tape::NodeId id;
        if (s.block == 0)
            id = (s.name == "head.w") ? pn.head_w : pn.head_b;
        else
            id = (s.name.back() == 'w') ? pn.conv_w[wi++] : pn.conv_b[bi++];
        const Tensor4& gt = t.grad(id);
        for (std::int64_t i = 0; i < gt.size(); ++i) g[s.offset + i] = gt.data()[i];
    }
    return g;
}

StyleCapture capture_style(const Model& m, const ModelParams& p, const Tensor4& x,
                           double eps_var) {
    Tape t;
    const auto pn = m.emit_params(t, p);
    const Tape::NodeId xin = t.constant(x);
    const auto f = m.forward(t, pn, xin, StylePlan::plain());
    StyleCapture cap;
    for (const Tape::NodeId hid : f.hooks) {
        const Tensor4& h = t.val(hid);
        cap.sv.layers.push_back(layer_style_slice(h, eps_var));
        cap.u_per_layer.push_back(h.max_abs());
        const InstanceStats s = instance_stats(h, eps_var);
        double mn = s.sigma.empty() ? 0.0 : s.sigma[0];
        for (double v : s.sigma) mn = std::min(mn, v);
        cap.min_sigma.push_back(mn);
    }
    return cap;
}

}  // namespace styleddg
