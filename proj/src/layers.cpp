#include "styleddg/layers.hpp"

#include <algorithm>
#include <cmath>

namespace styleddg {

bool valid_half_mask(const std::vector<int>& mask) {
    int ones = 0;
    for (int v : mask) {
        if (v != 0 && v != 1) return false;
        ones += v;
    }
    return !mask.empty() && mask.size() % 2 == 0 && ones == static_cast<int>(mask.size()) / 2;
}

bool valid_permutation(const std::vector<int>& perm) {
    std::vector<char> seen(perm.size(), 0);
    for (int v : perm) {
        if (v < 0 || v >= static_cast<int>(perm.size()) || seen[v]) return false;
        seen[v] = 1;
    }
    return !perm.empty();
}

const char* to_string(StyleMode m) {
    switch (m) {
        case StyleMode::none: return "dsgd";
        case StyleMode::mixstyle: return "mixstyle";
        case StyleMode::dsu: return "dsu";
        case StyleMode::styleddg: return "styleddg";
    }
    return "?";
}

StyleMode style_mode_from_string(const std::string& s) {
    if (s == "dsgd" || s == "none") return StyleMode::none;
    if (s == "mixstyle" || s == "dsgd+mixstyle") return StyleMode::mixstyle;
    if (s == "dsu" || s == "dsgd+dsu") return StyleMode::dsu;
    if (s == "styleddg") return StyleMode::styleddg;
    throw ConfigError("unknown style mode '" + s + "'");
}

StatsNodes instance_stats_node(Tape& t, Tape::NodeId x, double eps_var) {
    const Tape::NodeId mu = t.mean_hw(x);
    const Tape::NodeId centered = t.sub(x, mu);
    const Tape::NodeId var = t.mean_hw(t.mul(centered, centered));
    const Tape::NodeId sigma = t.sqrt_guard(var, eps_var);
    return {mu, sigma};
}

Tape::NodeId adain_from(Tape& t, Tape::NodeId x, StatsNodes own, Tape::NodeId mu_t,
                        Tape::NodeId sigma_t) {
    const Tape::NodeId normed = t.div(t.sub(x, own.mu), own.sigma);
    return t.add(t.mul(sigma_t, normed), mu_t);
}

Tape::NodeId adain(Tape& t, Tape::NodeId x, Tape::NodeId mu_t, Tape::NodeId sigma_t,
                   double eps_var) {
    const Shape xs = t.val(x).shape();
    auto check_target = [&](Tape::NodeId id, const char* name) {
        const Shape s = t.val(id).shape();
        if ((s.b != xs.b && s.b != 1) || s.c != xs.c || s.h != 1 || s.w != 1)
            throw ShapeError(std::string("adain: ") + name + " shape " + s.str() +
                             " incompatible with input " + xs.str());
    };
    check_target(mu_t, "mu_t");
    check_target(sigma_t, "sigma_t");
    return adain_from(t, x, instance_stats_node(t, x, eps_var), mu_t, sigma_t);
}

namespace {

Tape::NodeId mixstyle_from(Tape& t, Tape::NodeId x, StatsNodes own, Tape::NodeId mu_t,
                           Tape::NodeId sigma_t, double lambda) {
    // beta = lambda*mu(x) + (1-lambda)*mu_t, gamma likewise
    const Tape::NodeId beta =
        t.add(t.affine(own.mu, lambda, 0.0), t.affine(mu_t, 1.0 - lambda, 0.0));
    const Tape::NodeId gamma =
        t.add(t.affine(own.sigma, lambda, 0.0), t.affine(sigma_t, 1.0 - lambda, 0.0));
    return adain_from(t, x, own, beta, gamma);
}

Tensor4 row_tensor(const std::vector<double>& v) {
    return Tensor4(Shape{1, static_cast<int>(v.size()), 1, 1}, v);
}

}  // namespace

Tape::NodeId mixstyle(Tape& t, Tape::NodeId x, Tape::NodeId mu_t, Tape::NodeId sigma_t,
                      double lambda, double eps_var) {
    if (lambda < 0.0 || lambda > 1.0)
        throw InputError("mixstyle: lambda must lie in [0,1], got " + std::to_string(lambda));
    if (lambda == 1.0) return x;
    return mixstyle_from(t, x, instance_stats_node(t, x, eps_var), mu_t, sigma_t, lambda);
}

Tape::NodeId mixstyle_shuffle(Tape& t, Tape::NodeId x, const std::vector<int>& perm,
                              double lambda, double eps_var) {
    if (static_cast<int>(perm.size()) != t.val(x).shape().b || !valid_permutation(perm))
        throw InputError("mixstyle_shuffle: not a valid batch permutation");
    if (lambda == 1.0) return x;
    const StatsNodes own = instance_stats_node(t, x, eps_var);
    const Tape::NodeId mu_t = t.gather_b(own.mu, perm);
    const Tape::NodeId sigma_t = t.gather_b(own.sigma, perm);
    return mixstyle_from(t, x, own, mu_t, sigma_t, lambda);
}

Tape::NodeId dsu(Tape& t, Tape::NodeId x, const std::vector<double>& eps_mu,
                 const std::vector<double>& eps_sigma, double eps_var) {
    const Shape xs = t.val(x).shape();
    auto rows = [&](const std::vector<double>& e, const char* name) {
        if (static_cast<int>(e.size()) == xs.c) return 1;
        if (static_cast<int>(e.size()) == xs.b * xs.c) return xs.b;
        throw ShapeError(std::string("dsu: ") + name + " must have C or B*C entries");
    };
    const int rm = rows(eps_mu, "eps_mu");
    const int rs = rows(eps_sigma, "eps_sigma");
    const bool all_zero =
        std::all_of(eps_mu.begin(), eps_mu.end(), [](double v) { return v == 0.0; }) &&
        std::all_of(eps_sigma.begin(), eps_sigma.end(), [](double v) { return v == 0.0; });
    if (all_zero) return x;

    const StatsNodes own = instance_stats_node(t, x, eps_var);
    // batch-level style deviations of x itself (sqrt of across-batch variance)
    const Tape::NodeId mu_c = t.mean_b(own.mu);
    const Tape::NodeId dmu = t.sub(own.mu, mu_c);
    const Tape::NodeId cap_mu = t.sqrt_guard(t.mean_b(t.mul(dmu, dmu)), 0.0);
    const Tape::NodeId sig_c = t.mean_b(own.sigma);
    const Tape::NodeId dsig = t.sub(own.sigma, sig_c);
    const Tape::NodeId cap_sigma = t.sqrt_guard(t.mean_b(t.mul(dsig, dsig)), 0.0);

    const Tape::NodeId emu = t.constant(Tensor4(Shape{rm, xs.c, 1, 1}, eps_mu));
    const Tape::NodeId esig = t.constant(Tensor4(Shape{rs, xs.c, 1, 1}, eps_sigma));
    const Tape::NodeId mu_t = t.add(own.mu, t.mul(emu, cap_mu));
    const Tape::NodeId sigma_t = t.add(own.sigma, t.mul(esig, cap_sigma));
    return adain_from(t, x, own, mu_t, sigma_t);
}

Tape::NodeId style_shift(Tape& t, Tape::NodeId x_s, Tape::NodeId x_sc,
                         const StyleLayerSlice& psi, const std::vector<double>& eps_mu,
                         const std::vector<double>& eps_sigma, double eps_var) {
    const Shape ss = t.val(x_s).shape();
    const int c = ss.c;
    if (psi.channels() != c)
        throw ShapeError("style_shift: style slice has " + std::to_string(psi.channels()) +
                         " channels, input has " + std::to_string(c));
    if (static_cast<int>(eps_mu.size()) != c || static_cast<int>(eps_sigma.size()) != c)
        throw ShapeError("style_shift: eps vectors must be per-channel");
    std::vector<double> mu_t(c), sigma_t(c);
    for (int i = 0; i < c; ++i) {
        const double cap_mu = std::sqrt(std::max(psi.var_mu[i], 0.0));
        const double cap_sigma = std::sqrt(std::max(psi.var_sigma[i], 0.0));
        mu_t[i] = psi.mu_bar[i] + eps_mu[i] * cap_mu;
        sigma_t[i] = psi.sigma_bar[i] + eps_sigma[i] * cap_sigma;
    }
    const Tape::NodeId shifted = adain(t, x_s, t.constant(row_tensor(mu_t)),
                                       t.constant(row_tensor(sigma_t)), eps_var);
    return t.concat_b(shifted, x_sc);
}

Tape::NodeId style_explore(Tape& t, Tape::NodeId x, const std::vector<int>& explore_mask,
                           const std::vector<int>& mix_perm, double lambda, double alpha,
                           double eps_var) {
    const Shape xs = t.val(x).shape();
    if (static_cast<int>(explore_mask.size()) != xs.b || !valid_half_mask(explore_mask))
        throw InputError("style_explore: explore mask must be 0-1 with B/2 ones");
    if (static_cast<int>(mix_perm.size()) != xs.b || !valid_permutation(mix_perm))
        throw InputError("style_explore: mix indices must be a batch permutation");
    if (lambda == 1.0) return x;

    const StatsNodes own = instance_stats_node(t, x, eps_var);
    // mu_e = mu + alpha * mask * (mu - E_b[mu]); unselected rows keep their stats
    std::vector<double> maskv(explore_mask.begin(), explore_mask.end());
    const Tape::NodeId mask =
        t.constant(Tensor4(Shape{xs.b, 1, 1, 1}, std::move(maskv)));
    const Tape::NodeId mu_mean = t.mean_b(own.mu);
    const Tape::NodeId sigma_mean = t.mean_b(own.sigma);
    const Tape::NodeId mu_e =
        t.add(own.mu, t.affine(t.mul(mask, t.sub(own.mu, mu_mean)), alpha, 0.0));
    const Tape::NodeId sigma_e =
        t.add(own.sigma, t.affine(t.mul(mask, t.sub(own.sigma, sigma_mean)), alpha, 0.0));
    const Tape::NodeId mu_t = t.gather_b(mu_e, mix_perm);
    const Tape::NodeId sigma_t = t.gather_b(sigma_e, mix_perm);
    return mixstyle_from(t, x, own, mu_t, sigma_t, lambda);
}

Tape::NodeId styleddg_layer(Tape& t, Tape::NodeId h, const StyleLayerSlice& psi,
                            const LayerRandomness& r, const StyleLayerConfig& cfg) {
    const Shape hs = t.val(h).shape();
    if (hs.b % 2 != 0)
        throw ConfigError("styleddg_layer: batch size must be even, got " +
                          std::to_string(hs.b));
    if (static_cast<int>(r.shift_mask.size()) != hs.b || !valid_half_mask(r.shift_mask))
        throw InputError("styleddg_layer: shift mask must be 0-1 with B/2 ones");

    std::vector<int> idx_s, idx_sc;
    idx_s.reserve(hs.b / 2);
    idx_sc.reserve(hs.b / 2);
    for (int b = 0; b < hs.b; ++b) (r.shift_mask[b] ? idx_s : idx_sc).push_back(b);

    const Tape::NodeId x_s = t.gather_b(h, idx_s);
    const Tape::NodeId x_sc = t.gather_b(h, idx_sc);
    const Tape::NodeId shifted =
        style_shift(t, x_s, x_sc, psi, r.eps_mu, r.eps_sigma, cfg.eps_var);
    const Tape::NodeId explored = style_explore(t, shifted, r.explore_mask, r.mix_perm,
                                                r.lambda, cfg.alpha_explore, cfg.eps_var);

    // restore original batch order: position idx_s[i] came from row i,
    // position idx_sc[i] from row B/2+i
    std::vector<int> inverse(hs.b);
    for (int i = 0; i < static_cast<int>(idx_s.size()); ++i) inverse[idx_s[i]] = i;
    for (int i = 0; i < static_cast<int>(idx_sc.size()); ++i)
        inverse[idx_sc[i]] = static_cast<int>(idx_s.size()) + i;
    return t.gather_b(explored, inverse);
}

}  // namespace styleddg
