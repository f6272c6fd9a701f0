#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "styleddg/layers.hpp"
#include "styleddg/stats.hpp"

#include "oracles.hpp"

using namespace styleddg;

namespace {

std::vector<std::vector<double>> bc_table(const Tensor4& t) {
    const Shape s = t.shape();
    std::vector<std::vector<double>> out(s.b, std::vector<double>(s.c));
    for (int b = 0; b < s.b; ++b)
        for (int c = 0; c < s.c; ++c) out[b][c] = t.at(b, c, 0, 0);
    return out;
}

Tensor4 bc_tensor(const std::vector<std::vector<double>>& v) {
    const int b = static_cast<int>(v.size()), c = static_cast<int>(v[0].size());
    Tensor4 t(Shape{b, c, 1, 1});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) t.at(i, j, 0, 0) = v[i][j];
    return t;
}

}  // namespace

TEST_CASE("adain") {
    Rng rng(3);
    const Tensor4 xv = oracle::random_tensor(Shape{2, 3, 4, 4}, rng);
    SUBCASE("restores its own stats") {
        Tape t;
        const auto x = t.constant(xv);
        const auto own = instance_stats_node(t, x, 0.0);
        const auto out = adain(t, x, own.mu, own.sigma, 0.0);
        CHECK(max_abs_diff(t.val(out), xv) < 1e-9);
    }
    SUBCASE("zero-mean unit-std targets whiten every instance") {
        Tape t;
        const auto x = t.constant(xv);
        const auto out = adain(t, x, t.constant(Tensor4(Shape{1, 3, 1, 1}, 0.0)),
                               t.constant(Tensor4(Shape{1, 3, 1, 1}, 1.0)), 0.0);
        const InstanceStats s = instance_stats(t.val(out), 0.0);
        for (double m : s.mu) CHECK(std::fabs(m) < 1e-9);
        for (double sg : s.sigma) CHECK(sg == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("matches the scalar oracle on random targets") {
        Rng r2(5);
        const Tensor4 mu_t = oracle::random_tensor(Shape{2, 3, 1, 1}, r2);
        const Tensor4 sg_t = oracle::random_tensor(Shape{2, 3, 1, 1}, r2, 0.4);
        Tape t;
        const auto out =
            adain(t, t.constant(xv), t.constant(mu_t), t.constant(sg_t), kEpsVar);
        const Tensor4 ref = oracle::adain(xv, bc_table(mu_t), bc_table(sg_t), kEpsVar);
        CHECK(max_abs_diff(t.val(out), ref) < 1e-12);
    }
    SUBCASE("target shape mismatch raises") {
        Tape t;
        const auto x = t.constant(xv);
        CHECK_THROWS_AS(adain(t, x, t.constant(Tensor4(Shape{1, 2, 1, 1}, 0.0)),
                              t.constant(Tensor4(Shape{1, 3, 1, 1}, 1.0)), 0.0),
                        ShapeError);
    }
}

TEST_CASE("mixstyle") {
    Rng rng(9);
    const Tensor4 xv = oracle::random_tensor(Shape{2, 2, 3, 3}, rng);
    const Tensor4 mu_t = oracle::random_tensor(Shape{2, 2, 1, 1}, rng);
    const Tensor4 sg_t = oracle::random_tensor(Shape{2, 2, 1, 1}, rng, 0.3);
    SUBCASE("lambda=1 collapses to the input") {
        Tape t;
        const auto out =
            mixstyle(t, t.constant(xv), t.constant(mu_t), t.constant(sg_t), 1.0, kEpsVar);
        CHECK(max_abs_diff(t.val(out), xv) == 0.0);
    }
    SUBCASE("lambda=0 equals adain onto the target") {
        Tape t;
        const auto a =
            mixstyle(t, t.constant(xv), t.constant(mu_t), t.constant(sg_t), 0.0, kEpsVar);
        const auto b = adain(t, t.constant(xv), t.constant(mu_t), t.constant(sg_t), kEpsVar);
        CHECK(max_abs_diff(t.val(a), t.val(b)) < 1e-12);
    }
    SUBCASE("lambda=0.5 matches the composed oracle") {
        Tape t;
        const auto out =
            mixstyle(t, t.constant(xv), t.constant(mu_t), t.constant(sg_t), 0.5, kEpsVar);
        const Tensor4 ref = oracle::mixstyle(xv, bc_table(mu_t), bc_table(sg_t), 0.5, kEpsVar);
        CHECK(max_abs_diff(t.val(out), ref) < 1e-12);
    }
    SUBCASE("lambda outside [0,1] raises") {
        Tape t;
        CHECK_THROWS_AS(
            mixstyle(t, t.constant(xv), t.constant(mu_t), t.constant(sg_t), 1.5, kEpsVar),
            InputError);
    }
}

TEST_CASE("mixstyle shuffle") {
    Rng rng(13);
    const Tensor4 xv = oracle::random_tensor(Shape{2, 2, 4, 4}, rng);
    SUBCASE("identity permutation is the identity at any lambda") {
        Tape t;
        const auto out = mixstyle_shuffle(t, t.constant(xv), {0, 1}, 0.3, 0.0);
        CHECK(max_abs_diff(t.val(out), xv) < 1e-9);
    }
    SUBCASE("lambda=1 is the identity for any permutation") {
        Tape t;
        const auto out = mixstyle_shuffle(t, t.constant(xv), {1, 0}, 1.0, kEpsVar);
        CHECK(max_abs_diff(t.val(out), xv) == 0.0);
    }
    SUBCASE("swap at lambda=0 transfers instance styles") {
        Tape t;
        const auto out = mixstyle_shuffle(t, t.constant(xv), {1, 0}, 0.0, 0.0);
        const InstanceStats before = instance_stats(xv, 0.0);
        const InstanceStats after = instance_stats(t.val(out), 0.0);
        for (int c = 0; c < 2; ++c) {
            CHECK(after.mu_at(0, c) == doctest::Approx(before.mu_at(1, c)).epsilon(1e-9));
            CHECK(after.mu_at(1, c) == doctest::Approx(before.mu_at(0, c)).epsilon(1e-9));
            CHECK(after.sigma_at(0, c) == doctest::Approx(before.sigma_at(1, c)).epsilon(1e-9));
            CHECK(after.sigma_at(1, c) == doctest::Approx(before.sigma_at(0, c)).epsilon(1e-9));
        }
    }
    SUBCASE("invalid permutation raises") {
        Tape t;
        CHECK_THROWS_AS(mixstyle_shuffle(t, t.constant(xv), {0, 0}, 0.5, kEpsVar), InputError);
        CHECK_THROWS_AS(mixstyle_shuffle(t, t.constant(xv), {0}, 0.5, kEpsVar), InputError);
    }
}

TEST_CASE("dsu") {
    Rng rng(17);
    SUBCASE("zero eps is the identity") {
        const Tensor4 xv = oracle::random_tensor(Shape{3, 2, 4, 4}, rng);
        Tape t;
        const std::vector<double> z(2, 0.0);
        const auto out = dsu(t, t.constant(xv), z, z, kEpsVar);
        CHECK(max_abs_diff(t.val(out), xv) == 0.0);
    }
    SUBCASE("singleton batch has zero style variance, identity for any eps") {
        const Tensor4 xv = oracle::random_tensor(Shape{1, 2, 4, 4}, rng);
        Tape t;
        std::vector<double> e{1.7, -0.4};
        const auto out = dsu(t, t.constant(xv), e, e, 0.0);
        CHECK(max_abs_diff(t.val(out), xv) < 1e-9);
    }
    SUBCASE("matches the composed scalar oracle") {
        const Tensor4 xv = oracle::random_tensor(Shape{3, 2, 4, 4}, rng);
        std::vector<double> emu(3 * 2), esg(3 * 2);
        for (auto& v : emu) v = rng.normal();
        for (auto& v : esg) v = rng.normal();
        Tape t;
        const auto out = dsu(t, t.constant(xv), emu, esg, kEpsVar);
        // oracle: instance stats -> batch variances -> shifted targets -> adain
        const auto st = oracle::instance_stats(xv, kEpsVar);
        const auto vm = oracle::batch_variance(st.mu);
        const auto vs = oracle::batch_variance(st.sigma);
        auto mu_t = st.mu, sg_t = st.sigma;
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 2; ++c) {
                mu_t[b][c] += emu[b * 2 + c] * std::sqrt(vm[c]);
                sg_t[b][c] += esg[b * 2 + c] * std::sqrt(vs[c]);
            }
        const Tensor4 ref = oracle::adain(xv, mu_t, sg_t, kEpsVar);
        CHECK(max_abs_diff(t.val(out), ref) < 1e-12);
    }
    SUBCASE("eps size must be C or B*C") {
        const Tensor4 xv = oracle::random_tensor(Shape{3, 2, 4, 4}, rng);
        Tape t;
        CHECK_THROWS_AS(dsu(t, t.constant(xv), {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, kEpsVar),
                        ShapeError);
    }
}

TEST_CASE("style shift") {
    Rng rng(23);
    SUBCASE("eps=0 onto own stats of a single instance is the identity") {
        const Tensor4 xv = oracle::random_tensor(Shape{1, 2, 4, 4}, rng);
        const InstanceStats st = instance_stats(xv, 0.0);
        StyleLayerSlice psi;
        psi.mu_bar = {st.mu_at(0, 0), st.mu_at(0, 1)};
        psi.sigma_bar = {st.sigma_at(0, 0), st.sigma_at(0, 1)};
        psi.var_mu = {0.0, 0.0};
        psi.var_sigma = {0.0, 0.0};
        Tape t;
        const auto xs = t.constant(xv);
        const auto xsc = t.constant(oracle::random_tensor(Shape{1, 2, 4, 4}, rng));
        const std::vector<double> z(2, 0.0);
        const auto out = style_shift(t, xs, xsc, psi, z, z, 0.0);
        Tensor4 shifted_half(Shape{1, 2, 4, 4});
        for (std::int64_t i = 0; i < shifted_half.size(); ++i)
            shifted_half.data()[i] = t.val(out).data()[i];
        CHECK(max_abs_diff(shifted_half, xv) < 1e-9);
    }
    SUBCASE("eps=0 gives the shifted half exactly the neighbor batch style") {
        const Tensor4 xs_v = oracle::random_tensor(Shape{2, 3, 4, 4}, rng);
        const Tensor4 xsc_v = oracle::random_tensor(Shape{2, 3, 4, 4}, rng);
        StyleLayerSlice psi;
        for (int c = 0; c < 3; ++c) {
            psi.mu_bar.push_back(rng.normal());
            psi.sigma_bar.push_back(0.5 + rng.uniform());
            psi.var_mu.push_back(rng.uniform());
            psi.var_sigma.push_back(rng.uniform());
        }
        Tape t;
        const std::vector<double> z(3, 0.0);
        const auto out =
            style_shift(t, t.constant(xs_v), t.constant(xsc_v), psi, z, z, 0.0);
        const Tensor4& res = t.val(out);
        REQUIRE(res.shape().b == 4);
        Tensor4 shifted(Shape{2, 3, 4, 4});
        for (std::int64_t i = 0; i < shifted.size(); ++i) shifted.data()[i] = res.data()[i];
        const InstanceStats st = instance_stats(shifted, 0.0);
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 3; ++c) {
                CHECK(st.mu_at(b, c) == doctest::Approx(psi.mu_bar[c]).epsilon(1e-9));
                CHECK(st.sigma_at(b, c) == doctest::Approx(psi.sigma_bar[c]).epsilon(1e-9));
            }
        // untouched complement is bit-identical
        for (std::int64_t i = 0; i < xsc_v.size(); ++i)
            CHECK(res.data()[shifted.size() + i] == xsc_v.data()[i]);
    }
    SUBCASE("channel mismatch raises") {
        const Tensor4 xs_v = oracle::random_tensor(Shape{1, 2, 3, 3}, rng);
        StyleLayerSlice psi;
        psi.mu_bar = {0.0};
        psi.sigma_bar = {1.0};
        psi.var_mu = {0.0};
        psi.var_sigma = {0.0};
        Tape t;
        const std::vector<double> z(1, 0.0);
        CHECK_THROWS_AS(
            style_shift(t, t.constant(xs_v), t.constant(xs_v), psi, z, z, kEpsVar),
            ShapeError);
    }
}

TEST_CASE("style explore") {
    Rng rng(29);
    const Tensor4 xv = oracle::random_tensor(Shape{4, 2, 4, 4}, rng);
    std::vector<int> idperm{0, 1, 2, 3};
    SUBCASE("alpha=0 with identity permutation is the identity") {
        Tape t;
        const auto out =
            style_explore(t, t.constant(xv), {1, 0, 1, 0}, idperm, 0.4, 0.0, 0.0);
        CHECK(max_abs_diff(t.val(out), xv) < 1e-9);
    }
    SUBCASE("lambda=1 is the identity regardless of the rest") {
        Tape t;
        const auto out = style_explore(t, t.constant(xv), {0, 1, 1, 0},
                                       std::vector<int>{3, 2, 1, 0}, 1.0, 3.0, kEpsVar);
        CHECK(max_abs_diff(t.val(out), xv) == 0.0);
    }
    SUBCASE("alpha=3 extrapolates selected stats away from the batch mean") {
        // lambda=0, identity permutation: output instance stats must equal
        // the extrapolated targets for selected rows
        const std::vector<int> mask{1, 1, 0, 0};
        Tape t;
        const auto out = style_explore(t, t.constant(xv), mask, idperm, 0.0, 3.0, 0.0);
        const auto st = oracle::instance_stats(xv, 0.0);
        const auto mu_mean = oracle::batch_mean(st.mu);
        const auto sg_mean = oracle::batch_mean(st.sigma);
        const InstanceStats after = instance_stats(t.val(out), 0.0);
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 2; ++c) {
                const double want_mu =
                    mask[b] ? st.mu[b][c] + 3.0 * (st.mu[b][c] - mu_mean[c]) : st.mu[b][c];
                const double want_sg =
                    mask[b] ? st.sigma[b][c] + 3.0 * (st.sigma[b][c] - sg_mean[c])
                            : st.sigma[b][c];
                CHECK(after.mu_at(b, c) == doctest::Approx(want_mu).epsilon(1e-10));
                CHECK(after.sigma_at(b, c) == doctest::Approx(want_sg).epsilon(1e-10));
            }
    }
    SUBCASE("malformed mask or permutation raises") {
        Tape t;
        CHECK_THROWS_AS(
            style_explore(t, t.constant(xv), {1, 1, 1, 0}, idperm, 0.5, 3.0, kEpsVar),
            InputError);
        CHECK_THROWS_AS(style_explore(t, t.constant(xv), {1, 0, 1, 0},
                                      std::vector<int>{0, 0, 1, 2}, 0.5, 3.0, kEpsVar),
                        InputError);
    }
}

TEST_CASE("composed layer") {
    Rng rng(31);
    const Tensor4 hv = oracle::random_tensor(Shape{4, 3, 4, 4}, rng);
    StyleLayerConfig cfg;
    cfg.alpha_explore = 2.0;
    LayerRandomness r;
    r.eps_mu = {0.3, -0.2, 0.8};
    r.eps_sigma = {-0.5, 0.1, 0.4};
    r.lambda = 0.25;
    r.shift_mask = {1, 0, 0, 1};
    r.explore_mask = {0, 1, 1, 0};
    r.mix_perm = {2, 0, 3, 1};
    StyleLayerSlice psi;
    for (int c = 0; c < 3; ++c) {
        psi.mu_bar.push_back(rng.normal());
        psi.sigma_bar.push_back(0.5 + rng.uniform());
        psi.var_mu.push_back(rng.uniform());
        psi.var_sigma.push_back(rng.uniform());
    }
    SUBCASE("equals the manual shift-then-explore composition bit-exactly") {
        Tape t;
        const auto h = t.constant(hv);
        const auto composed = styleddg_layer(t, h, psi, r, cfg);

        Tape t2;
        const auto h2 = t2.constant(hv);
        std::vector<int> idx_s, idx_sc;
        for (int b = 0; b < 4; ++b) (r.shift_mask[b] ? idx_s : idx_sc).push_back(b);
        const auto xs = t2.gather_b(h2, idx_s);
        const auto xsc = t2.gather_b(h2, idx_sc);
        const auto shifted =
            style_shift(t2, xs, xsc, psi, r.eps_mu, r.eps_sigma, cfg.eps_var);
        const auto explored = style_explore(t2, shifted, r.explore_mask, r.mix_perm, r.lambda,
                                            cfg.alpha_explore, cfg.eps_var);
        std::vector<int> inverse(4);
        for (int i = 0; i < 2; ++i) inverse[idx_s[i]] = i;
        for (int i = 0; i < 2; ++i) inverse[idx_sc[i]] = 2 + i;
        const auto manual = t2.gather_b(explored, inverse);
        CHECK(t.val(composed).vec() == t2.val(manual).vec());
    }
    SUBCASE("odd batch raises a config error") {
        Tape t;
        const auto h = t.constant(oracle::random_tensor(Shape{3, 3, 4, 4}, rng));
        CHECK_THROWS_AS(styleddg_layer(t, h, psi, r, cfg), ConfigError);
    }
    SUBCASE("rows outside the shift set pass through style_shift untouched") {
        Tape t;
        const auto h = t.constant(hv);
        std::vector<int> idx_s, idx_sc;
        for (int b = 0; b < 4; ++b) (r.shift_mask[b] ? idx_s : idx_sc).push_back(b);
        const auto shifted =
            style_shift(t, t.gather_b(h, idx_s), t.gather_b(h, idx_sc), psi, r.eps_mu,
                        r.eps_sigma, cfg.eps_var);
        const Tensor4& out = t.val(shifted);
        const std::size_t inst = 3 * 4 * 4;
        for (std::size_t i = 0; i < idx_sc.size(); ++i)
            for (std::size_t f = 0; f < inst; ++f)
                CHECK(out.data()[(2 + i) * inst + f] ==
                      hv.data()[static_cast<std::size_t>(idx_sc[i]) * inst + f]);
    }
    SUBCASE("gradient flows through the composed layer") {
        Tape t;
        const auto h = t.param(hv);
        const auto out = styleddg_layer(t, h, psi, r, cfg);
        t.backward(t.sum_all(t.mul(out, out)));
        CHECK(t.grad(h).all_finite());
        double norm = 0.0;
        for (std::int64_t i = 0; i < t.grad(h).size(); ++i)
            norm += std::fabs(t.grad(h).data()[i]);
        CHECK(norm > 0.0);
    }
}
