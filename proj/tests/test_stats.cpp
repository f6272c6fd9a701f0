#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "styleddg/model.hpp"
#include "styleddg/stats.hpp"

#include "oracles.hpp"

using namespace styleddg;

TEST_CASE("instance stats on hand-checked maps") {
    SUBCASE("constant map") {
        const Tensor4 x(Shape{1, 1, 3, 3}, 5.0);
        const InstanceStats s = instance_stats(x, 0.0);
        CHECK(s.mu_at(0, 0) == doctest::Approx(5.0));
        CHECK(s.sigma_at(0, 0) == 0.0);
    }
    SUBCASE("2x2 map [1,2,3,4]") {
        const Tensor4 x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
        const InstanceStats s = instance_stats(x, 0.0);
        CHECK(s.mu_at(0, 0) == doctest::Approx(2.5));
        CHECK(s.sigma_at(0, 0) == doctest::Approx(std::sqrt(1.25)));
    }
    SUBCASE("random tensor matches the scalar-loop oracle") {
        Rng rng(21);
        const Tensor4 x = oracle::random_tensor(Shape{2, 3, 4, 4}, rng);
        const InstanceStats s = instance_stats(x, 0.0);
        const auto ref = oracle::instance_stats(x, 0.0);
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 3; ++c) {
                CHECK(std::fabs(s.mu_at(b, c) - ref.mu[b][c]) < 1e-12);
                CHECK(std::fabs(s.sigma_at(b, c) - ref.sigma[b][c]) < 1e-12);
            }
    }
}

TEST_CASE("second order stats") {
    SUBCASE("singleton batch has zero variance") {
        Rng rng(5);
        const Tensor4 x = oracle::random_tensor(Shape{1, 3, 4, 4}, rng);
        const auto so = second_order_stats(instance_stats(x, 0.0));
        for (double v : so.var_mu) CHECK(v == 0.0);
        for (double v : so.var_sigma) CHECK(v == 0.0);
    }
    SUBCASE("population variance with divisor B") {
        InstanceStats s;
        s.batch = 2;
        s.channels = 1;
        s.mu = {1.0, 3.0};
        s.sigma = {2.0, 2.0};
        const auto so = second_order_stats(s);
        CHECK(so.var_mu[0] == doctest::Approx(1.0));  // not 2.0 (no Bessel correction)
        CHECK(so.var_sigma[0] == 0.0);
    }
    SUBCASE("random stats match the oracle") {
        Rng rng(31);
        const Tensor4 x = oracle::random_tensor(Shape{4, 2, 3, 5}, rng);
        const auto so = second_order_stats(instance_stats(x, 0.0));
        const auto ref = oracle::instance_stats(x, 0.0);
        const auto vm = oracle::batch_variance(ref.mu);
        const auto vs = oracle::batch_variance(ref.sigma);
        for (int c = 0; c < 2; ++c) {
            CHECK(std::fabs(so.var_mu[c] - vm[c]) < 1e-12);
            CHECK(std::fabs(so.var_sigma[c] - vs[c]) < 1e-12);
        }
    }
}

TEST_CASE("device style vector") {
    ModelSpec spec;
    spec.in_channels = 2;
    spec.in_h = 8;
    spec.in_w = 8;
    spec.blocks = {3, 4};
    spec.classes = 3;
    spec.hooks = {1, 2};
    const Model model(spec);
    const ModelParams p = model.init_params(17);
    Rng rng(18);

    SUBCASE("identical instances give zero across-batch variance") {
        const Tensor4 one = oracle::random_tensor(Shape{1, 2, 8, 8}, rng);
        Tensor4 batch(Shape{3, 2, 8, 8});
        for (int b = 0; b < 3; ++b)
            for (std::int64_t i = 0; i < one.size(); ++i)
                batch.data()[b * one.size() + i] = one.data()[i];
        const StyleVector sv = device_style_vector(model, p, batch);
        for (const auto& l : sv.layers) {
            for (double v : l.var_mu) CHECK(std::fabs(v) < 1e-18);
            for (double v : l.var_sigma) CHECK(std::fabs(v) < 1e-18);
        }
    }
    SUBCASE("statistics match a scalar-loop recomputation on captured activations") {
        const Tensor4 batch = oracle::random_tensor(Shape{4, 2, 8, 8}, rng);
        Tape t;
        const auto f =
            model.forward(t, model.emit_params(t, p), t.constant(batch), StylePlan::plain());
        const StyleVector sv = device_style_vector(model, p, batch, 0.0);
        REQUIRE(sv.layer_count() == 2);
        for (int l = 0; l < 2; ++l) {
            const auto ref = oracle::instance_stats(t.val(f.hooks[l]), 0.0);
            const auto mu_bar = oracle::batch_mean(ref.mu);
            const auto sg_bar = oracle::batch_mean(ref.sigma);
            const auto vm = oracle::batch_variance(ref.mu);
            const auto vs = oracle::batch_variance(ref.sigma);
            for (int c = 0; c < sv.layers[l].channels(); ++c) {
                CHECK(std::fabs(sv.layers[l].mu_bar[c] - mu_bar[c]) < 1e-12);
                CHECK(std::fabs(sv.layers[l].sigma_bar[c] - sg_bar[c]) < 1e-12);
                CHECK(std::fabs(sv.layers[l].var_mu[c] - vm[c]) < 1e-12);
                CHECK(std::fabs(sv.layers[l].var_sigma[c] - vs[c]) < 1e-12);
            }
        }
    }
    SUBCASE("scalar count follows the channel spec") {
        const Tensor4 batch = oracle::random_tensor(Shape{2, 2, 8, 8}, rng);
        const StyleVector sv = device_style_vector(model, p, batch);
        CHECK(sv.scalar_count() == 4 * (3 + 4));
    }
    SUBCASE("bad hook spec is rejected at model construction") {
        ModelSpec bad = spec;
        bad.hooks = {1, 5};
        CHECK_THROWS_AS(Model{bad}, ConfigError);
    }
}

TEST_CASE("style vector serialization round-trip and layout") {
    Rng rng(77);
    StyleVector sv;
    for (int c : {3, 5}) {
        StyleLayerSlice s;
        for (int i = 0; i < c; ++i) {
            s.mu_bar.push_back(rng.normal());
            s.sigma_bar.push_back(rng.uniform());
            s.var_mu.push_back(rng.uniform());
            s.var_sigma.push_back(rng.uniform());
        }
        sv.layers.push_back(s);
    }
    const auto bytes = sv.serialize();
    CHECK(bytes.size() == sv.byte_size());
    // header: L then per-layer channel counts as little-endian u32
    CHECK(bytes[0] == 2);
    CHECK(bytes[4] == 3);
    CHECK(bytes[8] == 5);
    const StyleVector back = StyleVector::deserialize(bytes);
    REQUIRE(back.layer_count() == 2);
    for (int l = 0; l < 2; ++l) {
        CHECK(back.layers[l].mu_bar == sv.layers[l].mu_bar);
        CHECK(back.layers[l].sigma_bar == sv.layers[l].sigma_bar);
        CHECK(back.layers[l].var_mu == sv.layers[l].var_mu);
        CHECK(back.layers[l].var_sigma == sv.layers[l].var_sigma);
    }
    CHECK_THROWS_AS(StyleVector::deserialize(std::vector<std::uint8_t>{1, 2}), InputError);
}

TEST_CASE("lemma 1 bound report") {
    SUBCASE("zero activations satisfy any bound") {
        StyleVector sv;
        sv.layers.push_back(StyleLayerSlice{{0, 0}, {0, 0}, {0, 0}, {0, 0}});
        const auto rep = check_lemma1_bounds(sv, {0.0});
        CHECK(rep.all_pass);
    }
    SUBCASE("a too-large mu_bar fails with a negative margin") {
        StyleVector sv;
        sv.layers.push_back(StyleLayerSlice{{2.0}, {0.5}, {0.0}, {0.0}});
        const auto rep = check_lemma1_bounds(sv, {1.0});
        CHECK(!rep.all_pass);
        CHECK(rep.layers[0].margin_mu == doctest::Approx(-1.0));
    }
    SUBCASE("bound count must match layer count") {
        StyleVector sv;
        sv.layers.push_back(StyleLayerSlice{{0.0}, {0.0}, {0.0}, {0.0}});
        CHECK_THROWS_AS(check_lemma1_bounds(sv, {1.0, 2.0}), InputError);
    }
}
