#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "styleddg/data.hpp"
#include "styleddg/stats.hpp"

using namespace styleddg;

namespace {

DataConfig small_cfg() {
    DataConfig c;
    c.domains = 4;
    c.classes = 5;
    c.train_per_domain = 40;
    c.test_per_domain = 20;
    c.height = 12;
    c.width = 12;
    return c;
}

}  // namespace

TEST_CASE("generation determinism and content sharing") {
    const DataConfig cfg = small_cfg();
    SUBCASE("same seed reproduces the dataset byte for byte") {
        const Dataset a = generate(default_domains(cfg), cfg, 7);
        const Dataset b = generate(default_domains(cfg), cfg, 7);
        REQUIRE(a.train.size() == b.train.size());
        for (std::size_t i = 0; i < a.train.size(); ++i) {
            CHECK(a.train[i].image.vec() == b.train[i].image.vec());
            CHECK(a.train[i].label == b.train[i].label);
        }
    }
    SUBCASE("domains with identical style params render identical images") {
        auto domains = default_domains(cfg);
        domains[1] = domains[0];
        domains[1].id = 1;
        const Dataset ds = generate(domains, cfg, 3);
        const auto d0 = ds.domain_train(0);
        const auto d1 = ds.domain_train(1);
        REQUIRE(d0.size() == d1.size());
        for (std::size_t i = 0; i < d0.size(); ++i) {
            CHECK(d0[i]->label == d1[i]->label);
            CHECK(d0[i]->image.vec() == d1[i]->image.vec());
        }
    }
    SUBCASE("neutral style leaves raw content") {
        auto domains = default_domains(cfg);
        DomainSpec neutral;
        neutral.id = 0;
        neutral.noise_amp = 0.0;
        auto styled = domains;
        styled[0] = neutral;
        const Dataset ds = generate(styled, cfg, 3);
        // raw content lives in [0,1] per construction
        for (const auto* s : ds.domain_train(0)) {
            double lo = 1e300, hi = -1e300;
            for (double v : s->image.vec()) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            CHECK(lo >= -1e-12);
            CHECK(hi <= 1.0 + 1e-12);
        }
    }
    SUBCASE("labels are balanced per domain") {
        const Dataset ds = generate(default_domains(cfg), cfg, 11);
        for (int d = 0; d < cfg.domains; ++d) {
            std::vector<int> counts(cfg.classes, 0);
            for (const auto* s : ds.domain_train(d)) counts[s->label]++;
            for (int c : counts) CHECK(c == cfg.train_per_domain / cfg.classes);
        }
    }
}

TEST_CASE("input-level style gap grows with the configured spread") {
    DataConfig cfg = small_cfg();
    auto gap_at = [&](double g) {
        cfg.style_gap = g;
        const Dataset ds = generate(default_domains(cfg), cfg, 13);
        // distance between per-domain mean instance stats at the input
        std::vector<std::vector<double>> mu(cfg.domains),
            sg(cfg.domains);
        for (int d = 0; d < cfg.domains; ++d) {
            mu[d].assign(cfg.channels, 0.0);
            sg[d].assign(cfg.channels, 0.0);
            const auto pool = ds.domain_train(d);
            for (const auto* s : pool) {
                const InstanceStats st = instance_stats(s->image, 0.0);
                for (int c = 0; c < cfg.channels; ++c) {
                    mu[d][c] += st.mu_at(0, c) / pool.size();
                    sg[d][c] += st.sigma_at(0, c) / pool.size();
                }
            }
        }
        double total = 0.0;
        for (int a = 0; a < cfg.domains; ++a)
            for (int b = a + 1; b < cfg.domains; ++b)
                for (int c = 0; c < cfg.channels; ++c)
                    total += std::fabs(mu[a][c] - mu[b][c]) + std::fabs(sg[a][c] - sg[b][c]);
        return total;
    };
    const double g0 = gap_at(0.25);
    const double g1 = gap_at(1.0);
    const double g2 = gap_at(2.5);
    CHECK(g0 < g1);
    CHECK(g1 < g2);
}

TEST_CASE("leave-one-domain-out split") {
    const DataConfig cfg = small_cfg();
    const Dataset ds = generate(default_domains(cfg), cfg, 21);
    SUBCASE("m=3: one source domain per device") {
        const auto split = split_leave_one_domain_out(ds, 3, 3);
        REQUIRE(split.shards.size() == 3);
        std::set<int> domains;
        for (const auto& sh : split.shards) {
            domains.insert(sh.domain);
            for (const auto* s : sh.samples) CHECK(s->domain == sh.domain);
        }
        CHECK(domains == std::set<int>{0, 1, 2});
    }
    SUBCASE("m=9: three devices per domain with disjoint samples") {
        const auto split = split_leave_one_domain_out(ds, 0, 9);
        std::map<int, int> holders;
        std::set<const Sample*> seen;
        std::size_t total = 0;
        for (const auto& sh : split.shards) {
            holders[sh.domain]++;
            for (const auto* s : sh.samples) {
                CHECK(seen.insert(s).second);  // no sample in two shards
                ++total;
            }
        }
        CHECK(holders == std::map<int, int>{{1, 3}, {2, 3}, {3, 3}});
        CHECK(total == 3u * cfg.train_per_domain);  // every source sample used once
    }
    SUBCASE("target samples never appear in a shard") {
        const auto split = split_leave_one_domain_out(ds, 2, 3);
        for (const auto& sh : split.shards)
            for (const auto* s : sh.samples) CHECK(s->domain != 2);
        for (const auto* s : split.target_set) CHECK(s->domain == 2);
        CHECK(!split.target_set.empty());
    }
    SUBCASE("absent target id raises") {
        CHECK_THROWS_AS(split_leave_one_domain_out(ds, 9, 3), InputError);
    }
    SUBCASE("fewer devices than source domains raises") {
        CHECK_THROWS_AS(split_leave_one_domain_out(ds, 0, 2), InputError);
    }
}

TEST_CASE("dataset dump and load round trip") {
    const DataConfig cfg = small_cfg();
    const Dataset ds = generate(default_domains(cfg), cfg, 31);
    const std::string path = "test_dataset.bin";
    dump_dataset(ds, path);
    const Dataset back = load_dataset(path);
    CHECK(back.channels == ds.channels);
    CHECK(back.classes == ds.classes);
    CHECK(back.domain_ids == ds.domain_ids);
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.test.size() == ds.test.size());
    for (std::size_t i = 0; i < ds.train.size(); i += 17) {
        CHECK(back.train[i].label == ds.train[i].label);
        CHECK(back.train[i].domain == ds.train[i].domain);
        CHECK(back.train[i].image.vec() == ds.train[i].image.vec());
    }
    std::filesystem::remove(path);
}
