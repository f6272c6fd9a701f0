#include "styleddg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "styleddg/rng.hpp"

namespace styleddg {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Class-conditional content in [0,1], identical across domains for the same
// (dataset seed, class, index). Archetypes cycle for classes beyond five.
// Each class also carries a brightness/contrast signature (scaled by
// `shortcut`): an easy within-domain cue that unseen domain styles scramble.
Tensor4 render_content(int channels, int height, int width, int label, int classes,
                       double shortcut, Rng& rng) {
    const int archetype = label % 5;
    const double fscale = 1.0 + 0.35 * (label / 5);
    const double phase = rng.uniform(0.0, kTau);
    const double freq = (1.5 + rng.uniform(0.0, 1.0)) * fscale;
    const double cx = 0.5 + rng.uniform(-0.15, 0.15);
    const double cy = 0.5 + rng.uniform(-0.15, 0.15);
    const double radius = 0.28 + rng.uniform(-0.05, 0.05);
    const double phase2 = rng.uniform(0.0, kTau);

    const double pos = classes > 1 ? static_cast<double>(label) / (classes - 1) : 0.5;
    const double gain = 1.0 - shortcut * 0.45 * pos;   // contrast signature
    const double lift = shortcut * 0.35 * (1.0 - pos); // brightness signature

    Tensor4 img(Shape{1, channels, height, width});
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5) / width;
            const double v = (y + 0.5) / height;
            double val = 0.0;
            switch (archetype) {
                case 0: val = 0.5 + 0.45 * std::sin(kTau * freq * v + phase); break;
                case 1: val = 0.5 + 0.45 * std::sin(kTau * freq * u + phase); break;
                case 2:
                    val = 0.5 + 0.45 * std::sin(kTau * freq * (u + v) * 0.7071 + phase);
                    break;
                case 3: {
                    const double d = std::hypot(u - cx, v - cy);
                    val = d <= radius ? 0.9 - 1.2 * d : 0.1;
                    break;
                }
                case 4:
                    val = 0.5 + 0.4 * std::sin(kTau * freq * u + phase) *
                                    std::sin(kTau * freq * v + phase2);
                    break;
            }
            val = lift + (1.0 - lift) * gain * val;  // stays within [0,1]
            static const double chw[3] = {1.0, 0.85, 0.7};
            for (int c = 0; c < channels; ++c)
                img.at(0, c, y, x) = val * chw[c % 3];
        }
    return img;
}

Sample make_sample(const DomainSpec& dom, const DataConfig& cfg, int label,
                   std::uint64_t instance_seed) {
    Rng rng(instance_seed);
    Sample s;
    s.label = label;
    s.domain = dom.id;
    s.image = render_content(cfg.channels, cfg.height, cfg.width, label, cfg.classes,
                             cfg.shortcut, rng);

    // per-instance texture phases and noise field are drawn from the
    // domain-independent stream, so equal style params give equal images
    std::vector<double> tex_phase(cfg.channels);
    for (int c = 0; c < cfg.channels; ++c) tex_phase[c] = rng.uniform(0.0, kTau);
    std::vector<double> noise(static_cast<std::size_t>(cfg.channels) * cfg.height * cfg.width);
    for (auto& n : noise) n = rng.normal();

    const double ca = std::cos(dom.tex_angle), sa = std::sin(dom.tex_angle);
    std::size_t ni = 0;
    for (int c = 0; c < cfg.channels; ++c)
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x, ++ni) {
                const double u = (x + 0.5) / cfg.width;
                const double v = (y + 0.5) / cfg.height;
                double val = s.image.at(0, c, y, x);
                val = dom.scale[c % dom.scale.size()] * val + dom.shift[c % dom.shift.size()];
                if (dom.tex_amp != 0.0)
                    val += dom.tex_amp *
                           std::sin(kTau * dom.tex_freq * (ca * u + sa * v) + tex_phase[c]);
                if (dom.noise_amp != 0.0) val += dom.noise_amp * noise[ni];
                s.image.at(0, c, y, x) = val;
            }
    return s;
}

}  // namespace

std::vector<const Sample*> Dataset::domain_train(int d) const {
    std::vector<const Sample*> out;
    for (const auto& s : train)
        if (s.domain == d) out.push_back(&s);
    return out;
}

std::vector<const Sample*> Dataset::domain_test(int d) const {
    std::vector<const Sample*> out;
    for (const auto& s : test)
        if (s.domain == d) out.push_back(&s);
    return out;
}

std::vector<DomainSpec> default_domains(const DataConfig& cfg) {
    const double g = cfg.style_gap;
    std::vector<DomainSpec> out;
    for (int d = 0; d < cfg.domains; ++d) {
        DomainSpec ds;
        ds.id = d;
        ds.scale.assign(3, 1.0);
        ds.shift.assign(3, 0.0);
        switch (d % 4) {
            case 0:
                ds.tex_freq = 2.0;
                ds.tex_amp = 0.05 * g;
                ds.tex_angle = 0.0;
                break;
            case 1:
                ds.scale = {1.0 + 0.8 * g, std::max(0.15, 1.0 - 0.3 * g), 1.0};
                ds.shift = {0.3 * g, -0.2 * g, 0.1 * g};
                ds.tex_freq = 4.0;
                ds.tex_amp = 0.12 * g;
                ds.tex_angle = kTau / 8.0;
                break;
            case 2:
                ds.scale = {std::max(0.15, 1.0 - 0.5 * g), 1.0 + 0.6 * g, 1.0 + 0.3 * g};
                ds.shift = {-0.3 * g, 0.4 * g, -0.1 * g};
                ds.tex_freq = 6.0;
                ds.tex_amp = 0.18 * g;
                ds.tex_angle = kTau / 4.0;
                break;
            case 3:
                ds.scale = {1.0 + 1.2 * g, 1.0 + 0.9 * g, std::max(0.15, 1.0 - 0.6 * g)};
                ds.shift = {0.5 * g, -0.4 * g, 0.3 * g};
                ds.tex_freq = 3.0;
                ds.tex_amp = 0.24 * g;
                ds.tex_angle = 3.0 * kTau / 8.0;
                break;
        }
        // extra domains beyond four get progressively larger shifts
        const int rep = d / 4;
        if (rep > 0) {
            for (auto& v : ds.scale) v *= 1.0 + 0.25 * rep;
            for (auto& v : ds.shift) v += 0.15 * rep * g;
        }
        ds.noise_amp = cfg.noise_amp;
        out.push_back(ds);
    }
    return out;
}

Dataset generate(const std::vector<DomainSpec>& domains, const DataConfig& cfg,
                 std::uint64_t seed) {
    if (cfg.classes < 2) throw ConfigError("generate: need at least 2 classes");
    if (domains.size() < 2) throw ConfigError("generate: need at least 2 domains");
    Dataset ds;
    ds.channels = cfg.channels;
    ds.height = cfg.height;
    ds.width = cfg.width;
    ds.classes = cfg.classes;
    for (const auto& d : domains) ds.domain_ids.push_back(d.id);

    auto fill = [&](std::vector<Sample>& dst, int per_domain, std::uint64_t salt) {
        for (const auto& dom : domains)
            for (int i = 0; i < per_domain; ++i) {
                const int label = i % cfg.classes;  // balanced labels
                const std::uint64_t inst =
                    mix_seed(seed, salt, static_cast<std::uint64_t>(label),
                             static_cast<std::uint64_t>(i));
                Sample s = make_sample(dom, cfg, label, inst);
                if (cfg.label_noise > 0.0) {
                    // content stays tied to the drawn label; only the
                    // annotation flips, identically across domains
                    Rng lr(mix_seed(inst, 0x6c61626cULL));
                    if (lr.uniform() < cfg.label_noise)
                        s.label = lr.uniform_int(cfg.classes);
                }
                dst.push_back(s);
            }
    };
    fill(ds.train, cfg.train_per_domain, 0xbeef);
    fill(ds.test, cfg.test_per_domain, 0xcafe);
    return ds;
}

LeaveOneOutSplit split_leave_one_domain_out(const Dataset& ds, int target_domain, int m) {
    if (std::find(ds.domain_ids.begin(), ds.domain_ids.end(), target_domain) ==
        ds.domain_ids.end())
        throw InputError("split: target domain " + std::to_string(target_domain) +
                         " not in dataset");
    std::vector<int> sources;
    for (int d : ds.domain_ids)
        if (d != target_domain) sources.push_back(d);
    std::sort(sources.begin(), sources.end());
    const int s = static_cast<int>(sources.size());
    if (m < s)
        throw InputError("split: " + std::to_string(m) + " devices cannot cover " +
                         std::to_string(s) + " source domains");

    LeaveOneOutSplit out;
    out.shards.resize(m);
    // devices sharing a domain take disjoint contiguous chunks of it
    std::vector<int> holders(s, 0);
    for (int i = 0; i < m; ++i) holders[i % s]++;
    for (int di = 0; di < s; ++di) {
        const auto pool = ds.domain_train(sources[di]);
        const int share = static_cast<int>(pool.size()) / holders[di];
        int taken = 0, holder = 0;
        for (int i = di; i < m; i += s) {
            auto& shard = out.shards[i];
            shard.device = i;
            shard.domain = sources[di];
            const int count =
                holder + 1 == holders[di] ? static_cast<int>(pool.size()) - taken : share;
            for (int j = 0; j < count; ++j) shard.samples.push_back(pool[taken + j]);
            taken += count;
            ++holder;
        }
    }
    out.target_set = ds.domain_test(target_domain);
    for (int d : sources) {
        const auto pool = ds.domain_test(d);
        out.source_eval.insert(out.source_eval.end(), pool.begin(), pool.end());
    }
    return out;
}

namespace {
constexpr std::uint32_t kMagic = 0x44474453;  // "SDGD"

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
std::uint32_t read_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
void write_samples(std::ofstream& out, const std::vector<Sample>& v) {
    for (const auto& s : v) {
        write_u32(out, static_cast<std::uint32_t>(s.label));
        write_u32(out, static_cast<std::uint32_t>(s.domain));
        out.write(reinterpret_cast<const char*>(s.image.data()),
                  static_cast<std::streamsize>(s.image.size() * sizeof(double)));
    }
}
void read_samples(std::ifstream& in, std::vector<Sample>& v, int n, const Shape& shape) {
    v.resize(n);
    for (auto& s : v) {
        s.label = static_cast<int>(read_u32(in));
        s.domain = static_cast<int>(read_u32(in));
        s.image = Tensor4(shape);
        in.read(reinterpret_cast<char*>(s.image.data()),
                static_cast<std::streamsize>(s.image.size() * sizeof(double)));
    }
}
}  // namespace

void dump_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write dataset '" + path + "'");
    write_u32(out, kMagic);
    write_u32(out, 1);  // version
    write_u32(out, static_cast<std::uint32_t>(ds.channels));
    write_u32(out, static_cast<std::uint32_t>(ds.height));
    write_u32(out, static_cast<std::uint32_t>(ds.width));
    write_u32(out, static_cast<std::uint32_t>(ds.classes));
    write_u32(out, static_cast<std::uint32_t>(ds.domain_ids.size()));
    for (int d : ds.domain_ids) write_u32(out, static_cast<std::uint32_t>(d));
    write_u32(out, static_cast<std::uint32_t>(ds.train.size()));
    write_u32(out, static_cast<std::uint32_t>(ds.test.size()));
    write_samples(out, ds.train);
    write_samples(out, ds.test);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read dataset '" + path + "'");
    if (read_u32(in) != kMagic) throw InputError("dataset '" + path + "': bad magic");
    if (read_u32(in) != 1) throw InputError("dataset '" + path + "': unknown version");
    Dataset ds;
    ds.channels = static_cast<int>(read_u32(in));
    ds.height = static_cast<int>(read_u32(in));
    ds.width = static_cast<int>(read_u32(in));
    ds.classes = static_cast<int>(read_u32(in));
    const int nd = static_cast<int>(read_u32(in));
    ds.domain_ids.resize(nd);
    for (auto& d : ds.domain_ids) d = static_cast<int>(read_u32(in));
    const int ntr = static_cast<int>(read_u32(in));
    const int nte = static_cast<int>(read_u32(in));
    const Shape shape{1, ds.channels, ds.height, ds.width};
    read_samples(in, ds.train, ntr, shape);
    read_samples(in, ds.test, nte, shape);
    if (!in) throw InputError("dataset '" + path + "': truncated");
    return ds;
}

}  // namespace styleddg
