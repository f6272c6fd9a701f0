#include "styleddg/stats.hpp"

#include <cmath>
#include <cstring>

namespace styleddg {

InstanceStats instance_stats(const Tensor4& x, double eps_var) {
    const Shape s = x.shape();
    InstanceStats out;
    out.batch = s.b;
    out.channels = s.c;
    out.mu.resize(static_cast<std::size_t>(s.b) * s.c);
    out.sigma.resize(out.mu.size());
    const double inv = 1.0 / (s.h * s.w);
    for (int b = 0; b < s.b; ++b)
        for (int c = 0; c < s.c; ++c) {
            double m = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int z = 0; z < s.w; ++z) m += x.at(b, c, y, z);
            m *= inv;
            double v = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int z = 0; z < s.w; ++z) {
                    const double d = x.at(b, c, y, z) - m;
                    v += d * d;
                }
            v *= inv;
            out.mu[static_cast<std::size_t>(b) * s.c + c] = m;
            out.sigma[static_cast<std::size_t>(b) * s.c + c] = std::sqrt(v + eps_var);
        }
    return out;
}

SecondOrderStats second_order_stats(const InstanceStats& s) {
    SecondOrderStats out;
    out.var_mu.assign(s.channels, 0.0);
    out.var_sigma.assign(s.channels, 0.0);
    const double inv = 1.0 / s.batch;
    for (int c = 0; c < s.channels; ++c) {
        double mm = 0.0, ms = 0.0;
        for (int b = 0; b < s.batch; ++b) {
            mm += s.mu_at(b, c);
            ms += s.sigma_at(b, c);
        }
        mm *= inv;
        ms *= inv;
        double vm = 0.0, vs = 0.0;
        for (int b = 0; b < s.batch; ++b) {
            const double dm = s.mu_at(b, c) - mm;
            const double ds = s.sigma_at(b, c) - ms;
            vm += dm * dm;
            vs += ds * ds;
        }
        out.var_mu[c] = vm * inv;
        out.var_sigma[c] = vs * inv;
    }
    return out;
}

StyleLayerSlice layer_style_slice(const Tensor4& activation, double eps_var) {
    const InstanceStats s = instance_stats(activation, eps_var);
    const SecondOrderStats so = second_order_stats(s);
    StyleLayerSlice slice;
    slice.mu_bar.assign(s.channels, 0.0);
    slice.sigma_bar.assign(s.channels, 0.0);
    const double inv = 1.0 / s.batch;
    for (int c = 0; c < s.channels; ++c) {
        double m = 0.0, sg = 0.0;
        for (int b = 0; b < s.batch; ++b) {
            m += s.mu_at(b, c);
            sg += s.sigma_at(b, c);
        }
        slice.mu_bar[c] = m * inv;
        slice.sigma_bar[c] = sg * inv;
    }
    slice.var_mu = so.var_mu;
    slice.var_sigma = so.var_sigma;
    return slice;
}

int StyleVector::scalar_count() const {
    int n = 0;
    for (const auto& l : layers) n += 4 * l.channels();
    return n;
}

std::size_t StyleVector::byte_size() const {
    return sizeof(std::uint32_t) * (1 + layers.size()) +
           sizeof(double) * static_cast<std::size_t>(scalar_count());
}

namespace {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}
std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}
double get_f64(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}
}  // namespace

std::vector<std::uint8_t> StyleVector::serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(byte_size());
    put_u32(out, static_cast<std::uint32_t>(layers.size()));
    for (const auto& l : layers) put_u32(out, static_cast<std::uint32_t>(l.channels()));
    for (const auto& l : layers) {
        for (double v : l.mu_bar) put_f64(out, v);
        for (double v : l.sigma_bar) put_f64(out, v);
        for (double v : l.var_mu) put_f64(out, v);
        for (double v : l.var_sigma) put_f64(out, v);
    }
    return out;
}

StyleVector StyleVector::deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw InputError("StyleVector: truncated header");
    const std::uint32_t nl = get_u32(bytes.data());
    std::size_t off = 4;
    if (bytes.size() < off + 4 * nl) throw InputError("StyleVector: truncated channel list");
    std::vector<std::uint32_t> chans(nl);
    for (std::uint32_t i = 0; i < nl; ++i) {
        chans[i] = get_u32(bytes.data() + off);
        off += 4;
    }
    StyleVector sv;
    sv.layers.resize(nl);
    for (std::uint32_t i = 0; i < nl; ++i) {
        const std::size_t c = chans[i];
        if (bytes.size() < off + 4 * c * 8) throw InputError("StyleVector: truncated payload");
        auto read_vec = [&](std::vector<double>& dst) {
            dst.resize(c);
            for (std::size_t j = 0; j < c; ++j) {
                dst[j] = get_f64(bytes.data() + off);
                off += 8;
            }
        };
        read_vec(sv.layers[i].mu_bar);
        read_vec(sv.layers[i].sigma_bar);
        read_vec(sv.layers[i].var_mu);
        read_vec(sv.layers[i].var_sigma);
    }
    return sv;
}

Lemma1Report check_lemma1_bounds(const StyleVector& sv, const std::vector<double>& u_per_layer) {
    if (u_per_layer.size() != sv.layers.size())
        throw InputError("check_lemma1_bounds: need one activation bound per layer");
    Lemma1Report rep;
    rep.layers.resize(sv.layers.size());
    const double root2 = std::sqrt(2.0);
    for (std::size_t l = 0; l < sv.layers.size(); ++l) {
        const double u = u_per_layer[l];
        double max_mu = 0.0, max_sigma = 0.0;
        for (double v : sv.layers[l].mu_bar) max_mu = std::max(max_mu, std::fabs(v));
        for (double v : sv.layers[l].sigma_bar) max_sigma = std::max(max_sigma, std::fabs(v));
        auto& lr = rep.layers[l];
        lr.margin_mu = u - max_mu;
        lr.margin_sigma = root2 * u - max_sigma;
        lr.pass = lr.margin_mu >= 0.0 && lr.margin_sigma >= 0.0;
        rep.all_pass = rep.all_pass && lr.pass;
    }
    return rep;
}

}  // namespace styleddg
