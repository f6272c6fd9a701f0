#include "styleddg/tape.hpp"

#include <cmath>

namespace styleddg {

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    auto dim = [](int x, int y, const char* which) {
        if (x == y || x == 1 || y == 1) return std::max(x, y);
        throw ShapeError(std::string("broadcast: incompatible ") + which + " dims " +
                         std::to_string(x) + " vs " + std::to_string(y));
    };
    return Shape{dim(a.b, b.b, "batch"), dim(a.c, b.c, "channel"), dim(a.h, b.h, "height"),
                 dim(a.w, b.w, "width")};
}

inline std::size_t flat_at(const Shape& s, int b, int c, int h, int w) {
    // clamp broadcast dims
    if (s.b == 1) b = 0;
    if (s.c == 1) c = 0;
    if (s.h == 1) h = 0;
    if (s.w == 1) w = 0;
    return ((static_cast<std::size_t>(b) * s.c + c) * s.h + h) * s.w + w;
}

}  // namespace

Tape::NodeId Tape::push(Tensor4 v, bool req, std::function<void(Tape&)> back) {
    Node n;
    n.val = std::move(v);
    n.requires_grad = req;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tape::NodeId Tape::param(Tensor4 v) { return push(std::move(v), true, {}); }

Tape::NodeId Tape::constant(Tensor4 v) { return push(std::move(v), false, {}); }

const Tensor4& Tape::grad(NodeId id) const {
    const Node& n = nodes_[check(id)];
    if (!n.grad_ready)
        throw StateError("Tape: gradient not computed for node " + std::to_string(id) +
                         " (run backward first)");
    return n.grad;
}

Tape::NodeId Tape::conv2d(NodeId xi, NodeId wi, NodeId bi, int stride, int pad) {
    const Tensor4& x = val(xi);
    const Tensor4& w = val(wi);
    const Tensor4& b = val(bi);
    const Shape xs = x.shape(), ws = w.shape();
    if (ws.c != xs.c)
        throw ShapeError("conv2d: kernel in-channels " + std::to_string(ws.c) +
                         " != input channels " + std::to_string(xs.c));
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >=1, pad >=0");
    if (!(b.shape() == Shape{1, ws.b, 1, 1}))
        throw ShapeError("conv2d: bias shape must be (1," + std::to_string(ws.b) + ",1,1)");
    const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    if (oh < 1 || ow < 1) throw ShapeError("conv2d: kernel larger than padded input");

    Tensor4 out(Shape{xs.b, ws.b, oh, ow});
    // weight-stationary loops with contiguous row walks on the stride-1 path
    for (int n = 0; n < xs.b; ++n)
        for (int co = 0; co < ws.b; ++co) {
            double* orow0 = out.data() + (static_cast<std::size_t>(n) * ws.b + co) * oh * ow;
            const double bv = b.at(0, co, 0, 0);
            for (int i = 0; i < oh * ow; ++i) orow0[i] = bv;
            for (int ci = 0; ci < xs.c; ++ci) {
                const double* xpl =
                    x.data() + (static_cast<std::size_t>(n) * xs.c + ci) * xs.h * xs.w;
                const double* wpl =
                    w.data() + (static_cast<std::size_t>(co) * ws.c + ci) * ws.h * ws.w;
                for (int ky = 0; ky < ws.h; ++ky)
                    for (int kz = 0; kz < ws.w; ++kz) {
                        const double wv = wpl[ky * ws.w + kz];
                        if (stride == 1) {
                            const int y0 = std::max(0, pad - ky);
                            const int y1 = std::min(oh, xs.h + pad - ky);
                            const int z0 = std::max(0, pad - kz);
                            const int z1 = std::min(ow, xs.w + pad - kz);
                            for (int y = y0; y < y1; ++y) {
                                const double* xrow = xpl + (y - pad + ky) * xs.w - pad + kz;
                                double* orow = orow0 + y * ow;
                                for (int z = z0; z < z1; ++z) orow[z] += wv * xrow[z];
                            }
                        } else {
                            for (int y = 0; y < oh; ++y) {
                                const int iy = y * stride - pad + ky;
                                if (iy < 0 || iy >= xs.h) continue;
                                for (int z = 0; z < ow; ++z) {
                                    const int iz = z * stride - pad + kz;
                                    if (iz < 0 || iz >= xs.w) continue;
                                    orow0[y * ow + z] += wv * xpl[iy * xs.w + iz];
                                }
                            }
                        }
                    }
            }
        }

    const bool req = requires_grad(xi) || requires_grad(wi) || requires_grad(bi);
    NodeId self = push(std::move(out), req, {});
    nodes_[self].back = [self, xi, wi, bi, stride, pad](Tape& t) {
        const Tensor4& g = t.nodes_[self].grad;
        const Tensor4& x = t.val(xi);
        const Tensor4& w = t.val(wi);
        const Shape xs = x.shape(), ws = w.shape(), os = g.shape();
        const bool dx = t.requires_grad(xi), dw = t.requires_grad(wi), db = t.requires_grad(bi);
        const int oh = os.h, ow = os.w;
        for (int n = 0; n < xs.b; ++n)
            for (int co = 0; co < ws.b; ++co) {
                const double* grow0 =
                    g.data() + (static_cast<std::size_t>(n) * ws.b + co) * oh * ow;
                if (db) {
                    double acc = 0.0;
                    for (int i = 0; i < oh * ow; ++i) acc += grow0[i];
                    t.nodes_[bi].grad.at(0, co, 0, 0) += acc;
                }
                if (!dx && !dw) continue;
                for (int ci = 0; ci < xs.c; ++ci) {
                    const double* xpl =
                        x.data() + (static_cast<std::size_t>(n) * xs.c + ci) * xs.h * xs.w;
                    double* gxpl =
                        dx ? t.nodes_[xi].grad.data() +
                                 (static_cast<std::size_t>(n) * xs.c + ci) * xs.h * xs.w
                           : nullptr;
                    const double* wpl =
                        w.data() + (static_cast<std::size_t>(co) * ws.c + ci) * ws.h * ws.w;
                    double* gwpl =
                        dw ? t.nodes_[wi].grad.data() +
                                 (static_cast<std::size_t>(co) * ws.c + ci) * ws.h * ws.w
                           : nullptr;
                    for (int ky = 0; ky < ws.h; ++ky)
                        for (int kz = 0; kz < ws.w; ++kz) {
                            const double wv = wpl[ky * ws.w + kz];
                            double acc_dw = 0.0;
                            if (stride == 1) {
                                const int y0 = std::max(0, pad - ky);
                                const int y1 = std::min(oh, xs.h + pad - ky);
                                const int z0 = std::max(0, pad - kz);
                                const int z1 = std::min(ow, xs.w + pad - kz);
                                for (int y = y0; y < y1; ++y) {
                                    const double* grow = grow0 + y * ow;
                                    const int off = (y - pad + ky) * xs.w - pad + kz;
                                    if (dx) {
                                        double* gxrow = gxpl + off;
                                        for (int z = z0; z < z1; ++z)
                                            gxrow[z] += wv * grow[z];
                                    }
                                    if (dw) {
                                        const double* xrow = xpl + off;
                                        for (int z = z0; z < z1; ++z)
                                            acc_dw += grow[z] * xrow[z];
                                    }
                                }
                            } else {
                                for (int y = 0; y < oh; ++y) {
                                    const int iy = y * stride - pad + ky;
                                    if (iy < 0 || iy >= xs.h) continue;
                                    for (int z = 0; z < ow; ++z) {
                                        const int iz = z * stride - pad + kz;
                                        if (iz < 0 || iz >= xs.w) continue;
                                        if (dx) gxpl[iy * xs.w + iz] += wv * grow0[y * ow + z];
                                        if (dw) acc_dw += grow0[y * ow + z] * xpl[iy * xs.w + iz];
                                    }
                                }
                            }
                            if (dw) gwpl[ky * ws.w + kz] += acc_dw;
                        }
                }
            }
    };
    return self;
}

Tape::NodeId Tape::relu(NodeId xi) {
    const Tensor4& x = val(xi);
    Tensor4 out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
        out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        const Tensor4& x = t.val(xi);
        Tensor4& gx = t.nodes_[xi].grad;
        for (std::int64_t i = 0; i < x.size(); ++i)
            if (x.data()[i] > 0.0) gx.data()[i] += g.data()[i];
    };
    return self;
}

Tape::NodeId Tape::avg_pool2d(NodeId xi, int k) {
    const Tensor4& x = val(xi);
    const Shape xs = x.shape();
    if (k < 1 || xs.h % k != 0 || xs.w % k != 0)
        throw ShapeError("avg_pool2d: window " + std::to_string(k) + " must divide " +
                         xs.str());
    const int oh = xs.h / k, ow = xs.w / k;
    const double inv = 1.0 / (k * k);
    Tensor4 out(Shape{xs.b, xs.c, oh, ow});
    for (int b = 0; b < xs.b; ++b)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < oh; ++y)
                for (int z = 0; z < ow; ++z) {
                    double acc = 0.0;
                    for (int dy = 0; dy < k; ++dy)
                        for (int dz = 0; dz < k; ++dz) acc += x.at(b, c, y * k + dy, z * k + dz);
                    out.at(b, c, y, z) = acc * inv;
                }
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi, k, inv](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        Tensor4& gx = t.nodes_[xi].grad;
        const Shape os = g.shape();
        for (int b = 0; b < os.b; ++b)
            for (int c = 0; c < os.c; ++c)
                for (int y = 0; y < os.h; ++y)
                    for (int z = 0; z < os.w; ++z) {
                        const double gv = g.at(b, c, y, z) * inv;
                        for (int dy = 0; dy < k; ++dy)
                            for (int dz = 0; dz < k; ++dz)
                                gx.at(b, c, y * k + dy, z * k + dz) += gv;
                    }
    };
    return self;
}

Tape::NodeId Tape::mean_hw(NodeId xi) {
    const Tensor4& x = val(xi);
    const Shape xs = x.shape();
    const double inv = 1.0 / (xs.h * xs.w);
    Tensor4 out(Shape{xs.b, xs.c, 1, 1});
    for (int b = 0; b < xs.b; ++b)
        for (int c = 0; c < xs.c; ++c) {
            double acc = 0.0;
            for (int y = 0; y < xs.h; ++y)
                for (int z = 0; z < xs.w; ++z) acc += x.at(b, c, y, z);
            out.at(b, c, 0, 0) = acc * inv;
        }
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi, inv](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        Tensor4& gx = t.nodes_[xi].grad;
        const Shape xs = gx.shape();
        for (int b = 0; b < xs.b; ++b)
            for (int c = 0; c < xs.c; ++c) {
                const double gv = g.at(b, c, 0, 0) * inv;
                for (int y = 0; y < xs.h; ++y)
                    for (int z = 0; z < xs.w; ++z) gx.at(b, c, y, z) += gv;
            }
    };
    return self;
}

Tape::NodeId Tape::global_avg_pool(NodeId x) { return mean_hw(x); }

Tape::NodeId Tape::mean_b(NodeId xi) {
    const Tensor4& x = val(xi);
    const Shape xs = x.shape();
    const double inv = 1.0 / xs.b;
    Tensor4 out(Shape{1, xs.c, xs.h, xs.w});
    for (int b = 0; b < xs.b; ++b)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < xs.h; ++y)
                for (int z = 0; z < xs.w; ++z) out.at(0, c, y, z) += x.at(b, c, y, z) * inv;
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi, inv](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        Tensor4& gx = t.nodes_[xi].grad;
        const Shape xs = gx.shape();
        for (int b = 0; b < xs.b; ++b)
            for (int c = 0; c < xs.c; ++c)
                for (int y = 0; y < xs.h; ++y)
                    for (int z = 0; z < xs.w; ++z) gx.at(b, c, y, z) += g.at(0, c, y, z) * inv;
    };
    return self;
}

Tape::NodeId Tape::linear(NodeId xi, NodeId wi, NodeId bi) {
    const Tensor4& x = val(xi);
    const Tensor4& w = val(wi);
    const Tensor4& b = val(bi);
    const Shape xs = x.shape(), ws = w.shape();
    const int feat = xs.c * xs.h * xs.w;
    if (ws.c != feat || ws.h != 1 || ws.w != 1)
        throw ShapeError("linear: weight shape " + ws.str() + " incompatible with features " +
                         std::to_string(feat));
    const int out_dim = ws.b;
    if (!(b.shape() == Shape{1, out_dim, 1, 1}))
        throw ShapeError("linear: bias shape must be (1," + std::to_string(out_dim) + ",1,1)");
    Tensor4 out(Shape{xs.b, out_dim, 1, 1});
    for (int n = 0; n < xs.b; ++n)
        for (int o = 0; o < out_dim; ++o) {
            double acc = b.at(0, o, 0, 0);
            const double* xrow = x.data() + static_cast<std::size_t>(n) * feat;
            const double* wrow = w.data() + static_cast<std::size_t>(o) * feat;
            for (int f = 0; f < feat; ++f) acc += xrow[f] * wrow[f];
            out.at(n, o, 0, 0) = acc;
        }
    const bool req = requires_grad(xi) || requires_grad(wi) || requires_grad(bi);
    NodeId self = push(std::move(out), req, {});
    nodes_[self].back = [self, xi, wi, bi, feat](Tape& t) {
        const Tensor4& g = t.nodes_[self].grad;
        const Tensor4& x = t.val(xi);
        const Tensor4& w = t.val(wi);
        const int batch = g.shape().b, out_dim = g.shape().c;
        const bool dx = t.requires_grad(xi), dw = t.requires_grad(wi), db = t.requires_grad(bi);
        for (int n = 0; n < batch; ++n)
            for (int o = 0; o < out_dim; ++o) {
                const double go = g.at(n, o, 0, 0);
                if (go == 0.0) continue;
                if (db) t.nodes_[bi].grad.at(0, o, 0, 0) += go;
                const double* xrow = x.data() + static_cast<std::size_t>(n) * feat;
                const double* wrow = w.data() + static_cast<std::size_t>(o) * feat;
                if (dx) {
                    double* gx = t.nodes_[xi].grad.data() + static_cast<std::size_t>(n) * feat;
                    for (int f = 0; f < feat; ++f) gx[f] += go * wrow[f];
                }
                if (dw) {
                    double* gw = t.nodes_[wi].grad.data() + static_cast<std::size_t>(o) * feat;
                    for (int f = 0; f < feat; ++f) gw[f] += go * xrow[f];
                }
            }
    };
    return self;
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId li, const std::vector<int>& labels) {
    const Tensor4& z = val(li);
    const Shape zs = z.shape();
    if (zs.h != 1 || zs.w != 1)
        throw ShapeError("softmax_cross_entropy: logits must be (B,K,1,1), got " + zs.str());
    if (static_cast<int>(labels.size()) != zs.b)
        throw InputError("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                         " != batch " + std::to_string(zs.b));
    for (int y : labels)
        if (y < 0 || y >= zs.c)
            throw InputError("softmax_cross_entropy: label " + std::to_string(y) +
                             " out of range [0," + std::to_string(zs.c) + ")");
    const int batch = zs.b, k = zs.c;
    std::vector<double> probs(static_cast<std::size_t>(batch) * k);
    double loss = 0.0;
    for (int n = 0; n < batch; ++n) {
        double zmax = z.at(n, 0, 0, 0);
        for (int j = 1; j < k; ++j) zmax = std::max(zmax, z.at(n, j, 0, 0));
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(z.at(n, j, 0, 0) - zmax);
        const double logdenom = std::log(denom) + zmax;
        for (int j = 0; j < k; ++j)
            probs[static_cast<std::size_t>(n) * k + j] = std::exp(z.at(n, j, 0, 0) - logdenom);
        loss += logdenom - z.at(n, labels[n], 0, 0);
    }
    loss /= batch;
    Tensor4 out(Shape{1, 1, 1, 1});
    out.data()[0] = loss;
    NodeId self = push(std::move(out), requires_grad(li), {});
    nodes_[self].back = [self, li, labels, probs = std::move(probs)](Tape& t) {
        if (!t.requires_grad(li)) return;
        const double g = t.nodes_[self].grad.data()[0];
        Tensor4& gz = t.nodes_[li].grad;
        const int batch = gz.shape().b, k = gz.shape().c;
        const double scale = g / batch;
        for (int n = 0; n < batch; ++n)
            for (int j = 0; j < k; ++j) {
                double p = probs[static_cast<std::size_t>(n) * k + j];
                if (j == labels[n]) p -= 1.0;
                gz.at(n, j, 0, 0) += scale * p;
            }
    };
    return self;
}

// op: 0 add, 1 sub, 2 mul, 3 div
Tape::NodeId Tape::binary_ew(NodeId ai, NodeId bi, int op) {
    const Tensor4& a = val(ai);
    const Tensor4& b = val(bi);
    const Shape as = a.shape(), bs = b.shape();
    const Shape os = broadcast_shape(as, bs);
    Tensor4 out(os);
    std::size_t i = 0;
    for (int n = 0; n < os.b; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int z = 0; z < os.w; ++z, ++i) {
                    const double av = a.data()[flat_at(as, n, c, y, z)];
                    const double bv = b.data()[flat_at(bs, n, c, y, z)];
                    double r = 0.0;
                    switch (op) {
                        case 0: r = av + bv; break;
                        case 1: r = av - bv; break;
                        case 2: r = av * bv; break;
                        case 3: r = av / bv; break;
                    }
                    out.data()[i] = r;
                }
    const bool req = requires_grad(ai) || requires_grad(bi);
    NodeId self = push(std::move(out), req, {});
    nodes_[self].back = [self, ai, bi, op](Tape& t) {
        const Tensor4& g = t.nodes_[self].grad;
        const Tensor4& a = t.val(ai);
        const Tensor4& b = t.val(bi);
        const Shape as = a.shape(), bs = b.shape(), os = g.shape();
        const bool da = t.requires_grad(ai), db = t.requires_grad(bi);
        std::size_t i = 0;
        for (int n = 0; n < os.b; ++n)
            for (int c = 0; c < os.c; ++c)
                for (int y = 0; y < os.h; ++y)
                    for (int z = 0; z < os.w; ++z, ++i) {
                        const double gv = g.data()[i];
                        if (gv == 0.0) continue;
                        const std::size_t fa = flat_at(as, n, c, y, z);
                        const std::size_t fb = flat_at(bs, n, c, y, z);
                        switch (op) {
                            case 0:
                                if (da) t.nodes_[ai].grad.data()[fa] += gv;
                                if (db) t.nodes_[bi].grad.data()[fb] += gv;
                                break;
                            case 1:
                                if (da) t.nodes_[ai].grad.data()[fa] += gv;
                                if (db) t.nodes_[bi].grad.data()[fb] -= gv;
                                break;
                            case 2:
                                if (da) t.nodes_[ai].grad.data()[fa] += gv * b.data()[fb];
                                if (db) t.nodes_[bi].grad.data()[fb] += gv * a.data()[fa];
                                break;
                            case 3: {
                                const double bv = b.data()[fb];
                                if (da) t.nodes_[ai].grad.data()[fa] += gv / bv;
                                if (db)
                                    t.nodes_[bi].grad.data()[fb] -=
                                        gv * a.data()[fa] / (bv * bv);
                                break;
                            }
                        }
                    }
    };
    return self;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) { return binary_ew(a, b, 0); }
Tape::NodeId Tape::sub(NodeId a, NodeId b) { return binary_ew(a, b, 1); }
Tape::NodeId Tape::mul(NodeId a, NodeId b) { return binary_ew(a, b, 2); }
Tape::NodeId Tape::div(NodeId a, NodeId b) { return binary_ew(a, b, 3); }

Tape::NodeId Tape::affine(NodeId xi, double a, double b) {
    const Tensor4& x = val(xi);
    Tensor4 out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.data()[i] = a * x.data()[i] + b;
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi, a](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        Tensor4& gx = t.nodes_[xi].grad;
        for (std::int64_t i = 0; i < g.size(); ++i) gx.data()[i] += a * g.data()[i];
    };
    return self;
}

Tape::NodeId Tape::sqrt_guard(NodeId xi, double eps, double dmin) {
    const Tensor4& x = val(xi);
    Tensor4 out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
        out.data()[i] = std::sqrt(std::max(x.data()[i] + eps, 0.0));
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi, dmin](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        const Tensor4& s = t.nodes_[self].val;
        Tensor4& gx = t.nodes_[xi].grad;
        for (std::int64_t i = 0; i < g.size(); ++i)
            gx.data()[i] += g.data()[i] * 0.5 / std::max(s.data()[i], dmin);
    };
    return self;
}

Tape::NodeId Tape::gather_b(NodeId xi, std::vector<int> idx) {
    const Tensor4& x = val(xi);
    const Shape xs = x.shape();
    for (int j : idx)
        if (j < 0 || j >= xs.b)
            throw InputError("gather_b: index " + std::to_string(j) + " out of batch range");
    const int ob = static_cast<int>(idx.size());
    if (ob < 1) throw InputError("gather_b: empty index list");
    const std::size_t inst = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
    Tensor4 out(Shape{ob, xs.c, xs.h, xs.w});
    for (int i = 0; i < ob; ++i)
        for (std::size_t f = 0; f < inst; ++f)
            out.data()[i * inst + f] = x.data()[static_cast<std::size_t>(idx[i]) * inst + f];
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi, idx = std::move(idx), inst](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const Tensor4& g = t.nodes_[self].grad;
        Tensor4& gx = t.nodes_[xi].grad;
        for (int i = 0; i < static_cast<int>(idx.size()); ++i)
            for (std::size_t f = 0; f < inst; ++f)
                gx.data()[static_cast<std::size_t>(idx[i]) * inst + f] +=
                    g.data()[i * inst + f];
    };
    return self;
}

Tape::NodeId Tape::concat_b(NodeId ai, NodeId bi) {
    const Tensor4& a = val(ai);
    const Tensor4& b = val(bi);
    const Shape as = a.shape(), bs = b.shape();
    if (as.c != bs.c || as.h != bs.h || as.w != bs.w)
        throw ShapeError("concat_b: per-instance shapes differ: " + as.str() + " vs " +
                         bs.str());
    Tensor4 out(Shape{as.b + bs.b, as.c, as.h, as.w});
    const std::size_t an = static_cast<std::size_t>(a.size());
    for (std::size_t i = 0; i < an; ++i) out.data()[i] = a.data()[i];
    for (std::int64_t i = 0; i < b.size(); ++i) out.data()[an + i] = b.data()[i];
    const bool req = requires_grad(ai) || requires_grad(bi);
    NodeId self = push(std::move(out), req, {});
    nodes_[self].back = [self, ai, bi, an](Tape& t) {
        const Tensor4& g = t.nodes_[self].grad;
        if (t.requires_grad(ai)) {
            Tensor4& ga = t.nodes_[ai].grad;
            for (std::size_t i = 0; i < an; ++i) ga.data()[i] += g.data()[i];
        }
        if (t.requires_grad(bi)) {
            Tensor4& gb = t.nodes_[bi].grad;
            for (std::int64_t i = 0; i < gb.size(); ++i) gb.data()[i] += g.data()[an + i];
        }
    };
    return self;
}

Tape::NodeId Tape::sum_all(NodeId xi) {
    const Tensor4& x = val(xi);
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
    Tensor4 out(Shape{1, 1, 1, 1});
    out.data()[0] = acc;
    NodeId self = push(std::move(out), requires_grad(xi), {});
    nodes_[self].back = [self, xi](Tape& t) {
        if (!t.requires_grad(xi)) return;
        const double g = t.nodes_[self].grad.data()[0];
        Tensor4& gx = t.nodes_[xi].grad;
        for (std::int64_t i = 0; i < gx.size(); ++i) gx.data()[i] += g;
    };
    return self;
}

void Tape::backward(NodeId loss) {
    if (nodes_.empty()) throw StateError("backward: empty tape, run a forward pass first");
    check(loss);
    if (!(nodes_[loss].val.shape() == Shape{1, 1, 1, 1}))
        throw StateError("backward: loss must be scalar, got " +
                         nodes_[loss].val.shape().str());
    for (auto& n : nodes_) {
        if (n.requires_grad) {
            n.grad = Tensor4(n.val.shape(), 0.0);
            n.grad_ready = true;
        } else {
            n.grad_ready = false;
        }
    }
    if (!nodes_[loss].requires_grad) {
        // loss independent of every parameter; nothing to propagate
        nodes_[loss].grad = Tensor4(Shape{1, 1, 1, 1}, 1.0);
        nodes_[loss].grad_ready = true;
        return;
    }
    nodes_[loss].grad.data()[0] = 1.0;
    for (int i = loss; i >= 0; --i)
        if (nodes_[i].requires_grad && nodes_[i].back) nodes_[i].back(*this);
    ran_backward_ = true;
}

}  // namespace styleddg
