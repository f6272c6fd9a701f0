// Independent reference implementations for oracle comparisons. Everything
// here is written as plain scalar loops straight from the operator
// definitions and must stay decoupled from the tape implementations.
#pragma once

#include <cmath>
#include <vector>

#include "styleddg/rng.hpp"
#include "styleddg/tensor.hpp"

namespace oracle {

using styleddg::Rng;
using styleddg::Shape;
using styleddg::Tensor4;

inline Tensor4 random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor4 t(s);
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
    return t;
}

// direct-loop convolution
inline Tensor4 conv2d(const Tensor4& x, const Tensor4& w, const std::vector<double>& bias,
                      int stride, int pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    Tensor4 out(Shape{xs.b, ws.b, oh, ow});
    for (int n = 0; n < xs.b; ++n)
        for (int co = 0; co < ws.b; ++co)
            for (int y = 0; y < oh; ++y)
                for (int z = 0; z < ow; ++z) {
                    double acc = bias[co];
                    for (int ci = 0; ci < xs.c; ++ci)
                        for (int ky = 0; ky < ws.h; ++ky)
                            for (int kz = 0; kz < ws.w; ++kz) {
                                const int iy = y * stride - pad + ky;
                                const int iz = z * stride - pad + kz;
                                if (iy < 0 || iy >= xs.h || iz < 0 || iz >= xs.w) continue;
                                acc += x.at(n, ci, iy, iz) * w.at(co, ci, ky, kz);
                            }
                    out.at(n, co, y, z) = acc;
                }
    return out;
}

// mean over batch of -log softmax(logits)[label]
inline double softmax_xent(const Tensor4& logits, const std::vector<int>& labels) {
    const int batch = logits.shape().b, k = logits.shape().c;
    double total = 0.0;
    for (int n = 0; n < batch; ++n) {
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(logits.at(n, j, 0, 0));
        total += -std::log(std::exp(logits.at(n, labels[n], 0, 0)) / denom);
    }
    return total / batch;
}

struct BcStats {
    std::vector<std::vector<double>> mu, sigma;  // [b][c]
};

inline BcStats instance_stats(const Tensor4& x, double eps_var) {
    const Shape s = x.shape();
    BcStats out;
    out.mu.assign(s.b, std::vector<double>(s.c, 0.0));
    out.sigma = out.mu;
    for (int b = 0; b < s.b; ++b)
        for (int c = 0; c < s.c; ++c) {
            double m = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int z = 0; z < s.w; ++z) m += x.at(b, c, y, z);
            m /= s.h * s.w;
            double v = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int z = 0; z < s.w; ++z)
                    v += (x.at(b, c, y, z) - m) * (x.at(b, c, y, z) - m);
            v /= s.h * s.w;
            out.mu[b][c] = m;
            out.sigma[b][c] = std::sqrt(v + eps_var);
        }
    return out;
}

// across-batch population variance of a [b][c] table, per channel
inline std::vector<double> batch_variance(const std::vector<std::vector<double>>& t) {
    const int b = static_cast<int>(t.size());
    const int c = static_cast<int>(t[0].size());
    std::vector<double> out(c, 0.0);
    for (int j = 0; j < c; ++j) {
        double m = 0.0;
        for (int i = 0; i < b; ++i) m += t[i][j];
        m /= b;
        double v = 0.0;
        for (int i = 0; i < b; ++i) v += (t[i][j] - m) * (t[i][j] - m);
        out[j] = v / b;
    }
    return out;
}

inline std::vector<double> batch_mean(const std::vector<std::vector<double>>& t) {
    const int b = static_cast<int>(t.size());
    const int c = static_cast<int>(t[0].size());
    std::vector<double> out(c, 0.0);
    for (int j = 0; j < c; ++j) {
        for (int i = 0; i < b; ++i) out[j] += t[i][j];
        out[j] /= b;
    }
    return out;
}

// sigma_t * (x - mu(x))/sigma(x) + mu_t with per-(b,c) targets
inline Tensor4 adain(const Tensor4& x, const std::vector<std::vector<double>>& mu_t,
                     const std::vector<std::vector<double>>& sigma_t, double eps_var) {
    const Shape s = x.shape();
    const BcStats st = oracle::instance_stats(x, eps_var);
    Tensor4 out(s);
    for (int b = 0; b < s.b; ++b)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int z = 0; z < s.w; ++z)
                    out.at(b, c, y, z) = sigma_t[b][c] * (x.at(b, c, y, z) - st.mu[b][c]) /
                                             st.sigma[b][c] +
                                         mu_t[b][c];
    return out;
}

inline Tensor4 mixstyle(const Tensor4& x, const std::vector<std::vector<double>>& mu_t,
                        const std::vector<std::vector<double>>& sigma_t, double lambda,
                        double eps_var) {
    const Shape s = x.shape();
    const BcStats st = oracle::instance_stats(x, eps_var);
    auto beta = mu_t, gamma = sigma_t;
    for (int b = 0; b < s.b; ++b)
        for (int c = 0; c < s.c; ++c) {
            beta[b][c] = lambda * st.mu[b][c] + (1.0 - lambda) * mu_t[b][c];
            gamma[b][c] = lambda * st.sigma[b][c] + (1.0 - lambda) * sigma_t[b][c];
        }
    return adain(x, beta, gamma, eps_var);
}

}  // namespace oracle
