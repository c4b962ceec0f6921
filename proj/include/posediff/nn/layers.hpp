#pragma once

#include <string>

#include "posediff/nn/graph.hpp"
#include "posediff/rng.hpp"

namespace posediff::nn {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m, adam_v;  // lazily sized by the optimizer

    Param() = default;
    Param(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}

    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamVisitor = std::function<void(Param<T>&)>;

template <typename T>
Var<T> use(Graph<T>& g, Param<T>& p) {
    return g.leaf(p.value, p.grad);
}

template <typename T>
void init_normal(Param<T>& p, Rng& rng, double std) {
    for (int64_t i = 0; i < p.value.numel(); i++)
        p.value[i] = static_cast<T>(rng.normal() * std);
}

template <typename T>
void init_he(Param<T>& p, Rng& rng, int64_t fan_in) {
    init_normal(p, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
    Param<T> w, b;

    Linear() = default;
    Linear(const std::string& name, int din, int dout, Rng& rng, bool zero_init = false)
        : w(name + ".w", {din, dout}), b(name + ".b", {dout}) {
        if (!zero_init) init_he(w, rng, din);
    }

    Var<T> operator()(Graph<T>& g, Var<T> x) {
        return add_row_bias(g, matmul(g, x, use(g, w)), use(g, b));
    }

    void visit(const ParamVisitor<T>& v) {
        v(w);
        v(b);
    }
};

template <typename T>
struct Conv2d {
    Param<T> w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(const std::string& name, int cin, int cout, int k, int stride_, int pad_, Rng& rng,
           bool zero_init = false)
        : w(name + ".w", {cout, cin, k, k}), b(name + ".b", {cout}), stride(stride_), pad(pad_) {
        if (!zero_init) init_he(w, rng, static_cast<int64_t>(cin) * k * k);
    }

    Var<T> operator()(Graph<T>& g, Var<T> x) {
        return conv2d(g, x, use(g, w), use(g, b), stride, pad);
    }

    void visit(const ParamVisitor<T>& v) {
        v(w);
        v(b);
    }
};

template <typename T>
struct GroupNorm {
    Param<T> gamma, beta;
    int groups = 8;

    GroupNorm() = default;
    GroupNorm(const std::string& name, int c, int groups_)
        : gamma(name + ".gamma", {c}), beta(name + ".beta", {c}), groups(groups_) {
        gamma.value.fill(T(1));
    }

    Var<T> operator()(Graph<T>& g, Var<T> x) {
        return group_norm(g, x, use(g, gamma), use(g, beta), groups);
    }

    void visit(const ParamVisitor<T>& v) {
        v(gamma);
        v(beta);
    }
};

// Single-head scaled dot-product attention. Query source and key/value source
// may be the same (self) or different (cross). The output projection starts
// small but nonzero: conditioning information has to reach the features from
// step one (the input-layer and adapter zeros already guarantee neutrality of
// the new conditioning pathways).
template <typename T>
struct Attention {
    Linear<T> q, k, v, out;
    int dim = 0;

    Attention() = default;
    Attention(const std::string& name, int d_q, int d_kv, int d, Rng& rng)
        : q(name + ".q", d_q, d, rng),
          k(name + ".k", d_kv, d, rng),
          v(name + ".v", d_kv, d, rng),
          out(name + ".out", d, d_q, rng),
          dim(d) {
        for (int64_t i = 0; i < out.w.value.numel(); i++) out.w.value[i] *= T(0.25);
    }

    Var<T> operator()(Graph<T>& g, Var<T> queries, Var<T> keyvalues) {
        auto qq = q(g, queries);
        auto kk = k(g, keyvalues);
        auto vv = v(g, keyvalues);
        auto att = softmax_rows(g, scale(g, matmul_nt(g, qq, kk), 1.0 / std::sqrt(double(dim))));
        return out(g, matmul(g, att, vv));
    }

    void visit(const ParamVisitor<T>& v_) {
        q.visit(v_);
        k.visit(v_);
        v.visit(v_);
        out.visit(v_);
    }
};

// Sinusoidal timestep features (constant w.r.t. parameters).
template <typename T>
Tensor<T> timestep_embedding(int t, int dim) {
    Tensor<T> e({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; i++) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e[i] = static_cast<T>(std::sin(t * freq));
        e[half + i] = static_cast<T>(std::cos(t * freq));
    }
    return e;
}

}  // namespace posediff::nn
