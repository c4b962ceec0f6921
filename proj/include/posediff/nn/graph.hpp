#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "posediff/nn/tensor.hpp"

namespace posediff::nn {

// Reverse-mode tape. Ops compute eagerly and, when the graph is recording,
// push a closure that scatters the node's gradient into its parents. Backward
// walks the tape in reverse creation order, so any DAG (skip connections,
// shared conditioning contexts) accumulates correctly.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // lazily allocated; parameter leaves alias the Param grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor<T>& grad_buf() {
        if (!grad.defined()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
class Graph {
public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Var<T> constant(Tensor<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = false;
        return n;
    }

    // Leaf whose gradient accumulates into an external buffer (a Param).
    Var<T> leaf(Tensor<T> value, Tensor<T> grad_sink) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->grad = std::move(grad_sink);
        n->requires_grad = recording_;
        return n;
    }

    Var<T> make(Tensor<T> value, std::vector<Var<T>> parents,
                std::function<void(Node<T>&)> backward) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        bool needs = false;
        for (const auto& p : parents) needs = needs || p->requires_grad;
        n->requires_grad = recording_ && needs;
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backward = std::move(backward);
            tape_.push_back(n);
        }
        return n;
    }

    // Seeds d(loss)/d(loss) = scale and propagates through the tape.
    void backward(const Var<T>& loss, T scale = T(1)) {
        if (!recording_) fail(ErrorCode::InvalidRange, "backward on a non-recording graph");
        if (loss->value.numel() != 1) fail(ErrorCode::ShapeMismatch, "loss must be scalar");
        loss->grad_buf()[0] += scale;
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
            Node<T>& n = **it;
            if (n.grad.defined() && n.backward) n.backward(n);
        }
    }

private:
    bool recording_;
    std::vector<Var<T>> tape_;
};

// ---------------------------------------------------------------------------
// GEMM helpers (row-major Eigen maps)
// ---------------------------------------------------------------------------

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<EMat<T>> as_mat(Tensor<T>& t, int rows, int cols) {
    return Eigen::Map<EMat<T>>(t.data(), rows, cols);
}

template <typename T>
Eigen::Map<const EMat<T>> as_mat(const Tensor<T>& t, int rows, int cols) {
    return Eigen::Map<const EMat<T>>(t.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// Elementwise & structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
    if (a->value.shape() != b->value.shape()) fail(ErrorCode::ShapeMismatch, "add shapes differ");
    Tensor<T> out(a->value.shape());
    for (int64_t i = 0; i < out.numel(); i++) out[i] = a->value[i] + b->value[i];
    return g.make(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad) {
            auto& ga = a->grad_buf();
            for (int64_t i = 0; i < n.value.numel(); i++) ga[i] += n.grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->grad_buf();
            for (int64_t i = 0; i < n.value.numel(); i++) gb[i] += n.grad[i];
        }
    });
}

template <typename T>
Var<T> scale(Graph<T>& g, Var<T> x, double s) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); i++) out[i] = static_cast<T>(s) * x->value[i];
    return g.make(std::move(out), {x}, [x, s](Node<T>& n) {
        auto& gx = x->grad_buf();
        for (int64_t i = 0; i < n.value.numel(); i++) gx[i] += static_cast<T>(s) * n.grad[i];
    });
}

// x: [C, ...spatial...], b: [C]
template <typename T>
Var<T> add_channel_bias(Graph<T>& g, Var<T> x, Var<T> b) {
    const int c = x->value.dim(0);
    if (b->value.numel() != c) fail(ErrorCode::ShapeMismatch, "bias length != channels");
    const int64_t inner = x->value.numel() / c;
    Tensor<T> out(x->value.shape());
    for (int ch = 0; ch < c; ch++)
        for (int64_t i = 0; i < inner; i++)
            out[ch * inner + i] = x->value[ch * inner + i] + b->value[ch];
    return g.make(std::move(out), {x, b}, [x, b, c, inner](Node<T>& n) {
        if (x->requires_grad) {
            auto& gx = x->grad_buf();
            for (int64_t i = 0; i < n.value.numel(); i++) gx[i] += n.grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->grad_buf();
            for (int ch = 0; ch < c; ch++) {
                T acc = T(0);
                for (int64_t i = 0; i < inner; i++) acc += n.grad[ch * inner + i];
                gb[ch] += acc;
            }
        }
    });
}

// x: [N, D], b: [D]
template <typename T>
Var<T> add_row_bias(Graph<T>& g, Var<T> x, Var<T> b) {
    const int n_rows = x->value.dim(0), d = x->value.dim(1);
    if (b->value.numel() != d) fail(ErrorCode::ShapeMismatch, "bias length != row width");
    Tensor<T> out(x->value.shape());
    for (int r = 0; r < n_rows; r++)
        for (int j = 0; j < d; j++) out[r * d + j] = x->value[r * d + j] + b->value[j];
    return g.make(std::move(out), {x, b}, [x, b, n_rows, d](Node<T>& n) {
        if (x->requires_grad) {
            auto& gx = x->grad_buf();
            for (int64_t i = 0; i < n.value.numel(); i++) gx[i] += n.grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->grad_buf();
            for (int r = 0; r < n_rows; r++)
                for (int j = 0; j < d; j++) gb[j] += n.grad[r * d + j];
        }
    });
}

template <typename T>
Var<T> silu(Graph<T>& g, Var<T> x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); i++) {
        const T v = x->value[i];
        out[i] = v / (T(1) + std::exp(-v));
    }
    return g.make(std::move(out), {x}, [x](Node<T>& n) {
        auto& gx = x->grad_buf();
        for (int64_t i = 0; i < n.value.numel(); i++) {
            const T v = x->value[i];
            const T s = T(1) / (T(1) + std::exp(-v));
            gx[i] += n.grad[i] * s * (T(1) + v * (T(1) - s));
        }
    });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

// C[n,m] = A[n,k] * B[k,m]
template <typename T>
Var<T> matmul(Graph<T>& g, Var<T> a, Var<T> b) {
    const int n = a->value.dim(0), k = a->value.dim(1);
    if (b->value.dim(0) != k) fail(ErrorCode::ShapeMismatch, "matmul inner dims differ");
    const int m = b->value.dim(1);
    Tensor<T> out({n, m});
    as_mat(out, n, m).noalias() = as_mat(a->value, n, k) * as_mat(b->value, k, m);
    return g.make(std::move(out), {a, b}, [a, b, n, k, m](Node<T>& nd) {
        auto gc = as_mat(nd.grad, n, m);
        if (a->requires_grad)
            as_mat(a->grad_buf(), n, k).noalias() += gc * as_mat(b->value, k, m).transpose();
        if (b->requires_grad)
            as_mat(b->grad_buf(), k, m).noalias() += as_mat(a->value, n, k).transpose() * gc;
    });
}

// C[n,m] = A[n,k] * B[m,k]^T
template <typename T>
Var<T> matmul_nt(Graph<T>& g, Var<T> a, Var<T> b) {
    const int n = a->value.dim(0), k = a->value.dim(1);
    if (b->value.dim(1) != k) fail(ErrorCode::ShapeMismatch, "matmul_nt inner dims differ");
    const int m = b->value.dim(0);
    Tensor<T> out({n, m});
    as_mat(out, n, m).noalias() = as_mat(a->value, n, k) * as_mat(b->value, m, k).transpose();
    return g.make(std::move(out), {a, b}, [a, b, n, k, m](Node<T>& nd) {
        auto gc = as_mat(nd.grad, n, m);
        if (a->requires_grad)
            as_mat(a->grad_buf(), n, k).noalias() += gc * as_mat(b->value, m, k);
        if (b->requires_grad)
            as_mat(b->grad_buf(), m, k).noalias() += gc.transpose() * as_mat(a->value, n, k);
    });
}

template <typename T>
Var<T> softmax_rows(Graph<T>& g, Var<T> x) {
    const int n = x->value.dim(0), m = x->value.dim(1);
    Tensor<T> out(x->value.shape());
    for (int r = 0; r < n; r++) {
        T mx = x->value[r * m];
        for (int j = 1; j < m; j++) mx = std::max(mx, x->value[r * m + j]);
        T sum = T(0);
        for (int j = 0; j < m; j++) {
            out[r * m + j] = std::exp(x->value[r * m + j] - mx);
            sum += out[r * m + j];
        }
        for (int j = 0; j < m; j++) out[r * m + j] /= sum;
    }
    Tensor<T> y = out;  // alias kept for backward
    return g.make(std::move(out), {x}, [x, y, n, m](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int r = 0; r < n; r++) {
            T dot = T(0);
            for (int j = 0; j < m; j++) dot += nd.grad[r * m + j] * y[r * m + j];
            for (int j = 0; j < m; j++)
                gx[r * m + j] += y[r * m + j] * (nd.grad[r * m + j] - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, Tensor<T>& col, int oh,
            int ow) {
    const int ci = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    T* cp = col.data();
    for (int c = 0; c < ci; c++)
        for (int ky = 0; ky < kh; ky++)
            for (int kx = 0; kx < kw; kx++) {
                for (int oy = 0; oy < oh; oy++) {
                    const int y = oy * stride + ky - pad;
                    for (int ox = 0; ox < ow; ox++) {
                        const int xx = ox * stride + kx - pad;
                        *cp++ = (y >= 0 && y < ih && xx >= 0 && xx < iw)
                                    ? x[(c * ih + y) * iw + xx]
                                    : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_add(const Tensor<T>& col, int ci, int ih, int iw, int kh, int kw, int stride, int pad,
                Tensor<T>& x, int oh, int ow) {
    const T* cp = col.data();
    for (int c = 0; c < ci; c++)
        for (int ky = 0; ky < kh; ky++)
            for (int kx = 0; kx < kw; kx++) {
                for (int oy = 0; oy < oh; oy++) {
                    const int y = oy * stride + ky - pad;
                    for (int ox = 0; ox < ow; ox++) {
                        const int xx = ox * stride + kx - pad;
                        if (y >= 0 && y < ih && xx >= 0 && xx < iw)
                            x[(c * ih + y) * iw + xx] += *cp;
                        cp++;
                    }
                }
            }
}

// x: [Ci,H,W], w: [Co,Ci,kh,kw], b: [Co] (optional, pass empty Var)
template <typename T>
Var<T> conv2d(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
    const int ci = x->value.dim(0), ih = x->value.dim(1), iw = x->value.dim(2);
    const int co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    if (w->value.dim(1) != ci)
        fail(ErrorCode::ShapeMismatch, "conv2d weight expects " + std::to_string(w->value.dim(1)) +
                                           " input channels, got " + std::to_string(ci));
    const int oh = (ih + 2 * pad - kh) / stride + 1;
    const int ow = (iw + 2 * pad - kw) / stride + 1;

    Tensor<T> col({ci * kh * kw, oh * ow});
    im2col(x->value, kh, kw, stride, pad, col, oh, ow);
    Tensor<T> out({co, oh, ow});
    as_mat(out, co, oh * ow).noalias() =
        as_mat(w->value, co, ci * kh * kw) * as_mat(col, ci * kh * kw, oh * ow);

    auto conv = g.make(std::move(out), {x, w},
                       [x, w, col, ci, ih, iw, co, kh, kw, stride, pad, oh, ow](Node<T>& nd) {
                           auto gout = as_mat(nd.grad, co, oh * ow);
                           if (w->requires_grad)
                               as_mat(w->grad_buf(), co, ci * kh * kw).noalias() +=
                                   gout * as_mat(col, ci * kh * kw, oh * ow).transpose();
                           if (x->requires_grad) {
                               Tensor<T> gcol({ci * kh * kw, oh * ow});
                               as_mat(gcol, ci * kh * kw, oh * ow).noalias() =
                                   as_mat(w->value, co, ci * kh * kw).transpose() * gout;
                               col2im_add(gcol, ci, ih, iw, kh, kw, stride, pad, x->grad_buf(), oh,
                                          ow);
                           }
                       });
    return b ? add_channel_bias(g, conv, b) : conv;
}

template <typename T>
Var<T> upsample_nearest2(Graph<T>& g, Var<T> x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor<T> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ch++)
        for (int y = 0; y < 2 * h; y++)
            for (int xx = 0; xx < 2 * w; xx++)
                out[(ch * 2 * h + y) * 2 * w + xx] = x->value[(ch * h + y / 2) * w + xx / 2];
    return g.make(std::move(out), {x}, [x, c, h, w](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int ch = 0; ch < c; ch++)
            for (int y = 0; y < 2 * h; y++)
                for (int xx = 0; xx < 2 * w; xx++)
                    gx[(ch * h + y / 2) * w + xx / 2] += nd.grad[(ch * 2 * h + y) * 2 * w + xx];
    });
}

// [C,H,W] -> [C*b*b, H/b, W/b]; pure permutation, exact inverse of
// depth_to_space.
template <typename T>
Var<T> space_to_depth(Graph<T>& g, Var<T> x, int block) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (h % block != 0 || w % block != 0)
        fail(ErrorCode::ShapeMismatch, "spatial dims not divisible by block");
    const int oh = h / block, ow = w / block;
    Tensor<T> out({c * block * block, oh, ow});
    for (int ch = 0; ch < c; ch++)
        for (int by = 0; by < block; by++)
            for (int bx = 0; bx < block; bx++) {
                const int oc = (ch * block + by) * block + bx;
                for (int y = 0; y < oh; y++)
                    for (int xx = 0; xx < ow; xx++)
                        out[(oc * oh + y) * ow + xx] =
                            x->value[(ch * h + y * block + by) * w + xx * block + bx];
            }
    return g.make(std::move(out), {x}, [x, c, h, w, block, oh, ow](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int ch = 0; ch < c; ch++)
            for (int by = 0; by < block; by++)
                for (int bx = 0; bx < block; bx++) {
                    const int oc = (ch * block + by) * block + bx;
                    for (int y = 0; y < oh; y++)
                        for (int xx = 0; xx < ow; xx++)
                            gx[(ch * h + y * block + by) * w + xx * block + bx] +=
                                nd.grad[(oc * oh + y) * ow + xx];
                }
    });
}

// [C*b*b, H, W] -> [C, H*b, W*b]
template <typename T>
Var<T> depth_to_space(Graph<T>& g, Var<T> x, int block) {
    const int ci = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (ci % (block * block) != 0)
        fail(ErrorCode::ShapeMismatch, "channels not divisible by block^2");
    const int c = ci / (block * block);
    const int oh = h * block, ow = w * block;
    Tensor<T> out({c, oh, ow});
    for (int ch = 0; ch < c; ch++)
        for (int by = 0; by < block; by++)
            for (int bx = 0; bx < block; bx++) {
                const int ic = (ch * block + by) * block + bx;
                for (int y = 0; y < h; y++)
                    for (int xx = 0; xx < w; xx++)
                        out[(ch * oh + y * block + by) * ow + xx * block + bx] =
                            x->value[(ic * h + y) * w + xx];
            }
    return g.make(std::move(out), {x}, [x, c, h, w, block, oh, ow](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int ch = 0; ch < c; ch++)
            for (int by = 0; by < block; by++)
                for (int bx = 0; bx < block; bx++) {
                    const int ic = (ch * block + by) * block + bx;
                    for (int y = 0; y < h; y++)
                        for (int xx = 0; xx < w; xx++)
                            gx[(ic * h + y) * w + xx] +=
                                nd.grad[(ch * oh + y * block + by) * ow + xx * block + bx];
                }
    });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

template <typename T>
Var<T> group_norm(Graph<T>& g, Var<T> x, Var<T> gamma, Var<T> beta, int groups,
                  T eps = T(1e-5)) {
    const int c = x->value.dim(0);
    if (c % groups != 0) fail(ErrorCode::ShapeMismatch, "channels not divisible by groups");
    const int64_t spatial = x->value.numel() / c;
    const int cg = c / groups;
    const int64_t group_elems = cg * spatial;

    Tensor<T> xhat(x->value.shape());
    Tensor<T> inv_std({groups});
    for (int gi = 0; gi < groups; gi++) {
        const int64_t base = static_cast<int64_t>(gi) * group_elems;
        T mean = T(0);
        for (int64_t i = 0; i < group_elems; i++) mean += x->value[base + i];
        mean /= static_cast<T>(group_elems);
        T var = T(0);
        for (int64_t i = 0; i < group_elems; i++) {
            const T d = x->value[base + i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(group_elems);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[gi] = is;
        for (int64_t i = 0; i < group_elems; i++) xhat[base + i] = (x->value[base + i] - mean) * is;
    }

    Tensor<T> out(x->value.shape());
    for (int ch = 0; ch < c; ch++)
        for (int64_t i = 0; i < spatial; i++)
            out[ch * spatial + i] = gamma->value[ch] * xhat[ch * spatial + i] + beta->value[ch];

    return g.make(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat, inv_std, c, groups, cg, spatial, group_elems](Node<T>& nd) {
                      if (gamma->requires_grad || beta->requires_grad) {
                          auto& ggam = gamma->grad_buf();
                          auto& gbet = beta->grad_buf();
                          for (int ch = 0; ch < c; ch++) {
                              T dg = T(0), db = T(0);
                              for (int64_t i = 0; i < spatial; i++) {
                                  dg += nd.grad[ch * spatial + i] * xhat[ch * spatial + i];
                                  db += nd.grad[ch * spatial + i];
                              }
                              ggam[ch] += dg;
                              gbet[ch] += db;
                          }
                      }
                      if (!x->requires_grad) return;
                      auto& gx = x->grad_buf();
                      for (int gi = 0; gi < groups; gi++) {
                          // dxhat = gout * gamma (per channel)
                          T sum_d = T(0), sum_dx = T(0);
                          for (int ci = 0; ci < cg; ci++) {
                              const int ch = gi * cg + ci;
                              for (int64_t i = 0; i < spatial; i++) {
                                  const T d = nd.grad[ch * spatial + i] * gamma->value[ch];
                                  sum_d += d;
                                  sum_dx += d * xhat[ch * spatial + i];
                              }
                          }
                          const T inv_n = T(1) / static_cast<T>(group_elems);
                          for (int ci = 0; ci < cg; ci++) {
                              const int ch = gi * cg + ci;
                              for (int64_t i = 0; i < spatial; i++) {
                                  const T d = nd.grad[ch * spatial + i] * gamma->value[ch];
                                  gx[ch * spatial + i] +=
                                      inv_std[gi] *
                                      (d - inv_n * sum_d - xhat[ch * spatial + i] * inv_n * sum_dx);
                              }
                          }
                      }
                  });
}

// ---------------------------------------------------------------------------
// Layout & concatenation
// ---------------------------------------------------------------------------

// [C,H,W] -> [H*W, C]
template <typename T>
Var<T> chw_to_tokens(Graph<T>& g, Var<T> x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int p = h * w;
    Tensor<T> out({p, c});
    for (int ch = 0; ch < c; ch++)
        for (int i = 0; i < p; i++) out[i * c + ch] = x->value[ch * p + i];
    return g.make(std::move(out), {x}, [x, c, p](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int ch = 0; ch < c; ch++)
            for (int i = 0; i < p; i++) gx[ch * p + i] += nd.grad[i * c + ch];
    });
}

// [H*W, C] -> [C,H,W]
template <typename T>
Var<T> tokens_to_chw(Graph<T>& g, Var<T> x, int h, int w) {
    const int p = x->value.dim(0), c = x->value.dim(1);
    if (p != h * w) fail(ErrorCode::ShapeMismatch, "token count != h*w");
    Tensor<T> out({c, h, w});
    for (int ch = 0; ch < c; ch++)
        for (int i = 0; i < p; i++) out[ch * p + i] = x->value[i * c + ch];
    return g.make(std::move(out), {x}, [x, c, p](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int ch = 0; ch < c; ch++)
            for (int i = 0; i < p; i++) gx[i * c + ch] += nd.grad[ch * p + i];
    });
}

// Channels [c0, c1) of a [C,H,W] input.
template <typename T>
Var<T> slice_channels(Graph<T>& g, Var<T> x, int c0, int c1) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (c0 < 0 || c1 > c || c0 >= c1) fail(ErrorCode::ShapeMismatch, "bad channel slice");
    const int64_t spatial = static_cast<int64_t>(h) * w;
    Tensor<T> out({c1 - c0, h, w});
    for (int64_t i = 0; i < out.numel(); i++) out[i] = x->value[c0 * spatial + i];
    return g.make(std::move(out), {x}, [x, c0, spatial](Node<T>& nd) {
        auto& gx = x->grad_buf();
        for (int64_t i = 0; i < nd.value.numel(); i++) gx[c0 * spatial + i] += nd.grad[i];
    });
}

template <typename T>
Var<T> concat_channels(Graph<T>& g, Var<T> a, Var<T> b) {
    const int ca = a->value.dim(0), cb = b->value.dim(0);
    const int h = a->value.dim(1), w = a->value.dim(2);
    if (b->value.dim(1) != h || b->value.dim(2) != w)
        fail(ErrorCode::ShapeMismatch, "concat_channels spatial dims differ");
    Tensor<T> out({ca + cb, h, w});
    const int64_t na = a->value.numel(), nb = b->value.numel();
    for (int64_t i = 0; i < na; i++) out[i] = a->value[i];
    for (int64_t i = 0; i < nb; i++) out[na + i] = b->value[i];
    return g.make(std::move(out), {a, b}, [a, b, na, nb](Node<T>& nd) {
        if (a->requires_grad) {
            auto& ga = a->grad_buf();
            for (int64_t i = 0; i < na; i++) ga[i] += nd.grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->grad_buf();
            for (int64_t i = 0; i < nb; i++) gb[i] += nd.grad[na + i];
        }
    });
}

template <typename T>
Var<T> concat_rows(Graph<T>& g, Var<T> a, Var<T> b) {
    const int da = a->value.dim(1), db = b->value.dim(1);
    if (da != db) fail(ErrorCode::ShapeMismatch, "concat_rows widths differ");
    Tensor<T> out({a->value.dim(0) + b->value.dim(0), da});
    const int64_t na = a->value.numel(), nb = b->value.numel();
    for (int64_t i = 0; i < na; i++) out[i] = a->value[i];
    for (int64_t i = 0; i < nb; i++) out[na + i] = b->value[i];
    return g.make(std::move(out), {a, b}, [a, b, na, nb](Node<T>& nd) {
        if (a->requires_grad) {
            auto& ga = a->grad_buf();
            for (int64_t i = 0; i < na; i++) ga[i] += nd.grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->grad_buf();
            for (int64_t i = 0; i < nb; i++) gb[i] += nd.grad[na + i];
        }
    });
}

// ---------------------------------------------------------------------------
// Losses (mean-reduced scalars)
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mse_loss(Graph<T>& g, Var<T> pred, Tensor<T> target) {
    if (pred->value.shape() != target.shape()) fail(ErrorCode::ShapeMismatch, "mse shapes differ");
    const int64_t n = pred->value.numel();
    T acc = T(0);
    for (int64_t i = 0; i < n; i++) {
        const T d = pred->value[i] - target[i];
        acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
    return g.make(std::move(out), {pred}, [pred, target, n](Node<T>& nd) {
        auto& gp = pred->grad_buf();
        const T go = nd.grad[0];
        for (int64_t i = 0; i < n; i++)
            gp[i] += go * T(2) * (pred->value[i] - target[i]) / static_cast<T>(n);
    });
}

template <typename T>
Var<T> l1_loss(Graph<T>& g, Var<T> pred, Tensor<T> target) {
    if (pred->value.shape() != target.shape()) fail(ErrorCode::ShapeMismatch, "l1 shapes differ");
    const int64_t n = pred->value.numel();
    T acc = T(0);
    for (int64_t i = 0; i < n; i++) acc += std::fabs(pred->value[i] - target[i]);
    Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
    return g.make(std::move(out), {pred}, [pred, target, n](Node<T>& nd) {
        auto& gp = pred->grad_buf();
        const T go = nd.grad[0];
        for (int64_t i = 0; i < n; i++) {
            const T d = pred->value[i] - target[i];
            gp[i] += go * (d > T(0) ? T(1) : d < T(0) ? T(-1) : T(0)) / static_cast<T>(n);
        }
    });
}

// KL(N(mean, exp(logvar)) || N(0,1)), mean-reduced over elements.
template <typename T>
Var<T> kl_normal(Graph<T>& g, Var<T> mean, Var<T> logvar) {
    if (mean->value.shape() != logvar->value.shape())
        fail(ErrorCode::ShapeMismatch, "kl shapes differ");
    const int64_t n = mean->value.numel();
    T acc = T(0);
    for (int64_t i = 0; i < n; i++) {
        const T m = mean->value[i], lv = logvar->value[i];
        acc += T(-0.5) * (T(1) + lv - m * m - std::exp(lv));
    }
    Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
    return g.make(std::move(out), {mean, logvar}, [mean, logvar, n](Node<T>& nd) {
        const T go = nd.grad[0];
        if (mean->requires_grad) {
            auto& gm = mean->grad_buf();
            for (int64_t i = 0; i < n; i++) gm[i] += go * mean->value[i] / static_cast<T>(n);
        }
        if (logvar->requires_grad) {
            auto& gl = logvar->grad_buf();
            for (int64_t i = 0; i < n; i++)
                gl[i] += go * T(-0.5) * (T(1) - std::exp(logvar->value[i])) / static_cast<T>(n);
        }
    });
}

}  // namespace posediff::nn
