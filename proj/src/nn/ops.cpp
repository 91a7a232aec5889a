#include "dvsnet/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dvsnet/error.hpp"

namespace dvsnet::nn {
namespace {

template <typename S>
using NodeP = std::shared_ptr<detail::Node<S>>;

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

template <typename S>
void require_rank(const Tensor<S>& x, int rank, const char* op) {
    if (x.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
}

int normalize_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError(std::string(op) + ": axis out of range");
    return axis;
}

// Splits a shape into (outer, extent, inner) around `axis`.
struct AxisSplit {
    Eigen::Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    s.extent = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// Unfolds one C x H x W image into (C*k*k) x (Ho*Wo).
template <typename S>
void im2col(const S* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, MatR<S>& col) {
    col.resize(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(Ho) * Wo);
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                S* row = col.row((c * k + ki) * k + kj).data();
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) {
                        std::fill(row + oy * Wo, row + (oy + 1) * Wo, S(0));
                        continue;
                    }
                    const S* src = img + (static_cast<std::ptrdiff_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
                    }
                }
            }
}

template <typename S>
void col2im_add(const MatR<S>& col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, S* img) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const S* row = col.row((c * k + ki) * k + kj).data();
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    S* dst = img + (static_cast<std::ptrdiff_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
                    }
                }
            }
}

template <typename S>
std::vector<NodeP<S>> nodes(std::initializer_list<const Tensor<S>*> ts) {
    std::vector<NodeP<S>> out;
    for (const auto* t : ts)
        if (t->defined()) out.push_back(t->node());
    return out;
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "add");
    return make_result<S>(a.shape(), a.value() + b.value(), nodes<S>({&a, &b}), [](detail::Node<S>& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "sub");
    return make_result<S>(a.shape(), a.value() - b.value(), nodes<S>({&a, &b}), [](detail::Node<S>& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(-n.grad);
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "mul");
    return make_result<S>(a.shape(), a.value().cwiseProduct(b.value()), nodes<S>({&a, &b}),
                          [](detail::Node<S>& n) {
                              auto& pa = *n.parents[0];
                              auto& pb = *n.parents[1];
                              if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
                              if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
                          });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S s) {
    return make_result<S>(a.shape(), (a.value().array() + s).matrix(), nodes<S>({&a}),
                          [](detail::Node<S>& n) { n.parents[0]->accumulate(n.grad); });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
    return make_result<S>(a.shape(), a.value() * s, nodes<S>({&a}),
                          [s](detail::Node<S>& n) { n.parents[0]->accumulate(n.grad * s); });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    return make_result<S>(x.shape(), x.value().cwiseMax(S(0)), nodes<S>({&x}), [](detail::Node<S>& n) {
        auto& p = *n.parents[0];
        p.accumulate((p.value.array() > S(0)).select(n.grad.array(), S(0)).matrix());
    });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Vec<S> y = x.value().unaryExpr([](S v) {
        return v >= 0 ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
    });
    return make_result<S>(x.shape(), std::move(y), nodes<S>({&x}), [](detail::Node<S>& n) {
        n.parents[0]->accumulate((n.grad.array() * n.value.array() * (S(1) - n.value.array())).matrix());
    });
}

template <typename S>
Tensor<S> log_clamped(const Tensor<S>& x, S floor) {
    Vec<S> y = x.value().unaryExpr([floor](S v) { return std::log(std::max(v, floor)); });
    return make_result<S>(x.shape(), std::move(y), nodes<S>({&x}), [floor](detail::Node<S>& n) {
        auto& p = *n.parents[0];
        p.accumulate((p.value.array() > floor).select(n.grad.array() / p.value.array(), S(0)).matrix());
    });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    const double total = x.value().template cast<double>().sum();
    Vec<S> y(1);
    y[0] = static_cast<S>(total);
    return make_result<S>({1}, std::move(y), nodes<S>({&x}), [](detail::Node<S>& n) {
        auto& p = *n.parents[0];
        p.accumulate(Vec<S>::Constant(p.value.size(), n.grad[0]));
    });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
    const auto count = x.size();
    return scale(sum(x), S(1) / static_cast<S>(count));
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    return make_result<S>(shape, x.value(), nodes<S>({&x}),
                          [](detail::Node<S>& n) { n.parents[0]->accumulate(n.grad); });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
    const int r = x.rank();
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
    std::vector<bool> used(static_cast<std::size_t>(r), false);
    for (int p : perm) {
        if (p < 0 || p >= r || used[static_cast<std::size_t>(p)]) throw ShapeError("permute: invalid permutation");
        used[static_cast<std::size_t>(p)] = true;
    }
    const Shape& in = x.shape();
    Shape out(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out[static_cast<std::size_t>(i)] = in[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    std::vector<Eigen::Index> in_stride(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        in_stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(i) + 1] * in[static_cast<std::size_t>(i) + 1];
    // src[j] = input offset of output element j.
    auto src = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(x.size()));
    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Eigen::Index off = 0;
        for (int i = 0; i < r; ++i)
            off += idx[static_cast<std::size_t>(i)] * in_stride[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        (*src)[static_cast<std::size_t>(j)] = off;
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<std::size_t>(i)] < out[static_cast<std::size_t>(i)]) break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
    }
    Vec<S> y(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) y[j] = x.value()[(*src)[static_cast<std::size_t>(j)]];
    return make_result<S>(out, std::move(y), nodes<S>({&x}), [src](detail::Node<S>& n) {
        auto& p = *n.parents[0];
        Vec<S> g = Vec<S>::Zero(p.value.size());
        for (Eigen::Index j = 0; j < n.grad.size(); ++j) g[(*src)[static_cast<std::size_t>(j)]] = n.grad[j];
        p.accumulate(g);
    });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int r = parts.front().rank();
    axis = normalize_axis(axis, r, "concat");
    Shape out = parts.front().shape();
    out[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (static_cast<int>(s.size()) != r) throw ShapeError("concat: rank mismatch");
        const int e = s[static_cast<std::size_t>(axis)];
        s[static_cast<std::size_t>(axis)] = 0;
        Shape ref = out;
        ref[static_cast<std::size_t>(axis)] = 0;
        if (s != ref) throw ShapeError("concat: incompatible shape " + shape_str(p.shape()));
        out[static_cast<std::size_t>(axis)] += e;
    }
    const AxisSplit total = split_axis(out, axis);
    std::vector<Eigen::Index> blocks;  // per-part contiguous block length
    Vec<S> y(numel(out));
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
        const Eigen::Index blk = p.dim(axis) * total.inner;
        for (Eigen::Index o = 0; o < total.outer; ++o)
            y.segment(o * total.extent * total.inner + offset, blk) = p.value().segment(o * blk, blk);
        blocks.push_back(blk);
        offset += blk;
    }
    std::vector<NodeP<S>> ps;
    for (const auto& p : parts) ps.push_back(p.node());
    return make_result<S>(out, std::move(y), std::move(ps), [blocks, total](detail::Node<S>& n) {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            const Eigen::Index blk = blocks[i];
            if (p.requires_grad) {
                Vec<S> g(total.outer * blk);
                for (Eigen::Index o = 0; o < total.outer; ++o)
                    g.segment(o * blk, blk) = n.grad.segment(o * total.extent * total.inner + off, blk);
                p.accumulate(g);
            }
            off += blk;
        }
    });
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias, int stride, int padding) {
    require_rank(x, 4, "conv2d input");
    require_rank(weight, 4, "conv2d weight");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int K = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != C)
        throw ShapeError("conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                         std::to_string(weight.dim(1)) + " (input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ")");
    if (weight.dim(3) != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be square and odd, got " + shape_str(weight.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != K))
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(K) + " filters");
    if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
    const int Ho = (H + 2 * padding - k) / stride + 1;
    const int Wo = (W + 2 * padding - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
    const Eigen::Index ckk = static_cast<Eigen::Index>(C) * k * k, hw = static_cast<Eigen::Index>(Ho) * Wo;
    const Eigen::Index in_sz = static_cast<Eigen::Index>(C) * H * W, out_sz = K * hw;

    Eigen::Map<const MatR<S>> wmat(weight.value().data(), K, ckk);
    Vec<S> y(N * out_sz);
    MatR<S> col;
    for (int n = 0; n < N; ++n) {
        im2col(x.value().data() + n * in_sz, C, H, W, k, stride, padding, Ho, Wo, col);
        Eigen::Map<MatR<S>> out(y.data() + n * out_sz, K, hw);
        out.noalias() = wmat * col;
        if (bias.defined()) out.colwise() += bias.value();
    }
    return make_result<S>({N, K, Ho, Wo}, std::move(y), nodes<S>({&x, &weight, &bias}),
                          [=](detail::Node<S>& node) {
                              auto& px = *node.parents[0];
                              auto& pw = *node.parents[1];
                              detail::Node<S>* pb = node.parents.size() > 2 ? node.parents[2].get() : nullptr;
                              Eigen::Map<const MatR<S>> wm(pw.value.data(), K, ckk);
                              MatR<S> dw = MatR<S>::Zero(K, ckk);
                              Vec<S> db = Vec<S>::Zero(K);
                              Vec<S> dx;
                              if (px.requires_grad) dx = Vec<S>::Zero(px.value.size());
                              MatR<S> colb, dcol;
                              for (int n = 0; n < N; ++n) {
                                  Eigen::Map<const MatR<S>> dout(node.grad.data() + n * out_sz, K, hw);
                                  if (pw.requires_grad) {
                                      im2col(px.value.data() + n * in_sz, C, H, W, k, stride, padding, Ho, Wo, colb);
                                      dw.noalias() += dout * colb.transpose();
                                  }
                                  if (pb && pb->requires_grad) db += dout.rowwise().sum();
                                  if (px.requires_grad) {
                                      dcol.noalias() = wm.transpose() * dout;
                                      col2im_add(dcol, C, H, W, k, stride, padding, Ho, Wo, dx.data() + n * in_sz);
                                  }
                              }
                              if (px.requires_grad) px.accumulate(dx);
                              if (pw.requires_grad) pw.accumulate(Eigen::Map<const Vec<S>>(dw.data(), dw.size()));
                              if (pb) pb->accumulate(db);
                          });
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
    require_rank(x, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    const int M = x.dim(0), F = x.dim(1), O = weight.dim(0);
    if (weight.dim(1) != F)
        throw ShapeError("linear: input features " + std::to_string(F) + " vs weight " + shape_str(weight.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O)) throw ShapeError("linear: bias shape mismatch");
    Eigen::Map<const MatR<S>> xm(x.value().data(), M, F);
    Eigen::Map<const MatR<S>> wm(weight.value().data(), O, F);
    Vec<S> y(static_cast<Eigen::Index>(M) * O);
    Eigen::Map<MatR<S>> ym(y.data(), M, O);
    ym.noalias() = xm * wm.transpose();
    if (bias.defined()) ym.rowwise() += bias.value().transpose();
    return make_result<S>({M, O}, std::move(y), nodes<S>({&x, &weight, &bias}), [=](detail::Node<S>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        Eigen::Map<const MatR<S>> g(n.grad.data(), M, O);
        if (px.requires_grad) {
            MatR<S> dx = g * Eigen::Map<const MatR<S>>(pw.value.data(), O, F);
            px.accumulate(Eigen::Map<const Vec<S>>(dx.data(), dx.size()));
        }
        if (pw.requires_grad) {
            MatR<S> dw = g.transpose() * Eigen::Map<const MatR<S>>(px.value.data(), M, F);
            pw.accumulate(Eigen::Map<const Vec<S>>(dw.data(), dw.size()));
        }
        if (n.parents.size() > 2) n.parents[2]->accumulate(g.colwise().sum().transpose());
    });
}

template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b) {
    require_rank(a, 3, "bmm lhs");
    require_rank(b, 3, "bmm rhs");
    const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    if (b.dim(0) != B || b.dim(1) != K)
        throw ShapeError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const Eigen::Index as = static_cast<Eigen::Index>(M) * K, bs = static_cast<Eigen::Index>(K) * N,
                       cs = static_cast<Eigen::Index>(M) * N;
    Vec<S> y(B * cs);
    for (int i = 0; i < B; ++i)
        Eigen::Map<MatR<S>>(y.data() + i * cs, M, N).noalias() =
            Eigen::Map<const MatR<S>>(a.value().data() + i * as, M, K) *
            Eigen::Map<const MatR<S>>(b.value().data() + i * bs, K, N);
    return make_result<S>({B, M, N}, std::move(y), nodes<S>({&a, &b}), [=](detail::Node<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        Vec<S> da, db;
        if (pa.requires_grad) da.resize(B * as);
        if (pb.requires_grad) db.resize(B * bs);
        for (int i = 0; i < B; ++i) {
            Eigen::Map<const MatR<S>> g(n.grad.data() + i * cs, M, N);
            if (pa.requires_grad)
                Eigen::Map<MatR<S>>(da.data() + i * as, M, K).noalias() =
                    g * Eigen::Map<const MatR<S>>(pb.value.data() + i * bs, K, N).transpose();
            if (pb.requires_grad)
                Eigen::Map<MatR<S>>(db.data() + i * bs, K, N).noalias() =
                    Eigen::Map<const MatR<S>>(pa.value.data() + i * as, M, K).transpose() * g;
        }
        if (pa.requires_grad) pa.accumulate(da);
        if (pb.requires_grad) pb.accumulate(db);
    });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
    axis = normalize_axis(axis, x.rank(), "softmax");
    const AxisSplit s = split_axis(x.shape(), axis);
    Vec<S> y(x.size());
    const auto& v = x.value();
    for (Eigen::Index o = 0; o < s.outer; ++o)
        for (Eigen::Index i = 0; i < s.inner; ++i) {
            const Eigen::Index base = o * s.extent * s.inner + i;
            S mx = v[base];
            for (Eigen::Index e = 1; e < s.extent; ++e) mx = std::max(mx, v[base + e * s.inner]);
            double z = 0;
            for (Eigen::Index e = 0; e < s.extent; ++e) z += std::exp(static_cast<double>(v[base + e * s.inner] - mx));
            for (Eigen::Index e = 0; e < s.extent; ++e)
                y[base + e * s.inner] = static_cast<S>(std::exp(static_cast<double>(v[base + e * s.inner] - mx)) / z);
        }
    return make_result<S>(x.shape(), std::move(y), nodes<S>({&x}), [s](detail::Node<S>& n) {
        Vec<S> g(n.value.size());
        for (Eigen::Index o = 0; o < s.outer; ++o)
            for (Eigen::Index i = 0; i < s.inner; ++i) {
                const Eigen::Index base = o * s.extent * s.inner + i;
                double dot = 0;
                for (Eigen::Index e = 0; e < s.extent; ++e)
                    dot += static_cast<double>(n.grad[base + e * s.inner]) * n.value[base + e * s.inner];
                for (Eigen::Index e = 0; e < s.extent; ++e) {
                    const Eigen::Index j = base + e * s.inner;
                    g[j] = static_cast<S>(n.value[j] * (n.grad[j] - dot));
                }
            }
        n.parents[0]->accumulate(g);
    });
}

template <typename S>
Tensor<S> adaptive_avg_pool2d(const Tensor<S>& x, int out_h, int out_w) {
    require_rank(x, 4, "adaptive_avg_pool2d");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (out_h < 1 || out_w < 1 || out_h > H || out_w > W)
        throw ShapeError("adaptive_avg_pool2d: cannot pool " + shape_str(x.shape()) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
    // Bin edges: [floor(i*H/oh), ceil((i+1)*H/oh)).
    auto edges = [](int in, int out) {
        std::vector<std::pair<int, int>> e(static_cast<std::size_t>(out));
        for (int i = 0; i < out; ++i) e[static_cast<std::size_t>(i)] = {i * in / out, ((i + 1) * in + out - 1) / out};
        return e;
    };
    const auto ey = edges(H, out_h), ex = edges(W, out_w);
    Vec<S> y(static_cast<Eigen::Index>(N) * C * out_h * out_w);
    const auto& v = x.value();
    for (int nc = 0; nc < N * C; ++nc)
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const auto [y0, y1] = ey[static_cast<std::size_t>(oy)];
                const auto [x0, x1] = ex[static_cast<std::size_t>(ox)];
                double acc = 0;
                for (int iy = y0; iy < y1; ++iy)
                    for (int ix = x0; ix < x1; ++ix) acc += v[(static_cast<Eigen::Index>(nc) * H + iy) * W + ix];
                y[(static_cast<Eigen::Index>(nc) * out_h + oy) * out_w + ox] = static_cast<S>(acc / ((y1 - y0) * (x1 - x0)));
            }
    return make_result<S>({N, C, out_h, out_w}, std::move(y), nodes<S>({&x}), [=](detail::Node<S>& n) {
        Vec<S> g = Vec<S>::Zero(static_cast<Eigen::Index>(N) * C * H * W);
        for (int nc = 0; nc < N * C; ++nc)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    const auto [y0, y1] = ey[static_cast<std::size_t>(oy)];
                    const auto [x0, x1] = ex[static_cast<std::size_t>(ox)];
                    const S share = n.grad[(static_cast<Eigen::Index>(nc) * out_h + oy) * out_w + ox] /
                                    static_cast<S>((y1 - y0) * (x1 - x0));
                    for (int iy = y0; iy < y1; ++iy)
                        for (int ix = x0; ix < x1; ++ix) g[(static_cast<Eigen::Index>(nc) * H + iy) * W + ix] += share;
                }
        n.parents[0]->accumulate(g);
    });
}

template <typename S>
Tensor<S> channel_scale(const Tensor<S>& x, const Tensor<S>& gate) {
    require_rank(x, 4, "channel_scale input");
    const int N = x.dim(0), C = x.dim(1);
    const Eigen::Index hw = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
    if (gate.shape() != Shape{N, C, 1, 1})
        throw ShapeError("channel_scale: gate " + shape_str(gate.shape()) + " vs input " + shape_str(x.shape()));
    Vec<S> y(x.size());
    for (Eigen::Index nc = 0; nc < N * C; ++nc) y.segment(nc * hw, hw) = x.value().segment(nc * hw, hw) * gate.value()[nc];
    return make_result<S>(x.shape(), std::move(y), nodes<S>({&x, &gate}), [=](detail::Node<S>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        if (px.requires_grad) {
            Vec<S> g(n.grad.size());
            for (Eigen::Index nc = 0; nc < N * C; ++nc) g.segment(nc * hw, hw) = n.grad.segment(nc * hw, hw) * pg.value[nc];
            px.accumulate(g);
        }
        if (pg.requires_grad) {
            Vec<S> g(static_cast<Eigen::Index>(N) * C);
            for (Eigen::Index nc = 0; nc < N * C; ++nc) g[nc] = n.grad.segment(nc * hw, hw).dot(px.value.segment(nc * hw, hw));
            pg.accumulate(g);
        }
    });
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, Vec<S>& running_mean,
                     Vec<S>& running_var, bool training, S momentum, S eps) {
    if (x.rank() < 2) throw ShapeError("batch_norm: input rank must be >= 2");
    const int N = x.dim(0), C = x.dim(1);
    const Eigen::Index inner = x.size() / (static_cast<Eigen::Index>(N) * C);
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} || running_mean.size() != C || running_var.size() != C)
        throw ShapeError("batch_norm: parameters do not match " + std::to_string(C) + " channels");
    const Eigen::Index M = static_cast<Eigen::Index>(N) * inner;
    const auto& v = x.value();
    auto at = [C, inner](int n, int c, Eigen::Index i) { return (static_cast<Eigen::Index>(n) * C + c) * inner + i; };

    Vec<S> mu(C), invstd(C);
    for (int c = 0; c < C; ++c) {
        if (training) {
            double s = 0, s2 = 0;
            for (int n = 0; n < N; ++n)
                for (Eigen::Index i = 0; i < inner; ++i) s += v[at(n, c, i)];
            const double m = s / static_cast<double>(M);
            for (int n = 0; n < N; ++n)
                for (Eigen::Index i = 0; i < inner; ++i) {
                    const double d = v[at(n, c, i)] - m;
                    s2 += d * d;
                }
            const double var = s2 / static_cast<double>(M);
            mu[c] = static_cast<S>(m);
            invstd[c] = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            const double unbiased = M > 1 ? s2 / static_cast<double>(M - 1) : var;
            running_mean[c] = static_cast<S>((1 - momentum) * running_mean[c] + momentum * m);
            running_var[c] = static_cast<S>((1 - momentum) * running_var[c] + momentum * unbiased);
        } else {
            mu[c] = running_mean[c];
            invstd[c] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + static_cast<double>(eps)));
        }
    }
    auto xhat = std::make_shared<Vec<S>>(x.size());
    Vec<S> y(x.size());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (Eigen::Index i = 0; i < inner; ++i) {
                const Eigen::Index j = at(n, c, i);
                (*xhat)[j] = (v[j] - mu[c]) * invstd[c];
                y[j] = gamma.value()[c] * (*xhat)[j] + beta.value()[c];
            }
    return make_result<S>(x.shape(), std::move(y), nodes<S>({&x, &gamma, &beta}),
                          [=](detail::Node<S>& node) {
                              auto& px = *node.parents[0];
                              auto& pg = *node.parents[1];
                              auto& pb = *node.parents[2];
                              const auto& g = node.grad;
                              Vec<S> dgamma(C), dbeta(C);
                              Vec<S> dx;
                              if (px.requires_grad) dx.resize(g.size());
                              for (int c = 0; c < C; ++c) {
                                  double sg = 0, sgx = 0;
                                  for (int n = 0; n < N; ++n)
                                      for (Eigen::Index i = 0; i < inner; ++i) {
                                          const Eigen::Index j = at(n, c, i);
                                          sg += g[j];
                                          sgx += static_cast<double>(g[j]) * (*xhat)[j];
                                      }
                                  dgamma[c] = static_cast<S>(sgx);
                                  dbeta[c] = static_cast<S>(sg);
                                  if (!px.requires_grad) continue;
                                  const double gm = pg.value[c];
                                  for (int n = 0; n < N; ++n)
                                      for (Eigen::Index i = 0; i < inner; ++i) {
                                          const Eigen::Index j = at(n, c, i);
                                          if (training)
                                              dx[j] = static_cast<S>(gm * invstd[c] / static_cast<double>(M) *
                                                                     (static_cast<double>(M) * g[j] - sg - (*xhat)[j] * sgx));
                                          else
                                              dx[j] = static_cast<S>(gm * invstd[c] * g[j]);
                                      }
                              }
                              if (px.requires_grad) px.accumulate(dx);
                              pg.accumulate(dgamma);
                              pb.accumulate(dbeta);
                          });
}

template <typename S>
S surrogate_grad(S v_minus_theta, S width) {
    return std::abs(v_minus_theta) < width / S(2) ? S(1) / width : S(0);
}

template <typename S>
Tensor<S> spike(const Tensor<S>& v, S theta, S width) {
    if (!(width > 0)) throw DomainError("spike: surrogate width must be positive");
    Vec<S> y = v.value().unaryExpr([theta](S u) { return u - theta >= S(0) ? S(1) : S(0); });
    return make_result<S>(v.shape(), std::move(y), nodes<S>({&v}), [theta, width](detail::Node<S>& n) {
        auto& p = *n.parents[0];
        Vec<S> g(n.grad.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = n.grad[i] * surrogate_grad<S>(p.value[i] - theta, width);
        p.accumulate(g);
    });
}

template <typename S>
Tensor<S> pick(const Tensor<S>& x, std::span<const int> labels) {
    require_rank(x, 2, "pick");
    const int N = x.dim(0), K = x.dim(1);
    if (static_cast<int>(labels.size()) != N) throw ShapeError("pick: label count does not match batch");
    std::vector<int> idx(labels.begin(), labels.end());
    Vec<S> y(N);
    for (int n = 0; n < N; ++n) {
        if (idx[static_cast<std::size_t>(n)] < 0 || idx[static_cast<std::size_t>(n)] >= K)
            throw DomainError("pick: label " + std::to_string(idx[static_cast<std::size_t>(n)]) + " out of range");
        y[n] = x.value()[static_cast<Eigen::Index>(n) * K + idx[static_cast<std::size_t>(n)]];
    }
    return make_result<S>({N}, std::move(y), nodes<S>({&x}), [idx, K](detail::Node<S>& n) {
        auto& p = *n.parents[0];
        Vec<S> g = Vec<S>::Zero(p.value.size());
        for (std::size_t i = 0; i < idx.size(); ++i) g[static_cast<Eigen::Index>(i) * K + idx[i]] = n.grad[static_cast<Eigen::Index>(i)];
        p.accumulate(g);
    });
}

#define DVSNET_INSTANTIATE_OPS(S)                                                                          \
    template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                            \
    template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                            \
    template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                            \
    template Tensor<S> add_scalar(const Tensor<S>&, S);                                                    \
    template Tensor<S> scale(const Tensor<S>&, S);                                                         \
    template Tensor<S> relu(const Tensor<S>&);                                                             \
    template Tensor<S> sigmoid(const Tensor<S>&);                                                          \
    template Tensor<S> log_clamped(const Tensor<S>&, S);                                                   \
    template Tensor<S> sum(const Tensor<S>&);                                                              \
    template Tensor<S> mean(const Tensor<S>&);                                                             \
    template Tensor<S> reshape(const Tensor<S>&, const Shape&);                                            \
    template Tensor<S> permute(const Tensor<S>&, const std::vector<int>&);                                 \
    template Tensor<S> concat(const std::vector<Tensor<S>>&, int);                                         \
    template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int);             \
    template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                       \
    template Tensor<S> bmm(const Tensor<S>&, const Tensor<S>&);                                            \
    template Tensor<S> softmax(const Tensor<S>&, int);                                                     \
    template Tensor<S> adaptive_avg_pool2d(const Tensor<S>&, int, int);                                    \
    template Tensor<S> channel_scale(const Tensor<S>&, const Tensor<S>&);                                  \
    template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Vec<S>&, Vec<S>&, \
                                  bool, S, S);                                                             \
    template Tensor<S> spike(const Tensor<S>&, S, S);                                                      \
    template S surrogate_grad(S, S);                                                                       \
    template Tensor<S> pick(const Tensor<S>&, std::span<const int>);

DVSNET_INSTANTIATE_OPS(float)
DVSNET_INSTANTIATE_OPS(double)

}  // namespace dvsnet::nn
