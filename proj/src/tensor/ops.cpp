// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/tensor/ops.hpp"

#include <cmath>

#include "pathmoe/kernels/parallel.hpp"

namespace pathmoe::ops {

namespace kp = pathmoe::kernels::par;

namespace {

template <typename T>
void require_finite(const char* op, Var<T> v) {
    if (!all_finite(v.data())) throw NumericError(std::string(op) + ": non-finite input");
}

template <typename T>
void require_rank(const char* op, Var<T> v, std::size_t rank) {
    if (v.shape().size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " operand, got " + shape_str(v.shape()));
    }
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

template <typename T>
void require_same_tape(const char* op, Var<T> a, Var<T> b) {
    if (&a.tape() != &b.tape()) throw UsageError(std::string(op) + ": operands on different tapes");
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape("matmul", a, b);
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    require_finite("matmul", a);
    require_finite("matmul", b);
    std::vector<T> out(m * n);
    kp::matmul_nn<T>(a.data(), b.data(), out, m, k, n, false);
    const auto ia = a.id(), ib = b.id();
    return a.tape().record({m, n}, std::move(out), {a, b}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        if (t.requires_grad(ia)) kp::matmul_nt<T>(dy, t.value(ib), t.grad_acc(ia), m, n, k, true);
        if (t.requires_grad(ib)) kp::matmul_tn<T>(t.value(ia), dy, t.grad_acc(ib), k, m, n, true);
    });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
    require_same_tape("linear", x, w);
    require_rank("linear", x, 2);
    require_rank("linear", w, 2);
    const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(0);
    if (w.dim(1) != k) {
        throw ShapeError("linear: input width " + std::to_string(k) + " vs weight " +
                         shape_str(w.shape()));
    }
    require_finite("linear", x);
    require_finite("linear", w);
    std::vector<T> out(m * n);
    kp::matmul_nt<T>(x.data(), w.data(), out, m, k, n, false);
    const auto ix = x.id(), iw = w.id();
    return x.tape().record({m, n}, std::move(out), {x, w}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        if (t.requires_grad(ix)) kp::matmul_nn<T>(dy, t.value(iw), t.grad_acc(ix), m, n, k, true);
        if (t.requires_grad(iw)) kp::matmul_tn<T>(dy, t.value(ix), t.grad_acc(iw), n, m, k, true);
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape("add", a, b);
    require_same_shape("add", a, b);
    require_finite("add", a);
    require_finite("add", b);
    const auto av = a.data(), bv = b.data();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(a.shape(), std::move(out), {a, b}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        for (auto id : {ia, ib}) {
            if (!t.requires_grad(id)) continue;
            auto g = t.grad_acc(id);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape("mul", a, b);
    require_same_shape("mul", a, b);
    require_finite("mul", a);
    require_finite("mul", b);
    const auto av = a.data(), bv = b.data();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(a.shape(), std::move(out), {a, b}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        const auto av = t.value(ia), bv = t.value(ib);
        if (t.requires_grad(ia)) {
            auto g = t.grad_acc(ia);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            auto g = t.grad_acc(ib);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * av[i];
        }
    });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
    require_finite("scale", x);
    const auto xv = x.data();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        auto g = t.grad_acc(ix);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * factor;
    });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: " + shape_str(x.shape()) + " into " + shape_str(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    const auto ix = x.id();
    return x.tape().record(std::move(shape), std::move(out), {x}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        auto g = t.grad_acc(ix);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    });
}

template <typename T>
Var<T> sum(Var<T> x) {
    require_finite("sum", x);
    T s = 0;
    for (T v : x.data()) s += v;
    const auto ix = x.id();
    return x.tape().record({1}, {s}, {x}, [=](Tape<T>& t, std::uint32_t o) {
        const T dy = t.grad(o)[0];
        auto g = t.grad_acc(ix);
        for (auto& v : g) v += dy;
    });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
    require_rank("softmax_rows", x, 2);
    require_finite("softmax_rows", x);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<T> out(rows * cols);
    kp::softmax_rows<T>(x.data(), out, rows, cols);
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape<T>& t, std::uint32_t o) {
        kp::softmax_rows_backward<T>(t.value(o), t.grad(o), t.grad_acc(ix), rows, cols);
    });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    require_rank("layer_norm", x, 2);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols}) {
        throw ShapeError("layer_norm: affine params " + shape_str(gamma.shape()) + ", " +
                         shape_str(beta.shape()) + " for input " + shape_str(x.shape()));
    }
    require_finite("layer_norm", x);
    require_finite("layer_norm", gamma);
    require_finite("layer_norm", beta);
    std::vector<T> out(rows * cols), mean(rows), rstd(rows);
    kp::layer_norm<T>(x.data(), gamma.data(), beta.data(), out, mean, rstd, rows, cols, eps);
    const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
    return x.tape().record(
        x.shape(), std::move(out), {x, gamma, beta},
        [=, mean = std::move(mean), rstd = std::move(rstd)](Tape<T>& t, std::uint32_t o) {
            std::vector<T> dx_scratch, dg_scratch, db_scratch;
            auto pick = [&](std::uint32_t id, std::vector<T>& scratch, std::size_t n) {
                if (t.requires_grad(id)) return t.grad_acc(id);
                scratch.assign(n, T(0));
                return std::span<T>(scratch);
            };
            auto dx = pick(ix, dx_scratch, rows * cols);
            auto dg = pick(ig, dg_scratch, cols);
            auto db = pick(ib, db_scratch, cols);
            kp::layer_norm_backward<T>(t.value(ix), t.value(ig), mean, rstd, t.grad(o), dx, dg, db,
                                       rows, cols);
        });
}

template <typename T>
Var<T> gelu(Var<T> x) {
    require_finite("gelu", x);
    std::vector<T> out(x.numel());
    kp::gelu<T>(x.data(), out);
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape<T>& t, std::uint32_t o) {
        kp::gelu_backward<T>(t.value(ix), t.grad(o), t.grad_acc(ix));
    });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids) {
    require_rank("embedding", table, 2);
    require_finite("embedding", table);
    const std::size_t vocab = table.dim(0), width = table.dim(1);
    std::vector<std::int32_t> idx(ids.begin(), ids.end());
    for (std::int32_t id : idx) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw UsageError("embedding: id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(vocab));
        }
    }
    const auto tv = table.data();
    std::vector<T> out(idx.size() * width);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(tv.data() + static_cast<std::size_t>(idx[r]) * width, width, out.data() + r * width);
    }
    const auto it = table.id();
    const Shape shape{idx.size(), width};
    return table.tape().record(shape, std::move(out), {table},
                               [=, idx = std::move(idx)](Tape<T>& t, std::uint32_t o) {
                                   const auto dy = t.grad(o);
                                   auto g = t.grad_acc(it);
                                   for (std::size_t r = 0; r < idx.size(); ++r) {
                                       T* gr = g.data() + static_cast<std::size_t>(idx[r]) * width;
                                       const T* dr = dy.data() + r * width;
                                       for (std::size_t c = 0; c < width; ++c) gr[c] += dr[c];
                                   }
                               });
}

template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch, std::size_t seq,
                        std::size_t heads) {
    require_same_tape("causal_attention", q, k);
    require_same_tape("causal_attention", q, v);
    require_rank("causal_attention", q, 2);
    require_same_shape("causal_attention", q, k);
    require_same_shape("causal_attention", q, v);
    if (q.dim(0) != batch * seq || heads == 0 || q.dim(1) % heads != 0) {
        throw ShapeError("causal_attention: operand " + shape_str(q.shape()) + " does not split into " +
                         std::to_string(batch) + "x" + std::to_string(seq) + " positions and " +
                         std::to_string(heads) + " heads");
    }
    require_finite("causal_attention", q);
    require_finite("causal_attention", k);
    require_finite("causal_attention", v);
    const kernels::AttentionDims dims{batch, seq, heads, q.dim(1) / heads};
    std::vector<T> out(q.numel());
    std::vector<T> probs(batch * heads * seq * seq);
    kp::causal_attention<T>(q.data(), k.data(), v.data(), out, probs, dims);
    const auto iq = q.id(), ik = k.id(), iv = v.id();
    return q.tape().record(
        q.shape(), std::move(out), {q, k, v},
        [=, probs = std::move(probs)](Tape<T>& t, std::uint32_t o) {
            std::vector<T> sq, sk, sv;
            auto pick = [&](std::uint32_t id, std::vector<T>& scratch) {
                if (t.requires_grad(id)) return t.grad_acc(id);
                scratch.assign(t.value(id).size(), T(0));
                return std::span<T>(scratch);
            };
            auto dq = pick(iq, sq);
            auto dk = pick(ik, sk);
            auto dv = pick(iv, sv);
            kp::causal_attention_backward<T>(t.value(iq), t.value(ik), t.value(iv), probs,
                                             t.grad(o), dq, dk, dv, dims);
        });
}

namespace {

// Rotates consecutive pairs of each head by position * theta_i; sign = -1
// applies the inverse rotation (the backward map).
template <typename T>
void rotate_pairs(std::span<const T> in, std::span<T> out, std::size_t batch, std::size_t seq,
                  std::size_t heads, std::size_t head_dim, T sign) {
    const std::size_t width = heads * head_dim;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < seq; ++s) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t base = (b * seq + s) * width + h * head_dim;
                for (std::size_t i = 0; i + 1 < head_dim; i += 2) {
                    const double theta =
                        std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(head_dim));
                    const T angle = static_cast<T>(static_cast<double>(s) * theta);
                    const T c = std::cos(angle), sn = sign * std::sin(angle);
                    const T x0 = in[base + i], x1 = in[base + i + 1];
                    out[base + i] += x0 * c - x1 * sn;
                    out[base + i + 1] += x0 * sn + x1 * c;
                }
                if (head_dim % 2) out[base + head_dim - 1] += in[base + head_dim - 1];
            }
        }
    }
}

}  // namespace

template <typename T>
Var<T> rotary(Var<T> x, std::size_t batch, std::size_t seq, std::size_t heads) {
    require_rank("rotary", x, 2);
    if (x.dim(0) != batch * seq || heads == 0 || x.dim(1) % heads != 0) {
        throw ShapeError("rotary: operand " + shape_str(x.shape()) + " does not split into " +
                         std::to_string(batch) + "x" + std::to_string(seq) + " positions and " +
                         std::to_string(heads) + " heads");
    }
    require_finite("rotary", x);
    const std::size_t head_dim = x.dim(1) / heads;
    std::vector<T> out(x.numel(), T(0));
    rotate_pairs<T>(x.data(), out, batch, seq, heads, head_dim, T(1));
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x}, [=](Tape<T>& t, std::uint32_t o) {
        rotate_pairs<T>(t.grad(o), t.grad_acc(ix), batch, seq, heads, head_dim, T(-1));
    });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
    require_rank("cross_entropy", logits, 2);
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
    }
    if (rows == 0) throw ShapeError("cross_entropy: empty batch");
    for (std::int32_t tg : targets) {
        if (tg < 0 || static_cast<std::size_t>(tg) >= cols) {
            throw UsageError("cross_entropy: target " + std::to_string(tg) + " outside " +
                             std::to_string(cols) + " classes");
        }
    }
    require_finite("cross_entropy", logits);
    std::vector<T> row_loss(rows);
    const T mean = kp::cross_entropy<T>(logits.data(), targets, row_loss, rows, cols);
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    const auto il = logits.id();
    return logits.tape().record({1}, {mean}, {logits},
                                [=, tg = std::move(tg)](Tape<T>& t, std::uint32_t o) {
                                    const T dy = t.grad(o)[0];
                                    kp::cross_entropy_backward<T>(t.value(il), tg, t.grad_acc(il),
                                                                  rows, cols,
                                                                  dy / static_cast<T>(rows));
                                });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::uint32_t> rows) {
    require_rank("gather_rows", x, 2);
    require_finite("gather_rows", x);
    const std::size_t n = x.dim(0), width = x.dim(1);
    std::vector<std::uint32_t> idx(rows.begin(), rows.end());
    for (auto r : idx) {
        if (r >= n) {
            throw UsageError("gather_rows: row " + std::to_string(r) + " outside " +
                             shape_str(x.shape()));
        }
    }
    const auto xv = x.data();
    std::vector<T> out(idx.size() * width);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(xv.data() + idx[r] * width, width, out.data() + r * width);
    const auto ix = x.id();
    const Shape shape{idx.size(), width};
    return x.tape().record(shape, std::move(out), {x},
                           [=, idx = std::move(idx)](Tape<T>& t, std::uint32_t o) {
                               const auto dy = t.grad(o);
                               auto g = t.grad_acc(ix);
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                   T* gr = g.data() + idx[r] * width;
                                   const T* dr = dy.data() + r * width;
                                   for (std::size_t c = 0; c < width; ++c) gr[c] += dr[c];
                               }
                           });
}

template <typename T>
Var<T> scatter_add_rows(Var<T> src, std::span<const std::uint32_t> rows, std::size_t out_rows) {
    require_rank("scatter_add_rows", src, 2);
    require_finite("scatter_add_rows", src);
    const std::size_t width = src.dim(1);
    if (rows.size() != src.dim(0)) {
        throw ShapeError("scatter_add_rows: " + std::to_string(rows.size()) + " indices for source " +
                         shape_str(src.shape()));
    }
    std::vector<std::uint32_t> idx(rows.begin(), rows.end());
    for (auto r : idx) {
        if (r >= out_rows) {
            throw UsageError("scatter_add_rows: row " + std::to_string(r) + " outside " +
                             std::to_string(out_rows) + " output rows");
        }
    }
    const auto sv = src.data();
    std::vector<T> out(out_rows * width, T(0));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        T* orow = out.data() + idx[r] * width;
        const T* srow = sv.data() + r * width;
        for (std::size_t c = 0; c < width; ++c) orow[c] += srow[c];
    }
    const auto is = src.id();
    return src.tape().record({out_rows, width}, std::move(out), {src},
                             [=, idx = std::move(idx)](Tape<T>& t, std::uint32_t o) {
                                 const auto dy = t.grad(o);
                                 auto g = t.grad_acc(is);
                                 for (std::size_t r = 0; r < idx.size(); ++r) {
                                     const T* dr = dy.data() + idx[r] * width;
                                     T* gr = g.data() + r * width;
                                     for (std::size_t c = 0; c < width; ++c) gr[c] += dr[c];
                                 }
                             });
}

template <typename T>
Var<T> gather_elements(Var<T> x, std::span<const std::uint32_t> index) {
    require_finite("gather_elements", x);
    const std::size_t n = x.numel();
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    const auto xv = x.data();
    std::vector<T> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= n) {
            throw UsageError("gather_elements: index " + std::to_string(idx[r]) + " outside " +
                             shape_str(x.shape()));
        }
        out[r] = xv[idx[r]];
    }
    const auto ix = x.id();
    const Shape shape{idx.size()};
    return x.tape().record(shape, std::move(out), {x},
                           [=, idx = std::move(idx)](Tape<T>& t, std::uint32_t o) {
                               const auto dy = t.grad(o);
                               auto g = t.grad_acc(ix);
                               for (std::size_t r = 0; r < idx.size(); ++r) g[idx[r]] += dy[r];
                           });
}

template <typename T>
Var<T> mul_rows(Var<T> x, Var<T> s) {
    require_same_tape("mul_rows", x, s);
    require_rank("mul_rows", x, 2);
    const std::size_t rows = x.dim(0), width = x.dim(1);
    if (s.numel() != rows) {
        throw ShapeError("mul_rows: scale " + shape_str(s.shape()) + " for rows of " +
                         shape_str(x.shape()));
    }
    require_finite("mul_rows", x);
    require_finite("mul_rows", s);
    const auto xv = x.data(), sv = s.data();
    std::vector<T> out(rows * width);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) out[r * width + c] = xv[r * width + c] * sv[r];
    const auto ix = x.id(), is = s.id();
    return x.tape().record(x.shape(), std::move(out), {x, s}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        const auto xv = t.value(ix), sv = t.value(is);
        if (t.requires_grad(ix)) {
            auto g = t.grad_acc(ix);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < width; ++c) g[r * width + c] += dy[r * width + c] * sv[r];
        }
        if (t.requires_grad(is)) {
            auto g = t.grad_acc(is);
            for (std::size_t r = 0; r < rows; ++r) {
                T acc = 0;
                for (std::size_t c = 0; c < width; ++c) acc += dy[r * width + c] * xv[r * width + c];
                g[r] += acc;
            }
        }
    });
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> x, T eps) {
    require_rank("l2_normalize_rows", x, 2);
    require_finite("l2_normalize_rows", x);
    const std::size_t rows = x.dim(0), width = x.dim(1);
    const auto xv = x.data();
    std::vector<T> out(rows * width), norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        T ss = 0;
        for (std::size_t c = 0; c < width; ++c) ss += xv[r * width + c] * xv[r * width + c];
        norms[r] = std::max(std::sqrt(ss), eps);
        for (std::size_t c = 0; c < width; ++c) out[r * width + c] = xv[r * width + c] / norms[r];
    }
    const auto ix = x.id();
    return x.tape().record(x.shape(), std::move(out), {x},
                           [=, norms = std::move(norms)](Tape<T>& t, std::uint32_t o) {
                               const auto dy = t.grad(o);
                               const auto y = t.value(o);
                               auto g = t.grad_acc(ix);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   T dot = 0;
                                   for (std::size_t c = 0; c < width; ++c)
                                       dot += dy[r * width + c] * y[r * width + c];
                                   // Below the floor the map is linear: x / eps.
                                   const bool floored = norms[r] <= eps;
                                   for (std::size_t c = 0; c < width; ++c) {
                                       const T proj = floored ? T(0) : y[r * width + c] * dot;
                                       g[r * width + c] += (dy[r * width + c] - proj) / norms[r];
                                   }
                               }
                           });
}

template <typename T>
Var<T> div_scalar(Var<T> x, Var<T> s) {
    require_same_tape("div_scalar", x, s);
    if (s.numel() != 1) throw ShapeError("div_scalar: divisor of shape " + shape_str(s.shape()));
    require_finite("div_scalar", x);
    require_finite("div_scalar", s);
    const T d = s.data()[0];
    if (d == T(0)) throw NumericError("div_scalar: division by zero");
    const auto xv = x.data();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / d;
    const auto ix = x.id(), is = s.id();
    return x.tape().record(x.shape(), std::move(out), {x, s}, [=](Tape<T>& t, std::uint32_t o) {
        const auto dy = t.grad(o);
        const auto y = t.value(o);
        if (t.requires_grad(ix)) {
            auto g = t.grad_acc(ix);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] / d;
        }
        if (t.requires_grad(is)) {
            T acc = 0;
            for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * y[i];
            t.grad_acc(is)[0] -= acc / d;
        }
    });
}

template <typename T>
Var<T> masked_renormalize_rows(Var<T> probs, std::span<const std::uint8_t> mask) {
    require_rank("masked_renormalize_rows", probs, 2);
    require_finite("masked_renormalize_rows", probs);
    const std::size_t rows = probs.dim(0), cols = probs.dim(1);
    if (mask.size() != rows * cols) {
        throw ShapeError("masked_renormalize_rows: mask of " + std::to_string(mask.size()) +
                         " entries for " + shape_str(probs.shape()));
    }
    const auto pv = probs.data();
    std::vector<T> out(rows * cols, T(0)), sums(rows, T(0));
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c)
            if (m[r * cols + c]) sums[r] += pv[r * cols + c];
        if (!(sums[r] > T(0))) {
            throw NumericError("masked_renormalize_rows: row " + std::to_string(r) +
                               " has no allowed mass");
        }
        for (std::size_t c = 0; c < cols; ++c)
            if (m[r * cols + c]) out[r * cols + c] = pv[r * cols + c] / sums[r];
    }
    const auto ip = probs.id();
    return probs.tape().record(
        probs.shape(), std::move(out), {probs},
        [=, m = std::move(m), sums = std::move(sums)](Tape<T>& t, std::uint32_t o) {
            const auto dy = t.grad(o);
            const auto y = t.value(o);
            auto g = t.grad_acc(ip);
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = 0;
                for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c)
                    if (m[r * cols + c]) g[r * cols + c] += (dy[r * cols + c] - dot) / sums[r];
            }
        });
}

template <typename T>
Var<T> load_balance(Var<T> probs, std::span<const T> fractions) {
    require_rank("load_balance", probs, 2);
    require_finite("load_balance", probs);
    const std::size_t rows = probs.dim(0), cols = probs.dim(1);
    if (rows == 0) throw UsageError("load_balance: empty batch");
    if (fractions.size() != cols) {
        throw ShapeError("load_balance: " + std::to_string(fractions.size()) +
                         " fractions for probabilities " + shape_str(probs.shape()));
    }
    const auto pv = probs.data();
    std::vector<T> mean(cols, T(0));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) mean[c] += pv[r * cols + c];
    T value = 0;
    for (std::size_t c = 0; c < cols; ++c) value += fractions[c] * (mean[c] / static_cast<T>(rows));
    value *= static_cast<T>(cols);
    std::vector<T> f(fractions.begin(), fractions.end());
    const auto ip = probs.id();
    return probs.tape().record({1}, {value}, {probs},
                               [=, f = std::move(f)](Tape<T>& t, std::uint32_t o) {
                                   const T dy = t.grad(o)[0];
                                   auto g = t.grad_acc(ip);
                                   const T k = dy * static_cast<T>(cols) / static_cast<T>(rows);
                                   for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += k * f[c];
                               });
}

#define PATHMOE_OPS_INSTANTIATE(T)                                                                 \
    template Var<T> matmul<T>(Var<T>, Var<T>);                                                     \
    template Var<T> linear<T>(Var<T>, Var<T>);                                                     \
    template Var<T> add<T>(Var<T>, Var<T>);                                                        \
    template Var<T> mul<T>(Var<T>, Var<T>);                                                        \
    template Var<T> scale<T>(Var<T>, T);                                                           \
    template Var<T> sum<T>(Var<T>);                                                                \
    template Var<T> softmax_rows<T>(Var<T>);                                                       \
    template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                      \
    template Var<T> gelu<T>(Var<T>);                                                               \
    template Var<T> embedding<T>(Var<T>, std::span<const std::int32_t>);                           \
    template Var<T> causal_attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t,          \
                                        std::size_t);                                              \
    template Var<T> rotary<T>(Var<T>, std::size_t, std::size_t, std::size_t);                      \
    template Var<T> cross_entropy<T>(Var<T>, std::span<const std::int32_t>);                       \
    template Var<T> reshape<T>(Var<T>, Shape);                                                     \
    template Var<T> gather_rows<T>(Var<T>, std::span<const std::uint32_t>);                        \
    template Var<T> scatter_add_rows<T>(Var<T>, std::span<const std::uint32_t>, std::size_t);      \
    template Var<T> gather_elements<T>(Var<T>, std::span<const std::uint32_t>);                    \
    template Var<T> mul_rows<T>(Var<T>, Var<T>);                                                   \
    template Var<T> l2_normalize_rows<T>(Var<T>, T);                                               \
    template Var<T> div_scalar<T>(Var<T>, Var<T>);                                                 \
    template Var<T> masked_renormalize_rows<T>(Var<T>, std::span<const std::uint8_t>);             \
    template Var<T> load_balance<T>(Var<T>, std::span<const T>);

PATHMOE_OPS_INSTANTIATE(float)
PATHMOE_OPS_INSTANTIATE(double)

}  // namespace pathmoe::ops
