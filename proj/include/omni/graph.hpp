// Tape-based reverse-mode autodiff over row-major matrices, templated on the
// scalar type: float for training, double for finite-difference gradient
// checks. Each op appends a node with a hand-written backward closure; the
// tape is walked once in reverse.
//
// Determinism contract: every accumulation runs in a fixed order independent
// of thread count. Dot products use 16 strided partial sums combined in a
// fixed pairwise order — deterministic yet auto-vectorizable without
// -ffast-math (a plain sequential reduction could not be vectorized).
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "omni/common.hpp"

namespace omni {

template <typename T>
inline T vdot(const T* a, const T* b, int n) {
    T acc[16] = {};
    int i = 0;
    for (; i + 16 <= n; i += 16)
        for (int l = 0; l < 16; ++l) acc[l] += a[i + l] * b[i + l];
    T tail = T(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    T s0 = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    T s1 = ((acc[8] + acc[9]) + (acc[10] + acc[11])) + ((acc[12] + acc[13]) + (acc[14] + acc[15]));
    return (s0 + s1) + tail;
}

template <typename T>
inline void vaxpy(T* y, T s, const T* x, int n) {
    for (int i = 0; i < n; ++i) y[i] += s * x[i];
}

// Per-token rotation phases shared by q and k: [rows x pairs_per_head],
// identical across heads. Built once per packed sequence.
template <typename T>
struct RopeTable {
    int rows = 0;
    int pairs = 0;          // head_dim / 2
    std::vector<T> cos_ph;  // row-major (row, pair)
    std::vector<T> sin_ph;
};

template <typename T>
class Graph {
  public:
    using Id = int;

    // ---- node creation -----------------------------------------------------
    // Constant input (no gradient).
    Id input(std::vector<T> value, int rows, int cols) {
        return push(rows, cols, std::move(value), nullptr, false);
    }

    // Trainable leaf aliasing externally owned parameter data (not copied).
    Id param(const T* data, int rows, int cols) {
        Id id = push(rows, cols, {}, data, true);
        params_.push_back(id);
        return id;
    }

    int rows(Id id) const { return nodes_[id].rows; }
    int cols(Id id) const { return nodes_[id].cols; }
    size_t size(Id id) const { return size_t(nodes_[id].rows) * nodes_[id].cols; }
    const T* data(Id id) const { return nodes_[id].data(); }
    // Null when no gradient reached this node (e.g. a parameter whose output
    // was gated to zero never accumulates — callers treat that as zero).
    const T* grad(Id id) const { return nodes_[id].grad.empty() ? nullptr : nodes_[id].grad.data(); }
    const std::vector<Id>& params() const { return params_; }

    // ---- ops ---------------------------------------------------------------
    // y = x W^T + b with x [n,in], W [out,in], b [out].
    Id linear(Id x, Id W, Id b) {
        const int n = rows(x), in = cols(x), out = rows(W);
        check(cols(W) == in && rows(b) == 1 && cols(b) == out, "linear: shape mismatch");
        std::vector<T> y(size_t(n) * out);
        const T* xd = data(x);
        const T* wd = data(W);
        const T* bd = data(b);
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < out; ++o)
                y[size_t(i) * out + o] = bd[o] + vdot(xd + size_t(i) * in, wd + size_t(o) * in, in);
        Id yid = push_op(n, out, std::move(y), {x, W, b});
        nodes_[yid].back = [this, x, W, b, yid, n, in, out]() {
            const T* gy = nodes_[yid].grad.data();
            const T* xd = data(x);
            const T* wd = data(W);
            if (wants_grad(x)) {
                T* gx = grad_buf(x);
                for (int i = 0; i < n; ++i)
                    for (int o = 0; o < out; ++o)
                        vaxpy(gx + size_t(i) * in, gy[size_t(i) * out + o], wd + size_t(o) * in, in);
            }
            if (wants_grad(W)) {
                T* gw = grad_buf(W);
                for (int i = 0; i < n; ++i)
                    for (int o = 0; o < out; ++o)
                        vaxpy(gw + size_t(o) * in, gy[size_t(i) * out + o], xd + size_t(i) * in, in);
            }
            if (wants_grad(b)) {
                T* gb = grad_buf(b);
                for (int i = 0; i < n; ++i)
                    for (int o = 0; o < out; ++o) gb[o] += gy[size_t(i) * out + o];
            }
        };
        return yid;
    }

    Id add(Id a, Id b) {
        check(rows(a) == rows(b) && cols(a) == cols(b), "add: shape mismatch");
        std::vector<T> y(size(a));
        const T* ad = data(a);
        const T* bd = data(b);
        for (size_t i = 0; i < y.size(); ++i) y[i] = ad[i] + bd[i];
        Id yid = push_op(rows(a), cols(a), std::move(y), {a, b});
        nodes_[yid].back = [this, a, b, yid]() {
            const T* gy = nodes_[yid].grad.data();
            size_t n = size(yid);
            if (wants_grad(a)) vaxpy(grad_buf(a), T(1), gy, static_cast<int>(n));
            if (wants_grad(b)) vaxpy(grad_buf(b), T(1), gy, static_cast<int>(n));
        };
        return yid;
    }

    // y = x with rows [row0, row0+delta.rows) incremented by delta.
    Id add_rows(Id x, Id delta, int row0) {
        const int n = rows(x), d = cols(x), m = rows(delta);
        check(cols(delta) == d && row0 >= 0 && row0 + m <= n, "add_rows: range mismatch");
        std::vector<T> y(data(x), data(x) + size(x));
        const T* dd = data(delta);
        for (size_t i = 0; i < size_t(m) * d; ++i) y[size_t(row0) * d + i] += dd[i];
        Id yid = push_op(n, d, std::move(y), {x, delta});
        nodes_[yid].back = [this, x, delta, yid, row0, m, d]() {
            const T* gy = nodes_[yid].grad.data();
            if (wants_grad(x)) vaxpy(grad_buf(x), T(1), gy, static_cast<int>(size(x)));
            if (wants_grad(delta))
                vaxpy(grad_buf(delta), T(1), gy + size_t(row0) * d, m * d);
        };
        return yid;
    }

    Id slice_rows(Id x, int row0, int m) {
        const int d = cols(x);
        check(row0 >= 0 && row0 + m <= rows(x), "slice_rows: range out of bounds");
        std::vector<T> y(data(x) + size_t(row0) * d, data(x) + size_t(row0 + m) * d);
        Id yid = push_op(m, d, std::move(y), {x});
        nodes_[yid].back = [this, x, yid, row0, m, d]() {
            if (!wants_grad(x)) return;
            vaxpy(grad_buf(x) + size_t(row0) * d, T(1), nodes_[yid].grad.data(), m * d);
        };
        return yid;
    }

    Id concat_rows(const std::vector<Id>& parts) {
        check(!parts.empty(), "concat_rows: no parts");
        const int d = cols(parts[0]);
        int n = 0;
        for (Id p : parts) {
            check(cols(p) == d, "concat_rows: column mismatch");
            n += rows(p);
        }
        std::vector<T> y(size_t(n) * d);
        size_t off = 0;
        for (Id p : parts) {
            std::copy(data(p), data(p) + size(p), y.begin() + off);
            off += size(p);
        }
        Id yid = push_op(n, d, std::move(y), parts);
        std::vector<Id> ps = parts;
        nodes_[yid].back = [this, ps, yid, d]() {
            const T* gy = nodes_[yid].grad.data();
            size_t off = 0;
            for (Id p : ps) {
                if (wants_grad(p)) vaxpy(grad_buf(p), T(1), gy + off, static_cast<int>(size(p)));
                off += size(p);
            }
        };
        return yid;
    }

    Id transpose(Id x) {
        const int n = rows(x), d = cols(x);
        std::vector<T> y(size(x));
        const T* xd = data(x);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) y[size_t(j) * n + i] = xd[size_t(i) * d + j];
        Id yid = push_op(d, n, std::move(y), {x});
        nodes_[yid].back = [this, x, yid, n, d]() {
            if (!wants_grad(x)) return;
            const T* gy = nodes_[yid].grad.data();
            T* gx = grad_buf(x);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gx[size_t(i) * d + j] += gy[size_t(j) * n + i];
        };
        return yid;
    }

    // Free reinterpretation of the row-major buffer (copies for simplicity).
    Id reshape(Id x, int r, int c) {
        check(size_t(r) * c == size(x), "reshape: element count mismatch");
        std::vector<T> y(data(x), data(x) + size(x));
        Id yid = push_op(r, c, std::move(y), {x});
        nodes_[yid].back = [this, x, yid]() {
            if (wants_grad(x)) vaxpy(grad_buf(x), T(1), nodes_[yid].grad.data(),
                                     static_cast<int>(size(x)));
        };
        return yid;
    }

    // Row-wise layer normalization without affine parameters.
    Id layernorm(Id x, T eps = T(1e-6)) {
        const int n = rows(x), d = cols(x);
        std::vector<T> y(size(x));
        auto stats = std::make_shared<std::vector<T>>(size_t(n) * 2);  // (mean, rstd) per row
        const T* xd = data(x);
        for (int i = 0; i < n; ++i) {
            const T* xi = xd + size_t(i) * d;
            T mean = T(0);
            for (int j = 0; j < d; ++j) mean += xi[j];
            mean /= T(d);
            T var = T(0);
            for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
            var /= T(d);
            T rstd = T(1) / std::sqrt(var + eps);
            (*stats)[size_t(i) * 2] = mean;
            (*stats)[size_t(i) * 2 + 1] = rstd;
            for (int j = 0; j < d; ++j) y[size_t(i) * d + j] = (xi[j] - mean) * rstd;
        }
        Id yid = push_op(n, d, std::move(y), {x});
        nodes_[yid].back = [this, x, yid, stats, n, d]() {
            if (!wants_grad(x)) return;
            const T* gy = nodes_[yid].grad.data();
            const T* yd = data(yid);
            T* gx = grad_buf(x);
            for (int i = 0; i < n; ++i) {
                const T* gyi = gy + size_t(i) * d;
                const T* yi = yd + size_t(i) * d;
                T rstd = (*stats)[size_t(i) * 2 + 1];
                T sum_gy = T(0), sum_gyy = T(0);
                for (int j = 0; j < d; ++j) {
                    sum_gy += gyi[j];
                    sum_gyy += gyi[j] * yi[j];
                }
                for (int j = 0; j < d; ++j)
                    gx[size_t(i) * d + j] +=
                        rstd * (gyi[j] - sum_gy / T(d) - yi[j] * sum_gyy / T(d));
            }
        };
        return yid;
    }

    // y[i,:] = x[i,:]*(1+scale) + shift, shift/scale [1,d] broadcast over rows.
    Id modulate(Id x, Id shift, Id scale) {
        const int n = rows(x), d = cols(x);
        check(rows(shift) == 1 && cols(shift) == d && rows(scale) == 1 && cols(scale) == d,
              "modulate: modulation rows must be [1,d]");
        std::vector<T> y(size(x));
        const T* xd = data(x);
        const T* sh = data(shift);
        const T* sc = data(scale);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                y[size_t(i) * d + j] = xd[size_t(i) * d + j] * (T(1) + sc[j]) + sh[j];
        Id yid = push_op(n, d, std::move(y), {x, shift, scale});
        nodes_[yid].back = [this, x, shift, scale, yid, n, d]() {
            const T* gy = nodes_[yid].grad.data();
            const T* xd = data(x);
            const T* sc = data(scale);
            if (wants_grad(x)) {
                T* gx = grad_buf(x);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j)
                        gx[size_t(i) * d + j] += gy[size_t(i) * d + j] * (T(1) + sc[j]);
            }
            if (wants_grad(shift)) {
                T* gs = grad_buf(shift);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gs[j] += gy[size_t(i) * d + j];
            }
            if (wants_grad(scale)) {
                T* gs = grad_buf(scale);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j)
                        gs[j] += gy[size_t(i) * d + j] * xd[size_t(i) * d + j];
            }
        };
        return yid;
    }

    // y[i,:] = x[i,:] * gate, gate [1,d].
    Id rowgate(Id x, Id gate) {
        const int n = rows(x), d = cols(x);
        check(rows(gate) == 1 && cols(gate) == d, "rowgate: gate must be [1,d]");
        std::vector<T> y(size(x));
        const T* xd = data(x);
        const T* g = data(gate);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) y[size_t(i) * d + j] = xd[size_t(i) * d + j] * g[j];
        Id yid = push_op(n, d, std::move(y), {x, gate});
        nodes_[yid].back = [this, x, gate, yid, n, d]() {
            const T* gy = nodes_[yid].grad.data();
            const T* xd = data(x);
            const T* g = data(gate);
            if (wants_grad(x)) {
                T* gx = grad_buf(x);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gx[size_t(i) * d + j] += gy[size_t(i) * d + j] * g[j];
            }
            if (wants_grad(gate)) {
                T* gg = grad_buf(gate);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gg[j] += gy[size_t(i) * d + j] * xd[size_t(i) * d + j];
            }
        };
        return yid;
    }

    Id silu(Id x) {
        std::vector<T> y(size(x));
        const T* xd = data(x);
        for (size_t i = 0; i < y.size(); ++i) {
            T s = T(1) / (T(1) + std::exp(-xd[i]));
            y[i] = xd[i] * s;
        }
        Id yid = push_op(rows(x), cols(x), std::move(y), {x});
        nodes_[yid].back = [this, x, yid]() {
            if (!wants_grad(x)) return;
            const T* gy = nodes_[yid].grad.data();
            const T* xd = data(x);
            T* gx = grad_buf(x);
            for (size_t i = 0; i < size(x); ++i) {
                T s = T(1) / (T(1) + std::exp(-xd[i]));
                gx[i] += gy[i] * (s + xd[i] * s * (T(1) - s));
            }
        };
        return yid;
    }

    // tanh-approximation GELU.
    Id gelu(Id x) {
        constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
        std::vector<T> y(size(x));
        const T* xd = data(x);
        for (size_t i = 0; i < y.size(); ++i) {
            T u = T(kC) * (xd[i] + T(0.044715) * xd[i] * xd[i] * xd[i]);
            y[i] = T(0.5) * xd[i] * (T(1) + std::tanh(u));
        }
        Id yid = push_op(rows(x), cols(x), std::move(y), {x});
        nodes_[yid].back = [this, x, yid]() {
            if (!wants_grad(x)) return;
            const T* gy = nodes_[yid].grad.data();
            const T* xd = data(x);
            T* gx = grad_buf(x);
            for (size_t i = 0; i < size(x); ++i) {
                T v = xd[i];
                T u = T(kC) * (v + T(0.044715) * v * v * v);
                T th = std::tanh(u);
                T du = T(kC) * (T(1) + T(3) * T(0.044715) * v * v);
                gx[i] += gy[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
            }
        };
        return yid;
    }

    // Row gather from an embedding table param.
    Id embed(Id table, const std::vector<int>& ids) {
        const int d = cols(table);
        const int n = static_cast<int>(ids.size());
        std::vector<T> y(size_t(n) * d);
        const T* td = data(table);
        for (int i = 0; i < n; ++i) {
            check(ids[i] >= 0 && ids[i] < rows(table), "embed: id out of range");
            std::copy(td + size_t(ids[i]) * d, td + size_t(ids[i] + 1) * d, y.begin() + size_t(i) * d);
        }
        Id yid = push_op(n, d, std::move(y), {table});
        auto ids_copy = std::make_shared<std::vector<int>>(ids);
        nodes_[yid].back = [this, table, yid, ids_copy, d]() {
            if (!wants_grad(table)) return;
            const T* gy = nodes_[yid].grad.data();
            T* gt = grad_buf(table);
            for (size_t i = 0; i < ids_copy->size(); ++i)
                vaxpy(gt + size_t((*ids_copy)[i]) * d, T(1), gy + i * d, d);
        };
        return yid;
    }

    // Broadcast a [1,d] row to n identical rows (null-audio token tiling).
    Id tile_rows(Id row, int n) {
        const int d = cols(row);
        check(rows(row) == 1, "tile_rows: source must be [1,d]");
        std::vector<T> y(size_t(n) * d);
        for (int i = 0; i < n; ++i) std::copy(data(row), data(row) + d, y.begin() + size_t(i) * d);
        Id yid = push_op(n, d, std::move(y), {row});
        nodes_[yid].back = [this, row, yid, n, d]() {
            if (!wants_grad(row)) return;
            const T* gy = nodes_[yid].grad.data();
            T* gr = grad_buf(row);
            for (int i = 0; i < n; ++i) vaxpy(gr, T(1), gy + size_t(i) * d, d);
        };
        return yid;
    }

    // Rotary rotation of adjacent pairs within each head; the same table
    // applies to every head. Backward rotates the gradient by the negated
    // phase (the rotation is orthogonal).
    Id rope(Id x, std::shared_ptr<RopeTable<T>> table, int nheads) {
        const int n = rows(x), d = cols(x);
        const int hd = d / nheads;
        check(d % nheads == 0 && hd % 2 == 0, "rope: head dim must be even");
        check(table->rows == n && table->pairs == hd / 2, "rope: table shape mismatch");
        std::vector<T> y(size(x));
        const T* xd = data(x);
        for (int i = 0; i < n; ++i) {
            const T* cs = table->cos_ph.data() + size_t(i) * table->pairs;
            const T* sn = table->sin_ph.data() + size_t(i) * table->pairs;
            for (int h = 0; h < nheads; ++h)
                for (int p = 0; p < hd / 2; ++p) {
                    size_t idx = size_t(i) * d + size_t(h) * hd + 2 * p;
                    T a = xd[idx], b = xd[idx + 1];
                    y[idx] = a * cs[p] - b * sn[p];
                    y[idx + 1] = a * sn[p] + b * cs[p];
                }
        }
        Id yid = push_op(n, d, std::move(y), {x});
        nodes_[yid].back = [this, x, yid, table, nheads, n, d, hd]() {
            if (!wants_grad(x)) return;
            const T* gy = nodes_[yid].grad.data();
            T* gx = grad_buf(x);
            for (int i = 0; i < n; ++i) {
                const T* cs = table->cos_ph.data() + size_t(i) * table->pairs;
                const T* sn = table->sin_ph.data() + size_t(i) * table->pairs;
                for (int h = 0; h < nheads; ++h)
                    for (int p = 0; p < hd / 2; ++p) {
                        size_t idx = size_t(i) * d + size_t(h) * hd + 2 * p;
                        T ga = gy[idx], gb = gy[idx + 1];
                        gx[idx] += ga * cs[p] + gb * sn[p];
                        gx[idx + 1] += -ga * sn[p] + gb * cs[p];
                    }
            }
        };
        return yid;
    }

    // Full bidirectional multi-head softmax attention over all rows.
    Id attention(Id q, Id k, Id v, int nheads) {
        return attention_ranges(q, k, v, nheads, {{0, rows(q)}}, {{0, rows(k)}});
    }

    // Segmented attention: query range i attends to key/value range i. Used
    // both for joint self-attention (one full range) and frame-wise audio
    // cross-attention (one range pair per latent frame).
    Id attention_ranges(Id q, Id k, Id v, int nheads,
                        const std::vector<std::pair<int, int>>& q_ranges,
                        const std::vector<std::pair<int, int>>& kv_ranges) {
        const int n = rows(q), d = cols(q);
        const int hd = d / nheads;
        check(d % nheads == 0, "attention: D not divisible by heads");
        check(cols(k) == d && cols(v) == d && rows(k) == rows(v), "attention: k/v shape mismatch");
        check(q_ranges.size() == kv_ranges.size(), "attention: range count mismatch");
        const T scale = T(1) / std::sqrt(T(hd));

        std::vector<T> y(size_t(n) * d, T(0));
        // Probabilities stored per (segment, head) for the backward pass.
        auto probs = std::make_shared<std::vector<std::vector<T>>>();
        probs->reserve(q_ranges.size() * nheads);
        const T* qd = data(q);
        const T* kd = data(k);
        const T* vd = data(v);
        for (size_t seg = 0; seg < q_ranges.size(); ++seg) {
            auto [q0, q1] = q_ranges[seg];
            auto [k0, k1] = kv_ranges[seg];
            check(q0 >= 0 && q1 <= n && k0 >= 0 && k1 <= rows(k) && q0 <= q1 && k0 < k1,
                  "attention: bad ranges");
            const int nq = q1 - q0, nk = k1 - k0;
            for (int h = 0; h < nheads; ++h) {
                std::vector<T> p(size_t(nq) * nk);
                for (int i = 0; i < nq; ++i) {
                    const T* qi = qd + size_t(q0 + i) * d + size_t(h) * hd;
                    T* pi = p.data() + size_t(i) * nk;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (int j = 0; j < nk; ++j) {
                        pi[j] = scale * vdot(qi, kd + size_t(k0 + j) * d + size_t(h) * hd, hd);
                        if (pi[j] > mx) mx = pi[j];
                    }
                    T sum = T(0);
                    for (int j = 0; j < nk; ++j) {
                        pi[j] = std::exp(pi[j] - mx);
                        sum += pi[j];
                    }
                    T inv = T(1) / sum;
                    T* yi = y.data() + size_t(q0 + i) * d + size_t(h) * hd;
                    for (int j = 0; j < nk; ++j) {
                        pi[j] *= inv;
                        vaxpy(yi, pi[j], vd + size_t(k0 + j) * d + size_t(h) * hd, hd);
                    }
                }
                probs->push_back(std::move(p));
            }
        }
        Id yid = push_op(n, d, std::move(y), {q, k, v});
        auto qr = std::make_shared<std::vector<std::pair<int, int>>>(q_ranges);
        auto kr = std::make_shared<std::vector<std::pair<int, int>>>(kv_ranges);
        nodes_[yid].back = [this, q, k, v, yid, nheads, d, hd, scale, probs, qr, kr]() {
            const T* gy = nodes_[yid].grad.data();
            const T* qd = data(q);
            const T* kd = data(k);
            const T* vd = data(v);
            T* gq = wants_grad(q) ? grad_buf(q) : nullptr;
            T* gk = wants_grad(k) ? grad_buf(k) : nullptr;
            T* gv = wants_grad(v) ? grad_buf(v) : nullptr;
            size_t pidx = 0;
            for (size_t seg = 0; seg < qr->size(); ++seg) {
                auto [q0, q1] = (*qr)[seg];
                auto [k0, k1] = (*kr)[seg];
                const int nq = q1 - q0, nk = k1 - k0;
                for (int h = 0; h < nheads; ++h) {
                    const std::vector<T>& p = (*probs)[pidx++];
                    for (int i = 0; i < nq; ++i) {
                        const T* pi = p.data() + size_t(i) * nk;
                        const T* gyi = gy + size_t(q0 + i) * d + size_t(h) * hd;
                        // dp_j = <gy_i, v_j>; ds_j = p_j (dp_j - sum_j' p_j' dp_j')
                        T dot_sum = T(0);
                        std::vector<T> dp(nk);
                        for (int j = 0; j < nk; ++j) {
                            dp[j] = vdot(gyi, vd + size_t(k0 + j) * d + size_t(h) * hd, hd);
                            dot_sum += pi[j] * dp[j];
                        }
                        for (int j = 0; j < nk; ++j) {
                            T ds = pi[j] * (dp[j] - dot_sum) * scale;
                            if (gv) vaxpy(gv + size_t(k0 + j) * d + size_t(h) * hd, pi[j], gyi, hd);
                            if (gq)
                                vaxpy(gq + size_t(q0 + i) * d + size_t(h) * hd, ds,
                                      kd + size_t(k0 + j) * d + size_t(h) * hd, hd);
                            if (gk)
                                vaxpy(gk + size_t(k0 + j) * d + size_t(h) * hd, ds,
                                      qd + size_t(q0 + i) * d + size_t(h) * hd, hd);
                        }
                    }
                }
            }
        };
        return yid;
    }

    // 3x3 convolution with padding 1 over one [Cin x Hin x Win] image stored
    // as a [Cin, Hin*Win] node. Weight [Cout, Cin*9], bias [1, Cout].
    Id conv3x3(Id x, Id W, Id b, int Hin, int Win, int stride) {
        const int cin = rows(x), cout = rows(W);
        check(cols(x) == Hin * Win, "conv3x3: input dims mismatch");
        check(cols(W) == cin * 9 && cols(b) == cout && rows(b) == 1, "conv3x3: kernel shape");
        const int Ho = (Hin + 2 - 3) / stride + 1;
        const int Wo = (Win + 2 - 3) / stride + 1;
        std::vector<T> y(size_t(cout) * Ho * Wo);
        const T* xd = data(x);
        const T* wd = data(W);
        const T* bd = data(b);
        for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    T acc = bd[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                int iy = oy * stride + ky - 1;
                                int ix = ox * stride + kx - 1;
                                if (iy < 0 || iy >= Hin || ix < 0 || ix >= Win) continue;
                                acc += wd[(size_t(co) * cin + ci) * 9 + ky * 3 + kx] *
                                       xd[size_t(ci) * Hin * Win + iy * Win + ix];
                            }
                    y[(size_t(co) * Ho + oy) * Wo + ox] = acc;
                }
        Id yid = push_op(cout, Ho * Wo, std::move(y), {x, W, b});
        nodes_[yid].back = [this, x, W, b, yid, Hin, Win, stride, cin, cout, Ho, Wo]() {
            const T* gy = nodes_[yid].grad.data();
            const T* xd = data(x);
            const T* wd = data(W);
            T* gx = wants_grad(x) ? grad_buf(x) : nullptr;
            T* gw = wants_grad(W) ? grad_buf(W) : nullptr;
            T* gb = wants_grad(b) ? grad_buf(b) : nullptr;
            for (int co = 0; co < cout; ++co)
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        T g = gy[(size_t(co) * Ho + oy) * Wo + ox];
                        if (gb) gb[co] += g;
                        for (int ci = 0; ci < cin; ++ci)
                            for (int ky = 0; ky < 3; ++ky)
                                for (int kx = 0; kx < 3; ++kx) {
                                    int iy = oy * stride + ky - 1;
                                    int ix = ox * stride + kx - 1;
                                    if (iy < 0 || iy >= Hin || ix < 0 || ix >= Win) continue;
                                    size_t wi = (size_t(co) * cin + ci) * 9 + ky * 3 + kx;
                                    size_t xi = size_t(ci) * Hin * Win + iy * Win + ix;
                                    if (gw) gw[wi] += g * xd[xi];
                                    if (gx) gx[xi] += g * wd[wi];
                                }
                    }
        };
        return yid;
    }

    // Mean squared error over mask-selected entries; target and mask are
    // plain data. Returns a scalar node.
    Id mse_masked(Id pred, const std::vector<T>& target, const std::vector<uint8_t>& mask) {
        check(target.size() == size(pred) && mask.size() == size(pred), "mse: shape mismatch");
        int64_t count = 0;
        for (uint8_t m : mask) count += m ? 1 : 0;
        require(count > 0, ErrorCode::value, "mse_loss: empty mask");
        const T* pd = data(pred);
        T acc = T(0);
        for (size_t i = 0; i < target.size(); ++i)
            if (mask[i]) {
                T d = pd[i] - target[i];
                acc += d * d;
            }
        std::vector<T> y{acc / T(count)};
        Id yid = push_op(1, 1, std::move(y), {pred});
        auto tgt = std::make_shared<std::vector<T>>(target);
        auto msk = std::make_shared<std::vector<uint8_t>>(mask);
        nodes_[yid].back = [this, pred, yid, tgt, msk, count]() {
            if (!wants_grad(pred)) return;
            T g = nodes_[yid].grad[0];
            const T* pd = data(pred);
            T* gp = grad_buf(pred);
            T c = T(2) / T(count);
            for (size_t i = 0; i < tgt->size(); ++i)
                if ((*msk)[i]) gp[i] += g * c * (pd[i] - (*tgt)[i]);
        };
        return yid;
    }

    // ---- execution ----------------------------------------------------------
    // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse creation order.
    void backward(Id loss) {
        check(rows(loss) == 1 && cols(loss) == 1, "backward: loss must be scalar");
        grad_buf(loss)[0] = T(1);
        for (Id id = loss; id >= 0; --id) {
            if (nodes_[id].back && !nodes_[id].grad.empty()) nodes_[id].back();
        }
    }

  private:
    struct Node {
        int rows = 0;
        int cols = 0;
        std::vector<T> own_value;
        const T* ext_data = nullptr;  // params alias external storage
        std::vector<T> grad;          // allocated lazily
        bool needs_grad = false;
        std::function<void()> back;

        const T* data() const { return ext_data ? ext_data : own_value.data(); }
    };

    Id push(int r, int c, std::vector<T> value, const T* ext, bool needs_grad) {
        Node n;
        n.rows = r;
        n.cols = c;
        n.own_value = std::move(value);
        n.ext_data = ext;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id push_op(int r, int c, std::vector<T> value, const std::vector<Id>& parents) {
        bool ng = false;
        for (Id p : parents) ng = ng || nodes_[p].needs_grad;
        return push(r, c, std::move(value), nullptr, ng);
    }

    bool wants_grad(Id id) const { return nodes_[id].needs_grad; }

    T* grad_buf(Id id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(size_t(n.rows) * n.cols, T(0));
        return n.grad.data();
    }

    void check(bool ok, const char* msg) const {
        require(ok, ErrorCode::shape, std::string("graph: ") + msg);
    }

    std::vector<Node> nodes_;
    std::vector<Id> params_;
};

}  // namespace omni
