#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sws/nnkit/tensor.hpp"
#include "sws/rng.hpp"

namespace sws::nn {

struct Var {
    int id = -1;
};

/// Append-only reverse-mode tape. A graph is built per forward pass, confined
/// to one thread, and replayed in reverse creation order by backward().
/// Backward closures reference nodes by index only; the node vector may
/// reallocate while recording.
template <typename T>
class Graph {
public:
    Var input(Tensor<T> value, bool requires_grad) {
        return push(std::move(value), requires_grad, nullptr);
    }

    Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

    const Tensor<T>& value(Var v) const { return nodes_[check(v)].value; }
    const Tensor<T>& grad(Var v) const { return nodes_[check(v)].grad; }
    bool has_unfrozen_dropout() const { return has_unfrozen_dropout_; }

    // -- arithmetic ---------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        if (va.cols != vb.rows)
            throw ShapeError("matmul: inner dims disagree " + va.shape_str() + " vs " +
                             vb.shape_str());
        Tensor<T> out(va.rows, vb.cols);
        gemm(va, vb, out);
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Var self) {
            const Tensor<T>& g = grad(self);
            if (needs_grad(a)) {  // dA += g . B^T, via an explicit transpose so
                                  // the inner loop is a contiguous axpy
                const Tensor<T>& vb2 = value(b);
                Tensor<T>& ga = node(a).grad;
                Tensor<T> bt(vb2.cols, vb2.rows);
                for (std::size_t k = 0; k < vb2.rows; ++k)
                    for (std::size_t j = 0; j < vb2.cols; ++j)
                        bt.data[j * vb2.rows + k] = vb2.data[k * vb2.cols + j];
                for (std::size_t i = 0; i < ga.rows; ++i) {
                    const T* grow = &g.data[i * g.cols];
                    T* garow = &ga.data[i * ga.cols];
                    for (std::size_t t = 0; t < g.cols; ++t) {
                        const T gv = grow[t];
                        if (gv == T{0}) continue;
                        const T* btrow = &bt.data[t * bt.cols];
                        for (std::size_t k = 0; k < ga.cols; ++k) garow[k] += gv * btrow[k];
                    }
                }
            }
            if (needs_grad(b)) {  // dB += A^T . g
                const Tensor<T>& va2 = value(a);
                Tensor<T>& gb = node(b).grad;
                for (std::size_t k = 0; k < va2.rows; ++k) {
                    const T* arow = &va2.data[k * va2.cols];
                    const T* grow = &g.data[k * g.cols];
                    for (std::size_t i = 0; i < va2.cols; ++i) {
                        const T av = arow[i];
                        if (av == T{0}) continue;
                        T* gbrow = &gb.data[i * gb.cols];
                        for (std::size_t j = 0; j < g.cols; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }

    Var add(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        check_same_shape(va, vb, "add");
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Var self) {
            accumulate(a, grad(self));
            accumulate(b, grad(self));
        });
    }

    Var sub(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        check_same_shape(va, vb, "sub");
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= vb.data[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Var self) {
            accumulate(a, grad(self));
            if (needs_grad(b)) {
                Tensor<T>& gb = node(b).grad;
                const Tensor<T>& g = grad(self);
                for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] -= g.data[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        check_same_shape(va, vb, "mul");
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= vb.data[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Var self) {
            const Tensor<T>& g = grad(self);
            if (needs_grad(a)) {
                Tensor<T>& ga = node(a).grad;
                const Tensor<T>& vb2 = value(b);
                for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i] * vb2.data[i];
            }
            if (needs_grad(b)) {
                Tensor<T>& gb = node(b).grad;
                const Tensor<T>& va2 = value(a);
                for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[i] * va2.data[i];
            }
        });
    }

    /// mat (m x n) + row (1 x n) on every row.
    Var add_rowwise(Var mat, Var rowvec) {
        const Tensor<T>& vm = value(mat);
        const Tensor<T>& vr = value(rowvec);
        if (vr.rows != 1 || vr.cols != vm.cols)
            throw ShapeError("add_rowwise: row " + vr.shape_str() + " vs mat " + vm.shape_str());
        Tensor<T> out = vm;
        for (std::size_t i = 0; i < out.rows; ++i)
            for (std::size_t j = 0; j < out.cols; ++j) out.data[i * out.cols + j] += vr.data[j];
        return push(std::move(out), needs_grad(mat) || needs_grad(rowvec),
                    [this, mat, rowvec](Var self) {
                        const Tensor<T>& g = grad(self);
                        accumulate(mat, g);
                        if (needs_grad(rowvec)) {
                            Tensor<T>& gr = node(rowvec).grad;
                            for (std::size_t i = 0; i < g.rows; ++i)
                                for (std::size_t j = 0; j < g.cols; ++j)
                                    gr.data[j] += g.data[i * g.cols + j];
                        }
                    });
    }

    Var scale(Var a, T factor) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v *= factor;
        return push(std::move(out), needs_grad(a), [this, a, factor](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += factor * g.data[i];
        });
    }

    // -- nonlinearities ------------------------------------------------------

    Var relu(Var a) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v = v > T{0} ? v : T{0};
        return push(std::move(out), needs_grad(a), [this, a](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            const Tensor<T>& va = value(a);
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (va.data[i] > T{0}) ga.data[i] += g.data[i];
        });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v = T{1} / (T{1} + std::exp(-v));
        return push(std::move(out), needs_grad(a), [this, a](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            const Tensor<T>& s = value(self);
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.data[i] += g.data[i] * s.data[i] * (T{1} - s.data[i]);
        });
    }

    /// Row-wise softmax. When key_mask is non-empty (size = cols), masked-out
    /// columns get probability 0 and receive no gradient.
    Var softmax_rows(Var a, std::vector<std::uint8_t> key_mask = {}) {
        const Tensor<T>& va = value(a);
        if (!key_mask.empty() && key_mask.size() != va.cols)
            throw ShapeError("softmax: key mask length does not match columns");
        Tensor<T> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.rows; ++i) {
            T hi = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < va.cols; ++j)
                if (key_mask.empty() || key_mask[j]) hi = std::max(hi, va.at(i, j));
            T denom{0};
            for (std::size_t j = 0; j < va.cols; ++j) {
                if (key_mask.empty() || key_mask[j]) {
                    const T e = std::exp(va.at(i, j) - hi);
                    out.at(i, j) = e;
                    denom += e;
                }
            }
            if (denom == T{0}) throw EmptyLoss("softmax: every key is masked out");
            for (std::size_t j = 0; j < va.cols; ++j)
                if (key_mask.empty() || key_mask[j]) out.at(i, j) /= denom;
        }
        return push(std::move(out), needs_grad(a),
                    [this, a, mask = std::move(key_mask)](Var self) {
                        if (!needs_grad(a)) return;
                        const Tensor<T>& g = grad(self);
                        const Tensor<T>& s = value(self);
                        Tensor<T>& ga = node(a).grad;
                        for (std::size_t i = 0; i < s.rows; ++i) {
                            T dot{0};
                            for (std::size_t j = 0; j < s.cols; ++j)
                                dot += g.at(i, j) * s.at(i, j);
                            for (std::size_t j = 0; j < s.cols; ++j) {
                                if (!mask.empty() && !mask[j]) continue;
                                ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
                            }
                        }
                    });
    }

    /// Row-wise layer normalization with affine parameters (1 x n each).
    Var layer_norm(Var x, Var gamma, Var beta, T eps = T{1e-5}) {
        const Tensor<T>& vx = value(x);
        const Tensor<T>& vg = value(gamma);
        const Tensor<T>& vb = value(beta);
        if (vg.rows != 1 || vg.cols != vx.cols || vb.rows != 1 || vb.cols != vx.cols)
            throw ShapeError("layer_norm: affine params must be 1 x cols");
        const std::size_t n = vx.cols;
        Tensor<T> out(vx.rows, n);
        Tensor<T> xhat(vx.rows, n);
        std::vector<T> inv_std(vx.rows);
        for (std::size_t i = 0; i < vx.rows; ++i) {
            T mean{0};
            for (std::size_t j = 0; j < n; ++j) mean += vx.at(i, j);
            mean /= static_cast<T>(n);
            T var{0};
            for (std::size_t j = 0; j < n; ++j) {
                const T d = vx.at(i, j) - mean;
                var += d * d;
            }
            var /= static_cast<T>(n);
            const T inv = T{1} / std::sqrt(var + eps);
            inv_std[i] = inv;
            for (std::size_t j = 0; j < n; ++j) {
                xhat.at(i, j) = (vx.at(i, j) - mean) * inv;
                out.at(i, j) = xhat.at(i, j) * vg.data[j] + vb.data[j];
            }
        }
        return push(std::move(out), needs_grad(x) || needs_grad(gamma) || needs_grad(beta),
                    [this, x, gamma, beta, xh = std::move(xhat),
                     istd = std::move(inv_std)](Var self) {
                        const Tensor<T>& g = grad(self);
                        const Tensor<T>& vg = value(gamma);
                        const std::size_t n = g.cols;
                        if (needs_grad(gamma)) {
                            Tensor<T>& gg = node(gamma).grad;
                            for (std::size_t i = 0; i < g.rows; ++i)
                                for (std::size_t j = 0; j < n; ++j)
                                    gg.data[j] += g.at(i, j) * xh.at(i, j);
                        }
                        if (needs_grad(beta)) {
                            Tensor<T>& gb = node(beta).grad;
                            for (std::size_t i = 0; i < g.rows; ++i)
                                for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.at(i, j);
                        }
                        if (needs_grad(x)) {
                            Tensor<T>& gx = node(x).grad;
                            for (std::size_t i = 0; i < g.rows; ++i) {
                                T sum_gy{0}, sum_gy_xhat{0};
                                for (std::size_t j = 0; j < n; ++j) {
                                    const T gy = g.at(i, j) * vg.data[j];
                                    sum_gy += gy;
                                    sum_gy_xhat += gy * xh.at(i, j);
                                }
                                const T inv_n = T{1} / static_cast<T>(n);
                                for (std::size_t j = 0; j < n; ++j) {
                                    const T gy = g.at(i, j) * vg.data[j];
                                    gx.at(i, j) += istd[i] * (gy - inv_n * sum_gy -
                                                              xh.at(i, j) * inv_n * sum_gy_xhat);
                                }
                            }
                        }
                    });
    }

    /// Inverted dropout. Deterministic for a fixed seed; `frozen` marks the
    /// mask as reproducible for gradient checking. p = 0 is the identity.
    Var dropout(Var a, double p, std::uint64_t seed, bool frozen = false) {
        if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
        if (p == 0.0) return a;
        if (!frozen) has_unfrozen_dropout_ = true;
        Rng rng(seed);
        const Tensor<T>& va = value(a);
        std::vector<std::uint8_t> keep(va.size());
        const T inv_keep = static_cast<T>(1.0 / (1.0 - p));
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) {
            keep[i] = rng.uniform() >= p;
            out.data[i] = keep[i] ? out.data[i] * inv_keep : T{0};
        }
        return push(std::move(out), needs_grad(a),
                    [this, a, keep = std::move(keep), inv_keep](Var self) {
                        if (!needs_grad(a)) return;
                        Tensor<T>& ga = node(a).grad;
                        const Tensor<T>& g = grad(self);
                        for (std::size_t i = 0; i < ga.size(); ++i)
                            if (keep[i]) ga.data[i] += g.data[i] * inv_keep;
                    });
    }

    // -- structure -----------------------------------------------------------

    Var transpose(Var a) {
        const Tensor<T>& va = value(a);
        Tensor<T> out(va.cols, va.rows);
        for (std::size_t i = 0; i < va.rows; ++i)
            for (std::size_t j = 0; j < va.cols; ++j) out.at(j, i) = va.at(i, j);
        return push(std::move(out), needs_grad(a), [this, a](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
        });
    }

    Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
        const Tensor<T>& va = value(a);
        if (r0 >= r1 || r1 > va.rows) throw ShapeError("slice_rows: bad range");
        Tensor<T> out(r1 - r0, va.cols);
        std::copy(va.data.begin() + static_cast<std::ptrdiff_t>(r0 * va.cols),
                  va.data.begin() + static_cast<std::ptrdiff_t>(r1 * va.cols), out.data.begin());
        return push(std::move(out), needs_grad(a), [this, a, r0](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[r0 * ga.cols + i] += g.data[i];
        });
    }

    Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
        const Tensor<T>& va = value(a);
        if (c0 >= c1 || c1 > va.cols) throw ShapeError("slice_cols: bad range");
        Tensor<T> out(va.rows, c1 - c0);
        for (std::size_t i = 0; i < va.rows; ++i)
            for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = va.at(i, j);
        return push(std::move(out), needs_grad(a), [this, a, c0](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j) ga.at(i, c0 + j) += g.at(i, j);
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw ShapeError("concat_rows: no inputs");
        const std::size_t cols = value(parts[0]).cols;
        std::size_t rows = 0;
        bool req = false;
        for (Var p : parts) {
            if (value(p).cols != cols) throw ShapeError("concat_rows: column mismatch");
            rows += value(p).rows;
            req = req || needs_grad(p);
        }
        Tensor<T> out(rows, cols);
        std::size_t r = 0;
        for (Var p : parts) {
            const Tensor<T>& vp = value(p);
            std::copy(vp.data.begin(), vp.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * cols));
            r += vp.rows;
        }
        return push(std::move(out), req, [this, parts](Var self) {
            const Tensor<T>& g = grad(self);
            std::size_t r = 0;
            for (Var p : parts) {
                const std::size_t nr = value(p).rows;
                if (needs_grad(p)) {
                    Tensor<T>& gp = node(p).grad;
                    for (std::size_t i = 0; i < nr * g.cols; ++i)
                        gp.data[i] += g.data[r * g.cols + i];
                }
                r += nr;
            }
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no inputs");
        const std::size_t rows = value(parts[0]).rows;
        std::size_t cols = 0;
        bool req = false;
        for (Var p : parts) {
            if (value(p).rows != rows) throw ShapeError("concat_cols: row mismatch");
            cols += value(p).cols;
            req = req || needs_grad(p);
        }
        Tensor<T> out(rows, cols);
        std::size_t c = 0;
        for (Var p : parts) {
            const Tensor<T>& vp = value(p);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < vp.cols; ++j) out.at(i, c + j) = vp.at(i, j);
            c += vp.cols;
        }
        return push(std::move(out), req, [this, parts](Var self) {
            const Tensor<T>& g = grad(self);
            std::size_t c = 0;
            for (Var p : parts) {
                const std::size_t nc = value(p).cols;
                if (needs_grad(p)) {
                    Tensor<T>& gp = node(p).grad;
                    for (std::size_t i = 0; i < g.rows; ++i)
                        for (std::size_t j = 0; j < nc; ++j) gp.at(i, j) += g.at(i, c + j);
                }
                c += nc;
            }
        });
    }

    /// Same data, new matrix view; element count must be preserved.
    Var reshape(Var a, std::size_t rows, std::size_t cols) {
        const Tensor<T>& va = value(a);
        if (rows * cols != va.size())
            throw ShapeError("reshape: " + va.shape_str() + " cannot view as (" +
                             std::to_string(rows) + ", " + std::to_string(cols) + ")");
        Tensor<T> out(rows, cols, va.data);
        return push(std::move(out), needs_grad(a), [this, a](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i];
        });
    }

    /// Row i of the output is row indices[i] of the table (embedding lookup).
    Var gather_rows(Var table, std::vector<int> indices) {
        const Tensor<T>& vt = value(table);
        Tensor<T> out(indices.size(), vt.cols);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const int idx = indices[i];
            if (idx < 0 || static_cast<std::size_t>(idx) >= vt.rows)
                throw ShapeError("gather_rows: index out of range");
            for (std::size_t j = 0; j < vt.cols; ++j)
                out.at(i, j) = vt.at(static_cast<std::size_t>(idx), j);
        }
        return push(std::move(out), needs_grad(table),
                    [this, table, idxs = std::move(indices)](Var self) {
                        if (!needs_grad(table)) return;
                        Tensor<T>& gt = node(table).grad;
                        const Tensor<T>& g = grad(self);
                        for (std::size_t i = 0; i < idxs.size(); ++i)
                            for (std::size_t j = 0; j < g.cols; ++j)
                                gt.at(static_cast<std::size_t>(idxs[i]), j) += g.at(i, j);
                    });
    }

    /// Each input row repeated `k` consecutive times (row-major pair order i).
    Var repeat_each_row(Var a, std::size_t k) {
        const Tensor<T>& va = value(a);
        Tensor<T> out(va.rows * k, va.cols);
        for (std::size_t i = 0; i < va.rows; ++i)
            for (std::size_t t = 0; t < k; ++t)
                std::copy(&va.data[i * va.cols], &va.data[(i + 1) * va.cols],
                          &out.data[(i * k + t) * va.cols]);
        return push(std::move(out), needs_grad(a), [this, a, k](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t i = 0; i < ga.rows; ++i)
                for (std::size_t t = 0; t < k; ++t)
                    for (std::size_t j = 0; j < ga.cols; ++j)
                        ga.at(i, j) += g.at(i * k + t, j);
        });
    }

    /// Whole matrix stacked k times (pair order j).
    Var tile_rows(Var a, std::size_t k) {
        const Tensor<T>& va = value(a);
        Tensor<T> out(va.rows * k, va.cols);
        for (std::size_t t = 0; t < k; ++t)
            std::copy(va.data.begin(), va.data.end(),
                      out.data.begin() + static_cast<std::ptrdiff_t>(t * va.size()));
        return push(std::move(out), needs_grad(a), [this, a, k](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const Tensor<T>& g = grad(self);
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga.data[i] += g.data[t * ga.size() + i];
        });
    }

    // -- reductions / losses -------------------------------------------------

    Var mean_all(Var a) {
        const Tensor<T>& va = value(a);
        T sum{0};
        for (T v : va.data) sum += v;
        Tensor<T> out = Tensor<T>::scalar(sum / static_cast<T>(va.size()));
        return push(std::move(out), needs_grad(a), [this, a](Var self) {
            if (!needs_grad(a)) return;
            Tensor<T>& ga = node(a).grad;
            const T g = grad(self).data[0] / static_cast<T>(ga.size());
            for (auto& v : ga.data) v += g;
        });
    }

    /// Mean squared error over unmasked elements. mask is per element (empty
    /// = all). Throws EmptyLoss when nothing is unmasked.
    Var mse(Var pred, const Tensor<T>& target, std::vector<std::uint8_t> mask = {}) {
        const Tensor<T>& vp = value(pred);
        check_same_shape(vp, target, "mse");
        if (!mask.empty() && mask.size() != vp.size())
            throw ShapeError("mse: mask size does not match");
        std::size_t n = 0;
        T sum{0};
        for (std::size_t i = 0; i < vp.size(); ++i) {
            if (!mask.empty() && !mask[i]) continue;
            const T d = vp.data[i] - target.data[i];
            sum += d * d;
            ++n;
        }
        if (n == 0) throw EmptyLoss("mse: mask removes every element");
        Tensor<T> out = Tensor<T>::scalar(sum / static_cast<T>(n));
        return push(std::move(out), needs_grad(pred),
                    [this, pred, target, m = std::move(mask), n](Var self) {
                        if (!needs_grad(pred)) return;
                        Tensor<T>& gp = node(pred).grad;
                        const Tensor<T>& vp = value(pred);
                        const T g = grad(self).data[0] * T{2} / static_cast<T>(n);
                        for (std::size_t i = 0; i < vp.size(); ++i) {
                            if (!m.empty() && !m[i]) continue;
                            gp.data[i] += g * (vp.data[i] - target.data[i]);
                        }
                    });
    }

    /// Mean cross-entropy from logits; one class target per row, mask per row.
    Var cross_entropy(Var logits, std::vector<int> targets, std::vector<std::uint8_t> mask = {}) {
        const Tensor<T>& vl = value(logits);
        if (targets.size() != vl.rows) throw ShapeError("cross_entropy: one target per row required");
        if (!mask.empty() && mask.size() != vl.rows)
            throw ShapeError("cross_entropy: mask size does not match rows");
        std::size_t n = 0;
        T sum{0};
        for (std::size_t i = 0; i < vl.rows; ++i) {
            if (!mask.empty() && !mask[i]) continue;
            const int t = targets[i];
            if (t < 0 || static_cast<std::size_t>(t) >= vl.cols)
                throw ShapeError("cross_entropy: target class out of range");
            T hi = vl.at(i, 0);
            for (std::size_t j = 1; j < vl.cols; ++j) hi = std::max(hi, vl.at(i, j));
            T denom{0};
            for (std::size_t j = 0; j < vl.cols; ++j) denom += std::exp(vl.at(i, j) - hi);
            sum += std::log(denom) + hi - vl.at(i, static_cast<std::size_t>(t));
            ++n;
        }
        if (n == 0) throw EmptyLoss("cross_entropy: mask removes every row");
        Tensor<T> out = Tensor<T>::scalar(sum / static_cast<T>(n));
        return push(std::move(out), needs_grad(logits),
                    [this, logits, ts = std::move(targets), m = std::move(mask), n](Var self) {
                        if (!needs_grad(logits)) return;
                        Tensor<T>& gl = node(logits).grad;
                        const Tensor<T>& vl = value(logits);
                        const T g = grad(self).data[0] / static_cast<T>(n);
                        for (std::size_t i = 0; i < vl.rows; ++i) {
                            if (!m.empty() && !m[i]) continue;
                            T hi = vl.at(i, 0);
                            for (std::size_t j = 1; j < vl.cols; ++j) hi = std::max(hi, vl.at(i, j));
                            T denom{0};
                            for (std::size_t j = 0; j < vl.cols; ++j)
                                denom += std::exp(vl.at(i, j) - hi);
                            for (std::size_t j = 0; j < vl.cols; ++j) {
                                const T p = std::exp(vl.at(i, j) - hi) / denom;
                                gl.at(i, j) += g * (p - (static_cast<int>(j) == ts[i] ? T{1} : T{0}));
                            }
                        }
                    });
    }

    // -- engine ---------------------------------------------------------------

    /// Seeds d(loss)/d(loss) = 1 and replays the tape backwards. The loss
    /// must be scalar.
    void backward(Var loss) {
        Node& ln = node(loss);
        if (!ln.value.is_scalar()) throw ContractError("backward requires a scalar loss");
        for (auto& nd : nodes_)
            if (nd.requires_grad) nd.grad = Tensor<T>::zeros(nd.value.rows, nd.value.cols);
        if (!ln.requires_grad) return;
        ln.grad.data[0] = T{1};
        for (int i = loss.id; i >= 0; --i) {
            Node& nd = nodes_[static_cast<std::size_t>(i)];
            if (nd.requires_grad && nd.backward) nd.backward(Var{i});
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        std::function<void(Var)> backward;
    };

    int check(Var v) const {
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractError("variable does not belong to this graph");
        return v.id;
    }
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(check(v))]; }
    bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(check(v))].requires_grad; }

    void accumulate(Var v, const Tensor<T>& g) {
        if (!needs_grad(v)) return;
        Tensor<T>& dst = node(v).grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
    }

    template <typename Fn>
    Var push(Tensor<T> value, bool requires_grad, Fn&& backward) {
        Node nd;
        nd.value = std::move(value);
        nd.requires_grad = requires_grad;
        if constexpr (!std::is_same_v<std::decay_t<Fn>, std::nullptr_t>) {
            if (requires_grad) nd.backward = std::forward<Fn>(backward);
        }
        nodes_.push_back(std::move(nd));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    static void gemm(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
        const std::size_t m = a.rows, k = a.cols, n = b.cols;
        for (std::size_t i = 0; i < m; ++i) {
            const T* arow = &a.data[i * k];
            T* crow = &c.data[i * n];
            for (std::size_t kk = 0; kk < k; ++kk) {
                const T av = arow[kk];
                if (av == T{0}) continue;
                const T* brow = &b.data[kk * n];
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    std::vector<Node> nodes_;
    bool has_unfrozen_dropout_ = false;
};

/// Parameters of one multi-head self-attention block. There is no key
/// bias: softmax is invariant to a constant shift of a row's scores, so a
/// key bias is unidentifiable (its gradient is identically zero).
struct AttnVars {
    Var wq, bq, wk, wv, bv, wo, bo;
};

/// Standard scaled dot-product self-attention over the full sequence.
/// key_mask (size = sequence length) hides padding rows from every query.
/// Composed from primitive ops so the backward pass comes for free.
template <typename T>
Var multi_head_self_attention(Graph<T>& g, Var x, int heads, const AttnVars& p,
                              const std::vector<std::uint8_t>& key_mask = {}) {
    const std::size_t h_dim = g.value(x).cols;
    if (heads < 1 || h_dim % static_cast<std::size_t>(heads) != 0)
        throw ConfigError("hidden dim " + std::to_string(h_dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    const std::size_t d_head = h_dim / static_cast<std::size_t>(heads);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_head)));

    const Var q = g.add_rowwise(g.matmul(x, p.wq), p.bq);
    const Var k = g.matmul(x, p.wk);
    const Var v = g.add_rowwise(g.matmul(x, p.wv), p.bv);

    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * d_head;
        const Var qh = g.slice_cols(q, c0, c0 + d_head);
        const Var kh = g.slice_cols(k, c0, c0 + d_head);
        const Var vh = g.slice_cols(v, c0, c0 + d_head);
        const Var scores = g.scale(g.matmul(qh, g.transpose(kh)), scale);
        const Var attn = g.softmax_rows(scores, key_mask);
        head_outs.push_back(g.matmul(attn, vh));
    }
    const Var joined = heads == 1 ? head_outs[0] : g.concat_cols(head_outs);
    return g.add_rowwise(g.matmul(joined, p.wo), p.bo);
}

}  // namespace sws::nn
