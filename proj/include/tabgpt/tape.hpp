#ifndef TABGPT_TAPE_HPP
#define TABGPT_TAPE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "tabgpt/rng.hpp"
#include "tabgpt/tensor.hpp"

namespace tabgpt {

// Reverse-mode tape. Nodes are created in topological order, so the backward
// pass is a single reverse sweep over the node list; each node is visited
// exactly once. A tape is confined to one logical thread.
template <typename Real>
class Tape {
public:
    using Ref = std::size_t;

    Ref leaf(Tensor<Real> v) { return push(std::move(v), nullptr); }

    const Tensor<Real>& value(Ref r) const { return nodes_[r].value; }
    const Tensor<Real>& grad(Ref r) const { return nodes_[r].grad; }

    std::size_t node_count() const { return nodes_.size(); }

    void backward(Ref loss) {
        if (nodes_[loss].value.size() != 1)
            throw Error("backward: loss must be a scalar node");
        for (auto& n : nodes_) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.data.size(), Real(0));
        }
        nodes_[loss].grad.data[0] = Real(1);
        for (std::size_t i = nodes_.size(); i-- > 0;)
            if (nodes_[i].back) nodes_[i].back(*this, i);
    }

    // ---- elementwise ----

    Ref add(Ref a, Ref b) {
        const auto &va = nodes_[a].value, &vb = nodes_[b].value;
        if (!va.same_shape(vb)) throw Error("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
        Tensor<Real> out = va;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
        return push(std::move(out), [a, b](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad.data;
            auto& ga = t.nodes_[a].grad.data;
            auto& gb = t.nodes_[b].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] += g[i]; }
        });
    }

    Ref mul(Ref a, Ref b) {
        const auto &va = nodes_[a].value, &vb = nodes_[b].value;
        if (!va.same_shape(vb)) throw Error("mul: shape mismatch");
        Tensor<Real> out = va;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
        return push(std::move(out), [a, b](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad.data;
            const auto& va = t.nodes_[a].value.data;
            const auto& vb = t.nodes_[b].value.data;
            auto& ga = t.nodes_[a].grad.data;
            auto& gb = t.nodes_[b].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i] * vb[i]; gb[i] += g[i] * va[i]; }
        });
    }

    Ref scale(Ref a, Real c) {
        Tensor<Real> out = nodes_[a].value;
        for (auto& v : out.data) v *= c;
        return push(std::move(out), [a, c](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad.data;
            auto& ga = t.nodes_[a].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
    }

    Ref relu(Ref a) {
        Tensor<Real> out = nodes_[a].value;
        for (auto& v : out.data) v = v > Real(0) ? v : Real(0);
        return push(std::move(out), [a](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad.data;
            const auto& va = t.nodes_[a].value.data;
            auto& ga = t.nodes_[a].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (va[i] > Real(0)) ga[i] += g[i];
        });
    }

    Ref sum(Ref a) {
        Real s = 0;
        for (Real v : nodes_[a].value.data) s += v;
        return push(Tensor<Real>::from({1}, {s}), [a](Tape& t, Ref self) {
            Real g = t.nodes_[self].grad.data[0];
            for (auto& ga : t.nodes_[a].grad.data) ga += g;
        });
    }

    // ---- matrix products ----

    // [m x k] * [k x n]
    Ref matmul(Ref a, Ref b) {
        const auto &va = nodes_[a].value, &vb = nodes_[b].value;
        check_rank2(va, "matmul lhs");
        check_rank2(vb, "matmul rhs");
        if (va.cols() != vb.rows())
            throw Error("matmul: inner dimensions disagree " + va.shape_str() + " vs " + vb.shape_str());
        const int m = va.rows(), k = va.cols(), n = vb.cols();
        Tensor<Real> out = Tensor<Real>::zeros({m, n});
        mm_nn(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), [a, b, m, k, n](Tape& t, Ref self) {
            const Real* g = t.nodes_[self].grad.data.data();
            // dA += G * B^T ; dB += A^T * G
            mm_nt(g, t.nodes_[b].value.data.data(), t.nodes_[a].grad.data.data(), m, n, k);
            mm_tn(t.nodes_[a].value.data.data(), g, t.nodes_[b].grad.data.data(), m, k, n);
        });
    }

    // [m x k] * [n x k]^T -> [m x n]
    Ref matmul_nt(Ref a, Ref b) {
        const auto &va = nodes_[a].value, &vb = nodes_[b].value;
        check_rank2(va, "matmul_nt lhs");
        check_rank2(vb, "matmul_nt rhs");
        if (va.cols() != vb.cols())
            throw Error("matmul_nt: inner dimensions disagree " + va.shape_str() + " vs " + vb.shape_str());
        const int m = va.rows(), k = va.cols(), n = vb.rows();
        Tensor<Real> out = Tensor<Real>::zeros({m, n});
        mm_nt(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), [a, b, m, k, n](Tape& t, Ref self) {
            const Real* g = t.nodes_[self].grad.data.data();
            // dA += G * B ; dB += G^T * A
            mm_nn(g, t.nodes_[b].value.data.data(), t.nodes_[a].grad.data.data(), m, n, k);
            mm_tn(g, t.nodes_[a].value.data.data(), t.nodes_[b].grad.data.data(), m, n, k);
        });
    }

    // ---- broadcasts, gathers, slices ----

    // [n x m] + row vector [m]
    Ref add_bias(Ref a, Ref bias) {
        const auto &va = nodes_[a].value, &vb = nodes_[bias].value;
        check_rank2(va, "add_bias input");
        if (vb.rank() != 1 || vb.shape[0] != va.cols())
            throw Error("add_bias: bias shape " + vb.shape_str() + " does not match " + va.shape_str());
        const int n = va.rows(), m = va.cols();
        Tensor<Real> out = va;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) out.at(i, j) += vb.data[j];
        return push(std::move(out), [a, bias, n, m](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad;
            auto& ga = t.nodes_[a].grad.data;
            auto& gb = t.nodes_[bias].grad.data;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    Real gv = g.at(i, j);
                    ga[static_cast<std::size_t>(i) * m + j] += gv;
                    gb[j] += gv;
                }
        });
    }

    // Embedding lookup: out row i = table row ids[i]. Gradient scatter-adds.
    Ref gather_rows(Ref table, std::vector<int> ids) {
        const auto& vt = nodes_[table].value;
        check_rank2(vt, "gather_rows table");
        const int m = vt.cols();
        for (int id : ids)
            if (id < 0 || id >= vt.rows())
                throw Error("gather_rows: row index " + std::to_string(id) + " out of range");
        Tensor<Real> out = Tensor<Real>::zeros({static_cast<int>(ids.size()), m});
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < m; ++j) out.at(static_cast<int>(i), j) = vt.at(ids[i], j);
        return push(std::move(out), [table, ids = std::move(ids), m](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad;
            auto& gt = t.nodes_[table].grad;
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < m; ++j) gt.at(ids[i], j) += g.at(static_cast<int>(i), j);
        });
    }

    Ref slice_rows(Ref a, int start, int count) {
        const auto& va = nodes_[a].value;
        check_rank2(va, "slice_rows input");
        if (start < 0 || count < 1 || start + count > va.rows())
            throw Error("slice_rows: range out of bounds");
        const int m = va.cols();
        Tensor<Real> out = Tensor<Real>::zeros({count, m});
        for (int i = 0; i < count; ++i)
            for (int j = 0; j < m; ++j) out.at(i, j) = va.at(start + i, j);
        return push(std::move(out), [a, start, count, m](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad;
            auto& ga = t.nodes_[a].grad;
            for (int i = 0; i < count; ++i)
                for (int j = 0; j < m; ++j) ga.at(start + i, j) += g.at(i, j);
        });
    }

    Ref concat_cols(const std::vector<Ref>& parts) {
        if (parts.empty()) throw Error("concat_cols: no inputs");
        const int n = nodes_[parts[0]].value.rows();
        int total = 0;
        for (Ref p : parts) {
            const auto& v = nodes_[p].value;
            check_rank2(v, "concat_cols input");
            if (v.rows() != n) throw Error("concat_cols: row counts disagree");
            total += v.cols();
        }
        Tensor<Real> out = Tensor<Real>::zeros({n, total});
        int off = 0;
        for (Ref p : parts) {
            const auto& v = nodes_[p].value;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < v.cols(); ++j) out.at(i, off + j) = v.at(i, j);
            off += v.cols();
        }
        return push(std::move(out), [parts, n](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad;
            int off = 0;
            for (Ref p : parts) {
                auto& gp = t.nodes_[p].grad;
                const int c = gp.cols();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j) gp.at(i, j) += g.at(i, off + j);
                off += c;
            }
        });
    }

    // ---- attention / loss primitives ----

    // Sets entries with col > row to -inf; identity on the lower triangle.
    Ref causal_mask_fill(Ref a) {
        const auto& va = nodes_[a].value;
        check_rank2(va, "causal_mask_fill input");
        if (va.rows() != va.cols()) throw Error("causal_mask_fill: matrix must be square");
        const int n = va.rows();
        Tensor<Real> out = va;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) out.at(i, j) = -std::numeric_limits<Real>::infinity();
        return push(std::move(out), [a, n](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad;
            auto& ga = t.nodes_[a].grad;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j <= i; ++j) ga.at(i, j) += g.at(i, j);
        });
    }

    Ref softmax_rows_op(Ref a) {
        Tensor<Real> out = tabgpt::softmax_rows(nodes_[a].value);
        const int r = out.rows(), c = out.cols();
        return push(std::move(out), [a, r, c](Tape& t, Ref self) {
            const auto& p = t.nodes_[self].value;
            const auto& g = t.nodes_[self].grad;
            auto& ga = t.nodes_[a].grad;
            for (int i = 0; i < r; ++i) {
                Real dot = 0;
                for (int j = 0; j < c; ++j) dot += g.at(i, j) * p.at(i, j);
                for (int j = 0; j < c; ++j) {
                    Real pij = p.at(i, j);
                    if (pij > Real(0)) ga.at(i, j) += pij * (g.at(i, j) - dot);
                }
            }
        });
    }

    // Inverted dropout; mask is sampled once at record time so replaying the
    // backward pass matches the forward draw.
    Ref dropout(Ref a, Real rate, Rng& rng) {
        if (rate < Real(0) || rate >= Real(1)) throw Error("dropout: rate must be in [0, 1)");
        if (rate == Real(0)) return a;
        const Real keep = Real(1) - rate;
        Tensor<Real> out = nodes_[a].value;
        std::vector<Real> mask(out.data.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = uniform01(rng) < static_cast<double>(keep) ? Real(1) / keep : Real(0);
            out.data[i] *= mask[i];
        }
        return push(std::move(out), [a, mask = std::move(mask)](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad.data;
            auto& ga = t.nodes_[a].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
        });
    }

    // Per-row layer normalization with learned gain and bias.
    Ref layer_norm(Ref x, Ref gain, Ref bias) {
        const auto& vx = nodes_[x].value;
        const auto& vg = nodes_[gain].value;
        const auto& vb = nodes_[bias].value;
        check_rank2(vx, "layer_norm input");
        const int n = vx.rows(), m = vx.cols();
        if (vg.rank() != 1 || vg.shape[0] != m || vb.rank() != 1 || vb.shape[0] != m)
            throw Error("layer_norm: gain/bias width does not match input");
        constexpr Real eps = Real(1e-5);
        Tensor<Real> out = Tensor<Real>::zeros({n, m});
        std::vector<Real> xhat(static_cast<std::size_t>(n) * m);
        std::vector<Real> inv_sigma(n);
        for (int i = 0; i < n; ++i) {
            Real mean = 0;
            for (int j = 0; j < m; ++j) mean += vx.at(i, j);
            mean /= m;
            Real var = 0;
            for (int j = 0; j < m; ++j) {
                Real d = vx.at(i, j) - mean;
                var += d * d;
            }
            var /= m;
            Real is = Real(1) / std::sqrt(var + eps);
            inv_sigma[i] = is;
            for (int j = 0; j < m; ++j) {
                Real h = (vx.at(i, j) - mean) * is;
                xhat[static_cast<std::size_t>(i) * m + j] = h;
                out.at(i, j) = vg.data[j] * h + vb.data[j];
            }
        }
        return push(std::move(out),
                    [x, gain, bias, n, m, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Tape& t, Ref self) {
            const auto& g = t.nodes_[self].grad;
            const auto& vg = t.nodes_[gain].value;
            auto& gx = t.nodes_[x].grad;
            auto& gg = t.nodes_[gain].grad;
            auto& gb = t.nodes_[bias].grad;
            for (int i = 0; i < n; ++i) {
                const Real* xh = xhat.data() + static_cast<std::size_t>(i) * m;
                Real mean_h = 0, mean_hx = 0;
                for (int j = 0; j < m; ++j) {
                    Real h = g.at(i, j) * vg.data[j];
                    mean_h += h;
                    mean_hx += h * xh[j];
                }
                mean_h /= m;
                mean_hx /= m;
                for (int j = 0; j < m; ++j) {
                    Real h = g.at(i, j) * vg.data[j];
                    gx.at(i, j) += (h - mean_h - xh[j] * mean_hx) * inv_sigma[i];
                    gg.data[j] += g.at(i, j) * xh[j];
                    gb.data[j] += g.at(i, j);
                }
            }
        });
    }

    // Mean over positions of -log softmax(logits)[t, target_t].
    Ref cross_entropy(Ref logits, const std::vector<int>& targets) {
        const auto& vl = nodes_[logits].value;
        check_rank2(vl, "cross_entropy logits");
        const int tn = vl.rows(), vsize = vl.cols();
        if (static_cast<int>(targets.size()) != tn)
            throw Error("cross_entropy: target count does not match logit rows");
        for (int tgt : targets)
            if (tgt < 0 || tgt >= vsize)
                throw Error("cross_entropy: target " + std::to_string(tgt) + " out of range [0, " +
                            std::to_string(vsize) + ")");
        Tensor<Real> probs = tabgpt::softmax_rows(vl);
        Real loss = 0;
        for (int i = 0; i < tn; ++i) {
            Real p = probs.at(i, targets[i]);
            loss -= std::log(p > Real(1e-30) ? p : Real(1e-30));
        }
        loss /= tn;
        return push(Tensor<Real>::from({1}, {loss}),
                    [logits, targets, probs = std::move(probs), tn, vsize](Tape& t, Ref self) {
            Real g = t.nodes_[self].grad.data[0] / tn;
            auto& gl = t.nodes_[logits].grad;
            for (int i = 0; i < tn; ++i)
                for (int j = 0; j < vsize; ++j)
                    gl.at(i, j) += g * (probs.at(i, j) - (j == targets[i] ? Real(1) : Real(0)));
        });
    }

private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        std::function<void(Tape&, Ref)> back;
    };

    std::vector<Node> nodes_;

    Ref push(Tensor<Real> v, std::function<void(Tape&, Ref)> back) {
        nodes_.push_back(Node{std::move(v), {}, std::move(back)});
        return nodes_.size() - 1;
    }

    static void check_rank2(const Tensor<Real>& t, const char* what) {
        if (t.rank() != 2) throw Error(std::string(what) + ": expected rank-2 tensor, got " + t.shape_str());
    }

    // C += A * B, shapes [m x k], [k x n].
    static void mm_nn(const Real* A, const Real* B, Real* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            Real* c = C + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                Real a = A[static_cast<std::size_t>(i) * k + p];
                if (a == Real(0)) continue;
                const Real* b = B + static_cast<std::size_t>(p) * n;
                for (int j = 0; j < n; ++j) c[j] += a * b[j];
            }
        }
    }

    // C += A * B^T, shapes [m x k], [n x k].
    static void mm_nt(const Real* A, const Real* B, Real* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            const Real* a = A + static_cast<std::size_t>(i) * k;
            Real* c = C + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const Real* b = B + static_cast<std::size_t>(j) * k;
                Real s = 0;
                for (int p = 0; p < k; ++p) s += a[p] * b[p];
                c[j] += s;
            }
        }
    }

    // C += A^T * B, shapes [m x k], [m x n], C is [k x n].
    static void mm_tn(const Real* A, const Real* B, Real* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            const Real* a = A + static_cast<std::size_t>(i) * k;
            const Real* b = B + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                Real av = a[p];
                if (av == Real(0)) continue;
                Real* c = C + static_cast<std::size_t>(p) * n;
                for (int j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
    }
};

} // namespace tabgpt

#endif
