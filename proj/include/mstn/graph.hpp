#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "mstn/param_store.hpp"
#include "mstn/tensor.hpp"

namespace mstn {

// Reverse-mode tape over dense matrices. Nodes are recorded in construction
// order (a topological order by construction); backward() seeds the scalar
// loss with 1 and sweeps the tape once in reverse.
//
// Per-head data uses column blocking: an attention-probability node for H
// heads over length L is an L x (H*L) matrix whose h-th column block is that
// head's L x L attention matrix. This mirrors Z = Att_M * V with Att_M kept
// as an explicit, reusable node so several value streams can share one set
// of coefficients.
class Tape {
  public:
    struct Var {
        int id = -1;
    };

    Var leaf(RealArray value) {
        return push(std::move(value), false, {});
    }

    Var param(Param& p) {
        Param* ptr = &p;
        Var out = push(p.value, true, {});
        node(out).backward = [ptr](Tape& t, int id) { ptr->grad += t.node(id).grad; };
        return out;
    }

    const RealArray& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

    void require_same_shape(Var a, Var b, const char* op) const {
        if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
            throw ShapeMismatch(std::string(op) + ": operand shapes differ");
        }
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        require_same_shape(a, b, "add");
        Var out = push(value(a) + value(b), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) t.grad_ref(a) += g;
            if (t.needs_grad(b)) t.grad_ref(b) += g;
        };
        return out;
    }

    Var sub(Var a, Var b) {
        require_same_shape(a, b, "sub");
        Var out = push(value(a) - value(b), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) t.grad_ref(a) += g;
            if (t.needs_grad(b)) t.grad_ref(b) -= g;
        };
        return out;
    }

    Var mul(Var a, Var b) {
        require_same_shape(a, b, "mul");
        Var out = push(value(a).cwiseProduct(value(b)), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) t.grad_ref(a) += g.cwiseProduct(t.value(b));
            if (t.needs_grad(b)) t.grad_ref(b) += g.cwiseProduct(t.value(a));
        };
        return out;
    }

    Var scale(Var a, double c) {
        Var out = push(value(a) * c, needs_grad(a), {a});
        node(out).backward = [a, c](Tape& t, int id) {
            if (t.needs_grad(a)) t.grad_ref(a) += t.node(id).grad * c;
        };
        return out;
    }

    // a + lambda * b
    Var add_scaled(Var a, Var b, double lambda) {
        require_same_shape(a, b, "add_scaled");
        Var out = push(value(a) + lambda * value(b), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b, lambda](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) t.grad_ref(a) += g;
            if (t.needs_grad(b)) t.grad_ref(b) += lambda * g;
        };
        return out;
    }

    // broadcast a 1xD row over all rows of a
    Var add_rowvec(Var a, Var b) {
        if (value(b).rows() != 1 || value(b).cols() != value(a).cols()) {
            throw ShapeMismatch("add_rowvec: b must be 1 x cols(a)");
        }
        RealArray out_v = value(a);
        out_v.rowwise() += value(b).row(0);
        Var out = push(std::move(out_v), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) t.grad_ref(a) += g;
            if (t.needs_grad(b)) t.grad_ref(b).row(0) += g.colwise().sum();
        };
        return out;
    }

    // scale every row of a elementwise by a 1xD row
    Var mul_rowvec(Var a, Var b) {
        if (value(b).rows() != 1 || value(b).cols() != value(a).cols()) {
            throw ShapeMismatch("mul_rowvec: b must be 1 x cols(a)");
        }
        RealArray out_v = value(a).array().rowwise() * value(b).row(0).array();
        Var out = push(std::move(out_v), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) {
                t.grad_ref(a).array() += g.array().rowwise() * t.value(b).row(0).array();
            }
            if (t.needs_grad(b)) {
                t.grad_ref(b).row(0) += g.cwiseProduct(t.value(a)).colwise().sum();
            }
        };
        return out;
    }

    // ---- structural ----

    Var matmul(Var a, Var b) {
        if (value(a).cols() != value(b).rows()) throw ShapeMismatch("matmul: inner dims differ");
        Var out = push(value(a) * value(b), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            if (t.needs_grad(a)) t.grad_ref(a).noalias() += g * t.value(b).transpose();
            if (t.needs_grad(b)) t.grad_ref(b).noalias() += t.value(a).transpose() * g;
        };
        return out;
    }

    Var gather_rows(Var a, std::vector<int> rows) {
        RealArray out_v(static_cast<Eigen::Index>(rows.size()), value(a).cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] < 0 || rows[i] >= value(a).rows()) {
                throw ShapeMismatch("gather_rows: index out of range");
            }
            out_v.row(static_cast<Eigen::Index>(i)) = value(a).row(rows[i]);
        }
        Var out = push(std::move(out_v), needs_grad(a), {a});
        node(out).backward = [a, rows = std::move(rows)](Tape& t, int id) {
            if (!t.needs_grad(a)) return;
            const RealArray& g = t.node(id).grad;
            RealArray& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
            }
        };
        return out;
    }

    Var repeat_row(Var a, Eigen::Index n) {
        if (value(a).rows() != 1) throw ShapeMismatch("repeat_row: input must be a single row");
        RealArray out_v = value(a).replicate(n, 1);
        Var out = push(std::move(out_v), needs_grad(a), {a});
        node(out).backward = [a](Tape& t, int id) {
            if (t.needs_grad(a)) t.grad_ref(a).row(0) += t.node(id).grad.colwise().sum();
        };
        return out;
    }

    Var mean_rows(Var a) {
        RealArray out_v = value(a).colwise().mean();
        Var out = push(std::move(out_v), needs_grad(a), {a});
        node(out).backward = [a](Tape& t, int id) {
            if (!t.needs_grad(a)) return;
            const double inv = 1.0 / static_cast<double>(t.value(a).rows());
            t.grad_ref(a).rowwise() += (t.node(id).grad.row(0) * inv);
        };
        return out;
    }

    Var vstack(Var a, Var b) {
        if (value(a).cols() != value(b).cols()) throw ShapeMismatch("vstack: column mismatch");
        RealArray out_v(value(a).rows() + value(b).rows(), value(a).cols());
        out_v.topRows(value(a).rows()) = value(a);
        out_v.bottomRows(value(b).rows()) = value(b);
        Var out = push(std::move(out_v), needs_grad(a) || needs_grad(b), {a, b});
        node(out).backward = [a, b](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            const Eigen::Index na = t.value(a).rows();
            if (t.needs_grad(a)) t.grad_ref(a) += g.topRows(na);
            if (t.needs_grad(b)) t.grad_ref(b) += g.bottomRows(g.rows() - na);
        };
        return out;
    }

    Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
        if (start < 0 || start + n > value(a).rows()) throw ShapeMismatch("slice_rows: range");
        Var out = push(value(a).middleRows(start, n), needs_grad(a), {a});
        node(out).backward = [a, start, n](Tape& t, int id) {
            if (t.needs_grad(a)) t.grad_ref(a).middleRows(start, n) += t.node(id).grad;
        };
        return out;
    }

    // ---- nonlinearities ----

    Var gelu(Var a) {
        constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
        const RealArray& x = value(a);
        RealArray inner = kC * (x.array() + 0.044715 * x.array().cube());
        RealArray th = inner.array().tanh();
        RealArray out_v = 0.5 * x.array() * (1.0 + th.array());
        Var out = push(std::move(out_v), needs_grad(a), {a});
        node(out).backward = [a, th = std::move(th)](Tape& t, int id) {
            if (!t.needs_grad(a)) return;
            constexpr double kC2 = 0.7978845608028654;
            const RealArray& x = t.value(a);
            const auto sech2 = 1.0 - th.array().square();
            const auto dinner = kC2 * (1.0 + 3.0 * 0.044715 * x.array().square());
            const auto d = 0.5 * (1.0 + th.array()) + 0.5 * x.array() * sech2 * dinner;
            t.grad_ref(a).array() += t.node(id).grad.array() * d;
        };
        return out;
    }

    // Per-row layer norm with gain/bias rows (1xD).
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const RealArray& xv = value(x);
        const Eigen::Index D = xv.cols();
        if (value(gain).rows() != 1 || value(gain).cols() != D || value(bias).rows() != 1 ||
            value(bias).cols() != D) {
            throw ShapeMismatch("layer_norm: gain/bias must be 1 x D");
        }
        RealArray xhat(xv.rows(), D);
        RealArray inv_std(xv.rows(), 1);
        for (Eigen::Index i = 0; i < xv.rows(); ++i) {
            const double mean = xv.row(i).mean();
            const double var = (xv.row(i).array() - mean).square().mean();
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std(i, 0) = is;
            xhat.row(i) = (xv.row(i).array() - mean) * is;
        }
        RealArray out_v = xhat.array().rowwise() * value(gain).row(0).array();
        out_v.rowwise() += value(bias).row(0);
        Var out = push(std::move(out_v), false, {x, gain, bias});
        node(out).backward = [x, gain, bias, xhat = std::move(xhat),
                              inv_std = std::move(inv_std)](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            const Eigen::Index D = g.cols();
            if (t.needs_grad(gain)) {
                t.grad_ref(gain).row(0) += g.cwiseProduct(xhat).colwise().sum();
            }
            if (t.needs_grad(bias)) t.grad_ref(bias).row(0) += g.colwise().sum();
            if (t.needs_grad(x)) {
                RealArray& gx = t.grad_ref(x);
                const auto gamma = t.value(gain).row(0).array();
                for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const auto gy = g.row(i).array() * gamma;
                    const double m1 = gy.mean();
                    const double m2 = (gy * xhat.row(i).array()).mean();
                    gx.row(i).array() +=
                        inv_std(i, 0) * (gy - m1 - xhat.row(i).array() * m2);
                }
            }
            (void)D;
        };
        return out;
    }

    // ---- attention ----

    // Causal multi-head attention coefficients: softmax(q_h k_h^T / sqrt(Dh))
    // per head, head-blocked into an L x (H*L) matrix. Masked entries are
    // exactly zero.
    Var attn_probs(Var q, Var k, int n_heads) {
        const RealArray& qv = value(q);
        const RealArray& kv = value(k);
        if (qv.rows() != kv.rows() || qv.cols() != kv.cols()) {
            throw ShapeMismatch("attn_probs: q/k shape mismatch");
        }
        const Eigen::Index L = qv.rows();
        const Eigen::Index D = qv.cols();
        if (D % n_heads != 0) throw ShapeMismatch("attn_probs: D not divisible by heads");
        const Eigen::Index Dh = D / n_heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));

        RealArray probs(L, static_cast<Eigen::Index>(n_heads) * L);
        for (int h = 0; h < n_heads; ++h) {
            const auto qh = qv.middleCols(h * Dh, Dh);
            const auto kh = kv.middleCols(h * Dh, Dh);
            RealArray scores = (qh * kh.transpose()) * scale;
            auto block = probs.middleCols(static_cast<Eigen::Index>(h) * L, L);
            for (Eigen::Index i = 0; i < L; ++i) {
                const Eigen::Index nvalid = i + 1;
                const double mx = scores.row(i).head(nvalid).maxCoeff();
                Eigen::ArrayXd e = (scores.row(i).head(nvalid).array() - mx).exp();
                const double z = e.sum();
                block.row(i).setZero();
                block.row(i).head(nvalid) = (e / z).matrix();
            }
        }
        Var out = push(std::move(probs), needs_grad(q) || needs_grad(k), {q, k});
        node(out).backward = [q, k, n_heads, scale](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            const RealArray& pv = t.node(id).value;
            const RealArray& qv = t.value(q);
            const RealArray& kv = t.value(k);
            const Eigen::Index L = qv.rows();
            const Eigen::Index Dh = qv.cols() / n_heads;
            for (int h = 0; h < n_heads; ++h) {
                const auto ph = pv.middleCols(static_cast<Eigen::Index>(h) * L, L);
                const auto gh = g.middleCols(static_cast<Eigen::Index>(h) * L, L);
                // dS = P .* (dP - rowsum(dP .* P)); masked entries have P = 0
                RealArray ds(L, L);
                for (Eigen::Index i = 0; i < L; ++i) {
                    const double dot = gh.row(i).dot(ph.row(i));
                    ds.row(i) = (ph.row(i).array() * (gh.row(i).array() - dot)).matrix();
                }
                const auto qh = qv.middleCols(static_cast<Eigen::Index>(h) * Dh, Dh);
                const auto kh = kv.middleCols(static_cast<Eigen::Index>(h) * Dh, Dh);
                if (t.needs_grad(q)) {
                    t.grad_ref(q).middleCols(static_cast<Eigen::Index>(h) * Dh, Dh).noalias() +=
                        scale * (ds * kh);
                }
                if (t.needs_grad(k)) {
                    t.grad_ref(k).middleCols(static_cast<Eigen::Index>(h) * Dh, Dh).noalias() +=
                        scale * (ds.transpose() * qh);
                }
            }
        };
        return out;
    }

    // Apply head-blocked attention coefficients to a value stream.
    Var attn_apply(Var probs, Var v, int n_heads) {
        const RealArray& pv = value(probs);
        const RealArray& vv = value(v);
        const Eigen::Index L = vv.rows();
        if (pv.rows() != L || pv.cols() != static_cast<Eigen::Index>(n_heads) * L) {
            throw ShapeMismatch("attn_apply: probs shape mismatch");
        }
        if (vv.cols() % n_heads != 0) throw ShapeMismatch("attn_apply: D not divisible");
        const Eigen::Index Dh = vv.cols() / n_heads;
        RealArray out_v(L, vv.cols());
        for (int h = 0; h < n_heads; ++h) {
            out_v.middleCols(static_cast<Eigen::Index>(h) * Dh, Dh).noalias() =
                pv.middleCols(static_cast<Eigen::Index>(h) * L, L) *
                vv.middleCols(static_cast<Eigen::Index>(h) * Dh, Dh);
        }
        Var out = push(std::move(out_v), needs_grad(probs) || needs_grad(v), {probs, v});
        node(out).backward = [probs, v, n_heads](Tape& t, int id) {
            const RealArray& g = t.node(id).grad;
            const RealArray& pv = t.value(probs);
            const RealArray& vv = t.value(v);
            const Eigen::Index L = vv.rows();
            const Eigen::Index Dh = vv.cols() / n_heads;
            for (int h = 0; h < n_heads; ++h) {
                const auto ph = pv.middleCols(static_cast<Eigen::Index>(h) * L, L);
                const auto vh = vv.middleCols(static_cast<Eigen::Index>(h) * Dh, Dh);
                const auto gh = g.middleCols(static_cast<Eigen::Index>(h) * Dh, Dh);
                if (t.needs_grad(probs)) {
                    t.grad_ref(probs)
                        .middleCols(static_cast<Eigen::Index>(h) * L, L)
                        .noalias() += gh * vh.transpose();
                }
                if (t.needs_grad(v)) {
                    t.grad_ref(v)
                        .middleCols(static_cast<Eigen::Index>(h) * Dh, Dh)
                        .noalias() += ph.transpose() * gh;
                }
            }
        };
        return out;
    }

    // ---- losses ----

    // Mean next-token cross entropy: logits row t scores targets[t + 1],
    // t in [0, L-2]. Returns a 1x1 node.
    Var cross_entropy_next(Var logits, const std::vector<int>& targets) {
        const RealArray& lv = value(logits);
        const Eigen::Index L = lv.rows();
        if (static_cast<Eigen::Index>(targets.size()) != L) {
            throw LengthMismatch("cross_entropy_next: logits rows != token count");
        }
        if (L < 2) throw LengthMismatch("cross_entropy_next: need at least 2 tokens");
        const Eigen::Index n_terms = L - 1;
        RealArray probs(n_terms, lv.cols());
        double loss = 0.0;
        for (Eigen::Index t = 0; t < n_terms; ++t) {
            const int target = targets[static_cast<std::size_t>(t + 1)];
            if (target < 0 || target >= lv.cols()) {
                throw LengthMismatch("cross_entropy_next: target id out of range");
            }
            const double mx = lv.row(t).maxCoeff();
            Eigen::ArrayXd e = (lv.row(t).array() - mx).exp();
            const double z = e.sum();
            probs.row(t) = (e / z).matrix();
            loss -= std::log(probs(t, target));
        }
        loss /= static_cast<double>(n_terms);
        RealArray out_v(1, 1);
        out_v(0, 0) = loss;
        Var out = push(std::move(out_v), needs_grad(logits), {logits});
        node(out).backward = [logits, targets, probs = std::move(probs)](Tape& t, int id) {
            if (!t.needs_grad(logits)) return;
            const double g = t.node(id).grad(0, 0);
            const Eigen::Index n_terms = probs.rows();
            const double inv = g / static_cast<double>(n_terms);
            RealArray& gl = t.grad_ref(logits);
            for (Eigen::Index r = 0; r < n_terms; ++r) {
                gl.row(r) += inv * probs.row(r);
                gl(r, targets[static_cast<std::size_t>(r + 1)]) -= inv;
            }
        };
        return out;
    }

    Var sum_all(Var a) {
        RealArray out_v(1, 1);
        out_v(0, 0) = value(a).sum();
        Var out = push(std::move(out_v), needs_grad(a), {a});
        node(out).backward = [a](Tape& t, int id) {
            if (t.needs_grad(a)) t.grad_ref(a).array() += t.node(id).grad(0, 0);
        };
        return out;
    }

    // ---- backward ----

    void backward(Var loss) {
        if (value(loss).rows() != 1 || value(loss).cols() != 1) {
            throw NonScalarLoss("backward: loss must be 1x1");
        }
        grad_ref(loss)(0, 0) = 1.0;
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, id);
        }
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        RealArray value;
        RealArray grad;  // lazily allocated
        bool needs_grad = false;
        std::function<void(Tape&, int)> backward;
    };


    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

    bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

    RealArray& grad_ref(Var v) {
        Node& n = node(v);
        if (n.grad.size() == 0) n.grad = RealArray::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    Var push(RealArray value, bool needs, std::initializer_list<Var> parents) {
        bool any = needs;
        for (Var p : parents) any = any || nodes_[static_cast<std::size_t>(p.id)].needs_grad;
        Node n;
        n.value = std::move(value);
        n.needs_grad = any;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

using Var = Tape::Var;

}  // namespace mstn
