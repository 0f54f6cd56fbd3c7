#pragma once

#include <vector>

#include "mstn/model.hpp"

namespace mstn {

// Incremental (KV-cached) forward pass for generation. Feeding token t yields
// the same logits row as a full forward over the prefix, without recomputing
// earlier positions.
//
// For MSTN-U the structure stream depends only on (template, length), so it
// is precomputed for the whole target length at construction; every sample
// drawn from the same session geometry reuses bit-identical structure states.
class InferenceSession {
  public:
    InferenceSession(const Model& model, int template_row, int total_len)
        : model_(model),
          cfg_(model.config()),
          template_row_(template_row),
          total_len_(total_len) {
        if (total_len < 1 || total_len > cfg_.max_len) {
            throw SequenceTooLong("generation length " + std::to_string(total_len));
        }
        const int L = cfg_.n_layers;
        layers_.resize(static_cast<std::size_t>(L));
        if (cfg_.variant == Variant::MSTN_U) precompute_structure_stream();
        if (cfg_.variant == Variant::CMT) feed_control_position();
    }

    int position() const { return pos_; }

    // Feed the next token; returns the next-token logit row.
    Eigen::RowVectorXd step(int token) {
        if (token < 0 || token >= cfg_.vocab_size) throw MalformedSequence("token id range");
        if (pos_ >= total_len_) throw SequenceTooLong("stepping past the session length");
        const RealArray& tok_emb = model_.store().at("emb.tok").value;
        const RealArray& pos_emb = model_.store().at("emb.pos").value;

        Eigen::RowVectorXd h_x;
        Eigen::RowVectorXd h_d;
        switch (cfg_.variant) {
            case Variant::MT:
                h_x = tok_emb.row(token) + pos_emb.row(pos_);
                break;
            case Variant::CMT:
                h_x = tok_emb.row(token) + pos_emb.row(pos_ + 1);
                break;
            case Variant::MSTN_C:
                h_x = tok_emb.row(token);
                h_d = pos_emb.row(pos_) + structure_row(pos_);
                break;
            case Variant::MSTN_U:
                h_x = tok_emb.row(token);
                break;
        }
        for (int l = 0; l < cfg_.n_layers; ++l) {
            switch (cfg_.variant) {
                case Variant::MT:
                case Variant::CMT: step_fused(l, h_x); break;
                case Variant::MSTN_C: step_mstn_c(l, h_d, h_x); break;
                case Variant::MSTN_U: step_mstn_u(l, h_x); break;
            }
        }
        ++pos_;
        Eigen::RowVectorXd out = ln_row(h_x, "head.ln");
        return out * model_.store().at("head.w").value;
    }

    // Structure hidden states per layer (MSTN-U), full session length.
    const std::vector<RealArray>& structure_states() const { return hd_layers_; }

  private:
    struct LayerCache {
        RealArray k;    // shared coefficients (MT/CMT/MSTN-C) or note path (MSTN-U)
        RealArray v_x;
        RealArray v_d;  // MSTN-C only
        int rows = 0;
    };

    void append_row(RealArray& m, const Eigen::RowVectorXd& r, int row) {
        if (m.rows() < row + 1) {
            RealArray grown(total_len_ + 1, r.cols());
            if (m.size() > 0) grown.topRows(m.rows()) = m;
            m = std::move(grown);
        }
        m.row(row) = r;
    }

    Eigen::RowVectorXd ln_row(const Eigen::RowVectorXd& x, const std::string& base) const {
        const RealArray& g = model_.store().at(base + ".g").value;
        const RealArray& b = model_.store().at(base + ".b").value;
        const double mean = x.mean();
        const double var = (x.array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        return (((x.array() - mean) * inv) * g.row(0).array()).matrix() + b.row(0);
    }

    Eigen::RowVectorXd feed_forward_row(const Eigen::RowVectorXd& x,
                                        const std::string& base) const {
        const auto& s = model_.store();
        Eigen::RowVectorXd h =
            x * s.at(base + "ff.w1").value + s.at(base + "ff.b1").value.row(0);
        constexpr double kC = 0.7978845608028654;
        h = (0.5 * h.array() * (1.0 + (kC * (h.array() + 0.044715 * h.array().cube())).tanh()))
                .matrix();
        return h * s.at(base + "ff.w2").value + s.at(base + "ff.b2").value.row(0);
    }

    // causal attention of one query row over cached keys; per-head softmax
    Eigen::RowVectorXd attend_row(const Eigen::RowVectorXd& q, const RealArray& keys,
                                  const RealArray& values, int rows) const {
        const int H = cfg_.n_heads;
        const Eigen::Index Dh = q.cols() / H;
        const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));
        Eigen::RowVectorXd out(values.cols());
        for (int h = 0; h < H; ++h) {
            const auto kh = keys.middleCols(h * Dh, Dh).topRows(rows);
            const auto vh = values.middleCols(h * Dh, Dh).topRows(rows);
            Eigen::VectorXd scores = (kh * q.middleCols(h * Dh, Dh).transpose()) * scale;
            const double mx = scores.maxCoeff();
            Eigen::ArrayXd e = (scores.array() - mx).exp();
            const Eigen::VectorXd probs = (e / e.sum()).matrix();
            out.middleCols(h * Dh, Dh) = probs.transpose() * vh;
        }
        return out;
    }

    void step_fused(int l, Eigen::RowVectorXd& h_x) {
        const auto& s = model_.store();
        const std::string attn = "layer" + std::to_string(l) + ".attn.";
        const std::string bx = "layer" + std::to_string(l) + ".x.";
        LayerCache& cache = layers_[static_cast<std::size_t>(l)];
        const Eigen::RowVectorXd n = ln_row(h_x, bx + "ln1");
        const Eigen::RowVectorXd q = n * s.at(attn + "wq").value;
        append_row(cache.k, n * s.at(attn + "wk").value, cache.rows);
        append_row(cache.v_x, n * s.at(attn + "wv").value, cache.rows);
        ++cache.rows;
        h_x += attend_row(q, cache.k, cache.v_x, cache.rows);
        h_x += feed_forward_row(ln_row(h_x, bx + "ln2"), bx);
    }

    void step_mstn_c(int l, Eigen::RowVectorXd& h_d, Eigen::RowVectorXd& h_x) {
        const auto& s = model_.store();
        const std::string attn = "layer" + std::to_string(l) + ".attn.";
        const std::string bd = "layer" + std::to_string(l) + ".d.";
        const std::string bx = "layer" + std::to_string(l) + ".x.";
        LayerCache& cache = layers_[static_cast<std::size_t>(l)];
        const Eigen::RowVectorXd nd = ln_row(h_d, bd + "ln1");
        const Eigen::RowVectorXd nx = ln_row(h_x, bx + "ln1");
        const Eigen::RowVectorXd mix = nd + cfg_.lambda * nx;
        const Eigen::RowVectorXd q = mix * s.at(attn + "wq").value;
        append_row(cache.k, mix * s.at(attn + "wk").value, cache.rows);
        append_row(cache.v_d, nd * s.at(attn + "wd").value, cache.rows);
        append_row(cache.v_x, nx * s.at(attn + "wx").value, cache.rows);
        ++cache.rows;
        h_d += attend_row(q, cache.k, cache.v_d, cache.rows);
        h_x += attend_row(q, cache.k, cache.v_x, cache.rows);
        h_d += feed_forward_row(ln_row(h_d, bd + "ln2"), bd);
        h_x += feed_forward_row(ln_row(h_x, bx + "ln2"), bx);
    }

    void step_mstn_u(int l, Eigen::RowVectorXd& h_x) {
        const auto& s = model_.store();
        const std::string attn = "layer" + std::to_string(l) + ".attn.";
        const std::string bx = "layer" + std::to_string(l) + ".x.";
        LayerCache& cache = layers_[static_cast<std::size_t>(l)];
        const Eigen::RowVectorXd nx = ln_row(h_x, bx + "ln1");
        // mix = nd + lambda*nx with nd precomputed for this layer/position
        const Eigen::RowVectorXd mix =
            nd_layers_[static_cast<std::size_t>(l)].row(pos_) + cfg_.lambda * nx;
        const Eigen::RowVectorXd q = mix * s.at(attn + "wqx").value;
        append_row(cache.k, mix * s.at(attn + "wkx").value, cache.rows);
        append_row(cache.v_x, nx * s.at(attn + "wvx").value, cache.rows);
        ++cache.rows;
        h_x += attend_row(q, cache.k, cache.v_x, cache.rows);
        h_x += feed_forward_row(ln_row(h_x, bx + "ln2"), bx);
        // the structure stream contribution to later layers is already in
        // nd_layers_; nothing else to update
    }

    Eigen::RowVectorXd structure_row(int t) const {
        const auto& s = model_.store();
        return s.at("structure.w_t")
            .value.row(t)
            .cwiseProduct(s.at("structure.e_d").value.row(template_row_));
    }

    // Full-length structure stream for MSTN-U: the same matrix computation a
    // batched forward would do, done once.
    void precompute_structure_stream() {
        const auto& s = model_.store();
        const int L = total_len_;
        const int H = cfg_.n_heads;
        RealArray h_d = s.at("emb.pos").value.topRows(L) +
                        model_.structure_embedding(template_row_, L);
        hd_layers_.push_back(h_d);
        nd_layers_.clear();
        for (int l = 0; l < cfg_.n_layers; ++l) {
            const std::string attn = "layer" + std::to_string(l) + ".attn.";
            const std::string bd = "layer" + std::to_string(l) + ".d.";
            Tape t;
            Var hd_var = t.leaf(h_d);
            Var nd = t.layer_norm(hd_var, t.leaf(s.at(bd + "ln1.g").value),
                                  t.leaf(s.at(bd + "ln1.b").value));
            Var probs = t.attn_probs(t.matmul(nd, t.leaf(s.at(attn + "wqd").value)),
                                     t.matmul(nd, t.leaf(s.at(attn + "wkd").value)), H);
            Var a_d = t.attn_apply(probs, t.matmul(nd, t.leaf(s.at(attn + "wvd").value)), H);
            nd_layers_.push_back(t.value(nd));
            h_d += t.value(a_d);
            Tape t2;
            Var hd2 = t2.leaf(h_d);
            Var n2 = t2.layer_norm(hd2, t2.leaf(s.at(bd + "ln2.g").value),
                                   t2.leaf(s.at(bd + "ln2.b").value));
            Var ff1 = t2.add_rowvec(t2.matmul(n2, t2.leaf(s.at(bd + "ff.w1").value)),
                                    t2.leaf(s.at(bd + "ff.b1").value));
            Var ff2 = t2.add_rowvec(t2.matmul(t2.gelu(ff1), t2.leaf(s.at(bd + "ff.w2").value)),
                                    t2.leaf(s.at(bd + "ff.b2").value));
            h_d += t2.value(ff2);
            hd_layers_.push_back(h_d);
        }
        // note-path mix terms need the normalized structure state per layer;
        // nd_layers_[l] holds LN1_d(h_d^l)
    }

    // CMT: process the prepended control embedding through the caches.
    void feed_control_position() {
        const int L = total_len_;
        RealArray e_seq = model_.structure_embedding(template_row_, L);
        Eigen::RowVectorXd h = e_seq.colwise().mean();
        for (int l = 0; l < cfg_.n_layers; ++l) step_fused(l, h);
        // output above the control position is dropped
    }

    const Model& model_;
    ModelConfig cfg_;
    int template_row_;
    int total_len_;
    int pos_ = 0;

    std::vector<LayerCache> layers_;
    std::vector<RealArray> hd_layers_;  // MSTN-U: h_d per block boundary
    std::vector<RealArray> nd_layers_;  // MSTN-U: LN1_d(h_d^l) per layer
};

}  // namespace mstn
