#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mstn/graph.hpp"
#include "mstn/param_store.hpp"

namespace mstn {

enum class Variant { MT, CMT, MSTN_C, MSTN_U };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::MT: return "MT";
        case Variant::CMT: return "CMT";
        case Variant::MSTN_C: return "MSTN-C";
        case Variant::MSTN_U: return "MSTN-U";
    }
    return "MT";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "MT") return Variant::MT;
    if (s == "CMT") return Variant::CMT;
    if (s == "MSTN-C") return Variant::MSTN_C;
    if (s == "MSTN-U") return Variant::MSTN_U;
    throw MalformedInput("unknown model variant: " + s);
}

struct ModelConfig {
    Variant variant = Variant::MSTN_U;
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    double lambda = 0.1;
    int max_len = 2 + 16 * 24;  // tokens, including the tonic/mode prefix
    int vocab_size = 0;
    std::uint64_t seed = 1;

    int head_dim() const { return d_model / n_heads; }

    void check() const {
        if (d_model % n_heads != 0) throw ShapeMismatch("d_model must be divisible by n_heads");
        if (lambda < 0.0) throw MalformedInput("lambda must be >= 0");
        if (n_layers < 1 || vocab_size < 1 || max_len < kPrefixLenForCheck) {
            throw MalformedInput("degenerate model config");
        }
    }
    static constexpr int kPrefixLenForCheck = 3;

    nlohmann::json to_json() const {
        return {{"variant", variant_name(variant)}, {"n_layers", n_layers},
                {"n_heads", n_heads},               {"d_model", d_model},
                {"lambda", lambda},                 {"max_len", max_len},
                {"vocab_size", vocab_size},         {"seed", seed}};
    }
    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.variant = variant_from_name(j.at("variant").get<std::string>());
        c.n_layers = j.at("n_layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.lambda = j.at("lambda").get<double>();
        c.max_len = j.at("max_len").get<int>();
        c.vocab_size = j.value("vocab_size", 0);
        c.seed = j.value("seed", std::uint64_t{1});
        return c;
    }
};

// ---------------------------------------------------------------------------
// Separable attention cores (Fig. 2b / 2c wirings)
// ---------------------------------------------------------------------------

struct SeparableParamsC {
    Var wq, wk, wd, wx;
};

struct SeparableParamsU {
    Var wqx, wkx, wqd, wkd, wvd, wvx;
};

struct StreamPair {
    Var d, x;
};

// Shared-coefficient wiring: one causal attention matrix from the mixed
// state drives both value streams.
inline StreamPair separable_attention_C(Tape& t, Var h_d, Var h_x, const SeparableParamsC& p,
                                        int n_heads, double lambda) {
    Var mix = t.add_scaled(h_d, h_x, lambda);
    Var q = t.matmul(mix, p.wq);
    Var k = t.matmul(mix, p.wk);
    Var v_d = t.matmul(h_d, p.wd);
    Var v_x = t.matmul(h_x, p.wx);
    Var probs = t.attn_probs(q, k, n_heads);
    return {t.attn_apply(probs, v_d, n_heads), t.attn_apply(probs, v_x, n_heads)};
}

// Unshared wiring: the structure path computes its own coefficients from the
// structure state only, so it never reads the note stream.
inline StreamPair separable_attention_U(Tape& t, Var h_d, Var h_x, const SeparableParamsU& p,
                                        int n_heads, double lambda) {
    Var q_d = t.matmul(h_d, p.wqd);
    Var k_d = t.matmul(h_d, p.wkd);
    Var v_d = t.matmul(h_d, p.wvd);
    Var probs_d = t.attn_probs(q_d, k_d, n_heads);
    Var a_d = t.attn_apply(probs_d, v_d, n_heads);

    Var mix = t.add_scaled(h_d, h_x, lambda);
    Var q_x = t.matmul(mix, p.wqx);
    Var k_x = t.matmul(mix, p.wkx);
    Var v_x = t.matmul(h_x, p.wvx);
    Var probs_x = t.attn_probs(q_x, k_x, n_heads);
    Var a_x = t.attn_apply(probs_x, v_x, n_heads);
    return {a_d, a_x};
}

// Per-layer values recorded for diagnostics and the invariant tests.
struct ForwardTrace {
    std::vector<RealArray> h_d;  // structure stream after each block (index 0 = embedding)
    std::vector<RealArray> h_x;  // note / fused stream after each block
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class Model {
  public:
    Model() = default;
    Model(ModelConfig config, int n_templates) { init(config, n_templates); }

    void init(ModelConfig config, int n_templates) {
        config.check();
        config_ = config;
        n_templates_ = n_templates;
        store_ = ParamStore();
        Rng rng(config.seed);
        const int D = config.d_model;
        const int V = config.vocab_size;
        const double std_w = 0.02;

        store_.create_normal("emb.tok", V, D, std_w, rng);
        store_.create_normal("emb.pos", config.max_len + 1, D, std_w, rng);
        if (has_structure()) {
            if (n_templates < 1) throw MalformedInput("structure variants need templates");
            store_.create_normal("structure.e_d", n_templates, D, std_w, rng);
            // transform vectors start as the identity gain
            store_.create("structure.w_t", config.max_len, D).value.setOnes();
        }
        for (int l = 0; l < config.n_layers; ++l) {
            for (const std::string& stream : stream_names()) {
                const std::string base = "layer" + std::to_string(l) + "." + stream + ".";
                create_ln(base + "ln1");
                create_ln(base + "ln2");
                store_.create_normal(base + "ff.w1", D, 4 * D, std_w, rng);
                store_.create(base + "ff.b1", 1, 4 * D);
                store_.create_normal(base + "ff.w2", 4 * D, D, std_w, rng);
                store_.create(base + "ff.b2", 1, D);
            }
            const std::string base = "layer" + std::to_string(l) + ".attn.";
            switch (config.variant) {
                case Variant::MT:
                case Variant::CMT:
                    store_.create_normal(base + "wq", D, D, std_w, rng);
                    store_.create_normal(base + "wk", D, D, std_w, rng);
                    store_.create_normal(base + "wv", D, D, std_w, rng);
                    break;
                case Variant::MSTN_C:
                    store_.create_normal(base + "wq", D, D, std_w, rng);
                    store_.create_normal(base + "wk", D, D, std_w, rng);
                    store_.create_normal(base + "wd", D, D, std_w, rng);
                    store_.create_normal(base + "wx", D, D, std_w, rng);
                    break;
                case Variant::MSTN_U:
                    store_.create_normal(base + "wqx", D, D, std_w, rng);
                    store_.create_normal(base + "wkx", D, D, std_w, rng);
                    store_.create_normal(base + "wqd", D, D, std_w, rng);
                    store_.create_normal(base + "wkd", D, D, std_w, rng);
                    store_.create_normal(base + "wvd", D, D, std_w, rng);
                    store_.create_normal(base + "wvx", D, D, std_w, rng);
                    break;
            }
        }
        create_ln("head.ln");
        store_.create_normal("head.w", D, V, std_w, rng);
    }

    const ModelConfig& config() const { return config_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    int n_templates() const { return n_templates_; }
    bool has_structure() const { return config_.variant != Variant::MT; }

    // E_d sequence for a template: row t = w_t (elementwise) e_d.
    RealArray structure_embedding(int template_row, int length) const {
        check_template(template_row);
        if (length > config_.max_len) throw SequenceTooLong("structure embedding length");
        const RealArray& e = store_.at("structure.e_d").value;
        const RealArray& w = store_.at("structure.w_t").value;
        RealArray out(length, config_.d_model);
        for (int t = 0; t < length; ++t) {
            out.row(t) = w.row(t).cwiseProduct(e.row(template_row));
        }
        return out;
    }

    struct Embedded {
        Var h_d;          // structure stream (MSTN variants only; id -1 otherwise)
        Var h_x;          // note stream, or the fused state for MT/CMT
        bool two_stream = false;
    };

    // Layer-0 states. MT: fused token+position state. CMT: fused state with
    // the control code prepended (length L+1). MSTN: h_d = E_pos + E_d,
    // h_x = E_note.
    Embedded embed_inputs(Tape& t, const std::vector<int>& tokens, int template_row) {
        const int L = static_cast<int>(tokens.size());
        if (L < 1) throw LengthMismatch("empty token sequence");
        if (L > config_.max_len) {
            throw SequenceTooLong(std::to_string(L) + " > max_len " +
                                  std::to_string(config_.max_len));
        }
        for (int id : tokens) {
            if (id < 0 || id >= config_.vocab_size) throw MalformedSequence("token id range");
        }
        Var tok = t.gather_rows(t.param(store_.at("emb.tok")), tokens);
        Embedded out;
        switch (config_.variant) {
            case Variant::MT: {
                Var pos = t.gather_rows(t.param(store_.at("emb.pos")), iota(0, L));
                out.h_x = t.add(tok, pos);
                return out;
            }
            case Variant::CMT: {
                check_template(template_row);
                Var pos = t.gather_rows(t.param(store_.at("emb.pos")), iota(1, L));
                Var fused = t.add(tok, pos);
                Var control = t.mean_rows(structure_embedding_var(t, template_row, L));
                out.h_x = t.vstack(control, fused);
                return out;
            }
            case Variant::MSTN_C:
            case Variant::MSTN_U: {
                check_template(template_row);
                Var pos = t.gather_rows(t.param(store_.at("emb.pos")), iota(0, L));
                out.h_d = t.add(pos, structure_embedding_var(t, template_row, L));
                out.h_x = tok;
                out.two_stream = true;
                return out;
            }
        }
        throw Error("unreachable variant");
    }

    // Full forward pass: logits row t is the next-token distribution given
    // tokens[0..t]. For CMT the control position is dropped from the output.
    Var forward(Tape& t, const std::vector<int>& tokens, int template_row,
                ForwardTrace* trace = nullptr) {
        Embedded e = embed_inputs(t, tokens, template_row);
        const int H = config_.n_heads;
        const double lambda = config_.lambda;
        Var h_x = e.h_x;
        Var h_d = e.h_d;
        if (trace) {
            if (e.two_stream) trace->h_d.push_back(t.value(h_d));
            trace->h_x.push_back(t.value(h_x));
        }
        for (int l = 0; l < config_.n_layers; ++l) {
            const std::string attn = "layer" + std::to_string(l) + ".attn.";
            if (e.two_stream) {
                const std::string bd = "layer" + std::to_string(l) + ".d.";
                const std::string bx = "layer" + std::to_string(l) + ".x.";
                Var nd = ln(t, h_d, bd + "ln1");
                Var nx = ln(t, h_x, bx + "ln1");
                StreamPair a{};
                if (config_.variant == Variant::MSTN_C) {
                    SeparableParamsC p{pv(t, attn + "wq"), pv(t, attn + "wk"),
                                       pv(t, attn + "wd"), pv(t, attn + "wx")};
                    a = separable_attention_C(t, nd, nx, p, H, lambda);
                } else {
                    SeparableParamsU p{pv(t, attn + "wqx"), pv(t, attn + "wkx"),
                                       pv(t, attn + "wqd"), pv(t, attn + "wkd"),
                                       pv(t, attn + "wvd"), pv(t, attn + "wvx")};
                    a = separable_attention_U(t, nd, nx, p, H, lambda);
                }
                h_d = t.add(h_d, a.d);
                h_x = t.add(h_x, a.x);
                h_d = t.add(h_d, feed_forward(t, ln(t, h_d, bd + "ln2"), bd));
                h_x = t.add(h_x, feed_forward(t, ln(t, h_x, bx + "ln2"), bx));
            } else {
                const std::string bx = "layer" + std::to_string(l) + ".x.";
                Var nx = ln(t, h_x, bx + "ln1");
                Var q = t.matmul(nx, pv(t, attn + "wq"));
                Var k = t.matmul(nx, pv(t, attn + "wk"));
                Var v = t.matmul(nx, pv(t, attn + "wv"));
                Var probs = t.attn_probs(q, k, H);
                h_x = t.add(h_x, t.attn_apply(probs, v, H));
                h_x = t.add(h_x, feed_forward(t, ln(t, h_x, bx + "ln2"), bx));
            }
            if (trace) {
                if (e.two_stream) trace->h_d.push_back(t.value(h_d));
                trace->h_x.push_back(t.value(h_x));
            }
        }
        Var out = t.matmul(ln(t, h_x, "head.ln"), pv(t, "head.w"));
        if (config_.variant == Variant::CMT) {
            // drop the control position; row t again predicts tokens[t + 1]
            out = t.slice_rows(out, 1, static_cast<Eigen::Index>(tokens.size()));
        }
        return out;
    }

    // Convenience value-only forward.
    RealArray logits(const std::vector<int>& tokens, int template_row = -1,
                     ForwardTrace* trace = nullptr) {
        Tape tape;
        return tape.value(forward(tape, tokens, template_row, trace));
    }

  private:
    void create_ln(const std::string& base) {
        store_.create(base + ".g", 1, config_.d_model).value.setOnes();
        store_.create(base + ".b", 1, config_.d_model);
    }

    static std::vector<int> iota(int start, int n) {
        std::vector<int> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = start + i;
        return v;
    }

    std::vector<std::string> stream_names() const {
        if (config_.variant == Variant::MT || config_.variant == Variant::CMT) return {"x"};
        return {"d", "x"};
    }

    void check_template(int row) const {
        if (row < 0 || row >= n_templates_) {
            throw UnknownTemplate("template row " + std::to_string(row));
        }
    }

    Var structure_embedding_var(Tape& t, int template_row, int length) {
        Var e_row = t.gather_rows(t.param(store_.at("structure.e_d")), {template_row});
        Var w_rows = t.gather_rows(t.param(store_.at("structure.w_t")), iota(0, length));
        return t.mul_rowvec(w_rows, e_row);
    }

    Var pv(Tape& t, const std::string& name) { return t.param(store_.at(name)); }

    Var ln(Tape& t, Var x, const std::string& base) {
        return t.layer_norm(x, pv(t, base + ".g"), pv(t, base + ".b"));
    }

    Var feed_forward(Tape& t, Var x, const std::string& base) {
        Var h = t.add_rowvec(t.matmul(x, pv(t, base + "ff.w1")), pv(t, base + "ff.b1"));
        h = t.gelu(h);
        return t.add_rowvec(t.matmul(h, pv(t, base + "ff.w2")), pv(t, base + "ff.b2"));
    }

    ModelConfig config_;
    ParamStore store_;
    int n_templates_ = 0;
};

}  // namespace mstn
