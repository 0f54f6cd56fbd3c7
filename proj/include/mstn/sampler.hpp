#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mstn/inference.hpp"
#include "mstn/tokenizer.hpp"
#include "mstn/trainer.hpp"

namespace mstn {

// Categorical draw from softmax(logits / temperature).
inline int sample_next(const Eigen::RowVectorXd& logits, double temperature, Rng& rng) {
    if (temperature <= 0.0) throw MalformedInput("temperature must be > 0");
    const double mx = logits.maxCoeff();
    Eigen::ArrayXd p = ((logits.array() - mx) / temperature).exp();
    p /= p.sum();
    const double u = rng.next_double();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += p(i);
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
}

// Draw restricted to `allowed` token ids (well-formedness of the frame
// grammar; tonality is never constrained).
inline int sample_next_masked(const Eigen::RowVectorXd& logits, const std::vector<int>& allowed,
                              double temperature, Rng& rng) {
    if (allowed.empty()) throw MalformedInput("empty sampling support");
    Eigen::RowVectorXd sub(static_cast<Eigen::Index>(allowed.size()));
    for (std::size_t i = 0; i < allowed.size(); ++i) {
        sub(static_cast<Eigen::Index>(i)) = logits(allowed[i]);
    }
    return allowed[static_cast<std::size_t>(sample_next(sub, temperature, rng))];
}

struct GenerationRequest {
    enum class Mode { free, continuation };
    Mode mode = Mode::free;
    std::string template_id;
    int template_row = -1;
    int n_bars = 16;
    // continuation: tonic/mode token ids plus exactly one bar of frame tokens
    int motif_tonic = -1;
    int motif_mode = -1;
    std::vector<int> motif;
    int samples_per_template = 2;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

struct GeneratedSample {
    TokenSequence sequence;
    std::vector<RealArray> structure_states;  // MSTN-U session states (diagnostics)
};

// Autoregressive generation conditioned on a template's structure embedding.
// Free mode samples everything including the tonic and mode; continuation
// primes with [tonic, mode, motif] and keeps that prefix verbatim.
inline std::vector<GeneratedSample> generate(const Model& model, const Vocab& vocab,
                                             const GenerationRequest& req) {
    if (req.n_bars < 1 || req.n_bars > kMaxBars) {
        throw MalformedInput("n_bars out of range");
    }
    if (model.has_structure() &&
        (req.template_row < 0 || req.template_row >= model.n_templates())) {
        throw UnknownTemplate(req.template_id);
    }
    std::vector<int> prime;  // without the BOS pad
    if (req.mode == GenerationRequest::Mode::continuation) {
        if (static_cast<int>(req.motif.size()) != kTicksPerBar) {
            throw MotifLengthError("motif must be exactly " + std::to_string(kTicksPerBar) +
                                   " frame tokens");
        }
        if (req.motif_tonic < 0 || vocab.kind(req.motif_tonic) != TokenKind::tonic ||
            req.motif_mode < 0 || vocab.kind(req.motif_mode) != TokenKind::mode) {
            throw MotifLengthError("continuation requires tonic and mode tokens");
        }
        for (int id : req.motif) {
            if (!vocab.is_frame_token(id)) throw MotifLengthError("motif contains non-frame tokens");
        }
        prime.push_back(req.motif_tonic);
        prime.push_back(req.motif_mode);
        prime.insert(prime.end(), req.motif.begin(), req.motif.end());
    }

    const int out_len = kPrefixLen + req.n_bars * kTicksPerBar;
    const int total_len = out_len + 1;  // BOS pad in front
    const std::vector<int> tonics = vocab.ids_of_kind(TokenKind::tonic);
    const std::vector<int> modes = vocab.ids_of_kind(TokenKind::mode);
    std::vector<int> frames = vocab.ids_of_kind(TokenKind::pitch);
    frames.push_back(vocab.rest_id());
    frames.push_back(vocab.hold_id());

    std::vector<GeneratedSample> out;
    for (int sample = 0; sample < req.samples_per_template; ++sample) {
        Rng rng(req.seed + 0x51ed2701a3c5u * static_cast<std::uint64_t>(sample + 1));
        InferenceSession session(model, req.template_row, total_len);
        std::vector<int> seq;
        seq.reserve(static_cast<std::size_t>(out_len));
        Eigen::RowVectorXd logits = session.step(vocab.pad_id());
        for (int id : prime) {
            seq.push_back(id);
            logits = session.step(id);
        }
        while (static_cast<int>(seq.size()) < out_len) {
            const int pos = static_cast<int>(seq.size());
            const std::vector<int>* allowed = &frames;
            if (pos == 0) allowed = &tonics;
            else if (pos == 1) allowed = &modes;
            const int id = sample_next_masked(logits, *allowed, req.temperature, rng);
            seq.push_back(id);
            if (static_cast<int>(seq.size()) < out_len) logits = session.step(id);
        }
        GeneratedSample gs;
        gs.sequence.template_id = req.template_id;
        gs.sequence.tokens = std::move(seq);
        gs.structure_states = session.structure_states();
        out.push_back(std::move(gs));
    }
    return out;
}

}  // namespace mstn
