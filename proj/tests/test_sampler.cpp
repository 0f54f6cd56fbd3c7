#include <gtest/gtest.h>

#include "mstn/inference.hpp"
#include "mstn/protocol.hpp"
#include "mstn/sampler.hpp"
#include "test_util.hpp"

using namespace mstn;

namespace {

struct SamplerSetup {
    Vocab vocab;
    TemplateRegistry registry;
    std::vector<Score> corpus;
    Model model;
};

SamplerSetup sampler_setup(Variant variant, int n_pieces, int n_bars, std::uint64_t seed) {
    Rng rng(seed);
    SamplerSetup s;
    for (int i = 0; i < n_pieces; ++i) {
        s.corpus.push_back(testutil::random_score(rng, n_bars, "p" + std::to_string(i)));
        s.registry.add(s.corpus.back().id);
    }
    s.vocab = Vocab::build(s.corpus);
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 32;
    cfg.max_len = kPrefixLen + n_bars * kTicksPerBar + 1;
    cfg.vocab_size = s.vocab.size();
    cfg.seed = seed;
    s.model.init(cfg, s.registry.size());
    return s;
}

TEST(SampleNext, PeakedLogitsPickTheMode) {
    Rng rng(1);
    Eigen::RowVectorXd logits = Eigen::RowVectorXd::Zero(6);
    logits(3) = 80.0;
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_next(logits, 1.0, rng), 3);
}

TEST(SampleNext, UniformLogitsAreUniformWithinThreeSigma) {
    Rng rng(2);
    const int V = 5, N = 10000;
    Eigen::RowVectorXd logits = Eigen::RowVectorXd::Constant(V, 1.7);
    std::vector<int> counts(V, 0);
    for (int i = 0; i < N; ++i) counts[static_cast<std::size_t>(sample_next(logits, 1.0, rng))]++;
    const double expect = static_cast<double>(N) / V;
    const double sigma = std::sqrt(N * (1.0 / V) * (1.0 - 1.0 / V));
    for (int v = 0; v < V; ++v) {
        EXPECT_NEAR(counts[static_cast<std::size_t>(v)], expect, 3.0 * sigma);
    }
}

TEST(SampleNext, LowTemperatureIsArgmax) {
    Rng rng(3);
    Eigen::RowVectorXd logits(4);
    logits << 0.1, 0.9, 0.3, 0.88;
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_next(logits, 1e-6, rng), 1);
    EXPECT_THROW(sample_next(logits, 0.0, rng), MalformedInput);
}

TEST(SampleNext, MaskedDrawStaysInSupport) {
    Rng rng(4);
    Eigen::RowVectorXd logits = Eigen::RowVectorXd::Zero(8);
    logits(0) = 50.0;  // dominates but is not allowed
    const std::vector<int> allowed{3, 5};
    for (int i = 0; i < 50; ++i) {
        const int id = sample_next_masked(logits, allowed, 1.0, rng);
        EXPECT_TRUE(id == 3 || id == 5);
    }
}

TEST(InferenceSession, MatchesBatchForwardAllVariants) {
    Rng rng(5);
    for (Variant v : {Variant::MT, Variant::CMT, Variant::MSTN_C, Variant::MSTN_U}) {
        SamplerSetup s = sampler_setup(v, 2, 2, 7);
        const TokenSequence seq = encode(s.corpus[0], s.vocab);
        const std::vector<int> tokens = bos_prefixed(seq.tokens, s.vocab.pad_id());
        const RealArray full = s.model.logits(tokens, 0);
        InferenceSession session(s.model, 0, static_cast<int>(tokens.size()));
        double worst = 0.0;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const Eigen::RowVectorXd row = session.step(tokens[i]);
            worst = std::max(worst,
                             (row - full.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff());
        }
        EXPECT_LT(worst, 1e-9) << variant_name(v);
    }
}

TEST(Generate, OutputLengthLaw) {
    SamplerSetup s = sampler_setup(Variant::MSTN_U, 2, 2, 9);
    GenerationRequest req;
    req.mode = GenerationRequest::Mode::free;
    req.template_id = s.corpus[0].id;
    req.template_row = 0;
    req.n_bars = 2;
    req.seed = 11;
    const auto samples = generate(s.model, s.vocab, req);
    ASSERT_EQ(samples.size(), 2u);
    for (const auto& gs : samples) {
        EXPECT_EQ(gs.sequence.tokens.size(),
                  static_cast<std::size_t>(kPrefixLen + 2 * kTicksPerBar));
        EXPECT_EQ(s.vocab.kind(gs.sequence.tokens[0]), TokenKind::tonic);
        EXPECT_EQ(s.vocab.kind(gs.sequence.tokens[1]), TokenKind::mode);
    }
}

TEST(Generate, ContinuationPreservesPrefixVerbatim) {
    SamplerSetup s = sampler_setup(Variant::MSTN_C, 2, 2, 13);
    const TokenSequence enc = encode(s.corpus[1], s.vocab);
    GenerationRequest req;
    req.mode = GenerationRequest::Mode::continuation;
    req.template_id = s.corpus[1].id;
    req.template_row = 1;
    req.n_bars = 2;
    req.motif_tonic = enc.tokens[0];
    req.motif_mode = enc.tokens[1];
    req.motif.assign(enc.tokens.begin() + kPrefixLen,
                     enc.tokens.begin() + kPrefixLen + kTicksPerBar);
    req.seed = 17;
    const auto samples = generate(s.model, s.vocab, req);
    for (const auto& gs : samples) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(kPrefixLen + kTicksPerBar); ++i) {
            EXPECT_EQ(gs.sequence.tokens[i], enc.tokens[i]);
        }
    }
}

TEST(Generate, DistinctSeedsDiverge) {
    SamplerSetup s = sampler_setup(Variant::MT, 1, 2, 19);
    GenerationRequest req;
    req.mode = GenerationRequest::Mode::free;
    req.template_id = s.corpus[0].id;
    req.template_row = 0;
    req.n_bars = 2;
    req.samples_per_template = 1;
    req.seed = 1;
    const auto a = generate(s.model, s.vocab, req);
    req.seed = 2;
    const auto b = generate(s.model, s.vocab, req);
    EXPECT_NE(a[0].sequence.tokens, b[0].sequence.tokens);
    // same seed is reproducible
    req.seed = 1;
    const auto c = generate(s.model, s.vocab, req);
    EXPECT_EQ(a[0].sequence.tokens, c[0].sequence.tokens);
}

TEST(Generate, SequencesAlwaysDecode) {
    for (Variant v : {Variant::MT, Variant::CMT, Variant::MSTN_C, Variant::MSTN_U}) {
        SamplerSetup s = sampler_setup(v, 2, 2, 23);
        GenerationRequest req;
        req.mode = GenerationRequest::Mode::free;
        req.template_id = s.corpus[0].id;
        req.template_row = 0;
        req.n_bars = 2;
        req.seed = 29;
        for (const auto& gs : generate(s.model, s.vocab, req)) {
            std::size_t repairs = 0;
            const Score dec = decode(gs.sequence, s.vocab, &repairs);
            EXPECT_EQ(dec.n_bars, 2);
        }
    }
}

TEST(Generate, MstnUStructureStatesBitEqualAcrossSamples) {
    SamplerSetup s = sampler_setup(Variant::MSTN_U, 1, 2, 31);
    GenerationRequest req;
    req.mode = GenerationRequest::Mode::free;
    req.template_id = s.corpus[0].id;
    req.template_row = 0;
    req.n_bars = 2;
    req.samples_per_template = 4;
    req.seed = 37;
    const auto samples = generate(s.model, s.vocab, req);
    ASSERT_EQ(samples.size(), 4u);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        ASSERT_EQ(samples[i].structure_states.size(), samples[0].structure_states.size());
        for (std::size_t l = 0; l < samples[0].structure_states.size(); ++l) {
            EXPECT_TRUE((samples[i].structure_states[l].array() ==
                         samples[0].structure_states[l].array())
                            .all());
        }
    }
}

TEST(Generate, ErrorsOnBadRequests) {
    SamplerSetup s = sampler_setup(Variant::MSTN_U, 1, 2, 41);
    GenerationRequest req;
    req.mode = GenerationRequest::Mode::continuation;
    req.template_id = s.corpus[0].id;
    req.template_row = 0;
    req.n_bars = 2;
    EXPECT_THROW(generate(s.model, s.vocab, req), MotifLengthError);  // missing motif
    req.template_row = 5;
    req.mode = GenerationRequest::Mode::free;
    EXPECT_THROW(generate(s.model, s.vocab, req), UnknownTemplate);
}

TEST(EvaluateProtocol, PopulatesEveryFieldWithinRange) {
    SamplerSetup s = sampler_setup(Variant::MSTN_U, 3, 2, 43);
    ProtocolConfig cfg;
    cfg.seed = 47;
    MetricsReport report = evaluate_protocol(s.model, s.vocab, s.corpus, s.registry, cfg);
    ASSERT_TRUE(report.modes.count("free"));
    ASSERT_TRUE(report.modes.count("continuation"));
    for (const auto& [mode, r] : report.modes) {
        EXPECT_EQ(r.templates, 3) << mode;
        for (double rate : {r.rdr_tab, r.idr_tab, r.rdr_ab, r.idr_ab}) {
            EXPECT_GE(rate, 0.0);
            EXPECT_LE(rate, 1.0);
        }
        EXPECT_GE(r.rss, 0.0);
        EXPECT_GE(r.iss, 0.0);
        const char* keys[] = {"RC-D", "RD-D", "RO-D", "RC-DI", "RD-DI", "RO-DI", "PD", "DD"};
        for (const char* k : keys) {
            ASSERT_TRUE(r.kl.count(k)) << k;
            EXPECT_GE(r.kl.at(k), -1e-12) << k;
        }
    }
}

TEST(EvaluateProtocol, DegenerateSelfChecks) {
    // metric-level identities the protocol relies on
    Rng rng(53);
    const Score s = testutil::random_grid_score(rng, 6, "deg");
    EXPECT_DOUBLE_EQ(
        structure_similarity(ssm(s, SelfSimilarityMatrix::Kind::rhythm),
                             ssm(s, SelfSimilarityMatrix::Kind::rhythm)),
        0.0);
    EXPECT_DOUBLE_EQ(duplicate_rate(s, s, PatternKind::rhythm), 1.0);
    EXPECT_DOUBLE_EQ(duplicate_rate(s, s, PatternKind::interval), 1.0);
}

}  // namespace
