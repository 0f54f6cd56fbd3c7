#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mstn/metrics.hpp"
#include "mstn/registry.hpp"
#include "mstn/sampler.hpp"

namespace mstn {

struct ProtocolConfig {
    bool free_mode = true;
    bool continuation_mode = true;
    int samples_per_template = 2;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    int max_templates = -1;  // <0: all
};

struct ModeReport {
    double rss = 0.0;
    double iss = 0.0;
    double rdr_tab = 0.0;
    double idr_tab = 0.0;
    double rdr_ab = 0.0;
    double idr_ab = 0.0;
    std::map<std::string, double> kl;  // RC/RD/RO x D/DI, PD, DD
    std::int64_t repairs = 0;
    int templates = 0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"RSS", rss},         {"ISS", iss},     {"RDR_TAB", rdr_tab},
                         {"IDR_TAB", idr_tab}, {"RDR_AB", rdr_ab}, {"IDR_AB", idr_ab},
                         {"repairs", repairs}, {"templates", templates}};
        for (const auto& [k, v] : kl) j["KL"][k] = v;
        return j;
    }
};

struct MetricsReport {
    std::map<std::string, ModeReport> modes;  // "free" / "continuation"

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (const auto& [name, report] : modes) j[name] = report.to_json();
        return j;
    }
};

// Per-template results of one evaluation mode, kept for CSV export.
struct TemplateResult {
    std::string template_id;
    double rss = 0.0, iss = 0.0, rdr_tab = 0.0, idr_tab = 0.0, rdr_ab = 0.0, idr_ab = 0.0;
    std::vector<Score> samples;
    std::int64_t repairs = 0;
};

// Two samples per template; sample-vs-template similarities averaged over the
// two samples, duplicate rates between the samples, then means over templates
// and corpus-level KL divergences against the template set.
inline ModeReport evaluate_mode(const Model& model, const Vocab& vocab,
                                const std::vector<Score>& templates,
                                const TemplateRegistry& registry,
                                GenerationRequest::Mode mode, const ProtocolConfig& cfg,
                                std::vector<TemplateResult>* per_template = nullptr) {
    const int n_templates =
        cfg.max_templates < 0
            ? static_cast<int>(templates.size())
            : std::min<int>(cfg.max_templates, static_cast<int>(templates.size()));
    if (n_templates == 0) throw EmptyCorpus("no templates to evaluate");
    const int max_gen_bars = (model.config().max_len - kPrefixLen - 1) / kTicksPerBar;

    std::vector<TemplateResult> results(static_cast<std::size_t>(n_templates));
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
    for (int i = 0; i < n_templates; ++i) {
        const Score& tmpl = templates[static_cast<std::size_t>(i)];
        TemplateResult r;
        r.template_id = tmpl.id;
        GenerationRequest req;
        req.mode = mode;
        req.template_id = tmpl.id;
        req.template_row = registry.row(tmpl.id);
        req.n_bars = std::min(tmpl.n_bars, max_gen_bars);
        req.samples_per_template = cfg.samples_per_template;
        req.temperature = cfg.temperature;
        req.seed = cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1);
        if (mode == GenerationRequest::Mode::continuation) {
            const TokenSequence enc = encode(tmpl, vocab);
            req.motif_tonic = enc.tokens[0];
            req.motif_mode = enc.tokens[1];
            req.motif.assign(enc.tokens.begin() + kPrefixLen,
                             enc.tokens.begin() + kPrefixLen + kTicksPerBar);
        }
        const auto samples = generate(model, vocab, req);
        const SelfSimilarityMatrix t_rhy = ssm(tmpl, SelfSimilarityMatrix::Kind::rhythm);
        const SelfSimilarityMatrix t_int = ssm(tmpl, SelfSimilarityMatrix::Kind::interval);
        for (const GeneratedSample& gs : samples) {
            std::size_t repairs = 0;
            Score dec = decode(gs.sequence, vocab, &repairs);
            dec.id = tmpl.id + "~sample" + std::to_string(r.samples.size() + 1);
            r.repairs += static_cast<std::int64_t>(repairs);
            r.rss += structure_similarity(ssm(dec, SelfSimilarityMatrix::Kind::rhythm), t_rhy);
            r.iss += structure_similarity(ssm(dec, SelfSimilarityMatrix::Kind::interval), t_int);
            r.rdr_tab += duplicate_rate(tmpl, dec, PatternKind::rhythm);
            r.idr_tab += duplicate_rate(tmpl, dec, PatternKind::interval);
            r.samples.push_back(std::move(dec));
        }
        const double inv = 1.0 / static_cast<double>(samples.size());
        r.rss *= inv;
        r.iss *= inv;
        r.rdr_tab *= inv;
        r.idr_tab *= inv;
        if (r.samples.size() >= 2) {
            r.rdr_ab = duplicate_rate(r.samples[0], r.samples[1], PatternKind::rhythm);
            r.idr_ab = duplicate_rate(r.samples[0], r.samples[1], PatternKind::interval);
        }
        results[static_cast<std::size_t>(i)] = std::move(r);
    }

    ModeReport report;
    report.templates = n_templates;
    std::vector<Score> generated;
    for (const TemplateResult& r : results) {
        report.rss += r.rss;
        report.iss += r.iss;
        report.rdr_tab += r.rdr_tab;
        report.idr_tab += r.idr_tab;
        report.rdr_ab += r.rdr_ab;
        report.idr_ab += r.idr_ab;
        report.repairs += r.repairs;
        for (const Score& s : r.samples) generated.push_back(s);
    }
    const double inv = 1.0 / static_cast<double>(n_templates);
    report.rss *= inv;
    report.iss *= inv;
    report.rdr_tab *= inv;
    report.idr_tab *= inv;
    report.rdr_ab *= inv;
    report.idr_ab *= inv;

    // corpus-level KLs: training templates vs the generated set
    std::vector<Score> train_set(templates.begin(),
                                 templates.begin() + static_cast<std::ptrdiff_t>(n_templates));
    const auto [train_pd, train_dd] = pitch_duration_distributions(train_set);
    const auto [gen_pd, gen_dd] = pitch_duration_distributions(generated);
    report.kl["PD"] = kl_divergence(train_pd, gen_pd);
    report.kl["DD"] = kl_divergence(train_dd, gen_dd);
    const auto train_rep = repeat_distributions(train_set);
    const auto gen_rep = repeat_distributions(generated);
    for (const auto& [name, hist] : train_rep) {
        report.kl[name] = kl_divergence(hist, gen_rep.at(name));
    }
    if (per_template) *per_template = std::move(results);
    return report;
}

inline MetricsReport evaluate_protocol(const Model& model, const Vocab& vocab,
                                       const std::vector<Score>& templates,
                                       const TemplateRegistry& registry,
                                       const ProtocolConfig& cfg,
                                       std::map<std::string, std::vector<TemplateResult>>*
                                           per_template = nullptr) {
    MetricsReport report;
    if (cfg.free_mode) {
        std::vector<TemplateResult> detail;
        report.modes["free"] = evaluate_mode(model, vocab, templates, registry,
                                             GenerationRequest::Mode::free, cfg,
                                             per_template ? &detail : nullptr);
        if (per_template) (*per_template)["free"] = std::move(detail);
    }
    if (cfg.continuation_mode) {
        std::vector<TemplateResult> detail;
        report.modes["continuation"] = evaluate_mode(model, vocab, templates, registry,
                                                     GenerationRequest::Mode::continuation, cfg,
                                                     per_template ? &detail : nullptr);
        if (per_template) (*per_template)["continuation"] = std::move(detail);
    }
    return report;
}

}  // namespace mstn
