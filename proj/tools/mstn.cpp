// mstn: melody structure transfer pipeline
//
// Subcommands: ingest (ABC/MusicXML -> corpus), tokenize (corpus -> frame
// tokens), train, generate, evaluate, report. See README.md for a walkthrough.

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mstn/abc.hpp"
#include "mstn/checkpoint.hpp"
#include "mstn/io.hpp"
#include "mstn/musicxml.hpp"
#include "mstn/protocol.hpp"
#include "mstn/sampler.hpp"
#include "mstn/trainer.hpp"

namespace {

using namespace mstn;
using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

std::string sanitize_dirname(const std::string& name) {
    std::string out;
    for (char c : name) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    }
    return out.empty() ? "_" : out;
}

// Multi-tune ABC files: one block per X: header.
std::vector<std::string> split_abc_tunes(const std::string& text) {
    std::vector<std::string> blocks;
    std::string current;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("X:", 0) == 0 && !current.empty()) {
            blocks.push_back(current);
            current.clear();
        }
        current += line;
        current += '\n';
    }
    if (!current.empty()) blocks.push_back(current);
    std::erase_if(blocks, [](const std::string& b) { return b.find("X:") == std::string::npos; });
    return blocks;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& abc_paths,
               const std::vector<std::string>& xml_paths, const std::string& out_dir,
               std::uint64_t seed) {
    std::vector<Score> scores;
    json dropped = json::array();
    std::size_t parsed_ok = 0, parse_failed = 0;
    std::map<std::string, std::string> sources;

    const auto try_parse = [&](const std::string& source, const std::string& text, bool abc,
                               const std::string& id) {
        try {
            Score s = abc ? parse_abc(text) : parse_musicxml(text);
            s.id = id;
            sources[id] = source;
            scores.push_back(std::move(s));
            ++parsed_ok;
        } catch (const Error& e) {
            ++parse_failed;
            dropped.push_back({{"source", source}, {"id", id}, {"reason", e.what()}});
        }
    };

    for (const std::string& root : abc_paths) {
        for (const fs::path& p : list_files(root, {".abc"})) {
            const std::string text = read_text_file(p);
            const auto tunes = split_abc_tunes(text);
            int index = 0;
            for (const std::string& tune : tunes) {
                try_parse(p.string(), tune, true,
                          p.stem().string() +
                              (tunes.size() > 1 ? "#" + std::to_string(index) : ""));
                ++index;
            }
        }
    }
    for (const std::string& root : xml_paths) {
        for (const fs::path& p : list_files(root, {".xml", ".musicxml"})) {
            try_parse(p.string(), read_text_file(p), false, p.stem().string());
        }
    }

    FilterReport report;
    std::vector<Score> kept = filter_corpus(scores, &report);
    for (const std::string& id : report.dropped_ids) {
        dropped.push_back({{"id", id}, {"reason", "filtered (structure or length)"}});
    }

    json manifest;
    manifest["seed"] = seed;
    manifest["counts"] = {{"parsed", parsed_ok},
                          {"parse_failed", parse_failed},
                          {"kept", kept.size()},
                          {"dropped_too_long", report.dropped_too_long},
                          {"dropped_invalid", report.dropped_invalid}};
    manifest["dropped"] = dropped;
    json pieces = json::array();
    for (const Score& s : kept) {
        pieces.push_back({{"id", s.id},
                          {"source", sources.count(s.id) ? sources[s.id] : ""},
                          {"n_bars", s.n_bars},
                          {"tonic", s.tonic.str()},
                          {"mode", mode_name(s.mode)}});
    }
    manifest["pieces"] = pieces;

    fs::create_directories(out_dir);
    write_json_file(fs::path(out_dir) / "manifest.json", manifest);
    write_scores(fs::path(out_dir) / "scores.json", kept);
    std::cout << "ingest: parsed " << parsed_ok << ", parse failures " << parse_failed
              << ", kept " << kept.size() << " (dropped " << (scores.size() - kept.size())
              << " in filtering)\n";
    if (kept.empty()) {
        std::cerr << "ingest: no usable pieces\n";
        return kExitData;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// tokenize
// ---------------------------------------------------------------------------

int cmd_tokenize(const std::string& corpus_dir, const std::string& out_dir, double ratio,
                 std::uint64_t seed, bool augment) {
    const std::vector<Score> corpus = read_scores(fs::path(corpus_dir) / "scores.json");
    if (corpus.empty()) {
        std::cerr << "tokenize: empty corpus\n";
        return kExitData;
    }
    auto [train, valid] = split_train_valid(corpus, ratio, seed);

    std::vector<Score> train_aug;
    std::map<std::string, std::string> tmap;
    if (augment) {
        std::tie(train_aug, tmap) = augment_corpus(train);
    } else {
        train_aug = train;
        for (const Score& s : train) tmap[s.id] = s.id;
    }
    for (const Score& s : valid) tmap[s.id] = s.id;

    std::vector<Score> all = train_aug;
    all.insert(all.end(), valid.begin(), valid.end());
    const Vocab vocab = Vocab::build(all);

    TemplateRegistry registry;
    for (const Score& s : train) registry.add(s.id);
    for (const Score& s : valid) registry.add(s.id);

    std::vector<TokenSequence> train_seqs, valid_seqs;
    for (const Score& s : train_aug) train_seqs.push_back(encode(s, vocab));
    for (const Score& s : valid) valid_seqs.push_back(encode(s, vocab));

    fs::create_directories(out_dir);
    write_json_file(fs::path(out_dir) / "vocab.json", vocab.to_json());
    write_token_file(fs::path(out_dir) / "train.tokens", train_seqs, vocab);
    write_token_file(fs::path(out_dir) / "valid.tokens", valid_seqs, vocab);
    json tj;
    tj["seed"] = seed;
    tj["ratio"] = ratio;
    tj["augmented"] = augment;
    tj["templates"] = registry.to_json();
    tj["template_map"] = tmap;
    json template_scores = json::array();
    for (const Score& s : train) template_scores.push_back(score_to_json(s));
    tj["template_scores"] = template_scores;
    write_json_file(fs::path(out_dir) / "templates.json", tj);
    std::cout << "tokenize: " << train.size() << " train templates (" << train_seqs.size()
              << " sequences after augmentation), " << valid.size() << " validation pieces, "
              << "vocabulary " << vocab.size() << " tokens\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct LoadedTokens {
    Vocab vocab;
    TemplateRegistry registry;
    std::map<std::string, std::string> tmap;
    std::vector<TokenSequence> train_seqs, valid_seqs;
    json templates_json;
};

LoadedTokens load_tokens_dir(const std::string& tokens_dir) {
    LoadedTokens lt;
    lt.vocab = Vocab::from_json(read_json_file(fs::path(tokens_dir) / "vocab.json"));
    lt.templates_json = read_json_file(fs::path(tokens_dir) / "templates.json");
    lt.registry = TemplateRegistry::from_json(lt.templates_json.at("templates"));
    for (auto it = lt.templates_json.at("template_map").begin();
         it != lt.templates_json.at("template_map").end(); ++it) {
        lt.tmap[it.key()] = it.value().get<std::string>();
    }
    lt.train_seqs = read_token_file(fs::path(tokens_dir) / "train.tokens", lt.vocab);
    lt.valid_seqs = read_token_file(fs::path(tokens_dir) / "valid.tokens", lt.vocab);
    return lt;
}

int cmd_train(const std::string& tokens_dir, const std::string& out_dir,
              const std::string& model_config_path, const std::string& train_config_path,
              const std::string& variant_override, const std::string& resume_path,
              std::int64_t seed_override) {
    LoadedTokens lt = load_tokens_dir(tokens_dir);
    const auto train_items = make_train_items(lt.train_seqs, lt.tmap, lt.registry, lt.vocab);
    const auto valid_items = make_train_items(lt.valid_seqs, lt.tmap, lt.registry, lt.vocab);

    std::size_t max_len = 0;
    for (const auto& i : train_items) max_len = std::max(max_len, i.tokens.size());
    for (const auto& i : valid_items) max_len = std::max(max_len, i.tokens.size());

    ModelConfig mc;
    if (!model_config_path.empty()) mc = ModelConfig::from_json(read_json_file(model_config_path));
    if (!variant_override.empty()) mc.variant = variant_from_name(variant_override);
    mc.vocab_size = lt.vocab.size();
    if (mc.max_len < static_cast<int>(max_len)) mc.max_len = static_cast<int>(max_len);

    TrainConfig tc;
    if (!train_config_path.empty()) tc = TrainConfig::from_json(read_json_file(train_config_path));
    if (seed_override >= 0) {
        tc.seed = static_cast<std::uint64_t>(seed_override);
        mc.seed = static_cast<std::uint64_t>(seed_override);
    }
    tc.check();

    Model model;
    int start_epoch = 0;
    if (!resume_path.empty()) {
        json meta;
        model = load_checkpoint(resume_path, &meta);
        start_epoch = meta.at("epoch").get<int>() + 1;
        std::cout << "train: resuming from epoch " << start_epoch << "\n";
    } else {
        model.init(mc, lt.registry.size());
    }

    fs::create_directories(out_dir);
    json run;
    run["model"] = model.config().to_json();
    run["train"] = tc.to_json();
    run["tokens_dir"] = tokens_dir;
    run["seed"] = tc.seed;
    run["threads"] = thread_count();
    write_json_file(fs::path(out_dir) / "run_config.json", run);
    std::cout << "train: variant " << variant_name(model.config().variant) << ", "
              << train_items.size() << " sequences, batch " << tc.batch_size << ", clip norm "
              << tc.clip_norm << ", lr " << tc.base_lr << ", warmup " << tc.warmup_epochs
              << " epochs, " << tc.epochs << " epochs total\n";

    json extras;
    extras["vocab"] = lt.vocab.to_json();
    extras["templates"] = lt.registry.to_json();
    extras["template_map"] = lt.templates_json.at("template_map");
    extras["template_scores"] = lt.templates_json.at("template_scores");
    extras["train_config"] = tc.to_json();
    extras["seed"] = tc.seed;

    std::ostringstream log;
    log << "step,epoch,lr,train_loss,valid_loss\n";
    const fs::path ckpt_path = fs::path(out_dir) / "ckpt.bin";
    Trainer trainer(model, tc);
    trainer.train(
        train_items, valid_items,
        [&](const StepLog& s) {
            log << s.step << ',' << s.epoch << ',' << s.lr << ',' << s.train_loss << ",\n";
        },
        [&](int epoch, double train_loss, double valid_loss) {
            log << ',' << epoch << ",," << train_loss << ',' << valid_loss << '\n';
            std::cout << "epoch " << epoch << ": train " << train_loss << ", valid "
                      << valid_loss << "\n";
            save_checkpoint(ckpt_path.string(), model, extras, model.store().step(), epoch);
            write_text_file(fs::path(out_dir) / "log.csv", log.str());
        },
        start_epoch);
    write_text_file(fs::path(out_dir) / "log.csv", log.str());
    std::cout << "train: checkpoint written to " << ckpt_path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct LoadedCheckpoint {
    Model model;
    Vocab vocab;
    TemplateRegistry registry;
    std::vector<Score> template_scores;
    json meta;
};

LoadedCheckpoint load_ckpt(const std::string& path) {
    LoadedCheckpoint lc;
    lc.model = load_checkpoint(path, &lc.meta);
    const json& extras = lc.meta.at("extras");
    lc.vocab = Vocab::from_json(extras.at("vocab"));
    lc.registry = TemplateRegistry::from_json(extras.at("templates"));
    for (const auto& j : extras.at("template_scores")) {
        lc.template_scores.push_back(score_from_json(j));
    }
    return lc;
}

int cmd_generate(const std::string& ckpt_path, const std::string& template_id,
                 const std::string& mode_name_str, int motif_bar, int samples, int bars,
                 double temperature, std::uint64_t seed, const std::string& out_dir) {
    LoadedCheckpoint lc = load_ckpt(ckpt_path);
    const Score* tmpl = nullptr;
    for (const Score& s : lc.template_scores) {
        if (s.id == template_id) {
            tmpl = &s;
            break;
        }
    }
    if (!tmpl) {
        std::cerr << "generate: unknown template '" << template_id << "'\n";
        return kExitData;
    }
    GenerationRequest req;
    req.template_id = template_id;
    req.template_row = lc.registry.row(template_id);
    req.samples_per_template = samples;
    req.temperature = temperature;
    req.seed = seed;
    const int max_gen_bars = (lc.model.config().max_len - kPrefixLen - 1) / kTicksPerBar;
    req.n_bars = std::min(bars > 0 ? bars : tmpl->n_bars, max_gen_bars);
    if (mode_name_str == "continuation") {
        req.mode = GenerationRequest::Mode::continuation;
        if (motif_bar < 1 || motif_bar > tmpl->n_bars) {
            std::cerr << "generate: --motif-bar out of range\n";
            return kExitUsage;
        }
        const TokenSequence enc = encode(*tmpl, lc.vocab);
        const std::size_t off =
            kPrefixLen + static_cast<std::size_t>(motif_bar - 1) * kTicksPerBar;
        req.motif_tonic = enc.tokens[0];
        req.motif_mode = enc.tokens[1];
        req.motif.assign(enc.tokens.begin() + static_cast<std::ptrdiff_t>(off),
                         enc.tokens.begin() + static_cast<std::ptrdiff_t>(off + kTicksPerBar));
        // a motif bar other than the first may start with HOLD; re-anchor it
        if (lc.vocab.kind(req.motif[0]) == TokenKind::hold) req.motif[0] = lc.vocab.rest_id();
    } else if (mode_name_str != "free") {
        std::cerr << "generate: --mode must be free or continuation\n";
        return kExitUsage;
    }

    const auto generated = generate(lc.model, lc.vocab, req);
    const fs::path dir = fs::path(out_dir) / sanitize_dirname(template_id);
    fs::create_directories(dir);
    json info;
    info["template"] = template_id;
    info["mode"] = mode_name_str;
    info["temperature"] = temperature;
    info["seed"] = seed;
    info["n_bars"] = req.n_bars;
    std::int64_t total_repairs = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const std::string stem = "sample_" + std::to_string(i + 1);
        write_token_file(dir / (stem + ".tokens"), {generated[i].sequence}, lc.vocab);
        std::size_t repairs = 0;
        Score dec = decode(generated[i].sequence, lc.vocab, &repairs);
        dec.id = template_id + "~" + stem;
        total_repairs += static_cast<std::int64_t>(repairs);
        write_text_file(dir / (stem + ".musicxml"), write_musicxml(dec));
    }
    info["hold_repairs"] = total_repairs;
    write_json_file(dir / "generation.json", info);
    std::cout << "generate: wrote " << generated.size() << " samples for template '"
              << template_id << "' to " << dir.string() << " (hold repairs: " << total_repairs
              << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& ckpt_path, const std::string& report_path,
                 const std::string& csv_path, const std::string& modes, int samples,
                 double temperature, std::uint64_t seed, int max_templates,
                 const std::string& samples_dir) {
    LoadedCheckpoint lc = load_ckpt(ckpt_path);
    ProtocolConfig cfg;
    cfg.free_mode = modes.find("free") != std::string::npos;
    cfg.continuation_mode = modes.find("continuation") != std::string::npos;
    if (!cfg.free_mode && !cfg.continuation_mode) {
        std::cerr << "evaluate: --modes must name free and/or continuation\n";
        return kExitUsage;
    }
    cfg.samples_per_template = samples;
    cfg.temperature = temperature;
    cfg.seed = seed;
    cfg.max_templates = max_templates;

    std::map<std::string, std::vector<TemplateResult>> detail;
    const MetricsReport report =
        evaluate_protocol(lc.model, lc.vocab, lc.template_scores, lc.registry, cfg, &detail);
    json out = report.to_json();
    out["seed"] = seed;
    out["temperature"] = temperature;
    out["samples_per_template"] = samples;
    out["variant"] = variant_name(lc.model.config().variant);
    write_json_file(report_path, out);

    if (!csv_path.empty()) {
        CsvWriter csv(csv_path);
        csv.row("metric", "free", "continuation");
        const auto get = [&](const std::string& mode, auto pick) {
            return report.modes.count(mode) ? pick(report.modes.at(mode)) : 0.0;
        };
        const std::vector<std::pair<std::string, std::function<double(const ModeReport&)>>> rows =
            {{"RSS", [](const ModeReport& r) { return r.rss; }},
             {"ISS", [](const ModeReport& r) { return r.iss; }},
             {"RDR_TAB", [](const ModeReport& r) { return r.rdr_tab; }},
             {"IDR_TAB", [](const ModeReport& r) { return r.idr_tab; }},
             {"RDR_AB", [](const ModeReport& r) { return r.rdr_ab; }},
             {"IDR_AB", [](const ModeReport& r) { return r.idr_ab; }}};
        for (const auto& [name, pick] : rows) {
            csv.row(name, get("free", pick), get("continuation", pick));
        }
        for (const char* k : {"RC-D", "RD-D", "RO-D", "RC-DI", "RD-DI", "RO-DI", "PD", "DD"}) {
            const auto pick = [&](const ModeReport& r) { return r.kl.at(k); };
            csv.row(std::string("KL_") + k, get("free", pick), get("continuation", pick));
        }
    }

    if (!samples_dir.empty()) {
        for (const auto& [mode, results] : detail) {
            for (const TemplateResult& r : results) {
                const fs::path dir = fs::path(samples_dir) / mode / sanitize_dirname(r.template_id);
                fs::create_directories(dir);
                for (std::size_t i = 0; i < r.samples.size(); ++i) {
                    write_text_file(dir / ("sample_" + std::to_string(i + 1) + ".musicxml"),
                                    write_musicxml(r.samples[i]));
                }
            }
        }
    }

    for (const auto& [mode, r] : report.modes) {
        std::cout << mode << ": RSS " << r.rss << ", ISS " << r.iss << ", RDR_TAB " << r.rdr_tab
                  << ", IDR_TAB " << r.idr_tab << ", RDR_AB " << r.rdr_ab << ", IDR_AB "
                  << r.idr_ab << ", repairs " << r.repairs << "\n";
    }
    std::cout << "evaluate: report written to " << report_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report (corpus statistics, no model involved)
// ---------------------------------------------------------------------------

void write_histogram_csv(const fs::path& out_dir, const std::string& name,
                         const Histogram& corpus_hist, const Histogram* generated_hist) {
    CsvWriter csv(out_dir / (name + ".csv"));
    if (generated_hist) {
        csv.row("bin", "corpus", "generated");
    } else {
        csv.row("bin", "corpus");
    }
    std::vector<std::string> bins;
    for (const auto& [k, _] : corpus_hist) bins.push_back(k);
    if (generated_hist) {
        for (const auto& [k, _] : *generated_hist) {
            if (!corpus_hist.count(k)) bins.push_back(k);
        }
    }
    std::sort(bins.begin(), bins.end(), [](const std::string& a, const std::string& b) {
        char* enda = nullptr;
        char* endb = nullptr;
        const double va = std::strtod(a.c_str(), &enda);
        const double vb = std::strtod(b.c_str(), &endb);
        const bool na = enda == a.c_str() + a.size() && !a.empty();
        const bool nb = endb == b.c_str() + b.size() && !b.empty();
        if (na && nb) return va < vb;
        if (na != nb) return na;
        return a < b;
    });
    for (const std::string& bin : bins) {
        const double c = corpus_hist.count(bin) ? corpus_hist.at(bin) : 0.0;
        if (generated_hist) {
            const double g = generated_hist->count(bin) ? generated_hist->at(bin) : 0.0;
            csv.row(bin, c, g);
        } else {
            csv.row(bin, c);
        }
    }
}

void write_ssm_csv(const fs::path& path, const SelfSimilarityMatrix& m) {
    CsvWriter csv(path);
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        std::ostringstream row;
        row.precision(12);
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            if (j) row << ',';
            row << m.values(i, j);
        }
        csv.row(row.str());
    }
}

int cmd_report(const std::string& corpus_dir, const std::string& generated_dir,
               const std::string& out_dir, const std::vector<std::string>& ssm_ids) {
    const std::vector<Score> corpus = read_scores(fs::path(corpus_dir) / "scores.json");
    if (corpus.empty()) {
        std::cerr << "report: empty corpus\n";
        return kExitData;
    }
    std::vector<Score> generated;
    if (!generated_dir.empty()) {
        for (const fs::path& p : list_files(generated_dir, {".musicxml"})) {
            Score s = parse_musicxml(read_text_file(p));
            s.id = p.stem().string();
            generated.push_back(std::move(s));
        }
    }
    fs::create_directories(out_dir);
    const auto corpus_rep = repeat_distributions(corpus);
    const auto gen_rep =
        generated.empty() ? std::map<std::string, Histogram>{} : repeat_distributions(generated);
    for (const auto& [name, hist] : corpus_rep) {
        write_histogram_csv(out_dir, name, hist, generated.empty() ? nullptr : &gen_rep.at(name));
    }
    const auto [pd, dd] = pitch_duration_distributions(corpus);
    if (generated.empty()) {
        write_histogram_csv(out_dir, "PD", pd, nullptr);
        write_histogram_csv(out_dir, "DD", dd, nullptr);
    } else {
        const auto [gpd, gdd] = pitch_duration_distributions(generated);
        write_histogram_csv(out_dir, "PD", pd, &gpd);
        write_histogram_csv(out_dir, "DD", dd, &gdd);
    }
    for (const std::string& id : ssm_ids) {
        const Score* found = nullptr;
        for (const Score& s : corpus) {
            if (s.id == id) found = &s;
        }
        for (const Score& s : generated) {
            if (s.id == id) found = &s;
        }
        if (!found) {
            std::cerr << "report: no piece with id '" << id << "'\n";
            return kExitData;
        }
        const fs::path dir = fs::path(out_dir) / "ssm";
        fs::create_directories(dir);
        write_ssm_csv(dir / (sanitize_dirname(id) + ".rhythm.csv"),
                      ssm(*found, SelfSimilarityMatrix::Kind::rhythm));
        write_ssm_csv(dir / (sanitize_dirname(id) + ".interval.csv"),
                      ssm(*found, SelfSimilarityMatrix::Kind::interval));
    }
    std::cout << "report: wrote distribution CSVs for " << corpus.size() << " corpus pieces";
    if (!generated.empty()) std::cout << " and " << generated.size() << " generated pieces";
    if (!ssm_ids.empty()) std::cout << " and " << ssm_ids.size() << " SSM grids";
    std::cout << " to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"melody structure transfer toolkit"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "parse ABC/MusicXML files into a corpus");
    std::vector<std::string> abc_paths, xml_paths;
    std::string out_dir;
    std::uint64_t seed = 0;
    ingest->add_option("--abc", abc_paths, "ABC files or directories");
    ingest->add_option("--xml", xml_paths, "MusicXML files or directories");
    ingest->add_option("--out", out_dir, "output corpus directory")->required();
    ingest->add_option("--seed", seed, "seed recorded in the manifest");

    auto* tokenize = app.add_subcommand("tokenize", "encode a corpus into frame tokens");
    std::string corpus_dir, tokens_out;
    double ratio = 0.9;
    std::uint64_t tok_seed = 0;
    bool no_augment = false;
    tokenize->add_option("--corpus", corpus_dir, "corpus directory from ingest")->required();
    tokenize->add_option("--out", tokens_out, "output token directory")->required();
    tokenize->add_option("--ratio", ratio, "train fraction (default 0.9)");
    tokenize->add_option("--seed", tok_seed, "split seed");
    tokenize->add_flag("--no-augment", no_augment, "skip transposition augmentation");

    auto* train = app.add_subcommand("train", "train a model variant");
    std::string tokens_dir, train_out, model_config, train_config, variant, resume;
    std::int64_t train_seed = -1;
    train->add_option("--tokens", tokens_dir, "token directory from tokenize")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--model-config", model_config, "model config JSON");
    train->add_option("--train-config", train_config, "train config JSON");
    train->add_option("--variant", variant, "MT | CMT | MSTN-C | MSTN-U");
    train->add_option("--resume", resume, "resume from checkpoint");
    train->add_option("--seed", train_seed, "override the seed");

    auto* gen = app.add_subcommand("generate", "sample melodies with a template's structure");
    std::string ckpt, template_id, mode = "free", gen_out;
    int motif_bar = 1, samples = 2, bars = 0;
    double temperature = 1.0;
    std::uint64_t gen_seed = 0;
    gen->add_option("--ckpt", ckpt, "checkpoint file")->required();
    gen->add_option("--template", template_id, "template id")->required();
    gen->add_option("--mode", mode, "free | continuation");
    gen->add_option("--motif-bar", motif_bar, "1-based template bar used as the motif");
    gen->add_option("--samples", samples, "samples per template (default 2)");
    gen->add_option("--bars", bars, "bars to generate (default: template length)");
    gen->add_option("--temperature", temperature, "sampling temperature");
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    auto* eval = app.add_subcommand("evaluate", "run the two-sample evaluation protocol");
    std::string eval_ckpt, report_path, csv_path, modes = "free,continuation", eval_samples_dir;
    int eval_samples = 2, max_templates = -1;
    double eval_temperature = 1.0;
    std::uint64_t eval_seed = 0;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--report", report_path, "output report JSON")->required();
    eval->add_option("--csv", csv_path, "output report CSV");
    eval->add_option("--modes", modes, "comma list: free,continuation");
    eval->add_option("--samples", eval_samples, "samples per template");
    eval->add_option("--temperature", eval_temperature, "sampling temperature");
    eval->add_option("--seed", eval_seed, "sampling seed");
    eval->add_option("--max-templates", max_templates, "cap for desk-scale runs");
    eval->add_option("--out-samples", eval_samples_dir, "also write decoded samples here");

    auto* rep = app.add_subcommand("report", "plot-ready distribution CSVs, no model run");
    std::string rep_corpus, rep_generated, rep_out;
    std::vector<std::string> rep_ssm_ids;
    rep->add_option("--corpus", rep_corpus, "corpus directory")->required();
    rep->add_option("--generated", rep_generated, "directory of generated .musicxml samples");
    rep->add_option("--out", rep_out, "output directory")->required();
    rep->add_option("--ssm", rep_ssm_ids, "piece ids whose SSMs to export as CSV grids");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(abc_paths, xml_paths, out_dir, seed);
        if (tokenize->parsed()) {
            return cmd_tokenize(corpus_dir, tokens_out, ratio, tok_seed, !no_augment);
        }
        if (train->parsed()) {
            return cmd_train(tokens_dir, train_out, model_config, train_config, variant, resume,
                             train_seed);
        }
        if (gen->parsed()) {
            return cmd_generate(ckpt, template_id, mode, motif_bar, samples, bars, temperature,
                                gen_seed, gen_out);
        }
        if (eval->parsed()) {
            return cmd_evaluate(eval_ckpt, report_path, csv_path, modes, eval_samples,
                                eval_temperature, eval_seed, max_templates, eval_samples_dir);
        }
        if (rep->parsed()) return cmd_report(rep_corpus, rep_generated, rep_out, rep_ssm_ids);
    } catch (const DivergedLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
