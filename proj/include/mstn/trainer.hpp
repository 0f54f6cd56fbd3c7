#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "mstn/model.hpp"
#include "mstn/registry.hpp"
#include "mstn/tokenizer.hpp"

namespace mstn {

struct TrainConfig {
    double base_lr = 2e-5;
    int warmup_epochs = 5;
    int epochs = 100;
    int batch_size = 8;     // unspecified by the protocol; stated in logs
    double clip_norm = 1.0;  // likewise
    std::uint64_t seed = 0;

    void check() const {
        if (base_lr <= 0.0) throw MalformedInput("base_lr must be > 0");
        if (warmup_epochs > epochs) throw MalformedInput("warmup_epochs > epochs");
        if (batch_size < 1) throw MalformedInput("batch_size < 1");
    }

    nlohmann::json to_json() const {
        return {{"base_lr", base_lr},       {"warmup_epochs", warmup_epochs},
                {"epochs", epochs},         {"batch_size", batch_size},
                {"clip_norm", clip_norm},   {"seed", seed}};
    }
    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.base_lr = j.value("base_lr", c.base_lr);
        c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

// Mean next-token cross entropy of logits[t] against tokens[t+1]; the value
// counterpart of Tape::cross_entropy_next.
inline double teacher_forcing_loss(const RealArray& logits, const std::vector<int>& tokens) {
    if (static_cast<Eigen::Index>(tokens.size()) != logits.rows() || logits.rows() < 2) {
        throw LengthMismatch("teacher_forcing_loss: logits rows must equal token count >= 2");
    }
    double loss = 0.0;
    for (Eigen::Index t = 0; t + 1 < logits.rows(); ++t) {
        const int target = tokens[static_cast<std::size_t>(t + 1)];
        if (target < 0 || target >= logits.cols()) {
            throw LengthMismatch("teacher_forcing_loss: target out of range");
        }
        const double mx = logits.row(t).maxCoeff();
        const double z = (logits.row(t).array() - mx).exp().sum();
        loss -= logits(t, target) - mx - std::log(z);
    }
    return loss / static_cast<double>(logits.rows() - 1);
}

// Linear warmup to base_lr over warmup_epochs (per-step granularity), then
// constant.
inline double lr_schedule(int epoch, int step_in_epoch, int steps_per_epoch,
                          const TrainConfig& cfg) {
    if (cfg.warmup_epochs <= 0) return cfg.base_lr;
    const double progress =
        (static_cast<double>(epoch) +
         static_cast<double>(step_in_epoch) / static_cast<double>(steps_per_epoch)) /
        static_cast<double>(cfg.warmup_epochs);
    return cfg.base_lr * std::min(1.0, progress);
}

// One training/validation item: BOS-primed token ids plus the structure-table
// row of its source template.
struct TrainItem {
    std::vector<int> tokens;
    int template_row = -1;
};

// Sequences are primed with PAD so the first real token (the tonic) has a
// conditioning position; free-mode sampling draws it from the same position.
inline std::vector<int> bos_prefixed(const std::vector<int>& tokens, int pad_id) {
    std::vector<int> out;
    out.reserve(tokens.size() + 1);
    out.push_back(pad_id);
    out.insert(out.end(), tokens.begin(), tokens.end());
    return out;
}

inline std::vector<TrainItem> make_train_items(const std::vector<TokenSequence>& seqs,
                                               const std::map<std::string, std::string>& tmap,
                                               const TemplateRegistry& registry,
                                               const Vocab& vocab) {
    std::vector<TrainItem> items;
    items.reserve(seqs.size());
    for (const TokenSequence& s : seqs) {
        TrainItem item;
        item.tokens = bos_prefixed(s.tokens, vocab.pad_id());
        auto it = tmap.find(s.template_id);
        const std::string& source = it == tmap.end() ? s.template_id : it->second;
        item.template_row = registry.row(source);
        items.push_back(std::move(item));
    }
    return items;
}

struct StepLog {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double valid_loss = std::numeric_limits<double>::quiet_NaN();  // epoch end only
};

// Teacher-forced training of model weights and the structure table jointly.
class Trainer {
  public:
    Trainer(Model& model, TrainConfig cfg) : model_(model), cfg_(cfg) { cfg_.check(); }

    // mean loss over the items; gradients accumulate into the model's store
    // scaled by 1/batch
    double accumulate_batch(const std::vector<const TrainItem*>& batch) {
        const int n = static_cast<int>(batch.size());
        const int threads = std::min(thread_count(), n);
        std::vector<double> losses(static_cast<std::size_t>(n), 0.0);

        if (threads <= 1) {
            for (int i = 0; i < n; ++i) {
                losses[static_cast<std::size_t>(i)] =
                    item_pass(model_, *batch[static_cast<std::size_t>(i)]);
            }
        } else {
            // each worker accumulates into its own copy of the store; merging
            // in worker order keeps the result independent of scheduling
            std::vector<Model> shadows(static_cast<std::size_t>(threads), model_);
            for (auto& s : shadows) s.store().zero_grad();
#pragma omp parallel for num_threads(threads) schedule(static, 1)
            for (int i = 0; i < n; ++i) {
#ifdef _OPENMP
                const int w = omp_get_thread_num();
#else
                const int w = 0;
#endif
                losses[static_cast<std::size_t>(i)] =
                    item_pass(shadows[static_cast<std::size_t>(w)],
                              *batch[static_cast<std::size_t>(i)]);
            }
            for (const Model& s : shadows) {
                auto dst = model_.store().begin();
                auto src = s.store().begin();
                for (; dst != model_.store().end(); ++dst, ++src) {
                    dst->second.grad += src->second.grad;
                }
            }
        }
        double total = 0.0;
        for (double l : losses) total += l;
        // scale accumulated gradients to the batch mean
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& [_, p] : model_.store()) p.grad *= inv;
        return total * inv;
    }

    double train_step(const std::vector<const TrainItem*>& batch, double lr) {
        model_.store().zero_grad();
        const double loss = accumulate_batch(batch);
        if (!std::isfinite(loss)) throw DivergedLoss("training loss is not finite");
        model_.store().clip_grad_norm(cfg_.clip_norm);
        model_.store().adam_step(lr);
        return loss;
    }

    // mean loss without touching any parameter
    double evaluate(const std::vector<TrainItem>& items) {
        if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
        double total = 0.0;
        for (const TrainItem& item : items) {
            Tape t;
            Var logits = model_.forward(t, item.tokens, item.template_row);
            total += t.value(t.cross_entropy_next(logits, item.tokens))(0, 0);
        }
        return total / static_cast<double>(items.size());
    }

    // fraction of next-token argmax hits over all positions
    double next_token_accuracy(const std::vector<TrainItem>& items) {
        std::int64_t hits = 0, total = 0;
        for (const TrainItem& item : items) {
            const RealArray logits = model_.logits(item.tokens, item.template_row);
            for (Eigen::Index t = 0; t + 1 < logits.rows(); ++t) {
                Eigen::Index argmax = 0;
                logits.row(t).maxCoeff(&argmax);
                hits += argmax == item.tokens[static_cast<std::size_t>(t + 1)];
                ++total;
            }
        }
        return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    }

    // full run; callbacks get per-step and per-epoch logs
    void train(const std::vector<TrainItem>& train_items, const std::vector<TrainItem>& valid_items,
               const std::function<void(const StepLog&)>& on_step = {},
               const std::function<void(int, double, double)>& on_epoch = {}, int start_epoch = 0) {
        if (train_items.empty()) throw EmptyCorpus("no training items");
        const int steps_per_epoch =
            static_cast<int>((train_items.size() + cfg_.batch_size - 1) /
                             static_cast<std::size_t>(cfg_.batch_size));
        std::int64_t global_step = static_cast<std::int64_t>(start_epoch) * steps_per_epoch;
        for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
            std::vector<std::size_t> order(train_items.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            Rng rng(cfg_.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1));
            rng.shuffle(order);
            double epoch_loss = 0.0;
            for (int s = 0; s < steps_per_epoch; ++s) {
                std::vector<const TrainItem*> batch;
                for (int b = 0; b < cfg_.batch_size; ++b) {
                    const std::size_t idx = static_cast<std::size_t>(s) *
                                                static_cast<std::size_t>(cfg_.batch_size) +
                                            static_cast<std::size_t>(b);
                    if (idx >= order.size()) break;
                    batch.push_back(&train_items[order[idx]]);
                }
                const double lr = lr_schedule(epoch, s, steps_per_epoch, cfg_);
                const double loss = train_step(batch, lr);
                epoch_loss += loss * static_cast<double>(batch.size());
                ++global_step;
                if (on_step) {
                    StepLog log;
                    log.step = global_step;
                    log.epoch = epoch;
                    log.lr = lr;
                    log.train_loss = loss;
                    on_step(log);
                }
            }
            const double valid_loss = evaluate(valid_items);
            if (on_epoch) {
                on_epoch(epoch, epoch_loss / static_cast<double>(train_items.size()), valid_loss);
            }
        }
    }

  private:
    static double item_pass(Model& m, const TrainItem& item) {
        Tape t;
        Var logits = m.forward(t, item.tokens, item.template_row);
        Var loss = t.cross_entropy_next(logits, item.tokens);
        t.backward(loss);
        return t.value(loss)(0, 0);
    }

    Model& model_;
    TrainConfig cfg_;
};

}  // namespace mstn
