#pragma once

#include <functional>
#include <string>
#include <vector>

#include "arithlab/checkpoint.hpp"
#include "arithlab/model.hpp"
#include "arithlab/tokenizer.hpp"

namespace arithlab {

struct TrainConfig {
    int batch_size = 256;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.99;
    double weight_decay = 0.1;
    double adam_eps = 1e-8;
    long long iterations = 5000;
    long long warmup_iters = 100;
    int grad_accum = 1;
    long long eval_interval = 250;
    uint64_t seed = 1337;
    bool decay_lr = true;
    double min_lr_ratio = 0.1;  // cosine floor as a fraction of base lr
    bool completion_only_loss = false;
    int seq_len = 0;  // packing window; 0 means the model context length

    void validate() const;

    // published hyperparameter rows
    static TrainConfig nanogpt_plain();       // batch 256, 5000 iters, warmup 100
    static TrainConfig nanogpt_scratchpad();  // batch 16, 50000 iters, warmup 0
    static TrainConfig gpt2_plain();          // batch 64, lr 5e-4
    static TrainConfig gpt2_scratchpad();     // batch 64, 20000 iters
    static TrainConfig tandem_nanogpt();      // mixed text+arithmetic, batch 16
    static TrainConfig smoke();               // tiny budget for plumbing checks
};

// Linear warmup from zero to base over `warmup_iters`, then cosine decay to
// min_lr_ratio * base at the final iteration; constant once decay is off.
double lr_at(long long iter, const TrainConfig& cfg);

// Decoupled weight decay (2-D weights only) + bias-corrected Adam update.
// Returns false and leaves parameters untouched when any gradient is
// non-finite.
bool adamw_step(const std::vector<Param<float>*>& params, AdamMoments& moments, double lr,
                const TrainConfig& cfg);

// Concatenated record stream with a per-character completion flag (1 when
// the character belongs to a completion and may carry loss).
struct TokenizedCorpus {
    std::vector<uint16_t> tokens;
    std::vector<uint8_t> completion_flag;
};

TokenizedCorpus tokenize_records(const std::vector<std::string>& records,
                                 const std::vector<size_t>& prompt_lengths, const Vocab& vocab);
TokenizedCorpus tokenize_text(const std::string& text, const Vocab& vocab);

struct MetricsRow {
    long long iter = 0;
    double train_loss = 0, val_loss = 0, eval_accuracy = -1, lr = 0, wallclock_s = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct TrainHooks {
    // optional accuracy probe run at every eval interval
    std::function<double(GptModel&)> eval_accuracy;
    // called after each eval row (checkpoint persistence etc.)
    std::function<void(const MetricsRow&, GptModel&, const AdamMoments&)> on_eval;
};

struct TrainResult {
    std::vector<MetricsRow> log;
    double final_val_loss = 0;
    long long skipped_steps = 0;  // non-finite gradient events
};

// Packed-window next-token training. Windows are contiguous slices of the
// token stream at seeded random offsets; batch x grad_accum windows are
// drawn per iteration from one stream so accumulation preserves the data
// order. The model is updated in place.
TrainResult train(GptModel& model, AdamMoments& moments, const TokenizedCorpus& train_corpus,
                  const TokenizedCorpus& val_corpus, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Resumes a checkpoint on new data with fresh optimizer moments. The
// checkpoint vocabulary must match `vocab`.
GptModel finetune(const Checkpoint& start, const Vocab& vocab, const TokenizedCorpus& train_corpus,
                  const TokenizedCorpus& val_corpus, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}, TrainResult* result = nullptr);

}  // namespace arithlab
