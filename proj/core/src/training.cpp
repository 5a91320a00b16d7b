#include "arithlab/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace arithlab {

void TrainConfig::validate() const {
    if (batch_size < 1 || grad_accum < 1) throw std::invalid_argument("train: bad batch shape");
    if (iterations < 0 || warmup_iters < 0 || warmup_iters > iterations)
        throw std::invalid_argument("train: warmup must not exceed iterations");
    if (lr <= 0 || min_lr_ratio < 0 || min_lr_ratio > 1)
        throw std::invalid_argument("train: bad learning-rate settings");
}

TrainConfig TrainConfig::nanogpt_plain() { return {}; }

TrainConfig TrainConfig::nanogpt_scratchpad() {
    TrainConfig c;
    c.batch_size = 16;
    c.iterations = 50000;
    c.warmup_iters = 0;
    return c;
}

TrainConfig TrainConfig::gpt2_plain() {
    TrainConfig c;
    c.batch_size = 64;
    c.lr = 5e-4;
    return c;
}

TrainConfig TrainConfig::gpt2_scratchpad() {
    TrainConfig c;
    c.batch_size = 64;
    c.lr = 5e-4;
    c.iterations = 20000;
    c.warmup_iters = 0;
    return c;
}

TrainConfig TrainConfig::tandem_nanogpt() {
    TrainConfig c;
    c.batch_size = 16;
    c.warmup_iters = 0;
    return c;
}

TrainConfig TrainConfig::smoke() {
    TrainConfig c;
    c.batch_size = 8;
    c.iterations = 200;
    c.warmup_iters = 20;
    c.eval_interval = 100;
    return c;
}

double lr_at(long long iter, const TrainConfig& cfg) {
    if (cfg.warmup_iters > 0 && iter < cfg.warmup_iters)
        return cfg.lr * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
    if (!cfg.decay_lr) return cfg.lr;
    double min_lr = cfg.lr * cfg.min_lr_ratio;
    long long span = cfg.iterations - cfg.warmup_iters;
    if (span <= 0) return min_lr;
    double t = static_cast<double>(iter - cfg.warmup_iters) / static_cast<double>(span);
    t = std::min(1.0, std::max(0.0, t));
    return min_lr + 0.5 * (1.0 + std::cos(3.141592653589793 * t)) * (cfg.lr - min_lr);
}

bool adamw_step(const std::vector<Param<float>*>& params, AdamMoments& moments, double lr,
                const TrainConfig& cfg) {
    if (moments.m.size() != params.size()) throw std::invalid_argument("adamw: stale moments");
    for (const Param<float>* p : params)
        for (float g : p->grad)
            if (!std::isfinite(g)) return false;

    moments.steps += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(moments.steps));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(moments.steps));
    for (size_t i = 0; i < params.size(); ++i) {
        Param<float>& p = *params[i];
        std::vector<float>& m = moments.m[i];
        std::vector<float>& v = moments.v[i];
        double wd = p.decayable ? cfg.weight_decay : 0.0;
        for (size_t j = 0; j < p.data.size(); ++j) {
            double g = p.grad[j];
            double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            double mhat = mj / bc1;
            double vhat = vj / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg.adam_eps) + wd * p.data[j];
            p.data[j] = static_cast<float>(p.data[j] - lr * update);
        }
    }
    return true;
}

TokenizedCorpus tokenize_records(const std::vector<std::string>& records,
                                 const std::vector<size_t>& prompt_lengths, const Vocab& vocab) {
    if (!prompt_lengths.empty() && prompt_lengths.size() != records.size())
        throw std::invalid_argument("tokenize_records: prompt length list size mismatch");
    TokenizedCorpus out;
    for (size_t r = 0; r < records.size(); ++r) {
        std::vector<uint16_t> ids = vocab.encode(records[r]);
        size_t plen = prompt_lengths.empty() ? 0 : prompt_lengths[r];
        for (size_t i = 0; i < ids.size(); ++i) {
            out.tokens.push_back(ids[i]);
            out.completion_flag.push_back(i >= plen ? 1 : 0);
        }
    }
    return out;
}

TokenizedCorpus tokenize_text(const std::string& text, const Vocab& vocab) {
    TokenizedCorpus out;
    std::vector<uint16_t> ids = vocab.encode(text);
    out.tokens = std::move(ids);
    out.completion_flag.assign(out.tokens.size(), 1);
    return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream s;
    s << "iter,train_loss,val_loss,eval_accuracy,lr,wallclock\n";
    for (const MetricsRow& r : rows) {
        s << r.iter << ',' << r.train_loss << ',' << r.val_loss << ',';
        if (r.eval_accuracy >= 0) s << r.eval_accuracy;
        s << ',' << r.lr << ',' << r.wallclock_s << '\n';
    }
    return s.str();
}

namespace {

struct WindowBatch {
    std::vector<uint16_t> x, y;
    std::vector<uint8_t> mask;
};

// Contiguous window starting at `off`: x = s[off, off+T), y shifted by one.
void fill_window(const TokenizedCorpus& corpus, size_t off, int seq_len, bool completion_only,
                 WindowBatch& out) {
    for (int i = 0; i < seq_len; ++i) {
        out.x.push_back(corpus.tokens[off + static_cast<size_t>(i)]);
        out.y.push_back(corpus.tokens[off + static_cast<size_t>(i) + 1]);
        if (completion_only)
            out.mask.push_back(corpus.completion_flag[off + static_cast<size_t>(i) + 1]);
    }
}

double eval_corpus_loss(GptModel& model, const TokenizedCorpus& corpus, int seq_len,
                        bool completion_only, int max_batches) {
    size_t usable = corpus.tokens.size() > static_cast<size_t>(seq_len)
                        ? corpus.tokens.size() - static_cast<size_t>(seq_len) - 1
                        : 0;
    if (corpus.tokens.size() < static_cast<size_t>(seq_len) + 2) return std::nan("");
    double total = 0;
    int batches = 0;
    for (int b = 0; b < max_batches; ++b) {
        size_t off = (static_cast<size_t>(b) * 9973) % (usable + 1);
        WindowBatch win;
        fill_window(corpus, off, seq_len, completion_only, win);
        total += model.step_loss(win.x, win.y, 1, seq_len, win.mask, false, 1.0, nullptr);
        ++batches;
    }
    return total / batches;
}

}  // namespace

TrainResult train(GptModel& model, AdamMoments& moments, const TokenizedCorpus& train_corpus,
                  const TokenizedCorpus& val_corpus, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
    cfg.validate();
    int seq_len = cfg.seq_len > 0 ? cfg.seq_len : model.config().context_length;
    if (seq_len > model.config().context_length)
        throw std::invalid_argument("train: window exceeds model context length");
    if (train_corpus.tokens.size() < static_cast<size_t>(seq_len) + 2)
        throw std::invalid_argument("train: corpus shorter than one window (" +
                                    std::to_string(train_corpus.tokens.size()) + " tokens)");
    if (moments.empty()) {
        auto params = model.parameters();
        moments.reset(params);
    }

    auto params = model.parameters();
    Rng data_rng = Rng(cfg.seed).child(0xDA7A1234ull);
    Rng dropout_rng = Rng(cfg.seed).child(0xD7090000ull);

    TrainResult result;
    size_t usable = train_corpus.tokens.size() - static_cast<size_t>(seq_len) - 1;
    auto started = std::chrono::steady_clock::now();

    for (long long iter = 0; iter < cfg.iterations; ++iter) {
        double lr = lr_at(iter, cfg);
        model.zero_grads();
        double loss_sum = 0;
        for (int micro = 0; micro < cfg.grad_accum; ++micro) {
            WindowBatch win;
            win.x.reserve(static_cast<size_t>(cfg.batch_size) * seq_len);
            win.y.reserve(win.x.capacity());
            for (int b = 0; b < cfg.batch_size; ++b) {
                size_t off = static_cast<size_t>(data_rng.below(usable + 1));
                fill_window(train_corpus, off, seq_len, cfg.completion_only_loss, win);
            }
            loss_sum += model.step_loss(win.x, win.y, cfg.batch_size, seq_len, win.mask, true,
                                        1.0 / cfg.grad_accum, &dropout_rng);
        }
        double train_loss = loss_sum / cfg.grad_accum;
        if (!adamw_step(params, moments, lr, cfg)) {
            ++result.skipped_steps;
        }

        bool last = iter + 1 == cfg.iterations;
        if ((cfg.eval_interval > 0 && (iter + 1) % cfg.eval_interval == 0) || last) {
            MetricsRow row;
            row.iter = iter + 1;
            row.train_loss = train_loss;
            row.val_loss = eval_corpus_loss(model, val_corpus, seq_len, cfg.completion_only_loss, 8);
            row.lr = lr;
            row.wallclock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            if (hooks.eval_accuracy) row.eval_accuracy = hooks.eval_accuracy(model);
            result.log.push_back(row);
            if (hooks.on_eval) hooks.on_eval(row, model, moments);
            if (last) result.final_val_loss = row.val_loss;
        }
    }
    return result;
}

GptModel finetune(const Checkpoint& start, const Vocab& vocab, const TokenizedCorpus& train_corpus,
                  const TokenizedCorpus& val_corpus, const TrainConfig& cfg,
                  const TrainHooks& hooks, TrainResult* result) {
    if (vocab.symbols() != start.vocab_symbols)
        throw std::invalid_argument("finetune: vocabulary mismatch with checkpoint");
    GptModel model(start.config, start.seed);
    start.restore_into(model);
    AdamMoments moments;  // fine-tuning restarts the optimizer state
    TrainResult r = train(model, moments, train_corpus, val_corpus, cfg, hooks);
    if (result) *result = r;
    return model;
}

}  // namespace arithlab
