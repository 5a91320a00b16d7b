#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "arithlab/rng.hpp"

namespace arithlab {

struct ModelConfig {
    int n_layers = 6;
    int n_heads = 6;
    int d_embed = 384;
    int context_length = 256;
    int vocab_size = 13;
    float dropout = 0.0f;
    bool weight_tying = true;

    void validate() const;  // throws std::invalid_argument on bad shapes
    long long parameter_count() const;            // every learnable scalar
    long long parameter_count_reporting() const;  // lineage convention: minus wpe

    static ModelConfig nanogpt(int vocab, int context);  // 6L/6H/384
    static ModelConfig gpt2(int vocab);                  // 12L/12H/768, ctx 1024
};

template <typename S>
struct Param {
    std::string name;
    long long rows = 0, cols = 0;  // biases/norms use rows == 1
    std::vector<S> data;
    std::vector<S> grad;
    bool decayable = false;  // 2-D weight matrices only

    long long size() const { return rows * cols; }
};

// Decoder-only transformer: learned token + absolute positional embeddings,
// pre-norm causal self-attention blocks with GELU MLPs, weight-tied head by
// default. Forward/backward are exact reverse-mode pairs; float is the
// training precision, the double instantiation backs finite-difference
// checks.
template <typename S>
class GptModelT {
public:
    GptModelT(const ModelConfig& cfg, uint64_t init_seed);
    ~GptModelT();
    GptModelT(GptModelT&&) noexcept;
    GptModelT& operator=(GptModelT&&) noexcept;

    const ModelConfig& config() const { return cfg_; }
    std::vector<Param<S>*> parameters();
    const Param<S>& parameter(const std::string& name) const;
    Param<S>& parameter(const std::string& name);
    void zero_grads();

    // Cross-entropy of next-token prediction over the masked positions of a
    // (batch x T) window; targets are inputs shifted by one. Accumulates
    // gradients scaled by `grad_scale` when `backward` is set. `loss_mask`
    // may be empty (all positions count) or hold one byte per target.
    double step_loss(const std::vector<uint16_t>& tokens_x, const std::vector<uint16_t>& tokens_y,
                     int batch, int seq_len, const std::vector<uint8_t>& loss_mask, bool backward,
                     double grad_scale, Rng* dropout_rng);

    // Logits for the final position of each row; eval mode, no dropout.
    std::vector<S> last_logits(const std::vector<uint16_t>& tokens, int batch, int seq_len);

    // Full logits tensor (batch*T*vocab), eval mode. Used by tests.
    std::vector<S> forward_logits(const std::vector<uint16_t>& tokens, int batch, int seq_len);

    struct GenerateResult {
        std::vector<uint16_t> ids;   // generated continuation only
        bool truncated_left = false; // context overflow policy engaged
        bool hit_limit = false;      // stopped by max_new, not by `done`
    };

    // Autoregressive decoding. temperature <= 0 or greedy=true is argmax;
    // otherwise samples logits/temperature with `rng`. `done` sees the ids
    // generated so far after every step.
    GenerateResult generate(const std::vector<uint16_t>& prompt, int max_new, bool greedy,
                            double temperature, Rng* rng,
                            const std::function<bool(const std::vector<uint16_t>&)>& done);

    // Batched greedy decoding for rows sharing one prompt length; `done`
    // receives the row index with that row's generated ids.
    std::vector<GenerateResult> generate_batch(
        const std::vector<std::vector<uint16_t>>& prompts, int max_new,
        const std::function<bool(size_t, const std::vector<uint16_t>&)>& done);

private:
    ModelConfig cfg_;
    std::vector<Param<S>> params_;
    struct Workspace;
    std::unique_ptr<Workspace> ws_;

    Param<S>& p(const std::string& name);
    const Param<S>& p(const std::string& name) const;
    void init_params(uint64_t seed);
    double forward_backward(const uint16_t* xs, const uint16_t* ys, int batch, int seq_len,
                            const uint8_t* mask, bool backward, double grad_scale,
                            Rng* dropout_rng, std::vector<S>* logits_out);
};

using GptModel = GptModelT<float>;

extern template class GptModelT<float>;
extern template class GptModelT<double>;

// Mean cross-entropy (natural log) of `logits` against `targets` over the
// unmasked positions; computed in double regardless of S. Throws when every
// position is masked.
double cross_entropy(const std::vector<float>& logits, const std::vector<uint16_t>& targets,
                     int vocab, const std::vector<uint8_t>& mask);

}  // namespace arithlab
