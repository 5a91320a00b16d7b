#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arithlab/model.hpp"
#include "arithlab/tokenizer.hpp"

namespace arithlab {

// Adam first/second moment estimates, one pair per parameter tensor in
// model parameter order.
struct AdamMoments {
    std::vector<std::vector<float>> m, v;
    long long steps = 0;

    void reset(const std::vector<Param<float>*>& params);
    bool empty() const { return m.empty(); }
};

// Versioned binary container: config + inline vocab + raw little-endian
// float32 tensors in declared order, optional optimizer moments. A reload
// reproduces forward outputs bit-exactly.
struct Checkpoint {
    ModelConfig config;
    std::string vocab_path;    // advisory; symbols below are authoritative
    std::string vocab_symbols;
    long long iteration = 0;
    uint64_t seed = 0;

    std::vector<std::string> tensor_names;
    std::vector<std::vector<float>> tensors;
    std::optional<AdamMoments> moments;

    static Checkpoint capture(const GptModel& model, const Vocab& vocab,
                              const std::string& vocab_path, long long iteration, uint64_t seed,
                              const AdamMoments* moments);
    void restore_into(GptModel& model) const;  // throws on shape mismatch
    Vocab vocab() const { return Vocab::from_symbols(vocab_symbols); }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace arithlab
