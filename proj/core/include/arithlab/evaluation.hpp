#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "arithlab/arith.hpp"
#include "arithlab/format.hpp"
#include "arithlab/model.hpp"
#include "arithlab/sampling.hpp"
#include "arithlab/tokenizer.hpp"

namespace arithlab {

// Anything that can extend a text prompt: a trained model or an oracle stub.
class TextCompleter {
public:
    virtual ~TextCompleter() = default;
    // Extends `prompt` until `done(completion)` or max_new characters.
    virtual std::string complete(const std::string& prompt,
                                 const std::function<bool(const std::string&)>& done,
                                 int max_new) = 0;
    // Single next character (perturbation probes).
    virtual char next_char(const std::string& prompt) = 0;
    // Batched variant; the default loops over complete().
    virtual std::vector<std::string> complete_batch(
        const std::vector<std::string>& prompts,
        const std::function<bool(const std::string&)>& done, int max_new);
};

// Greedy (default) or temperature decoding through a model + vocabulary.
class ModelCompleter : public TextCompleter {
public:
    ModelCompleter(GptModel& model, const Vocab& vocab, double temperature = 0.0,
                   uint64_t sample_seed = 0);
    std::string complete(const std::string& prompt,
                         const std::function<bool(const std::string&)>& done,
                         int max_new) override;
    char next_char(const std::string& prompt) override;
    std::vector<std::string> complete_batch(const std::vector<std::string>& prompts,
                                            const std::function<bool(const std::string&)>& done,
                                            int max_new) override;

private:
    GptModel& model_;
    const Vocab& vocab_;
    double temperature_;
    Rng rng_;
};

// Computes the ground-truth continuation from the operands in the prompt.
// Next-token queries use only the operands and the answer position, i.e.
// the digit-wise mechanism, never the (possibly perturbed) prefix digits.
class OracleCompleter : public TextCompleter {
public:
    explicit OracleCompleter(const FormatSpec& spec);
    std::string complete(const std::string& prompt,
                         const std::function<bool(const std::string&)>& done,
                         int max_new) override;
    char next_char(const std::string& prompt) override;

private:
    FormatSpec spec_;
};

// Always answers with one fixed completion; calibration stub.
class ConstantCompleter : public TextCompleter {
public:
    explicit ConstantCompleter(std::string completion) : completion_(std::move(completion)) {}
    std::string complete(const std::string&, const std::function<bool(const std::string&)>&,
                         int) override {
        return completion_;
    }
    char next_char(const std::string&) override { return completion_.empty() ? '\n' : completion_[0]; }

private:
    std::string completion_;
};

struct StratumStat {
    std::string key;
    long long correct = 0;
    long long count = 0;
    double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

struct EvalReport {
    long long n = 0;
    long long correct = 0;
    long long parse_failures = 0;
    double overall = 0.0;  // integer ops exact; sine/sqrt at eps = 0
    std::vector<StratumStat> by_digit_pair;
    std::vector<StratumStat> by_carry;
    std::vector<std::pair<double, double>> eps_accuracy;  // unary ops only
    double exclusion_accuracy = -1.0;  // defined only when exclusions matched
    long long exclusion_count = 0;
    double parse_failure_rate() const { return n ? static_cast<double>(parse_failures) / n : 0.0; }

    std::string csv() const;           // one row per stratum
    std::string summary_text() const;  // flat key=value
};

struct EvalOptions {
    std::vector<double> eps_grid = {0.0, 5e-4, 5e-3};
    Exclusions exclusions;
    int max_new = 0;          // 0 = derived from the format
    std::string prompt_prefix;  // prepended verbatim (few-shot exemplars)
};

EvalReport evaluate(TextCompleter& completer, const Dataset& test_set, const FormatSpec& spec,
                    const EvalOptions& options = {});

struct PerturbationResult {
    double exact = 0.0;
    double relaxed = 0.0;
    long long n = 0;
};

PerturbationResult perturbation_eval(TextCompleter& completer, const Dataset& test_set,
                                     const FormatSpec& spec, PerturbMode mode, uint64_t seed);

enum class ExemplarSource { same_task, other_task, text_prompt, noisy };

struct FewShotSpec {
    int shots = 1;  // exemplars per prompt, 0..3
    ExemplarSource source = ExemplarSource::same_task;
    Op exemplar_op = Op::add;  // for other_task
    uint64_t seed = 7;
};

struct FewShotResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::array<double, 5> per_set{};
};

// Five fixed exemplar sets per condition; accuracy mean/std across them.
FewShotResult fewshot_eval(TextCompleter& completer, const FewShotSpec& fs,
                           const Dataset& test_set, const FormatSpec& spec,
                           int model_context = 0, const std::string& corpus_text = "");

// The five text-prompt families: short non-corpus, short in-corpus, long
// in-corpus, number-bearing, long non-corpus. Corpus-derived families fall
// back to fixed strings when `corpus_text` is empty.
std::array<std::vector<std::string>, 5> text_prompt_families(const std::string& corpus_text);

struct LengthGridRow {
    int digits = 0;
    double accuracy = 0.0;
    bool trained = false;
    long long n = 0;
};

// 100 random samples per operand length; lengths missing from training are
// flagged.
std::vector<LengthGridRow> length_generalization_grid(TextCompleter& completer, Op op,
                                                      const FormatSpec& spec, int min_digits,
                                                      int max_digits,
                                                      const std::vector<int>& trained_lengths,
                                                      uint64_t seed, int samples_per_length = 100);

std::string length_grid_csv(const std::vector<LengthGridRow>& rows);

struct TokenEfficiencyRow {
    std::string format;
    long long samples = 0;
    double mean_tokens = 0.0;
    double total_tokens = 0.0;  // samples x mean
};

// Unique-token cost of a balanced addition set per format and sample count.
std::vector<TokenEfficiencyRow> token_efficiency_report(const std::vector<FormatKind>& formats,
                                                        const std::vector<long long>& sizes,
                                                        uint64_t seed);

std::string token_efficiency_csv(const std::vector<TokenEfficiencyRow>& rows);

// Grading helper shared by report assembly: exact for integer results,
// |diff| <= eps on the 1e-4 grid for sine/sqrt.
bool graded_correct(const ArithProblem& problem, const Fixed4& parsed, double eps);

// Expected completion cap for a format (generation budget).
int default_max_new(const FormatSpec& spec, Op op);

}  // namespace arithlab
