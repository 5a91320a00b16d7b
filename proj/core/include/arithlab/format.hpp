#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "arithlab/arith.hpp"
#include "arithlab/rng.hpp"

namespace arithlab {

enum class FormatKind { plain, reverse, simplified_scratchpad, detailed_scratchpad };
enum class NoiseMode { none, random_A, random_C, random_AC };
enum class SubVersion { v1, v2 };

const char* format_kind_name(FormatKind k);
std::optional<FormatKind> format_kind_from_name(const std::string& name);

struct FormatSpec {
    FormatKind kind = FormatKind::plain;
    bool zero_pad = false;
    int pad_digits = 3;       // operand width when zero_pad is set; result gets +1
    bool dollar_wrap = false; // implied (and forced) for reverse
    NoiseMode noise = NoiseMode::none;
    SubVersion sub_version = SubVersion::v1;
    bool digit_spacing = false;  // spaces between digits, BPE-compat output only

    // Normalizes implied fields and rejects inconsistent combinations.
    FormatSpec normalized() const;
};

struct FormattedSample {
    std::string prompt;      // up to and including '=' or "Target:\n"
    std::string completion;  // remainder of the record, trailing '\n' included
    ArithProblem problem;

    std::string full() const { return prompt + completion; }
};

// Renders the canonical byte string for (problem, spec). Throws
// std::invalid_argument for unsupported (op, kind) pairs.
FormattedSample render(const ArithProblem& problem, const FormatSpec& spec);

// Renders with an explicit raw operand for the sine expansion (the sampler
// keeps the pre-truncation draw; see taylor_sine_trace).
FormattedSample render(const ArithProblem& problem, const FormatSpec& spec, double sine_raw);

// Extracts the graded answer from a model completion. Never throws on
// malformed input; a parse failure is nullopt and graded incorrect.
std::optional<Fixed4> parse_answer(const std::string& completion, const FormatSpec& spec, Op op);

// Replaces simplified-scratchpad step values with random ones; the final
// answer (and subtraction processing line) stays correct.
FormattedSample inject_noise(const FormattedSample& sample, NoiseMode mode, Rng& rng);

struct PerturbedPrompt {
    std::string prompt;        // "<a>+<b>=<o1><o2>" or "$<a>+<b>=<o1><o2>"
    char correct_next = '0';   // token the unperturbed rollout would emit next
    std::array<char, 3> relaxed{};  // {c, c+1 mod 10, c-1 mod 10}
};

// Output-perturbation probe for 3-digit addition; mode "random" draws a
// two-digit prefix different from the true one, "precise" shifts the second
// output token by +/-1 mod 10.
enum class PerturbMode { random, precise };
PerturbedPrompt perturb_output_prefix(const ArithProblem& problem, const FormatSpec& spec,
                                      PerturbMode mode, Rng& rng);

struct TokenCost {
    size_t prompt_tokens = 0;
    size_t completion_tokens = 0;
    size_t total() const { return prompt_tokens + completion_tokens; }
};

// Character-level token accounting; an empty completion still costs one
// token (its newline).
TokenCost token_cost(const FormattedSample& sample);

// True once `completion` contains one full record for the given spec; used
// as the generation stop rule.
bool completion_is_complete(const std::string& completion, const FormatSpec& spec, Op op);

// Every character the (op, spec) grammar can emit; used to build vocabularies
// that cover a format without enumerating a corpus.
std::string format_charset(Op op, const FormatSpec& spec);

}  // namespace arithlab
