#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arithlab/arith.hpp"
#include "arithlab/format.hpp"
#include "arithlab/rng.hpp"

namespace arithlab {

enum class Balance { random, balanced_digits, balanced_carry, both };

const char* balance_name(Balance b);
std::optional<Balance> balance_from_name(const std::string& name);

// Ordered key=value pairs; printed one per line in insertion order.
using Manifest = std::vector<std::pair<std::string, long long>>;

long long manifest_get(const Manifest& m, const std::string& key);
std::string manifest_text(const Manifest& m);
void write_manifest(const std::string& path, const Manifest& m);

struct Dataset {
    Op op = Op::add;
    std::vector<ArithProblem> examples;
    Manifest manifest;
};

// Digit/carry-balanced 3-digit addition sets. For sizes with a published
// schedule row the digit and carry counts are hit exactly; other sizes get
// all 1-digit sums, proportional 2-digit and a carry-balanced 3-digit rest.
Dataset build_balanced_addition(long long n, uint64_t seed);

// Generalized builder exposing the balancing axes independently.
Dataset build_addition_dataset(long long n, Balance balance, uint64_t seed);

// Equal operand-digit-pair coverage for D-digit addition: all 100 1-digit
// sums plus d = (N-100)/(D(D+1)/2 - 1) pairs per (k1<=k2) class, operand
// order swapped with probability 1/2.
Dataset build_multidigit(long long n, int max_digits, uint64_t seed);

// Same operand pairs re-labelled for another binary operation.
Dataset relabel(const Dataset& src, Op op);

Dataset build_mul_dataset(long long n, uint64_t seed);
Dataset build_unary_dataset(Op op, long long n, uint64_t seed);  // sine / sqrt

// Operand-level holdouts: excluded operand values and (digit, position)
// pairs, positions 1-indexed from the least significant digit.
struct Exclusions {
    std::vector<long long> values;
    std::vector<std::pair<int, int>> digit_at;  // (digit, position)

    bool empty() const { return values.empty() && digit_at.empty(); }
    bool matches_operand(long long v) const;
    bool matches(const ArithProblem& p) const;
};

struct ExclusionSplit {
    Dataset kept;
    Dataset removed;  // the matching exclusion test set
};

ExclusionSplit apply_exclusions(const Dataset& dataset, const Exclusions& exclusions);

// Uniformly sampled evaluation pairs disjoint from the training set.
// Truncates to the available complement when the space is exhausted (the
// <=2-digit multiplication table has fewer than 10,000 free cells).
Dataset build_test_set(Op op, long long n, int max_digits, const Dataset& train, uint64_t seed);

// Rendered record text for every example, in order; scratchpad noise is
// applied here when the spec requests it.
std::vector<std::string> render_records(const Dataset& dataset, const FormatSpec& spec,
                                        uint64_t noise_seed = 0);

struct RenderedDataset {
    Op op = Op::add;
    std::vector<std::string> records;
};

struct JointStream {
    std::string text;
    Manifest manifest;
};

// Uniform global shuffle of the per-task record union.
JointStream build_joint_mixture(const std::vector<RenderedDataset>& parts, uint64_t seed);

// Interleaves rendered arithmetic records between the dialogue chunks of a
// text corpus (chunks are separated by blank lines). u_max = 0 picks the
// smallest cap that places everything in expectation; a user-supplied cap
// that leaves records unplaced is an error.
JointStream mix_with_text(const std::string& corpus,
                          const std::vector<RenderedDataset>& streams, uint64_t seed,
                          int u_max = 0);

void write_corpus(const std::string& path, const std::vector<std::string>& records);

}  // namespace arithlab
