#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arithlab/rng.hpp"

namespace arithlab {

// Square matrix with a reveal mask; revealed entries are ground truth.
struct MaskedMatrix {
    int n = 0;
    std::vector<double> entries;   // n*n, row major
    std::vector<uint8_t> revealed; // n*n

    double& at(int i, int j) { return entries[static_cast<size_t>(i) * n + j]; }
    double at(int i, int j) const { return entries[static_cast<size_t>(i) * n + j]; }
    bool is_revealed(int i, int j) const { return revealed[static_cast<size_t>(i) * n + j] != 0; }
};

// M[i][j] = (i+1) + (j+1): the sum of two rank-one matrices, rank 2 for n >= 2.
std::vector<double> addition_matrix(int n);

// Exactly m distinct cells revealed, uniform without replacement.
std::vector<uint8_t> reveal_mask(int n, long long m, Rng& rng);

MaskedMatrix masked_addition_matrix(int n, long long m, Rng& rng);

enum class FillRule {
    additive,        // unknown = row-neighbor + col-neighbor - diagonal
    multiplicative,  // unknown = row-neighbor * col-neighbor / diagonal
};

struct CompletionResult {
    std::vector<double> completed;
    bool success = false;
    long long unresolved = 0;
    int sweeps = 0;
};

// Iterative 2x2 completion: scan contiguous 2x2 blocks, fill any block with
// exactly one unknown cell, stop when a sweep resolves nothing. Success
// requires full resolution and, when `truth` is given, exact recovery.
// Division by zero under the multiplicative rule leaves the block unresolved.
CompletionResult complete_rank2(const MaskedMatrix& masked, FillRule rule,
                                const std::vector<double>* truth = nullptr);

struct SweepPoint {
    int n = 0;
    long long m = 0;
    int trials = 0;
    double success_rate = 0.0;
};

// Success probability of recovering the addition matrix vs revealed count.
std::vector<SweepPoint> sweep_success(const std::vector<int>& n_list,
                                      const std::vector<long long>& m_grid, int trials,
                                      FillRule rule, uint64_t seed);

std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace arithlab
