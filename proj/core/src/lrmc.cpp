#include "arithlab/lrmc.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace arithlab {

std::vector<double> addition_matrix(int n) {
    if (n < 2) throw std::invalid_argument("addition_matrix: n must be >= 2");
    std::vector<double> m(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m[static_cast<size_t>(i) * n + j] = (i + 1) + (j + 1);
    return m;
}

std::vector<uint8_t> reveal_mask(int n, long long m, Rng& rng) {
    long long cells = static_cast<long long>(n) * n;
    if (m < 0 || m > cells) throw std::invalid_argument("reveal_mask: m out of range");
    // partial Fisher-Yates over cell indices
    std::vector<int> idx(static_cast<size_t>(cells));
    for (long long i = 0; i < cells; ++i) idx[static_cast<size_t>(i)] = static_cast<int>(i);
    std::vector<uint8_t> mask(static_cast<size_t>(cells), 0);
    for (long long i = 0; i < m; ++i) {
        long long j = i + static_cast<long long>(rng.below(static_cast<uint64_t>(cells - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        mask[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
    }
    return mask;
}

MaskedMatrix masked_addition_matrix(int n, long long m, Rng& rng) {
    MaskedMatrix mm;
    mm.n = n;
    mm.entries = addition_matrix(n);
    mm.revealed = reveal_mask(n, m, rng);
    // unrevealed entries carry no information
    for (size_t i = 0; i < mm.entries.size(); ++i)
        if (!mm.revealed[i]) mm.entries[i] = 0.0;
    return mm;
}

CompletionResult complete_rank2(const MaskedMatrix& masked, FillRule rule,
                                const std::vector<double>* truth) {
    const int n = masked.n;
    CompletionResult res;
    res.completed = masked.entries;
    std::vector<uint8_t> known = masked.revealed;
    auto idx = [n](int i, int j) { return static_cast<size_t>(i) * n + j; };

    int filled_this_sweep = 1;
    while (filled_this_sweep >= 1) {
        filled_this_sweep = 0;
        ++res.sweeps;
        for (int i = 0; i + 1 < n; ++i) {
            for (int j = 0; j + 1 < n; ++j) {
                int unknowns = !known[idx(i, j)] + !known[idx(i + 1, j)] + !known[idx(i, j + 1)] +
                               !known[idx(i + 1, j + 1)];
                if (unknowns != 1) continue;
                // locate the hole and its three neighbors within the block
                int ui = !known[idx(i, j)] ? i : (!known[idx(i + 1, j)] ? i + 1 : (!known[idx(i, j + 1)] ? i : i + 1));
                int uj = !known[idx(i, j)] ? j : (!known[idx(i + 1, j)] ? j : j + 1);
                int oi = ui == i ? i + 1 : i;  // other row/column inside the block
                int oj = uj == j ? j + 1 : j;
                double row_nb = res.completed[idx(ui, oj)];
                double col_nb = res.completed[idx(oi, uj)];
                double diag = res.completed[idx(oi, oj)];
                double value;
                if (rule == FillRule::additive) {
                    value = row_nb + col_nb - diag;
                } else {
                    if (diag == 0.0) continue;  // unresolvable block, not fatal
                    value = row_nb * col_nb / diag;
                }
                res.completed[idx(ui, uj)] = value;
                known[idx(ui, uj)] = 1;
                ++filled_this_sweep;
            }
        }
    }

    res.unresolved = 0;
    for (uint8_t k : known) res.unresolved += k == 0;
    res.success = res.unresolved == 0;
    if (res.success && truth) {
        for (size_t i = 0; i < res.completed.size(); ++i) {
            if (res.completed[i] != (*truth)[i]) {
                res.success = false;
                break;
            }
        }
    }
    return res;
}

std::vector<SweepPoint> sweep_success(const std::vector<int>& n_list,
                                      const std::vector<long long>& m_grid, int trials,
                                      FillRule rule, uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("sweep_success: trials must be >= 1");
    std::vector<SweepPoint> points;
    Rng master(seed);
    for (int n : n_list) {
        std::vector<double> truth = addition_matrix(n);
        for (long long m : m_grid) {
            if (m > static_cast<long long>(n) * n) continue;
            int successes = 0;
            for (int t = 0; t < trials; ++t) {
                Rng trial_rng = master.child(
                    (static_cast<uint64_t>(n) << 40) ^ (static_cast<uint64_t>(m) << 16) ^
                    static_cast<uint64_t>(t));
                MaskedMatrix mm = masked_addition_matrix(n, m, trial_rng);
                CompletionResult r = complete_rank2(mm, rule, &truth);
                successes += r.success;
            }
            points.push_back({n, m, trials, static_cast<double>(successes) / trials});
        }
    }
    return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    out << "n,m,trials,success_rate\n";
    for (const SweepPoint& p : points)
        out << p.n << ',' << p.m << ',' << p.trials << ',' << p.success_rate << '\n';
    return out.str();
}

}  // namespace arithlab
