#include "arithlab/sampling.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace arithlab {

const char* balance_name(Balance b) {
    switch (b) {
        case Balance::random: return "random";
        case Balance::balanced_digits: return "balanced_digits";
        case Balance::balanced_carry: return "balanced_carry";
        case Balance::both: return "both";
    }
    return "?";
}

std::optional<Balance> balance_from_name(const std::string& name) {
    if (name == "random") return Balance::random;
    if (name == "balanced_digits" || name == "digits") return Balance::balanced_digits;
    if (name == "balanced_carry" || name == "carry") return Balance::balanced_carry;
    if (name == "both" || name == "balanced") return Balance::both;
    return std::nullopt;
}

long long manifest_get(const Manifest& m, const std::string& key) {
    for (const auto& [k, v] : m)
        if (k == key) return v;
    throw std::out_of_range("manifest: missing key " + key);
}

std::string manifest_text(const Manifest& m) {
    std::string out;
    for (const auto& [k, v] : m) out += k + "=" + std::to_string(v) + "\n";
    return out;
}

void write_manifest(const std::string& path, const Manifest& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    f << manifest_text(m);
}

namespace {

// Published balanced-addition schedule: total -> {1,2,3-digit counts} and
// {0..3 carry counts}. Sizes off the schedule interpolate.
struct ScheduleRow {
    long long n;
    long long digits[3];
    long long carries[4];
};

constexpr ScheduleRow kSchedule[] = {
    {500, {100, 45, 355}, {163, 141, 97, 99}},
    {1000, {100, 90, 810}, {283, 268, 236, 213}},
    {2000, {100, 180, 1720}, {535, 502, 481, 482}},
    {3000, {100, 270, 2630}, {781, 782, 748, 689}},
    {4000, {100, 360, 3540}, {1020, 1016, 958, 1006}},
    {5000, {100, 450, 4450}, {1279, 1271, 1229, 1221}},
    {10000, {100, 900, 9000}, {2500, 2500, 2500, 2500}},
};

const ScheduleRow* schedule_row(long long n) {
    for (const ScheduleRow& r : kSchedule)
        if (r.n == n) return &r;
    return nullptr;
}

uint64_t pair_key(long long a, long long b) {
    return static_cast<uint64_t>(a) * 2000003ull + static_cast<uint64_t>(b);
}

int max_digits_of_pair(long long a, long long b) {
    return std::max(digit_count(a), digit_count(b));
}

// Uniform operand pair whose larger operand has exactly `digits` digits.
std::pair<long long, long long> draw_pair_in_class(int digits, Rng& rng) {
    long long hi = 1;
    for (int i = 0; i < digits; ++i) hi *= 10;
    while (true) {
        long long a = rng.range(0, hi - 1);
        long long b = rng.range(0, hi - 1);
        if (max_digits_of_pair(a, b) == digits) return {a, b};
    }
}

Manifest addition_manifest(const std::vector<ArithProblem>& ex, Op op) {
    long long digits[4] = {0, 0, 0, 0};  // index by max digit count, 4+ lumped
    long long carries[4] = {0, 0, 0, 0};
    long long carry_overflow = 0;
    for (const ArithProblem& p : ex) {
        int d = std::min(4, max_digits_of_pair(p.a, p.b));
        ++digits[d - 1];
        int c = carry_count(p.a, p.b, op);
        if (c <= 3)
            ++carries[c];
        else
            ++carry_overflow;
    }
    Manifest m;
    m.emplace_back("total", static_cast<long long>(ex.size()));
    for (int i = 0; i < 4; ++i)
        if (digits[i]) m.emplace_back("digits_" + std::to_string(i + 1), digits[i]);
    for (int i = 0; i < 4; ++i) m.emplace_back("carry_" + std::to_string(i), carries[i]);
    if (carry_overflow) m.emplace_back("carry_4plus", carry_overflow);
    return m;
}

}  // namespace

Dataset build_balanced_addition(long long n, uint64_t seed) {
    if (n < 100)
        throw std::invalid_argument("build_balanced_addition: need at least the 100 1-digit sums");
    Rng rng(seed);
    std::vector<ArithProblem> ex;
    std::unordered_set<uint64_t> used;

    // every 1-digit pair, fixed carry contribution (55 zero-carry, 45 one-carry)
    for (long long a = 0; a <= 9; ++a)
        for (long long b = 0; b <= 9; ++b) {
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
        }
    if (n == 100) {
        Dataset d{Op::add, std::move(ex), {}};
        d.manifest = addition_manifest(d.examples, Op::add);
        return d;
    }

    const ScheduleRow* row = schedule_row(n);
    long long n2, n3;
    long long quota[4];
    bool exact_quota = false;

    if (row) {
        n2 = row->digits[1];
        n3 = row->digits[2];
        quota[0] = row->carries[0] - 55;
        quota[1] = row->carries[1] - 45;
        quota[2] = row->carries[2];
        quota[3] = row->carries[3];
        exact_quota = true;
    } else if (n <= 10000) {
        n2 = std::min<long long>(n - 100, (900 * n) / 10000);
        n3 = n - 100 - n2;
        // the 3-digit remainder is carry-balanced within itself; the 2-digit
        // slice stays unconstrained
        for (int i = 0; i < 4; ++i) quota[i] = n3 / 4 + (i < n3 % 4 ? 1 : 0);
    } else {
        // grow the 10k set with uniform extra pairs under total carry quotas
        Dataset base = build_balanced_addition(10000, seed);
        ex = std::move(base.examples);
        used.clear();
        for (const ArithProblem& p : ex) used.insert(pair_key(p.a, p.b));
        long long total_quota[4];
        for (int i = 0; i < 4; ++i) total_quota[i] = n / 4 + (i < n % 4 ? 1 : 0);
        long long have[4] = {0, 0, 0, 0};
        for (const ArithProblem& p : ex) ++have[carry_count(p.a, p.b, Op::add)];
        long long remaining = n - static_cast<long long>(ex.size());
        while (remaining > 0) {
            long long a = rng.range(0, 999), b = rng.range(0, 999);
            if (used.count(pair_key(a, b))) continue;
            int c = carry_count(a, b, Op::add);
            if (have[c] >= total_quota[c]) continue;
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
            ++have[c];
            --remaining;
        }
        Dataset d{Op::add, std::move(ex), {}};
        d.manifest = addition_manifest(d.examples, Op::add);
        return d;
    }

    if (quota[0] < 0 || quota[1] < 0)
        throw std::invalid_argument("build_balanced_addition: infeasible schedule");

    // 2-digit slice, mixes (1,2)/(2,1)/(2,2) split evenly
    long long mix_counts[3] = {n2 / 3, n2 / 3, n2 / 3};
    for (long long i = 0; i < n2 % 3; ++i) ++mix_counts[i];
    long long filled2[4] = {0, 0, 0, 0};
    for (int mix = 0; mix < 3; ++mix) {
        long long want = mix_counts[mix];
        while (want > 0) {
            long long a, b;
            if (mix == 0) {
                a = rng.range(0, 9);
                b = rng.range(10, 99);
            } else if (mix == 1) {
                a = rng.range(10, 99);
                b = rng.range(0, 9);
            } else {
                a = rng.range(10, 99);
                b = rng.range(10, 99);
            }
            if (used.count(pair_key(a, b))) continue;
            int c = carry_count(a, b, Op::add);
            if (exact_quota && quota[c] - filled2[c] <= 0) continue;
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
            ++filled2[c];
            --want;
        }
    }

    // 3-digit slice fills the remaining carry quotas exactly
    long long quota3[4];
    for (int i = 0; i < 4; ++i) quota3[i] = quota[i] - (exact_quota ? filled2[i] : 0);
    if (!exact_quota) {
        // carries of the free 2-digit slice do not count against the quotas
        for (int i = 0; i < 4; ++i) quota3[i] = quota[i];
    }
    long long placed = 0;
    while (placed < n3) {
        auto [a, b] = draw_pair_in_class(3, rng);
        if (used.count(pair_key(a, b))) continue;
        int c = carry_count(a, b, Op::add);
        if (quota3[c] <= 0) continue;
        ex.push_back(make_add(a, b));
        used.insert(pair_key(a, b));
        --quota3[c];
        ++placed;
    }

    Dataset d{Op::add, std::move(ex), {}};
    d.manifest = addition_manifest(d.examples, Op::add);
    d.manifest.emplace_back("mix_1_2", mix_counts[0]);
    d.manifest.emplace_back("mix_2_1", mix_counts[1]);
    d.manifest.emplace_back("mix_2_2", mix_counts[2]);
    return d;
}

Dataset build_addition_dataset(long long n, Balance balance, uint64_t seed) {
    if (balance == Balance::both) return build_balanced_addition(n, seed);
    Rng rng(seed);
    std::vector<ArithProblem> ex;
    std::unordered_set<uint64_t> used;

    if (balance == Balance::random || balance == Balance::balanced_carry) {
        long long quota[4];
        for (int i = 0; i < 4; ++i) quota[i] = n / 4 + (i < n % 4 ? 1 : 0);
        while (static_cast<long long>(ex.size()) < n) {
            long long a = rng.range(0, 999), b = rng.range(0, 999);
            if (used.count(pair_key(a, b))) continue;
            if (balance == Balance::balanced_carry) {
                int c = carry_count(a, b, Op::add);
                if (quota[c] <= 0) continue;
                --quota[c];
            }
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
        }
    } else {  // balanced_digits
        if (n < 100)
            throw std::invalid_argument("build_addition_dataset: need at least 100 samples");
        for (long long a = 0; a <= 9; ++a)
            for (long long b = 0; b <= 9; ++b) {
                ex.push_back(make_add(a, b));
                used.insert(pair_key(a, b));
            }
        long long n2 = std::min<long long>(n - 100, (900 * n) / 10000);
        long long n3 = n - 100 - n2;
        for (long long got = 0; got < n2;) {
            auto [a, b] = draw_pair_in_class(2, rng);
            if (used.count(pair_key(a, b))) continue;
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
            ++got;
        }
        for (long long got = 0; got < n3;) {
            auto [a, b] = draw_pair_in_class(3, rng);
            if (used.count(pair_key(a, b))) continue;
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
            ++got;
        }
    }

    Dataset d{Op::add, std::move(ex), {}};
    d.manifest = addition_manifest(d.examples, Op::add);
    return d;
}

Dataset build_multidigit(long long n, int max_digits, uint64_t seed) {
    if (max_digits < 2) throw std::invalid_argument("build_multidigit: max digits must be >= 2");
    if (n <= 100) throw std::invalid_argument("build_multidigit: need more than 100 samples");
    long long classes = static_cast<long long>(max_digits) * (max_digits + 1) / 2 - 1;
    long long d = (n - 100) / classes;
    if (d == 0) throw std::invalid_argument("build_multidigit: zero samples per class");

    Rng rng(seed);
    std::vector<ArithProblem> ex;
    std::unordered_set<uint64_t> used;
    for (long long a = 0; a <= 9; ++a)
        for (long long b = 0; b <= 9; ++b) {
            ex.push_back(make_add(a, b));
            used.insert(pair_key(a, b));
        }

    auto band = [](int k) {
        long long lo = 1;
        for (int i = 1; i < k; ++i) lo *= 10;
        return std::pair<long long, long long>{k == 1 ? 1 : lo, lo * 10 - 1};
    };

    Manifest class_counts;
    for (int k1 = 1; k1 <= max_digits; ++k1) {
        for (int k2 = k1; k2 <= max_digits; ++k2) {
            if (k1 == 1 && k2 == 1) continue;
            auto [alo, ahi] = band(k1);
            auto [blo, bhi] = band(k2);
            long long space = (ahi - alo + 1) * (bhi - blo + 1);
            bool dedupe = space >= 2 * d;
            for (long long got = 0; got < d;) {
                long long a = rng.range(alo, ahi);
                long long b = rng.range(blo, bhi);
                if (rng.coin()) std::swap(a, b);
                if (dedupe && used.count(pair_key(a, b))) continue;
                ex.push_back(make_add(a, b));
                used.insert(pair_key(a, b));
                ++got;
            }
            class_counts.emplace_back(
                "class_" + std::to_string(k1) + "_" + std::to_string(k2), d);
        }
    }

    Dataset ds{Op::add, std::move(ex), {}};
    ds.manifest.emplace_back("total", static_cast<long long>(ds.examples.size()));
    ds.manifest.emplace_back("per_class", d);
    for (auto& kv : class_counts) ds.manifest.push_back(std::move(kv));
    return ds;
}

Dataset relabel(const Dataset& src, Op op) {
    if (op != Op::add && op != Op::sub && op != Op::mul)
        throw std::invalid_argument("relabel: binary operations only");
    Dataset out;
    out.op = op;
    out.examples.reserve(src.examples.size());
    for (const ArithProblem& p : src.examples) {
        switch (op) {
            case Op::add: out.examples.push_back(make_add(p.a, p.b)); break;
            case Op::sub: out.examples.push_back(make_sub(p.a, p.b)); break;
            default: out.examples.push_back(make_mul(p.a, p.b)); break;
        }
    }
    out.manifest = op == Op::mul ? Manifest{{"total", static_cast<long long>(out.examples.size())}}
                                 : addition_manifest(out.examples, op);
    return out;
}

Dataset build_mul_dataset(long long n, uint64_t seed) {
    if (n < 100) throw std::invalid_argument("build_mul_dataset: need at least 100 samples");
    Rng rng(seed);
    std::vector<ArithProblem> ex;
    std::unordered_set<uint64_t> used;
    for (long long a = 0; a <= 9; ++a)
        for (long long b = 0; b <= 9; ++b) {
            ex.push_back(make_mul(a, b));
            used.insert(pair_key(a, b));
        }
    long long space = 100 * 100;
    if (n > space)
        throw std::invalid_argument("build_mul_dataset: at most 10000 distinct <=2-digit pairs");
    while (static_cast<long long>(ex.size()) < n) {
        long long a = rng.range(0, 99), b = rng.range(0, 99);
        if (used.count(pair_key(a, b))) continue;
        ex.push_back(make_mul(a, b));
        used.insert(pair_key(a, b));
    }
    Dataset d{Op::mul, std::move(ex), {}};
    d.manifest.emplace_back("total", static_cast<long long>(d.examples.size()));
    return d;
}

Dataset build_unary_dataset(Op op, long long n, uint64_t seed) {
    if (op != Op::sine && op != Op::sqrt_)
        throw std::invalid_argument("build_unary_dataset: sine or sqrt only");
    Rng rng(seed);
    std::vector<ArithProblem> ex;
    std::unordered_set<long long> used;
    // operands live on the 1e-4 grid: sine in [-1.5707, 1.5707], sqrt in [1, 10)
    long long lo = op == Op::sine ? -15707 : 10000;
    long long hi = op == Op::sine ? 15707 : 99999;
    while (static_cast<long long>(ex.size()) < n) {
        long long s = rng.range(lo, hi);
        if (used.count(s)) continue;
        used.insert(s);
        Fixed4 x = Fixed4::from_scaled(s);
        ex.push_back(op == Op::sine ? make_sine(x) : make_sqrt(x));
    }
    Dataset d{op, std::move(ex), {}};
    d.manifest.emplace_back("total", static_cast<long long>(d.examples.size()));
    return d;
}

bool Exclusions::matches_operand(long long v) const {
    for (long long x : values)
        if (v == x) return true;
    for (auto [digit, pos] : digit_at) {
        long long p = 1;
        for (int i = 1; i < pos; ++i) p *= 10;
        if ((v / p) % 10 == digit && v >= p) return true;
    }
    return false;
}

bool Exclusions::matches(const ArithProblem& p) const {
    if (p.is_unary()) return false;
    return matches_operand(p.a) || matches_operand(p.b);
}

ExclusionSplit apply_exclusions(const Dataset& dataset, const Exclusions& exclusions) {
    ExclusionSplit out;
    out.kept.op = out.removed.op = dataset.op;
    for (const ArithProblem& p : dataset.examples)
        (exclusions.matches(p) ? out.removed : out.kept).examples.push_back(p);
    auto finish = [&](Dataset& d) {
        if (d.op == Op::add || d.op == Op::sub)
            d.manifest = addition_manifest(d.examples, d.op);
        else
            d.manifest = {{"total", static_cast<long long>(d.examples.size())}};
    };
    finish(out.kept);
    finish(out.removed);
    return out;
}

Dataset build_test_set(Op op, long long n, int max_digits, const Dataset& train, uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.op = op;
    if (op == Op::sine || op == Op::sqrt_) {
        std::unordered_set<long long> taken;
        for (const ArithProblem& p : train.examples) taken.insert(p.x.scaled());
        long long lo = op == Op::sine ? -15707 : 10000;
        long long hi = op == Op::sine ? 15707 : 99999;
        n = std::min(n, hi - lo + 1 - static_cast<long long>(taken.size()));
        while (static_cast<long long>(d.examples.size()) < n) {
            long long s = rng.range(lo, hi);
            if (taken.count(s)) continue;
            taken.insert(s);
            Fixed4 x = Fixed4::from_scaled(s);
            d.examples.push_back(op == Op::sine ? make_sine(x) : make_sqrt(x));
        }
    } else {
        std::unordered_set<uint64_t> taken;
        for (const ArithProblem& p : train.examples) taken.insert(pair_key(p.a, p.b));
        long long hi = 1;
        for (int i = 0; i < max_digits; ++i) hi *= 10;
        --hi;
        long long space = (hi + 1) * (hi + 1) - static_cast<long long>(taken.size());
        n = std::min(n, space);
        while (static_cast<long long>(d.examples.size()) < n) {
            long long a = rng.range(0, hi), b = rng.range(0, hi);
            if (taken.count(pair_key(a, b))) continue;
            taken.insert(pair_key(a, b));
            switch (op) {
                case Op::add: d.examples.push_back(make_add(a, b)); break;
                case Op::sub: d.examples.push_back(make_sub(a, b)); break;
                default: d.examples.push_back(make_mul(a, b)); break;
            }
        }
    }
    d.manifest.emplace_back("total", static_cast<long long>(d.examples.size()));
    return d;
}

std::vector<std::string> render_records(const Dataset& dataset, const FormatSpec& rawspec,
                                        uint64_t noise_seed) {
    FormatSpec spec = rawspec.normalized();
    Rng noise_rng(noise_seed);
    std::vector<std::string> out;
    out.reserve(dataset.examples.size());
    for (const ArithProblem& p : dataset.examples) {
        FormattedSample s = render(p, spec);
        if (spec.noise != NoiseMode::none) s = inject_noise(s, spec.noise, noise_rng);
        out.push_back(s.full());
    }
    return out;
}

JointStream build_joint_mixture(const std::vector<RenderedDataset>& parts, uint64_t seed) {
    std::vector<std::pair<Op, const std::string*>> records;
    for (const RenderedDataset& part : parts)
        for (const std::string& r : part.records) records.emplace_back(part.op, &r);
    Rng rng(seed);
    rng.shuffle(records);

    JointStream out;
    Manifest per_op;
    for (auto& [op, text] : records) out.text += *text;
    out.manifest.emplace_back("total", static_cast<long long>(records.size()));
    for (const RenderedDataset& part : parts) {
        std::string key = std::string("task_") + op_name(part.op);
        bool found = false;
        for (auto& [k, v] : out.manifest)
            if (k == key) {
                v += static_cast<long long>(part.records.size());
                found = true;
            }
        if (!found)
            out.manifest.emplace_back(key, static_cast<long long>(part.records.size()));
    }
    return out;
}

JointStream mix_with_text(const std::string& corpus, const std::vector<RenderedDataset>& streams,
                          uint64_t seed, int u_max) {
    if (corpus.empty()) throw std::invalid_argument("mix_with_text: empty corpus");

    // dialogue chunks keep their trailing blank line
    std::vector<std::string> chunks;
    size_t pos = 0;
    while (pos < corpus.size()) {
        size_t sep = corpus.find("\n\n", pos);
        if (sep == std::string::npos) {
            chunks.push_back(corpus.substr(pos));
            break;
        }
        chunks.push_back(corpus.substr(pos, sep + 2 - pos));
        pos = sep + 2;
    }

    std::vector<std::pair<Op, const std::string*>> queue;
    for (const RenderedDataset& s : streams)
        for (const std::string& r : s.records) queue.emplace_back(s.op, &r);
    Rng rng(seed);
    rng.shuffle(queue);

    long long gaps = static_cast<long long>(chunks.size()) - 1;
    bool explicit_cap = u_max > 0;
    if (!explicit_cap) {
        u_max = gaps > 0 ? static_cast<int>(2 * static_cast<long long>(queue.size()) / std::max<long long>(1, gaps) + 1)
                         : 0;
    }
    if (explicit_cap && gaps * static_cast<long long>(u_max) <
                            static_cast<long long>(queue.size()))
        throw std::invalid_argument("mix_with_text: arithmetic volume exceeds placement capacity");

    JointStream out;
    size_t qi = 0;
    for (size_t ci = 0; ci < chunks.size(); ++ci) {
        out.text += chunks[ci];
        if (ci + 1 == chunks.size()) break;
        long long u = static_cast<long long>(rng.below(static_cast<uint64_t>(u_max) + 1));
        for (long long k = 0; k < u && qi < queue.size(); ++k) out.text += *queue[qi++].second;
    }
    // whatever the draw left over goes after the final chunk
    while (qi < queue.size()) out.text += *queue[qi++].second;

    out.manifest.emplace_back("chunks", static_cast<long long>(chunks.size()));
    out.manifest.emplace_back("records", static_cast<long long>(queue.size()));
    out.manifest.emplace_back("u_max", u_max);
    out.manifest.emplace_back("chars", static_cast<long long>(out.text.size()));
    return out;
}

void write_corpus(const std::string& path, const std::vector<std::string>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_corpus: cannot open " + path);
    for (const std::string& r : records) f << r;
}

}  // namespace arithlab
