#include "arithlab/arith.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace arithlab {

const char* op_name(Op op) {
    switch (op) {
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::sine: return "sin";
        case Op::sqrt_: return "sqrt";
    }
    return "?";
}

std::optional<Op> op_from_name(const std::string& name) {
    if (name == "add" || name == "+") return Op::add;
    if (name == "sub" || name == "-") return Op::sub;
    if (name == "mul" || name == "*") return Op::mul;
    if (name == "sin" || name == "sine") return Op::sine;
    if (name == "sqrt") return Op::sqrt_;
    return std::nullopt;
}

Fixed4 Fixed4::from_scaled(long long scaled) {
    Fixed4 f;
    f.scaled_ = scaled;
    return f;
}

Fixed4 Fixed4::from_double(double v) { return trunc4(v); }

Fixed4 Fixed4::parse(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("Fixed4: empty string");
    size_t pos = 0;
    bool neg = false;
    if (text[pos] == '-' || text[pos] == '+') {
        neg = text[pos] == '-';
        ++pos;
    }
    long long ip = 0;
    bool any = false;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        ip = ip * 10 + (text[pos] - '0');
        ++pos;
        any = true;
    }
    long long frac = 0;
    int fdigits = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            if (fdigits < 4) {
                frac = frac * 10 + (text[pos] - '0');
                ++fdigits;
            } else if (text[pos] != '0') {
                throw std::invalid_argument("Fixed4: more than 4 fractional digits: " + text);
            }
            ++pos;
            any = true;
        }
    }
    if (!any || pos != text.size())
        throw std::invalid_argument("Fixed4: malformed number: " + text);
    while (fdigits < 4) {
        frac *= 10;
        ++fdigits;
    }
    long long scaled = ip * kScale + frac;
    return from_scaled(neg ? -scaled : scaled);
}

std::string Fixed4::to_string() const {
    long long s = scaled_;
    bool neg = s < 0;
    if (neg) s = -s;
    std::string out = neg ? "-" : "";
    out += std::to_string(s / kScale);
    out += '.';
    std::string frac = std::to_string(s % kScale);
    out += std::string(4 - frac.size(), '0');
    out += frac;
    return out;
}

std::string Fixed4::to_string_trimmed() const {
    std::string s = to_string();
    size_t last = s.find_last_not_of('0');
    if (s[last] == '.') --last;  // integral value: drop the dot too
    return s.substr(0, last + 1);
}

namespace {

// Values within 1e-10 of a grid point are snapped to it so that grid values
// surviving a double round trip stay fixed points of trunc4/floor4.
constexpr double kGridSnap = 1e-6;  // in scaled (1e-4) units

long long snap_or(double scaled, long long fallback) {
    double nearest = std::nearbyint(scaled);
    if (std::abs(scaled - nearest) <= kGridSnap) return static_cast<long long>(nearest);
    return fallback;
}

// Round toward minus infinity onto the 1e-4 grid. The published iterative
// traces use this mode, which differs from trunc4 only for negative values.
long long floor_scaled(double v) {
    double scaled = v * Fixed4::kScale;
    return snap_or(scaled, static_cast<long long>(std::floor(scaled)));
}

}  // namespace

Fixed4 trunc4(double v) {
    if (!(std::abs(v) < 1e5)) throw std::overflow_error("trunc4: value out of range");
    double scaled = v * Fixed4::kScale;
    return Fixed4::from_scaled(snap_or(scaled, static_cast<long long>(scaled)));
}

ArithProblem make_add(long long a, long long b) {
    if (a < 0 || b < 0) throw std::invalid_argument("add: operands must be non-negative");
    return {Op::add, a, b, {}, a + b, {}};
}

ArithProblem make_sub(long long a, long long b) {
    if (a < 0 || b < 0) throw std::invalid_argument("sub: operands must be non-negative");
    return {Op::sub, a, b, {}, a - b, {}};
}

ArithProblem make_mul(long long a, long long b) {
    if (a < 0 || b < 0) throw std::invalid_argument("mul: operands must be non-negative");
    return {Op::mul, a, b, {}, a * b, {}};
}

ArithProblem make_sine(Fixed4 x) {
    ArithProblem p;
    p.op = Op::sine;
    p.x = x;
    p.fresult = true_sine4(x);
    return p;
}

ArithProblem make_sqrt(Fixed4 x) {
    if (x.scaled() < Fixed4::kScale || x.scaled() >= 10 * Fixed4::kScale)
        throw std::invalid_argument("sqrt: operand must lie in [1, 10)");
    ArithProblem p;
    p.op = Op::sqrt_;
    p.x = x;
    p.fresult = true_sqrt4(x);
    return p;
}

std::vector<int> digits_lsb_first(long long v) {
    if (v < 0) v = -v;
    std::vector<int> d;
    do {
        d.push_back(static_cast<int>(v % 10));
        v /= 10;
    } while (v > 0);
    return d;
}

int digit_count(long long v) { return static_cast<int>(digits_lsb_first(v).size()); }

long long DigitTrace::value() const {
    if (op == Op::sub) return processed_result;
    long long acc = 0, p = 1;
    for (const DigitStep& s : steps) {
        acc += static_cast<long long>(s.digit) * p;
        p *= 10;
    }
    acc += final_carry * p;
    return acc;
}

DigitTrace ref_add_trace(long long a, long long b) {
    if (a < 0 || b < 0) throw std::invalid_argument("ref_add_trace: negative operand");
    std::vector<int> da = digits_lsb_first(a), db = digits_lsb_first(b);
    size_t k = std::max(da.size(), db.size());
    DigitTrace t;
    t.op = Op::add;
    int carry = 0;
    for (size_t i = 0; i < k; ++i) {
        DigitStep s;
        s.a_digit = i < da.size() ? da[i] : 0;
        s.b_digit = i < db.size() ? db[i] : 0;
        s.carry_in = carry;
        s.raw = s.a_digit + s.b_digit + carry;
        s.digit = s.raw % 10;
        s.carry_out = s.raw / 10;
        carry = s.carry_out;
        t.steps.push_back(s);
    }
    t.final_carry = carry;
    return t;
}

DigitTrace ref_sub_trace(long long a, long long b) {
    if (a < 0 || b < 0) throw std::invalid_argument("ref_sub_trace: negative operand");
    std::vector<int> da = digits_lsb_first(a), db = digits_lsb_first(b);
    size_t k = std::max(da.size(), db.size());
    DigitTrace t;
    t.op = Op::sub;
    int borrow = 0;  // 0 or -1
    for (size_t i = 0; i < k; ++i) {
        DigitStep s;
        s.a_digit = i < da.size() ? da[i] : 0;
        s.b_digit = i < db.size() ? db[i] : 0;
        s.carry_in = borrow;
        s.raw = s.a_digit - s.b_digit + borrow;
        if (s.raw < 0 && i + 1 < k) {
            s.digit = s.raw + 10;
            s.carry_out = -1;
        } else {
            s.digit = s.raw;  // MSB digit may be negative
            s.carry_out = s.raw < 0 ? -1 : 0;
        }
        borrow = s.carry_out;
        t.steps.push_back(s);
    }
    t.final_carry = borrow;
    // msb*10^(k-1) plus the value of the remaining (already correct) digits
    long long p = 1;
    for (size_t i = 0; i + 1 < k; ++i) p *= 10;
    long long rest = 0, q = 1;
    for (size_t i = 0; i + 1 < k; ++i) {
        rest += static_cast<long long>(t.steps[i].digit) * q;
        q *= 10;
    }
    t.processed_result = static_cast<long long>(t.steps[k - 1].digit) * p + rest;
    return t;
}

int carry_count(long long a, long long b, Op op) {
    if (op != Op::add && op != Op::sub)
        throw std::invalid_argument("carry_count: defined for add/sub only");
    DigitTrace t = op == Op::add ? ref_add_trace(a, b) : ref_sub_trace(a, b);
    int n = 0;
    for (const DigitStep& s : t.steps) n += s.carry_out != 0;
    return n;
}

std::vector<MulStep> ref_mul_trace(long long a, long long b) {
    if (a < 0 || b < 0) throw std::invalid_argument("ref_mul_trace: negative operand");
    std::vector<int> db = digits_lsb_first(b);
    std::vector<MulStep> steps;
    long long running = 0, shift = 1;
    for (int d : db) {
        MulStep s;
        s.b_digit = d;
        s.partial = a * d;
        s.shifted = s.partial * shift;
        running += s.shifted;
        s.running = running;
        steps.push_back(s);
        shift *= 10;
    }
    return steps;
}

IterTrace taylor_sine_trace(Fixed4 x) { return taylor_sine_trace(x, x.value()); }

IterTrace taylor_sine_trace(Fixed4 x, double raw) {
    IterTrace t;
    t.x = x;
    t.iterates[0] = x;
    long long cur = x.scaled();
    double power = raw;               // raw^(2n+1), by repeated multiplication
    double factorial = 1.0;           // (2n+1)!
    double sign = -1.0;
    for (int n = 1; n <= 4; ++n) {
        power *= raw * raw;
        factorial *= (2 * n) * (2 * n + 1);
        double term = sign * power / factorial;
        // the iterate lives on the grid, so flooring the term offset suffices
        cur += floor_scaled(term);
        t.iterates[static_cast<size_t>(n)] = Fixed4::from_scaled(cur);
        sign = -sign;
    }
    return t;
}

IterTrace newton_sqrt_trace(Fixed4 x) {
    if (x.scaled() < Fixed4::kScale || x.scaled() >= 10 * Fixed4::kScale)
        throw std::invalid_argument("newton_sqrt_trace: operand must lie in [1, 10)");
    IterTrace t;
    t.x = x;
    long long x0 = static_cast<long long>(std::floor(std::sqrt(x.value())));
    t.iterates[0] = Fixed4::from_scaled(x0 * Fixed4::kScale);
    double xv = x.value();
    for (int n = 1; n <= 4; ++n) {
        double prev = t.iterates[static_cast<size_t>(n - 1)].value();
        double next = 0.5 * (prev + xv / prev);
        t.iterates[static_cast<size_t>(n)] = Fixed4::from_scaled(floor_scaled(next));
    }
    return t;
}

Fixed4 true_sine4(Fixed4 x) {
    // Alternating Taylor sum; for |x| <= pi/2 terms vanish below 1e-20 well
    // before n=12, so the double sum equals sin(x) to the last ulp. Values
    // land on the grid by flooring, like every published sine value.
    double v = x.value();
    double term = v, sum = v;
    for (int n = 1; n <= 12; ++n) {
        term *= -v * v / ((2 * n) * (2 * n + 1));
        sum += term;
    }
    return Fixed4::from_scaled(floor_scaled(sum));
}

Fixed4 true_sqrt4(Fixed4 x) { return Fixed4::from_scaled(floor_scaled(std::sqrt(x.value()))); }

}  // namespace arithlab
