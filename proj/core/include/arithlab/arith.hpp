#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace arithlab {

enum class Op { add, sub, mul, sine, sqrt_ };

const char* op_name(Op op);
std::optional<Op> op_from_name(const std::string& name);

// Signed fixed-point value with exactly four fractional digits, stored as
// value*10^4. Construction from a real rounds toward zero; the iterative
// traces below round toward minus infinity instead (see floor_step), which
// is what reproduces the published scratchpad values for negative inputs.
class Fixed4 {
public:
    static constexpr long long kScale = 10000;

    Fixed4() = default;
    static Fixed4 from_scaled(long long scaled);
    static Fixed4 from_double(double v);     // trunc4: toward zero
    static Fixed4 parse(const std::string& text);  // throws on malformed input

    long long scaled() const { return scaled_; }
    double value() const { return static_cast<double>(scaled_) / kScale; }

    // Canonical print with exactly four fractional digits ("2.0000").
    std::string to_string() const;
    // Print with trailing fractional zeros removed ("2.776", "-0.636", "2").
    std::string to_string_trimmed() const;

    bool operator==(const Fixed4&) const = default;
    auto operator<=>(const Fixed4&) const = default;

private:
    long long scaled_ = 0;
};

// trunc4 of a real value: round toward zero at the 4th fractional digit.
// Idempotent on Fixed4 values; throws std::overflow_error when |v| >= 1e5.
Fixed4 trunc4(double v);

// One task instance. Integer operands are used for add/sub/mul, the Fixed4
// operand for sine/sqrt. `result_*` always holds the oracle value.
struct ArithProblem {
    Op op = Op::add;
    long long a = 0;
    long long b = 0;
    Fixed4 x;
    long long result = 0;  // add/sub/mul
    Fixed4 fresult;        // sine/sqrt: trunc4 of the true function value

    bool is_unary() const { return op == Op::sine || op == Op::sqrt_; }
};

ArithProblem make_add(long long a, long long b);
ArithProblem make_sub(long long a, long long b);
ArithProblem make_mul(long long a, long long b);
ArithProblem make_sine(Fixed4 x);
ArithProblem make_sqrt(Fixed4 x);

// Digits of |v| in LSB-first order; digits(0) == {0}.
std::vector<int> digits_lsb_first(long long v);
int digit_count(long long v);

// One position of the digit-wise addition/subtraction algorithm.
struct DigitStep {
    int a_digit = 0;    // operand digits at this position (0 when exhausted)
    int b_digit = 0;
    int carry_in = 0;   // add: {0,1}; sub: {-1,0}
    int raw = 0;        // a_digit +/- b_digit +/- carry before adjustment
    int digit = 0;      // emitted digit; subtraction MSB may be negative
    int carry_out = 0;
};

struct DigitTrace {
    Op op = Op::add;
    std::vector<DigitStep> steps;    // LSB -> MSB, max(digits(a), digits(b)) entries
    int final_carry = 0;
    long long processed_result = 0;  // subtraction only: msb*10^(k-1) + rest
    long long value() const;         // the number the trace reconstructs
};

DigitTrace ref_add_trace(long long a, long long b);
DigitTrace ref_sub_trace(long long a, long long b);

// Number of positions with nonzero carry/borrow. Throws for mul/sine/sqrt.
int carry_count(long long a, long long b, Op op);

struct MulStep {
    int b_digit = 0;         // i-th LSB digit of b
    long long partial = 0;   // a * b_digit
    long long shifted = 0;   // partial * 10^i
    long long running = 0;   // sum of shifted so far
};

std::vector<MulStep> ref_mul_trace(long long a, long long b);

// Five iterates x_0..x_4 of an approximation scheme, each floored to the
// 1e-4 grid before the next step.
struct IterTrace {
    Fixed4 x;
    std::array<Fixed4, 5> iterates{};
};

// Taylor expansion of sine. Power terms are computed from `raw` (defaults to
// the operand value): the training pipeline truncates operands for display
// but keeps the raw sample for the expansion.
IterTrace taylor_sine_trace(Fixed4 x);
IterTrace taylor_sine_trace(Fixed4 x, double raw);

// Newton's method for sqrt; x_0 = floor(sqrt(x)), division carried to at
// least 8 fractional digits before flooring each iterate.
IterTrace newton_sqrt_trace(Fixed4 x);

// Ground-truth function values on the Fixed4 grid (toward-zero truncation).
// Sine is evaluated by a deterministic Taylor sum (no libm dependency) which
// is exact to ~1e-16 on [-pi/2, pi/2].
Fixed4 true_sine4(Fixed4 x);
Fixed4 true_sqrt4(Fixed4 x);

}  // namespace arithlab
