#include "arithlab/format.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

namespace arithlab {

const char* format_kind_name(FormatKind k) {
    switch (k) {
        case FormatKind::plain: return "plain";
        case FormatKind::reverse: return "reverse";
        case FormatKind::simplified_scratchpad: return "simplified";
        case FormatKind::detailed_scratchpad: return "detailed";
    }
    return "?";
}

std::optional<FormatKind> format_kind_from_name(const std::string& name) {
    if (name == "plain") return FormatKind::plain;
    if (name == "reverse") return FormatKind::reverse;
    if (name == "simplified" || name == "simplified_scratchpad") return FormatKind::simplified_scratchpad;
    if (name == "detailed" || name == "detailed_scratchpad") return FormatKind::detailed_scratchpad;
    return std::nullopt;
}

FormatSpec FormatSpec::normalized() const {
    FormatSpec s = *this;
    if (s.kind == FormatKind::reverse) s.dollar_wrap = true;
    if (s.noise != NoiseMode::none && s.kind != FormatKind::simplified_scratchpad)
        throw std::invalid_argument("noise requires the simplified scratchpad format");
    if (s.zero_pad && (s.kind == FormatKind::simplified_scratchpad ||
                       s.kind == FormatKind::detailed_scratchpad))
        throw std::invalid_argument("zero_pad applies to plain/reverse only");
    return s;
}

namespace {

std::string pad_number(long long v, int width) {
    std::string s = std::to_string(v < 0 ? -v : v);
    if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
    return (v < 0 ? "-" : "") + s;
}

std::string operand_text(const ArithProblem& p, const FormatSpec& spec) {
    char sym = p.op == Op::add ? '+' : p.op == Op::sub ? '-' : '*';
    if (spec.zero_pad)
        return pad_number(p.a, spec.pad_digits) + sym + pad_number(p.b, spec.pad_digits);
    return std::to_string(p.a) + sym + std::to_string(p.b);
}

std::string unary_call(const ArithProblem& p) {
    return std::string(p.op == Op::sine ? "sin" : "sqrt") + "(" + p.x.to_string() + ")";
}

std::string result_text(const ArithProblem& p, const FormatSpec& spec) {
    if (p.is_unary()) return p.fresult.to_string();
    if (spec.zero_pad) return pad_number(p.result, spec.pad_digits + 1);
    return std::to_string(p.result);
}

// MSB-first digit list "[3,9,6]"; empty list prints "[]".
std::string bracket_list(const std::vector<int>& digits_msb_first) {
    std::string s = "[";
    for (size_t i = 0; i < digits_msb_first.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(digits_msb_first[i]);
    }
    return s + "]";
}

std::vector<int> digits_msb(long long v) {
    std::vector<int> d = digits_lsb_first(v);
    std::reverse(d.begin(), d.end());
    return d;
}

// Digits of |v| MSB-first, space separated, sign glued to the first digit.
std::string spaced_digits(long long v) {
    std::string num = std::to_string(v < 0 ? -v : v);
    std::string out = v < 0 ? "-" : "";
    for (size_t i = 0; i < num.size(); ++i) {
        if (i) out += ' ';
        out += num[i];
    }
    return out;
}

std::string insert_digit_spacing(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        out += s[i];
        if (i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i])) &&
            std::isdigit(static_cast<unsigned char>(s[i + 1])))
            out += ' ';
    }
    return out;
}

struct ScratchHeader {
    std::string prompt;  // "Input:\n<expr>\nTarget:\n"
};

ScratchHeader scratch_header(const ArithProblem& p, const FormatSpec& spec) {
    std::string expr = p.is_unary() ? unary_call(p) : operand_text(p, spec);
    return {"Input:\n" + expr + "\nTarget:\n"};
}

// Remaining (unprocessed) operand digits before step i, MSB-first.
std::string remaining_digits(long long v, size_t step) {
    std::vector<int> lsb = digits_lsb_first(v);
    std::vector<int> rem;
    for (size_t j = lsb.size(); j > step; --j) rem.push_back(lsb[j - 1]);
    return bracket_list(rem);
}

// Accumulated answer digits before step i, MSB-first (newest first).
std::string acc_digits(const DigitTrace& t, size_t step) {
    std::vector<int> acc;
    for (size_t j = step; j > 0; --j) acc.push_back(t.steps[j - 1].digit);
    return bracket_list(acc);
}

std::string addsub_equation(const DigitStep& s, Op op) {
    std::ostringstream eq;
    if (op == Op::add) {
        eq << s.a_digit << '+' << s.b_digit << '+' << s.carry_in << '=' << s.raw;
    } else {
        eq << s.a_digit << '-' << s.b_digit << '-' << -s.carry_in;
        if (s.digit != s.raw) eq << "+10";
        eq << '=' << s.digit;
    }
    return eq.str();
}

std::string detailed_addsub_steps(const DigitTrace& t, long long a, long long b, Op op) {
    const char sym = op == Op::add ? '+' : '-';
    std::string out;
    for (size_t i = 0; i < t.steps.size(); ++i) {
        const DigitStep& s = t.steps[i];
        out += remaining_digits(a, i);
        out += ' ';
        out += sym;
        out += ' ';
        out += remaining_digits(b, i);
        out += " , A=" + acc_digits(t, i) + " , C=" + std::to_string(s.carry_in) + " , " +
               addsub_equation(s, op) + " , A->" + std::to_string(s.digit) +
               " , C->" + std::to_string(s.carry_out) + "\n";
    }
    return out;
}

// msb*10^(k-1) as a signed value plus the value of the remaining digits.
struct SubProcessing {
    long long msb_value = 0;
    long long rest = 0;
};

SubProcessing sub_processing(const DigitTrace& t) {
    long long p = 1;
    for (size_t i = 0; i + 1 < t.steps.size(); ++i) p *= 10;
    long long rest = 0, q = 1;
    for (size_t i = 0; i + 1 < t.steps.size(); ++i) {
        rest += static_cast<long long>(t.steps[i].digit) * q;
        q *= 10;
    }
    return {t.steps.back().digit * p, rest};
}

std::string render_detailed_add(const ArithProblem& p) {
    DigitTrace t = ref_add_trace(p.a, p.b);
    std::string c = "<scratch>\n";
    c += bracket_list(digits_msb(p.a)) + " has " + std::to_string(digit_count(p.a)) + " digits.\n";
    c += bracket_list(digits_msb(p.b)) + " has " + std::to_string(digit_count(p.b)) + " digits.\n";
    c += detailed_addsub_steps(t, p.a, p.b, Op::add);
    c += "[] + [] , A=" + acc_digits(t, t.steps.size()) + " C=" + std::to_string(t.final_carry) +
         " , END\n";
    c += "</scratch>\n";
    c += spaced_digits(p.result) + "\n";
    return c;
}

std::string render_detailed_sub_v1(const ArithProblem& p) {
    DigitTrace t = ref_sub_trace(p.a, p.b);
    std::string c = "<scratch>\n";
    c += bracket_list(digits_msb(p.a)) + " has " + std::to_string(digit_count(p.a)) + " digits.\n";
    c += bracket_list(digits_msb(p.b)) + " has " + std::to_string(digit_count(p.b)) + " digits.\n";
    c += detailed_addsub_steps(t, p.a, p.b, Op::sub);
    c += "[] - [] , A=" + acc_digits(t, t.steps.size()) + "\n";
    SubProcessing proc = sub_processing(t);
    c += std::to_string(proc.msb_value) + "+" + std::to_string(proc.rest) + "=" +
         std::to_string(t.processed_result) + " , END\n";
    c += "</scratch>\n";
    c += spaced_digits(t.processed_result) + "\n";
    return c;
}

std::string render_detailed_sub_v2(const ArithProblem& p) {
    bool swapped = p.a < p.b;
    long long hi = swapped ? p.b : p.a, lo = swapped ? p.a : p.b;
    DigitTrace t = ref_sub_trace(hi, lo);
    std::string c = "<scratch>\n";
    c += bracket_list(digits_msb(p.a)) + " has " + std::to_string(digit_count(p.a)) + " digits.\n";
    c += bracket_list(digits_msb(p.b)) + " has " + std::to_string(digit_count(p.b)) + " digits.\n";
    if (swapped) {
        c += std::to_string(p.a) + "<" + std::to_string(p.b) + " : " + std::to_string(p.a) + "-" +
             std::to_string(p.b) + "=-(" + std::to_string(p.b) + "-" + std::to_string(p.a) + ")\n";
    } else {
        c += std::to_string(p.a) + ">=" + std::to_string(p.b) + "\n";
    }
    c += detailed_addsub_steps(t, hi, lo, Op::sub);
    c += "[] - [] , A=" + acc_digits(t, t.steps.size()) + " , END\n";
    c += "</scratch>\n";
    c += spaced_digits(p.result) + "\n";
    return c;
}

std::string render_detailed_mul(const ArithProblem& p) {
    if (digit_count(p.a) > 2 || digit_count(p.b) > 2)
        throw std::invalid_argument("detailed scratchpad multiplication supports up to 2-digit operands");
    std::vector<MulStep> steps = ref_mul_trace(p.a, p.b);
    std::string c = "<scratch>\n";
    c += bracket_list(digits_msb(p.a)) + " has " + std::to_string(digit_count(p.a)) + " digits.\n";
    c += bracket_list(digits_msb(p.b)) + " has " + std::to_string(digit_count(p.b)) + " digits.\n";
    long long k = 1, prev = 0;
    for (size_t i = 0; i < steps.size(); ++i) {
        const MulStep& s = steps[i];
        c += bracket_list(digits_msb(p.a)) + " * " + std::to_string(s.b_digit) +
             " , A=" + bracket_list(digits_msb(s.partial)) + " , k=" + std::to_string(k) +
             " , B=" + bracket_list(digits_msb(s.shifted)) + " , C=" + std::to_string(prev) + "+" +
             std::to_string(s.shifted) + "=" + std::to_string(s.running);
        if (i + 1 == steps.size()) c += " , END";
        c += "\n";
        prev = s.running;
        k *= 10;
    }
    c += "</scratch>\n";
    c += spaced_digits(p.result) + "\n";
    return c;
}

std::string render_detailed_sine(const ArithProblem& p, double raw) {
    IterTrace t = taylor_sine_trace(p.x, raw);
    static const char* kTerms[] = {"", "- 1/3! * (x^3)", "+ 1/5! * (x^5)", "- 1/7! * (x^7)",
                                   "+ 1/9! * (x^9)"};
    std::string c = "<scratch>\n";
    c += "x_0=" + t.iterates[0].to_string_trimmed() + "\n";
    for (int n = 1; n <= 4; ++n) {
        c += "x_" + std::to_string(n) + ": x_" + std::to_string(n - 1) + " " + kTerms[n] + " , x_" +
             std::to_string(n) + "=" + t.iterates[static_cast<size_t>(n)].to_string_trimmed();
        if (n == 4) c += " , END";
        c += "\n";
    }
    c += "</scratch>\n";
    c += t.iterates[4].to_string() + "\n";
    return c;
}

std::string render_detailed_sqrt(const ArithProblem& p) {
    IterTrace t = newton_sqrt_trace(p.x);
    std::string c = "<scratch>\n";
    c += "x_0=" + t.iterates[0].to_string_trimmed() + "\n";
    for (int n = 1; n <= 4; ++n) {
        std::string prev = t.iterates[static_cast<size_t>(n - 1)].to_string_trimmed();
        std::string cur = t.iterates[static_cast<size_t>(n)].to_string_trimmed();
        c += "x_" + std::to_string(n) + ": 1/2*(" + prev + "+" + p.x.to_string() + "/" + prev +
             ")=" + cur + ", x_" + std::to_string(n) + "=" + cur;
        if (n == 4) c += " , END";
        c += "\n";
    }
    c += "</scratch>\n";
    c += t.iterates[4].to_string() + "\n";
    return c;
}

std::string render_simplified(const ArithProblem& p) {
    DigitTrace t = p.op == Op::add ? ref_add_trace(p.a, p.b) : ref_sub_trace(p.a, p.b);
    std::string c;
    for (size_t i = 0; i < t.steps.size(); ++i) {
        const DigitStep& s = t.steps[i];
        c += "A->" + std::to_string(s.digit) + " , C->" + std::to_string(s.carry_out);
        // addition closes the step list with '.', subtraction closes the
        // processing line instead
        if (p.op == Op::add && i + 1 == t.steps.size()) c += ".";
        c += "\n";
    }
    if (p.op == Op::sub) {
        SubProcessing proc = sub_processing(t);
        c += std::to_string(proc.msb_value) + "+" + std::to_string(proc.rest) + "=" +
             std::to_string(t.processed_result) + ".\n";
    }
    c += std::to_string(p.result) + "\n";
    return c;
}

}  // namespace

FormattedSample render(const ArithProblem& problem, const FormatSpec& rawspec) {
    return render(problem, rawspec, problem.x.value());
}

FormattedSample render(const ArithProblem& problem, const FormatSpec& rawspec, double sine_raw) {
    FormatSpec spec = rawspec.normalized();
    FormattedSample out;
    out.problem = problem;

    switch (spec.kind) {
        case FormatKind::plain: {
            std::string lhs = problem.is_unary() ? unary_call(problem) : operand_text(problem, spec);
            std::string rhs = result_text(problem, spec);
            std::string wrap = spec.dollar_wrap ? "$" : "";
            out.prompt = wrap + lhs + "=";
            out.completion = rhs + (spec.dollar_wrap ? "$" : "") + "\n";
            break;
        }
        case FormatKind::reverse: {
            std::string lhs = problem.is_unary() ? unary_call(problem) : operand_text(problem, spec);
            std::string rhs = result_text(problem, spec);
            std::reverse(rhs.begin(), rhs.end());
            out.prompt = "$" + lhs + "=";
            out.completion = rhs + "$\n";
            break;
        }
        case FormatKind::simplified_scratchpad: {
            if (problem.op != Op::add && problem.op != Op::sub)
                throw std::invalid_argument("simplified scratchpad is defined for add/sub only");
            out.prompt = scratch_header(problem, spec).prompt;
            out.completion = render_simplified(problem);
            break;
        }
        case FormatKind::detailed_scratchpad: {
            out.prompt = scratch_header(problem, spec).prompt;
            switch (problem.op) {
                case Op::add: out.completion = render_detailed_add(problem); break;
                case Op::sub:
                    out.completion = spec.sub_version == SubVersion::v1
                                         ? render_detailed_sub_v1(problem)
                                         : render_detailed_sub_v2(problem);
                    break;
                case Op::mul: out.completion = render_detailed_mul(problem); break;
                case Op::sine: out.completion = render_detailed_sine(problem, sine_raw); break;
                case Op::sqrt_: out.completion = render_detailed_sqrt(problem); break;
            }
            break;
        }
    }

    if (spec.digit_spacing) {
        out.prompt = insert_digit_spacing(out.prompt);
        out.completion = insert_digit_spacing(out.completion);
    }
    return out;
}

namespace {

// First maximal signed integer/decimal token in `text`.
std::optional<std::string> first_number_token(const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i) {
        bool neg = text[i] == '-';
        size_t start = i;
        size_t j = i + (neg ? 1 : 0);
        if (j >= text.size() || !std::isdigit(static_cast<unsigned char>(text[j]))) continue;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j < text.size() && text[j] == '.' && j + 1 < text.size() &&
            std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
            ++j;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        }
        return text.substr(start, j - start);
    }
    return std::nullopt;
}

std::optional<Fixed4> parse_number(const std::string& token) {
    try {
        return Fixed4::parse(token);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

std::optional<Fixed4> parse_answer(const std::string& completion, const FormatSpec& rawspec, Op op) {
    FormatSpec spec = rawspec.normalized();
    (void)op;
    switch (spec.kind) {
        case FormatKind::plain: {
            std::string line = completion.substr(0, completion.find('\n'));
            if (spec.digit_spacing || spec.dollar_wrap) {
                std::string stripped;
                for (char ch : line)
                    if (ch != ' ' && ch != '$') stripped += ch;
                line = stripped;
            }
            auto tok = first_number_token(line);
            if (!tok) return std::nullopt;
            return parse_number(*tok);
        }
        case FormatKind::reverse: {
            size_t end = completion.find('$');
            if (end == std::string::npos) end = completion.find('\n');
            std::string body = completion.substr(0, end);
            if (spec.digit_spacing) {
                std::string stripped;
                for (char ch : body)
                    if (ch != ' ') stripped += ch;
                body = stripped;
            }
            std::reverse(body.begin(), body.end());
            if (body.empty()) return std::nullopt;
            auto tok = first_number_token(body);
            if (!tok || tok->size() != body.size()) return std::nullopt;
            return parse_number(*tok);
        }
        case FormatKind::simplified_scratchpad: {
            // answer is the last non-empty line of the record
            std::string answer;
            size_t pos = 0;
            while (pos < completion.size()) {
                size_t nl = completion.find('\n', pos);
                std::string line = completion.substr(pos, nl == std::string::npos ? nl : nl - pos);
                if (!line.empty()) answer = line;
                if (nl == std::string::npos) break;
                pos = nl + 1;
            }
            if (answer.empty()) return std::nullopt;
            auto tok = first_number_token(answer);
            if (!tok || tok->size() != answer.size()) return std::nullopt;
            return parse_number(*tok);
        }
        case FormatKind::detailed_scratchpad: {
            size_t tag = completion.find("</scratch>");
            if (tag == std::string::npos) return std::nullopt;
            size_t start = completion.find('\n', tag);
            if (start == std::string::npos) return std::nullopt;
            size_t end = completion.find('\n', start + 1);
            std::string line = completion.substr(start + 1, end == std::string::npos
                                                               ? std::string::npos
                                                               : end - start - 1);
            std::string stripped;
            for (char ch : line)
                if (ch != ' ') stripped += ch;
            if (stripped.empty()) return std::nullopt;
            auto tok = first_number_token(stripped);
            if (!tok || tok->size() != stripped.size()) return std::nullopt;
            return parse_number(*tok);
        }
    }
    return std::nullopt;
}

FormattedSample inject_noise(const FormattedSample& sample, NoiseMode mode, Rng& rng) {
    if (mode == NoiseMode::none) return sample;
    const ArithProblem& p = sample.problem;
    if (p.op != Op::add && p.op != Op::sub)
        throw std::invalid_argument("inject_noise: simplified scratchpad covers add/sub only");

    DigitTrace t = p.op == Op::add ? ref_add_trace(p.a, p.b) : ref_sub_trace(p.a, p.b);
    bool noise_a = mode == NoiseMode::random_A || mode == NoiseMode::random_AC;
    bool noise_c = mode == NoiseMode::random_C || mode == NoiseMode::random_AC;

    std::string c;
    for (size_t i = 0; i < t.steps.size(); ++i) {
        int digit = t.steps[i].digit;
        int carry = t.steps[i].carry_out;
        if (noise_a) digit = static_cast<int>(rng.below(10));
        if (noise_c) {
            // carries draw from the op's own alphabet: {0,1} add, {-1,0} sub
            int bit = static_cast<int>(rng.below(2));
            carry = p.op == Op::add ? bit : -bit;
        }
        c += "A->" + std::to_string(digit) + " , C->" + std::to_string(carry);
        if (p.op == Op::add && i + 1 == t.steps.size()) c += ".";
        c += "\n";
    }
    if (p.op == Op::sub) {
        SubProcessing proc = sub_processing(t);
        c += std::to_string(proc.msb_value) + "+" + std::to_string(proc.rest) + "=" +
             std::to_string(t.processed_result) + ".\n";
    }
    c += std::to_string(p.result) + "\n";

    FormattedSample out = sample;
    out.completion = c;
    return out;
}

PerturbedPrompt perturb_output_prefix(const ArithProblem& problem, const FormatSpec& rawspec,
                                      PerturbMode mode, Rng& rng) {
    FormatSpec spec = rawspec.normalized();
    if (problem.op != Op::add || digit_count(problem.a) != 3 || digit_count(problem.b) != 3)
        throw std::invalid_argument("perturb_output_prefix: needs a 3-digit addition problem");
    if (spec.kind != FormatKind::plain && spec.kind != FormatKind::reverse)
        throw std::invalid_argument("perturb_output_prefix: plain or reverse format only");

    std::string result = std::to_string(problem.result);
    if (spec.kind == FormatKind::reverse) std::reverse(result.begin(), result.end());

    int o1 = result[0] - '0', o2 = result[1] - '0';
    int p1 = o1, p2 = o2;
    if (mode == PerturbMode::random) {
        do {
            p1 = static_cast<int>(rng.below(10));
            p2 = static_cast<int>(rng.below(10));
        } while (p1 == o1 && p2 == o2);
    } else {
        int delta = rng.coin() ? 1 : -1;
        p2 = ((o2 + delta) % 10 + 10) % 10;
    }

    PerturbedPrompt out;
    std::string lhs = std::to_string(problem.a) + "+" + std::to_string(problem.b) + "=";
    if (spec.kind == FormatKind::reverse) lhs = "$" + lhs;
    out.prompt = lhs + static_cast<char>('0' + p1) + static_cast<char>('0' + p2);
    out.correct_next = result[2];
    int c = out.correct_next - '0';
    out.relaxed = {static_cast<char>('0' + c), static_cast<char>('0' + (c + 1) % 10),
                   static_cast<char>('0' + (c + 9) % 10)};
    return out;
}

TokenCost token_cost(const FormattedSample& sample) {
    return {sample.prompt.size(), std::max<size_t>(1, sample.completion.size())};
}

bool completion_is_complete(const std::string& completion, const FormatSpec& rawspec, Op op) {
    FormatSpec spec = rawspec.normalized();
    switch (spec.kind) {
        case FormatKind::plain:
        case FormatKind::reverse:
            return completion.find('\n') != std::string::npos;
        case FormatKind::simplified_scratchpad: {
            // the step list (add) or processing line (sub) ends with ".";
            // the record is complete once a full line follows it
            (void)op;
            size_t dot = completion.find(".\n");
            if (dot == std::string::npos) return false;
            return completion.find('\n', dot + 2) != std::string::npos;
        }
        case FormatKind::detailed_scratchpad: {
            size_t tag = completion.find("</scratch>\n");
            if (tag == std::string::npos) return false;
            return completion.find('\n', tag + 11) != std::string::npos;
        }
    }
    return false;
}

std::string format_charset(Op op, const FormatSpec& rawspec) {
    FormatSpec spec = rawspec.normalized();
    std::set<char> chars;
    auto add_str = [&](const std::string& s) { chars.insert(s.begin(), s.end()); };
    add_str("0123456789\n=");
    if (op == Op::add) add_str("+");
    if (op == Op::sub) add_str("-");
    if (op == Op::mul) add_str("*");
    if (op == Op::sine) add_str("sin().-");
    if (op == Op::sqrt_) add_str("sqrt().");
    if (spec.dollar_wrap || spec.kind == FormatKind::reverse) add_str("$");
    if (op == Op::sub && spec.kind == FormatKind::reverse) add_str("-");
    if (spec.kind == FormatKind::simplified_scratchpad) {
        add_str("Input:\nTarget:\nA->, .C");
        if (op == Op::sub) add_str("-+=");
    }
    if (spec.kind == FormatKind::detailed_scratchpad) {
        add_str("Input:\nTarget:\n<scratch></scratch>[], ACdigits.->=END ");
        add_str("has");
        if (op == Op::add) add_str("+");
        if (op == Op::sub) add_str("-+");
        if (op == Op::mul) add_str("*+kB=");
        if (op == Op::sine) add_str("sinx_:!^()*/.-+");
        if (op == Op::sqrt_) add_str("sqrtx_:()*/.+,");
    }
    if (spec.kind == FormatKind::detailed_scratchpad && op == Op::sub &&
        spec.sub_version == SubVersion::v2)
        add_str("<>=:()");
    return std::string(chars.begin(), chars.end());
}

}  // namespace arithlab
