#include <doctest.h>

#include "arithlab/arith.hpp"
#include <stdexcept>

#include "arithlab/format.hpp"
#include "arithlab/rng.hpp"

using namespace arithlab;

namespace {

FormatSpec spec_of(FormatKind kind) {
    FormatSpec s;
    s.kind = kind;
    return s;
}

const FormatSpec kPlain = spec_of(FormatKind::plain);
const FormatSpec kReverse = spec_of(FormatKind::reverse);
const FormatSpec kSimplified = spec_of(FormatKind::simplified_scratchpad);
const FormatSpec kDetailed = spec_of(FormatKind::detailed_scratchpad);

}  // namespace

TEST_CASE("plain and reverse addition render the canonical bytes") {
    CHECK(render(make_add(128, 367), kPlain).full() == "128+367=495\n");
    CHECK(render(make_add(128, 367), kReverse).full() == "$128+367=594$\n");
    CHECK(render(make_add(266, 738), kPlain).full() == "266+738=1004\n");
    CHECK(render(make_add(913, 524), kReverse).full() == "$913+524=7341$\n");
    CHECK(render(make_add(35, 58), kReverse).full() == "$35+58=39$\n");
}

TEST_CASE("plain and reverse subtraction render the canonical bytes") {
    CHECK(render(make_sub(266, 738), kPlain).full() == "266-738=-472\n");
    CHECK(render(make_sub(980, 743), kPlain).full() == "980-743=237\n");
    CHECK(render(make_sub(226, 598), kReverse).full() == "$226-598=273-$\n");
    CHECK(render(make_sub(913, 524), kReverse).full() == "$913-524=983$\n");
    CHECK(render(make_sub(35, 58), kReverse).full() == "$35-58=32-$\n");
}

TEST_CASE("plain and reverse multiplication render the canonical bytes") {
    CHECK(render(make_mul(5, 32), kPlain).full() == "5*32=160\n");
    CHECK(render(make_mul(5, 32), kReverse).full() == "$5*32=061$\n");
    CHECK(render(make_mul(66, 76), kReverse).full() == "$66*76=6105$\n");
}

TEST_CASE("unary plain rendering") {
    CHECK(render(make_sine(Fixed4::parse("1.0313")), kPlain).full() == "sin(1.0313)=0.8579\n");
    CHECK(render(make_sine(Fixed4::parse("-0.6909")), kPlain).full() == "sin(-0.6909)=-0.6373\n");
    CHECK(render(make_sqrt(Fixed4::parse("7.2726")), kPlain).full() == "sqrt(7.2726)=2.6967\n");
}

TEST_CASE("zero padding and dollar wrapping") {
    FormatSpec padded = kPlain;
    padded.zero_pad = true;
    padded.pad_digits = 3;
    CHECK(render(make_add(112, 29), padded).full() == "112+029=0141\n");
    FormatSpec wrapped = kPlain;
    wrapped.dollar_wrap = true;
    CHECK(render(make_add(112, 29), wrapped).full() == "$112+29=141$\n");
    FormatSpec rev_pad = kReverse;
    rev_pad.zero_pad = true;
    CHECK(render(make_add(112, 29), rev_pad).full() == "$112+029=1410$\n");
}

TEST_CASE("simplified scratchpad addition block is byte exact") {
    FormattedSample s = render(make_add(128, 367), kSimplified);
    CHECK(s.prompt == "Input:\n128+367\nTarget:\n");
    CHECK(s.completion ==
          "A->5 , C->1\n"
          "A->9 , C->0\n"
          "A->4 , C->0.\n"
          "495\n");
    FormattedSample t = render(make_add(922, 244), kSimplified);
    CHECK(t.completion ==
          "A->6 , C->0\n"
          "A->6 , C->0\n"
          "A->1 , C->1.\n"
          "1166\n");
    FormattedSample u = render(make_add(285, 43), kSimplified);
    CHECK(u.completion ==
          "A->8 , C->0\n"
          "A->2 , C->1\n"
          "A->3 , C->0.\n"
          "328\n");
}

TEST_CASE("simplified scratchpad subtraction block is byte exact") {
    FormattedSample s = render(make_sub(396, 262), kSimplified);
    CHECK(s.completion ==
          "A->4 , C->0\n"
          "A->3 , C->0\n"
          "A->1 , C->0\n"
          "100+34=134.\n"
          "134\n");
    FormattedSample t = render(make_sub(796, 890), kSimplified);
    CHECK(t.completion ==
          "A->6 , C->0\n"
          "A->0 , C->0\n"
          "A->-1 , C->-1\n"
          "-100+6=-94.\n"
          "-94\n");
    FormattedSample u = render(make_sub(788, 989), kSimplified);
    CHECK(u.completion ==
          "A->9 , C->-1\n"
          "A->9 , C->-1\n"
          "A->-3 , C->-1\n"
          "-300+99=-201.\n"
          "-201\n");
}

TEST_CASE("detailed scratchpad addition block is byte exact") {
    FormattedSample s = render(make_add(396, 262), kDetailed);
    CHECK(s.prompt == "Input:\n396+262\nTarget:\n");
    CHECK(s.completion ==
          "<scratch>\n"
          "[3,9,6] has 3 digits.\n"
          "[2,6,2] has 3 digits.\n"
          "[3,9,6] + [2,6,2] , A=[] , C=0 , 6+2+0=8 , A->8 , C->0\n"
          "[3,9] + [2,6] , A=[8] , C=0 , 9+6+0=15 , A->5 , C->1\n"
          "[3] + [2] , A=[5,8] , C=1 , 3+2+1=6 , A->6 , C->0\n"
          "[] + [] , A=[6,5,8] C=0 , END\n"
          "</scratch>\n"
          "6 5 8\n");
    FormattedSample t = render(make_add(796, 890), kDetailed);
    CHECK(t.completion ==
          "<scratch>\n"
          "[7,9,6] has 3 digits.\n"
          "[8,9,0] has 3 digits.\n"
          "[7,9,6] + [8,9,0] , A=[] , C=0 , 6+0+0=6 , A->6 , C->0\n"
          "[7,9] + [8,9] , A=[6] , C=0 , 9+9+0=18 , A->8 , C->1\n"
          "[7] + [8] , A=[8,6] , C=1 , 7+8+1=16 , A->6 , C->1\n"
          "[] + [] , A=[6,8,6] C=1 , END\n"
          "</scratch>\n"
          "1 6 8 6\n");
    FormattedSample u = render(make_add(788, 989), kDetailed);
    CHECK(u.completion.substr(u.completion.find("</scratch>")) == "</scratch>\n1 7 7 7\n");
}

TEST_CASE("detailed scratchpad subtraction version 1 is byte exact") {
    FormattedSample s = render(make_sub(128, 367), kDetailed);
    CHECK(s.completion ==
          "<scratch>\n"
          "[1,2,8] has 3 digits.\n"
          "[3,6,7] has 3 digits.\n"
          "[1,2,8] - [3,6,7] , A=[] , C=0 , 8-7-0=1 , A->1 , C->0\n"
          "[1,2] - [3,6] , A=[1] , C=0 , 2-6-0+10=6 , A->6 , C->-1\n"
          "[1] - [3] , A=[6,1] , C=-1 , 1-3-1=-3 , A->-3 , C->-1\n"
          "[] - [] , A=[-3,6,1]\n"
          "-300+61=-239 , END\n"
          "</scratch>\n"
          "-2 3 9\n");
    FormattedSample t = render(make_sub(396, 262), kDetailed);
    CHECK(t.completion ==
          "<scratch>\n"
          "[3,9,6] has 3 digits.\n"
          "[2,6,2] has 3 digits.\n"
          "[3,9,6] - [2,6,2] , A=[] , C=0 , 6-2-0=4 , A->4 , C->0\n"
          "[3,9] - [2,6] , A=[4] , C=0 , 9-6-0=3 , A->3 , C->0\n"
          "[3] - [2] , A=[3,4] , C=0 , 3-2-0=1 , A->1 , C->0\n"
          "[] - [] , A=[1,3,4]\n"
          "100+34=134 , END\n"
          "</scratch>\n"
          "1 3 4\n");
    FormattedSample u = render(make_sub(788, 989), kDetailed);
    CHECK(u.completion.find("[7,8,8] - [9,8,9] , A=[] , C=0 , 8-9-0+10=9 , A->9 , C->-1\n") !=
          std::string::npos);
    CHECK(u.completion.find("-300+99=-201 , END\n</scratch>\n-2 0 1\n") != std::string::npos);
}

TEST_CASE("detailed scratchpad subtraction version 2") {
    FormatSpec v2 = kDetailed;
    v2.sub_version = SubVersion::v2;
    FormattedSample s = render(make_sub(367, 128), v2);
    CHECK(s.completion ==
          "<scratch>\n"
          "[3,6,7] has 3 digits.\n"
          "[1,2,8] has 3 digits.\n"
          "367>=128\n"
          "[3,6,7] - [1,2,8] , A=[] , C=0 , 7-8-0+10=9 , A->9 , C->-1\n"
          "[3,6] - [1,2] , A=[9] , C=-1 , 6-2-1=3 , A->3 , C->0\n"
          "[3] - [1] , A=[3,9] , C=0 , 3-1-0=2 , A->2 , C->0\n"
          "[] - [] , A=[2,3,9] , END\n"
          "</scratch>\n"
          "2 3 9\n");
    FormattedSample t = render(make_sub(128, 367), v2);
    CHECK(t.completion.find("128<367 : 128-367=-(367-128)\n") != std::string::npos);
    CHECK(t.completion.find("[] - [] , A=[2,3,9] , END\n</scratch>\n-2 3 9\n") !=
          std::string::npos);
}

TEST_CASE("detailed scratchpad multiplication is byte exact") {
    FormattedSample s = render(make_mul(12, 36), kDetailed);
    CHECK(s.completion ==
          "<scratch>\n"
          "[1,2] has 2 digits.\n"
          "[3,6] has 2 digits.\n"
          "[1,2] * 6 , A=[7,2] , k=1 , B=[7,2] , C=0+72=72\n"
          "[1,2] * 3 , A=[3,6] , k=10 , B=[3,6,0] , C=72+360=432 , END\n"
          "</scratch>\n"
          "4 3 2\n");
    FormattedSample t = render(make_mul(8, 69), kDetailed);
    CHECK(t.completion ==
          "<scratch>\n"
          "[8] has 1 digits.\n"
          "[6,9] has 2 digits.\n"
          "[8] * 9 , A=[7,2] , k=1 , B=[7,2] , C=0+72=72\n"
          "[8] * 6 , A=[4,8] , k=10 , B=[4,8,0] , C=72+480=552 , END\n"
          "</scratch>\n"
          "5 5 2\n");
    FormattedSample u = render(make_mul(22, 52), kDetailed);
    CHECK(u.completion.find("[2,2] * 5 , A=[1,1,0] , k=10 , B=[1,1,0,0] , C=44+1100=1144 , END") !=
          std::string::npos);
    CHECK_THROWS_AS(render(make_mul(123, 4), kDetailed), std::invalid_argument);
}

TEST_CASE("detailed scratchpad sine is byte exact") {
    FormattedSample s = render(make_sine(Fixed4::parse("1.0313")), kDetailed);
    CHECK(s.prompt == "Input:\nsin(1.0313)\nTarget:\n");
    CHECK(s.completion ==
          "<scratch>\n"
          "x_0=1.0313\n"
          "x_1: x_0 - 1/3! * (x^3) , x_1=0.8484\n"
          "x_2: x_1 + 1/5! * (x^5) , x_2=0.8581\n"
          "x_3: x_2 - 1/7! * (x^7) , x_3=0.8578\n"
          "x_4: x_3 + 1/9! * (x^9) , x_4=0.8578 , END\n"
          "</scratch>\n"
          "0.8578\n");
    FormattedSample t = render(make_sine(Fixed4::parse("-0.6909")), kDetailed);
    CHECK(t.completion.find("x_1: x_0 - 1/3! * (x^3) , x_1=-0.636\n") != std::string::npos);
    CHECK(t.completion.find("x_4: x_3 + 1/9! * (x^9) , x_4=-0.6375 , END\n") != std::string::npos);
    CHECK(t.completion.substr(t.completion.find("</scratch>")) == "</scratch>\n-0.6375\n");
}

TEST_CASE("detailed scratchpad sqrt is byte exact") {
    FormattedSample s = render(make_sqrt(Fixed4::parse("7.1042")), kDetailed);
    CHECK(s.prompt == "Input:\nsqrt(7.1042)\nTarget:\n");
    CHECK(s.completion ==
          "<scratch>\n"
          "x_0=2\n"
          "x_1: 1/2*(2+7.1042/2)=2.776, x_1=2.776\n"
          "x_2: 1/2*(2.776+7.1042/2.776)=2.6675, x_2=2.6675\n"
          "x_3: 1/2*(2.6675+7.1042/2.6675)=2.6653, x_3=2.6653\n"
          "x_4: 1/2*(2.6653+7.1042/2.6653)=2.6653, x_4=2.6653 , END\n"
          "</scratch>\n"
          "2.6653\n");
}

TEST_CASE("unsupported format pairs are rejected") {
    CHECK_THROWS_AS(render(make_mul(3, 4), kSimplified), std::invalid_argument);
    CHECK_THROWS_AS(render(make_sine(Fixed4::parse("0.5")), kSimplified), std::invalid_argument);
    FormatSpec bad = kSimplified;
    bad.noise = NoiseMode::random_A;
    CHECK_NOTHROW(render(make_add(1, 2), bad));
    FormatSpec bad2 = kPlain;
    bad2.noise = NoiseMode::random_A;
    CHECK_THROWS_AS(render(make_add(1, 2), bad2), std::invalid_argument);
    FormatSpec bad3 = kDetailed;
    bad3.zero_pad = true;
    CHECK_THROWS_AS(render(make_add(1, 2), bad3), std::invalid_argument);
}

TEST_CASE("parse_answer inverts each grammar") {
    CHECK(parse_answer("495\n", kPlain, Op::add)->scaled() == 495 * 10000);
    CHECK(parse_answer("594$\n", kReverse, Op::add)->scaled() == 495 * 10000);
    CHECK(parse_answer("-472\n", kPlain, Op::sub)->scaled() == -472LL * 10000);
    CHECK(parse_answer("273-$\n", kReverse, Op::sub)->scaled() == -372LL * 10000);
    CHECK(parse_answer("0.8579\n", kPlain, Op::sine)->scaled() == 8579);
    CHECK(parse_answer("</scratch>\n1 7 7 7\n", kDetailed, Op::add)->scaled() == 1777LL * 10000);
    CHECK(parse_answer("</scratch>\n-2 3 9\n", kDetailed, Op::sub)->scaled() == -239LL * 10000);
    CHECK(!parse_answer("garbage", kPlain, Op::add).has_value());
    CHECK(!parse_answer("$-$\n", kReverse, Op::add).has_value());
    CHECK(!parse_answer("", kDetailed, Op::add).has_value());
}

TEST_CASE("round trip across every supported (op, format) pair") {
    Rng rng(101);
    std::vector<std::pair<Op, FormatSpec>> pairs;
    for (FormatKind k : {FormatKind::plain, FormatKind::reverse,
                         FormatKind::simplified_scratchpad, FormatKind::detailed_scratchpad}) {
        pairs.emplace_back(Op::add, spec_of(k));
        pairs.emplace_back(Op::sub, spec_of(k));
    }
    for (FormatKind k :
         {FormatKind::plain, FormatKind::reverse, FormatKind::detailed_scratchpad}) {
        pairs.emplace_back(Op::mul, spec_of(k));
        pairs.emplace_back(Op::sine, spec_of(k));
        pairs.emplace_back(Op::sqrt_, spec_of(k));
    }
    for (auto& [op, spec] : pairs) {
        for (int i = 0; i < 500; ++i) {
            ArithProblem p;
            switch (op) {
                case Op::add: p = make_add(rng.range(0, 999), rng.range(0, 999)); break;
                case Op::sub: p = make_sub(rng.range(0, 999), rng.range(0, 999)); break;
                case Op::mul: p = make_mul(rng.range(0, 99), rng.range(0, 99)); break;
                case Op::sine: p = make_sine(Fixed4::from_scaled(rng.range(-15707, 15707))); break;
                case Op::sqrt_: p = make_sqrt(Fixed4::from_scaled(rng.range(10000, 99999))); break;
            }
            FormattedSample s = render(p, spec);
            auto parsed = parse_answer(s.completion, spec, op);
            REQUIRE(parsed.has_value());
            if (p.is_unary() && spec.kind == FormatKind::detailed_scratchpad) {
                // the scratchpad answer is the final iterate, close to truth
                IterTrace t = op == Op::sine ? taylor_sine_trace(p.x) : newton_sqrt_trace(p.x);
                CHECK(parsed->scaled() == t.iterates[4].scaled());
                CHECK(std::llabs(parsed->scaled() - p.fresult.scaled()) <= 5);
            } else if (p.is_unary()) {
                CHECK(parsed->scaled() == p.fresult.scaled());
            } else {
                CHECK(parsed->scaled() == p.result * 10000);
            }
        }
    }
}

TEST_CASE("reverse result substring is an involution") {
    Rng rng(102);
    for (int i = 0; i < 1000; ++i) {
        ArithProblem p = make_add(rng.range(0, 999), rng.range(0, 999));
        std::string plain = render(p, kPlain).completion;
        std::string rev = render(p, kReverse).completion;
        std::string body = rev.substr(0, rev.find('$'));
        std::reverse(body.begin(), body.end());
        CHECK(body + "\n" == plain);
    }
}

TEST_CASE("noise injection keeps prompt and answer intact") {
    Rng rng(103);
    FormattedSample clean = render(make_add(686, 886), kSimplified);
    FormattedSample noisy = inject_noise(clean, NoiseMode::random_C, rng);
    CHECK(noisy.prompt == clean.prompt);
    CHECK(noisy.completion.substr(noisy.completion.rfind("1572")) == "1572\n");
    // step lines keep their shape: digit sums still there under random_C
    CHECK(noisy.completion.find("A->2 , C->") == 0);

    FormattedSample noisy_a = inject_noise(clean, NoiseMode::random_A, rng);
    CHECK(noisy_a.completion.substr(noisy_a.completion.size() - 5) == "1572\n");

    FormattedSample same = inject_noise(clean, NoiseMode::none, rng);
    CHECK(same.full() == clean.full());

    // stripping step lines leaves identical prompt and answer lines
    auto answer_line = [](const FormattedSample& s) {
        size_t last = s.completion.rfind('\n', s.completion.size() - 2);
        return s.completion.substr(last + 1);
    };
    CHECK(answer_line(noisy) == answer_line(clean));
}

TEST_CASE("noise draws respect the carry alphabet") {
    Rng rng(104);
    for (int i = 0; i < 50; ++i) {
        FormattedSample sub = render(make_sub(788, 989), kSimplified);
        FormattedSample noisy = inject_noise(sub, NoiseMode::random_AC, rng);
        CHECK(noisy.completion.find("C->1\n") == std::string::npos);  // sub carries are -1/0
        CHECK(noisy.completion.find("-300+99=-201.\n-201\n") != std::string::npos);
    }
}

TEST_CASE("output perturbation prompts") {
    Rng rng(105);
    ArithProblem p = make_add(128, 367);  // result 495
    for (int i = 0; i < 50; ++i) {
        PerturbedPrompt pp = perturb_output_prefix(p, kPlain, PerturbMode::precise, rng);
        CHECK(pp.prompt.substr(0, 9) == "128+367=4");
        char second = pp.prompt[9];
        CHECK((second == '0' || second == '8'));  // 9 +/- 1 mod 10
        CHECK(pp.correct_next == '5');
        CHECK(pp.relaxed[0] == '5');
        CHECK(pp.relaxed[1] == '6');
        CHECK(pp.relaxed[2] == '4');
    }
    for (int i = 0; i < 100; ++i) {
        PerturbedPrompt pp = perturb_output_prefix(p, kReverse, PerturbMode::random, rng);
        CHECK(pp.prompt.substr(0, 9) == "$128+367=");
        CHECK(pp.prompt.substr(9) != "59");  // must differ from the true prefix
        CHECK(pp.correct_next == '4');
    }
    CHECK_THROWS_AS(perturb_output_prefix(make_add(12, 34), kPlain, PerturbMode::random, rng),
                    std::invalid_argument);
}

TEST_CASE("token cost accounting") {
    FormattedSample plain = render(make_add(128, 367), kPlain);
    CHECK(token_cost(plain).prompt_tokens == 8);
    CHECK(token_cost(plain).completion_tokens == 4);
    FormattedSample simp = render(make_add(128, 367), kSimplified);
    CHECK(token_cost(simp).prompt_tokens == 23);
    CHECK(token_cost(simp).completion_tokens == 41);
    FormattedSample empty{"", "", make_add(1, 1)};
    CHECK(token_cost(empty).completion_tokens == 1);
}

TEST_CASE("record completion detection") {
    CHECK(completion_is_complete("495\n", kPlain, Op::add));
    CHECK(!completion_is_complete("495", kPlain, Op::add));
    CHECK(completion_is_complete("A->5 , C->1\nA->4 , C->0.\n45\n", kSimplified, Op::add));
    CHECK(!completion_is_complete("A->5 , C->1\nA->4 , C->0.\n45", kSimplified, Op::add));
    std::string det = render(make_add(12, 34), kDetailed).completion;
    CHECK(completion_is_complete(det, kDetailed, Op::add));
    CHECK(!completion_is_complete(det.substr(0, det.size() - 1), kDetailed, Op::add));
}

TEST_CASE("digit spacing transform") {
    FormatSpec spaced = kPlain;
    spaced.digit_spacing = true;
    CHECK(render(make_add(128, 367), spaced).full() == "1 2 8+3 6 7=4 9 5\n");
    CHECK(parse_answer("4 9 5\n", spaced, Op::add)->scaled() == 495LL * 10000);
}

#include "arithlab/sampling.hpp"

TEST_CASE("mean token totals per 3-digit example match the published table") {
    // the published per-example costs describe 3-digit samples of the
    // balanced set (carry classes equalized)
    Dataset d = build_balanced_addition(2000, 106);
    double totals[4] = {0, 0, 0, 0};
    long long n = 0;
    for (const ArithProblem& p : d.examples) {
        if (digit_count(p.a) != 3 && digit_count(p.b) != 3) continue;
        totals[0] += token_cost(render(p, kPlain)).total();
        totals[1] += token_cost(render(p, kReverse)).total();
        totals[2] += token_cost(render(p, kSimplified)).total();
        totals[3] += token_cost(render(p, kDetailed)).total();
        ++n;
    }
    CHECK(std::abs(totals[0] / n - 13.0) <= 2.0);
    CHECK(std::abs(totals[1] / n - 15.0) <= 2.0);
    CHECK(std::abs(totals[2] / n - 64.0) <= 2.0);
    CHECK(std::abs(totals[3] / n - 281.0) <= 2.0);
}
