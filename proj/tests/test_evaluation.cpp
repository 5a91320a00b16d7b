#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "arithlab/evaluation.hpp"
#include "arithlab/sampling.hpp"
#include "arithlab/training.hpp"

using namespace arithlab;

namespace {

FormatSpec spec_of(FormatKind kind) {
    FormatSpec s;
    s.kind = kind;
    return s;
}

}  // namespace

TEST_CASE("oracle completer scores perfectly on every format") {
    for (FormatKind kind : {FormatKind::plain, FormatKind::reverse,
                            FormatKind::simplified_scratchpad, FormatKind::detailed_scratchpad}) {
        FormatSpec spec = spec_of(kind);
        OracleCompleter oracle(spec);
        Dataset train = build_balanced_addition(500, 60);
        Dataset test = build_test_set(Op::add, 300, 3, train, 61);
        EvalReport rep = evaluate(oracle, test, spec);
        CHECK(rep.overall == 1.0);
        CHECK(rep.parse_failures == 0);
        for (const StratumStat& s : rep.by_digit_pair) CHECK(s.accuracy() == 1.0);
        for (const StratumStat& s : rep.by_carry) CHECK(s.accuracy() == 1.0);
    }
}

TEST_CASE("oracle completer is perfect on the other operations") {
    {
        FormatSpec spec = spec_of(FormatKind::detailed_scratchpad);
        OracleCompleter oracle(spec);
        Dataset train = build_mul_dataset(200, 62);
        Dataset test = build_test_set(Op::mul, 200, 2, train, 63);
        CHECK(evaluate(oracle, test, spec).overall == 1.0);
    }
    {
        FormatSpec spec = spec_of(FormatKind::plain);
        OracleCompleter oracle(spec);
        Dataset train = build_unary_dataset(Op::sine, 100, 64);
        Dataset test = build_test_set(Op::sine, 200, 0, train, 65);
        EvalReport rep = evaluate(oracle, test, spec);
        CHECK(rep.overall == 1.0);
        REQUIRE(rep.eps_accuracy.size() == 3);
        for (const auto& [eps, acc] : rep.eps_accuracy) CHECK(acc == 1.0);
    }
    {
        // scratchpad sqrt answers are the Newton iterate; the eps grid is
        // monotone and saturates by 5e-3
        FormatSpec spec = spec_of(FormatKind::detailed_scratchpad);
        OracleCompleter oracle(spec);
        Dataset train = build_unary_dataset(Op::sqrt_, 100, 66);
        Dataset test = build_test_set(Op::sqrt_, 150, 0, train, 67);
        EvalReport rep = evaluate(oracle, test, spec);
        REQUIRE(rep.eps_accuracy.size() == 3);
        CHECK(rep.eps_accuracy[1].second >= rep.eps_accuracy[0].second);
        CHECK(rep.eps_accuracy[2].second >= rep.eps_accuracy[1].second);
        CHECK(rep.eps_accuracy[2].second == 1.0);
    }
}

TEST_CASE("constant completer accuracy equals the answer frequency") {
    FormatSpec spec = spec_of(FormatKind::plain);
    ConstantCompleter always_ten("10\n");
    Dataset test;
    test.op = Op::add;
    long long hits = 0;
    Rng rng(68);
    for (int i = 0; i < 400; ++i) {
        ArithProblem p = make_add(rng.range(0, 20), rng.range(0, 20));
        hits += p.result == 10;
        test.examples.push_back(p);
    }
    EvalReport rep = evaluate(always_ten, test, spec);
    CHECK(rep.correct == hits);
}

TEST_CASE("stratified accuracies recombine to the overall accuracy") {
    FormatSpec spec = spec_of(FormatKind::plain);
    ConstantCompleter c("100\n");
    Dataset train = build_balanced_addition(500, 69);
    Dataset test = build_test_set(Op::add, 500, 3, train, 70);
    EvalReport rep = evaluate(c, test, spec);
    long long total = 0, correct = 0;
    for (const StratumStat& s : rep.by_digit_pair) {
        total += s.count;
        correct += s.correct;
    }
    CHECK(total == rep.n);
    CHECK(correct == rep.correct);
}

TEST_CASE("exclusion accuracy is defined only for matching test items") {
    FormatSpec spec = spec_of(FormatKind::plain);
    OracleCompleter oracle(spec);
    Dataset train = build_balanced_addition(500, 71);
    Dataset test = build_test_set(Op::add, 400, 3, train, 72);
    EvalOptions opt;
    opt.exclusions.values = {test.examples[0].a};
    EvalReport rep = evaluate(oracle, test, spec, opt);
    CHECK(rep.exclusion_count > 0);
    CHECK(rep.exclusion_accuracy == 1.0);

    EvalOptions none;
    EvalReport rep2 = evaluate(oracle, test, spec, none);
    CHECK(rep2.exclusion_accuracy == -1.0);
    CHECK(rep2.exclusion_count == 0);
}

TEST_CASE("parse failures are counted wrong, never fatal") {
    FormatSpec spec = spec_of(FormatKind::plain);
    ConstantCompleter garbage("!!!\n");
    Dataset train = build_balanced_addition(500, 73);
    Dataset test = build_test_set(Op::add, 100, 3, train, 74);
    EvalReport rep = evaluate(garbage, test, spec);
    CHECK(rep.overall == 0.0);
    CHECK(rep.parse_failures == 100);
    CHECK(rep.parse_failure_rate() == 1.0);
}

TEST_CASE("perturbation: oracle stubs hit the published 100% cells") {
    Dataset train = build_balanced_addition(2000, 75);
    Dataset test = build_test_set(Op::add, 800, 3, train, 76);

    FormatSpec rev = spec_of(FormatKind::reverse);
    OracleCompleter rev_oracle(rev);
    PerturbationResult r1 = perturbation_eval(rev_oracle, test, rev, PerturbMode::random, 77);
    CHECK(r1.n > 100);
    CHECK(r1.relaxed == 1.0);

    FormatSpec plain = spec_of(FormatKind::plain);
    OracleCompleter plain_oracle(plain);
    PerturbationResult r2 = perturbation_eval(plain_oracle, test, plain, PerturbMode::precise, 78);
    CHECK(r2.exact == 1.0);
    CHECK(r2.relaxed == 1.0);
    CHECK(r2.relaxed >= r2.exact);
}

TEST_CASE("unperturbed next-token accuracy via the oracle") {
    FormatSpec plain = spec_of(FormatKind::plain);
    OracleCompleter oracle(plain);
    CHECK(oracle.next_char("128+367=") == '4');
    CHECK(oracle.next_char("128+367=4") == '9');
    CHECK(oracle.next_char("128+367=49") == '5');
    CHECK(oracle.next_char("128+367=495") == '\n');
    FormatSpec rev = spec_of(FormatKind::reverse);
    OracleCompleter roracle(rev);
    CHECK(roracle.next_char("$128+367=") == '5');
    CHECK(roracle.next_char("$128+367=59") == '4');
    CHECK(roracle.next_char("$128+367=594") == '$');
}

TEST_CASE("few-shot evaluation protocol") {
    FormatSpec spec = spec_of(FormatKind::plain);
    OracleCompleter oracle(spec);
    Dataset train = build_balanced_addition(500, 79);
    Dataset test = build_test_set(Op::add, 60, 3, train, 80);

    FewShotSpec zero;
    zero.shots = 0;
    FewShotResult rz = fewshot_eval(oracle, zero, test, spec);
    CHECK(rz.mean == evaluate(oracle, test, spec).overall);
    CHECK(rz.stddev == 0.0);

    FewShotSpec three;
    three.shots = 3;
    FewShotResult r3a = fewshot_eval(oracle, three, test, spec);
    FewShotResult r3b = fewshot_eval(oracle, three, test, spec);
    CHECK(r3a.mean == r3b.mean);  // fixed exemplar sets are reproducible
    CHECK(r3a.mean == 1.0);       // the oracle ignores the prefix

    FewShotSpec text;
    text.shots = 1;
    text.source = ExemplarSource::text_prompt;
    FewShotResult rt = fewshot_eval(oracle, text, test, spec);
    CHECK(rt.mean == 1.0);

    FewShotSpec noisy;
    noisy.shots = 2;
    noisy.source = ExemplarSource::noisy;
    FewShotResult rn = fewshot_eval(oracle, noisy, test, spec);
    CHECK(rn.mean == 1.0);

    FewShotSpec bad;
    bad.shots = 4;
    CHECK_THROWS_AS(fewshot_eval(oracle, bad, test, spec), std::invalid_argument);
}

TEST_CASE("text prompt families have five exemplars each") {
    auto fams = text_prompt_families("");
    for (const auto& f : fams) CHECK(f.size() == 5);
    std::string corpus =
        "AAA:\nshort line.\n\nBBB:\nanother bit.\n\nCCC:\na considerably longer dialogue chunk "
        "that easily exceeds the sixty character cutoff used for the short family.\n\n"
        "DDD:\nmore.\n\nEEE:\nlast.\n\nFFF:\nfiller text one.\n\nGGG:\nfiller text two.\n";
    auto fams2 = text_prompt_families(corpus);
    CHECK(fams2[1][0].rfind("AAA:", 0) == 0);
    for (const std::string& e : fams2[1]) CHECK(e.size() <= 60);
}

TEST_CASE("length generalization grid flags unseen lengths") {
    FormatSpec spec = spec_of(FormatKind::reverse);
    OracleCompleter oracle(spec);
    auto rows = length_generalization_grid(oracle, Op::add, spec, 1, 4, {1, 3}, 81);
    REQUIRE(rows.size() == 4);
    for (const LengthGridRow& r : rows) {
        CHECK(r.n == 100);
        CHECK(r.accuracy == 1.0);  // the oracle is length-proof
    }
    CHECK(rows[0].trained);
    CHECK(!rows[1].trained);
    CHECK(rows[2].trained);
    CHECK(!rows[3].trained);
    std::string csv = length_grid_csv(rows);
    CHECK(csv.rfind("digits,accuracy,n,trained\n", 0) == 0);
}

TEST_CASE("token efficiency report scales with the sample count") {
    auto rows = token_efficiency_report({FormatKind::plain, FormatKind::detailed_scratchpad},
                                        {0, 1000}, 82);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].total_tokens == 0.0);
    CHECK(rows[1].total_tokens == 0.0);
    const TokenEfficiencyRow& plain = rows[2];
    const TokenEfficiencyRow& detailed = rows[3];
    CHECK(plain.samples == 1000);
    CHECK(plain.total_tokens == doctest::Approx(plain.mean_tokens * 1000));
    CHECK(detailed.mean_tokens > 200.0);
    CHECK(detailed.mean_tokens < 300.0);
    std::string csv = token_efficiency_csv(rows);
    CHECK(csv.rfind("format,samples,mean_tokens,total_tokens\n", 0) == 0);
}

TEST_CASE("grading is idempotent for a deterministic completer") {
    FormatSpec spec = spec_of(FormatKind::reverse);
    OracleCompleter oracle(spec);
    Dataset train = build_balanced_addition(500, 83);
    Dataset test = build_test_set(Op::add, 200, 3, train, 84);
    EvalReport a = evaluate(oracle, test, spec);
    EvalReport b = evaluate(oracle, test, spec);
    CHECK(a.overall == b.overall);
    CHECK(a.csv() == b.csv());
}

TEST_CASE("model completer runs the harness end to end") {
    // an untrained model answers garbage but must not crash anything
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 1;
    cfg.d_embed = 16;
    cfg.context_length = 32;
    FormatSpec spec = spec_of(FormatKind::plain);
    Vocab vocab = Vocab::from_symbols(format_charset(Op::add, spec));
    cfg.vocab_size = static_cast<int>(vocab.size());
    GptModel model(cfg, 85);
    ModelCompleter mc(model, vocab);
    Dataset test;
    test.op = Op::add;
    Rng rng(86);
    for (int i = 0; i < 40; ++i)
        test.examples.push_back(make_add(rng.range(0, 99), rng.range(0, 99)));
    EvalReport rep = evaluate(mc, test, spec);
    CHECK(rep.n == 40);
    CHECK(rep.overall <= 1.0);
    char c = mc.next_char("12+34=");
    CHECK(vocab.contains(c));
}

TEST_CASE("eval report csv includes the eps rows for unary ops") {
    FormatSpec spec = spec_of(FormatKind::plain);
    OracleCompleter oracle(spec);
    Dataset train = build_unary_dataset(Op::sine, 50, 87);
    Dataset test = build_test_set(Op::sine, 50, 0, train, 88);
    EvalReport rep = evaluate(oracle, test, spec);
    std::string csv = rep.csv();
    CHECK(csv.find("eps_0,") != std::string::npos);
    CHECK(csv.find("eps_0.0005,") != std::string::npos);
    CHECK(csv.find("eps_0.005,") != std::string::npos);
    std::string summary = rep.summary_text();
    CHECK(summary.find("overall=1") != std::string::npos);
}
