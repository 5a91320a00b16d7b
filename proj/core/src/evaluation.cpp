#include "arithlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace arithlab {

std::vector<std::string> TextCompleter::complete_batch(
    const std::vector<std::string>& prompts, const std::function<bool(const std::string&)>& done,
    int max_new) {
    std::vector<std::string> out;
    out.reserve(prompts.size());
    for (const std::string& p : prompts) out.push_back(complete(p, done, max_new));
    return out;
}

ModelCompleter::ModelCompleter(GptModel& model, const Vocab& vocab, double temperature,
                               uint64_t sample_seed)
    : model_(model), vocab_(vocab), temperature_(temperature), rng_(sample_seed) {}

std::string ModelCompleter::complete(const std::string& prompt,
                                     const std::function<bool(const std::string&)>& done,
                                     int max_new) {
    std::vector<uint16_t> ids;
    try {
        ids = vocab_.encode(prompt);
    } catch (const std::exception&) {
        return "";  // prompt outside the vocabulary: graded as a failure
    }
    std::string text;
    auto done_ids = [&](const std::vector<uint16_t>& gen) {
        text += vocab_.char_of(gen.back());
        return done ? done(text) : false;
    };
    bool greedy = temperature_ <= 0.0;
    model_.generate(ids, max_new, greedy, temperature_, greedy ? nullptr : &rng_, done_ids);
    return text;
}

char ModelCompleter::next_char(const std::string& prompt) {
    std::vector<uint16_t> ids = vocab_.encode(prompt);
    std::vector<float> logits = model_.last_logits(ids, 1, static_cast<int>(ids.size()));
    int pick = 0;
    for (size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[static_cast<size_t>(pick)]) pick = static_cast<int>(i);
    return vocab_.char_of(pick);
}

std::vector<std::string> ModelCompleter::complete_batch(
    const std::vector<std::string>& prompts, const std::function<bool(const std::string&)>& done,
    int max_new) {
    // greedy rows grouped by prompt length; temperature decoding falls back
    if (temperature_ > 0.0) return TextCompleter::complete_batch(prompts, done, max_new);
    std::vector<std::string> out(prompts.size());
    std::map<size_t, std::vector<size_t>> groups;
    for (size_t i = 0; i < prompts.size(); ++i) groups[prompts[i].size()].push_back(i);
    for (auto& [len, idxs] : groups) {
        (void)len;
        const size_t kChunk = 64;
        for (size_t start = 0; start < idxs.size(); start += kChunk) {
            size_t n = std::min(kChunk, idxs.size() - start);
            std::vector<std::vector<uint16_t>> batch;
            std::vector<size_t> live;
            for (size_t j = 0; j < n; ++j) {
                size_t idx = idxs[start + j];
                try {
                    batch.push_back(vocab_.encode(prompts[idx]));
                    live.push_back(idx);
                } catch (const std::exception&) {
                    out[idx] = "";
                }
            }
            if (batch.empty()) continue;
            std::vector<std::string> texts(batch.size());
            model_.generate_batch(batch, max_new,
                                  [&](size_t row, const std::vector<uint16_t>& gen) {
                                      std::string& t = texts[row];
                                      t += vocab_.char_of(gen.back());
                                      return done ? done(t) : false;
                                  });
            for (size_t j = 0; j < live.size(); ++j) out[live[j]] = texts[j];
        }
    }
    return out;
}

namespace {

// Query = text after the last record boundary of a (possibly few-shot) prompt.
std::string last_query(const std::string& prompt, const FormatSpec& spec) {
    if (spec.kind == FormatKind::simplified_scratchpad ||
        spec.kind == FormatKind::detailed_scratchpad) {
        size_t pos = prompt.rfind("Input:\n");
        return pos == std::string::npos ? prompt : prompt.substr(pos);
    }
    size_t pos = prompt.find_last_of('\n');
    return pos == std::string::npos ? prompt : prompt.substr(pos + 1);
}

// Operands parsed back out of a rendered query prompt.
ArithProblem problem_from_query(const std::string& query0, const FormatSpec& spec) {
    std::string query = query0;
    if (spec.kind == FormatKind::simplified_scratchpad ||
        spec.kind == FormatKind::detailed_scratchpad) {
        size_t a = query.find("Input:\n");
        size_t b = query.find("\nTarget:");
        if (a == std::string::npos || b == std::string::npos)
            throw std::invalid_argument("oracle: malformed scratchpad prompt");
        query = query.substr(a + 7, b - a - 7);
    } else {
        size_t eq = query.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("oracle: prompt without '='");
        query = query.substr(0, eq);
        if (!query.empty() && query[0] == '$') query = query.substr(1);
    }
    if (spec.digit_spacing) {
        std::string stripped;
        for (char c : query)
            if (c != ' ') stripped += c;
        query = stripped;
    }
    if (query.rfind("sin(", 0) == 0 && query.back() == ')')
        return make_sine(Fixed4::parse(query.substr(4, query.size() - 5)));
    if (query.rfind("sqrt(", 0) == 0 && query.back() == ')')
        return make_sqrt(Fixed4::parse(query.substr(5, query.size() - 6)));
    for (size_t i = 1; i < query.size(); ++i) {  // operand 'a' is unsigned
        char c = query[i];
        if (c == '+' || c == '-' || c == '*') {
            long long a = std::stoll(query.substr(0, i));
            long long b = std::stoll(query.substr(i + 1));
            if (c == '+') return make_add(a, b);
            if (c == '-') return make_sub(a, b);
            return make_mul(a, b);
        }
    }
    throw std::invalid_argument("oracle: no operator in prompt '" + query0 + "'");
}

}  // namespace

OracleCompleter::OracleCompleter(const FormatSpec& spec) : spec_(spec.normalized()) {}

std::string OracleCompleter::complete(const std::string& prompt,
                                      const std::function<bool(const std::string&)>&, int) {
    try {
        ArithProblem p = problem_from_query(last_query(prompt, spec_), spec_);
        return render(p, spec_).completion;
    } catch (const std::exception&) {
        return "";
    }
}

char OracleCompleter::next_char(const std::string& prompt) {
    if (spec_.kind != FormatKind::plain && spec_.kind != FormatKind::reverse)
        throw std::invalid_argument("oracle next_char: inline formats only");
    std::string query = last_query(prompt, spec_);
    size_t eq = query.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("oracle next_char: no '='");
    // characters already emitted after '=' locate the answer position; their
    // values are ignored, matching the digit-wise local mechanism
    size_t emitted = query.size() - eq - 1;
    ArithProblem p = problem_from_query(query.substr(0, eq + 1), spec_);
    FormattedSample canonical = render(p, spec_);
    if (emitted < canonical.completion.size()) return canonical.completion[emitted];
    return '\n';
}

bool graded_correct(const ArithProblem& problem, const Fixed4& parsed, double eps) {
    if (problem.is_unary()) {
        long long tol = static_cast<long long>(std::llround(eps * Fixed4::kScale));
        return std::llabs(parsed.scaled() - problem.fresult.scaled()) <= tol;
    }
    return parsed.scaled() == problem.result * Fixed4::kScale;
}

int default_max_new(const FormatSpec& spec, Op op) {
    switch (spec.kind) {
        case FormatKind::plain:
        case FormatKind::reverse: return 32;
        case FormatKind::simplified_scratchpad: return 192;
        case FormatKind::detailed_scratchpad:
            return op == Op::add || op == Op::sub ? 512 : 384;
    }
    return 64;
}

namespace {

void bump(std::vector<StratumStat>& strata, const std::string& key, bool correct) {
    for (StratumStat& s : strata) {
        if (s.key == key) {
            s.count += 1;
            s.correct += correct;
            return;
        }
    }
    strata.push_back({key, correct ? 1 : 0, 1});
}

}  // namespace

EvalReport evaluate(TextCompleter& completer, const Dataset& test_set, const FormatSpec& rawspec,
                    const EvalOptions& options) {
    FormatSpec spec = rawspec.normalized();
    EvalReport rep;
    rep.n = static_cast<long long>(test_set.examples.size());
    int max_new = options.max_new > 0 ? options.max_new : default_max_new(spec, test_set.op);
    auto done = [&](const std::string& text) {
        return completion_is_complete(text, spec, test_set.op);
    };

    std::vector<std::string> prompts;
    prompts.reserve(test_set.examples.size());
    for (const ArithProblem& p : test_set.examples)
        prompts.push_back(options.prompt_prefix + render(p, spec).prompt);
    std::vector<std::string> completions = completer.complete_batch(prompts, done, max_new);

    std::vector<long long> eps_correct(options.eps_grid.size(), 0);
    long long excl_correct = 0;

    for (size_t i = 0; i < test_set.examples.size(); ++i) {
        const ArithProblem& p = test_set.examples[i];
        std::optional<Fixed4> parsed = parse_answer(completions[i], spec, p.op);
        bool correct = false;
        if (!parsed) {
            ++rep.parse_failures;
        } else {
            correct = graded_correct(p, *parsed, 0.0);
        }
        rep.correct += correct;
        if (p.is_unary() && parsed) {
            for (size_t e = 0; e < options.eps_grid.size(); ++e)
                eps_correct[e] += graded_correct(p, *parsed, options.eps_grid[e]);
        } else if (p.is_unary()) {
            // parse failure counts against every threshold
        } else {
            std::string key = "d" + std::to_string(digit_count(p.a)) + "_" +
                              std::to_string(digit_count(p.b));
            bump(rep.by_digit_pair, key, correct);
            if (p.op == Op::add || p.op == Op::sub)
                bump(rep.by_carry, "carry_" + std::to_string(carry_count(p.a, p.b, p.op)), correct);
        }
        if (!options.exclusions.empty() && options.exclusions.matches(p)) {
            ++rep.exclusion_count;
            excl_correct += correct;
        }
    }
    rep.overall = rep.n ? static_cast<double>(rep.correct) / rep.n : 0.0;
    if (!test_set.examples.empty() && test_set.examples.front().is_unary())
        for (size_t e = 0; e < options.eps_grid.size(); ++e)
            rep.eps_accuracy.emplace_back(options.eps_grid[e],
                                          rep.n ? static_cast<double>(eps_correct[e]) / rep.n : 0.0);
    if (rep.exclusion_count > 0)
        rep.exclusion_accuracy = static_cast<double>(excl_correct) / rep.exclusion_count;
    return rep;
}

std::string EvalReport::csv() const {
    std::ostringstream s;
    s << "stratum,correct,count,accuracy\n";
    s << "overall," << correct << ',' << n << ',' << overall << '\n';
    for (const StratumStat& st : by_digit_pair)
        s << st.key << ',' << st.correct << ',' << st.count << ',' << st.accuracy() << '\n';
    for (const StratumStat& st : by_carry)
        s << st.key << ',' << st.correct << ',' << st.count << ',' << st.accuracy() << '\n';
    for (const auto& [eps, acc] : eps_accuracy)
        s << "eps_" << eps << ",," << n << ',' << acc << '\n';
    if (exclusion_accuracy >= 0)
        s << "exclusion,," << exclusion_count << ',' << exclusion_accuracy << '\n';
    s << "parse_failures," << parse_failures << ',' << n << ',' << parse_failure_rate() << '\n';
    return s.str();
}

std::string EvalReport::summary_text() const {
    std::ostringstream s;
    s << "n=" << n << "\noverall=" << overall << "\nparse_failure_rate=" << parse_failure_rate()
      << "\n";
    for (const auto& [eps, acc] : eps_accuracy) s << "eps_" << eps << "=" << acc << "\n";
    if (exclusion_accuracy >= 0) {
        s << "exclusion_accuracy=" << exclusion_accuracy << "\n";
        s << "exclusion_count=" << exclusion_count << "\n";
    }
    return s.str();
}

PerturbationResult perturbation_eval(TextCompleter& completer, const Dataset& test_set,
                                     const FormatSpec& rawspec, PerturbMode mode, uint64_t seed) {
    FormatSpec spec = rawspec.normalized();
    Rng rng(seed);
    PerturbationResult res;
    long long exact = 0, relaxed = 0;
    for (const ArithProblem& p : test_set.examples) {
        if (p.op != Op::add || digit_count(p.a) != 3 || digit_count(p.b) != 3) continue;
        PerturbedPrompt pp = perturb_output_prefix(p, spec, mode, rng);
        char c = completer.next_char(pp.prompt);
        exact += c == pp.correct_next;
        relaxed += c == pp.relaxed[0] || c == pp.relaxed[1] || c == pp.relaxed[2];
        ++res.n;
    }
    if (res.n) {
        res.exact = static_cast<double>(exact) / res.n;
        res.relaxed = static_cast<double>(relaxed) / res.n;
    }
    return res;
}

std::array<std::vector<std::string>, 5> text_prompt_families(const std::string& corpus_text) {
    std::array<std::vector<std::string>, 5> fam;
    fam[0] = {"et tu brute", "hello, world", "how are you doing?", "agi is coming",
              "boom! stability"};

    // corpus-derived families: short and long dialogue chunks
    std::vector<std::string> chunks;
    size_t pos = 0;
    while (pos < corpus_text.size() && chunks.size() < 400) {
        size_t sep = corpus_text.find("\n\n", pos);
        std::string c = corpus_text.substr(pos, sep == std::string::npos ? sep : sep - pos);
        if (!c.empty()) chunks.push_back(c);
        if (sep == std::string::npos) break;
        pos = sep + 2;
    }
    for (const std::string& c : chunks) {
        if (fam[1].size() < 5 && c.size() <= 60) fam[1].push_back(c);
        if (fam[2].size() < 5 && c.size() > 60 && c.size() <= 300) fam[2].push_back(c);
    }
    if (fam[1].size() < 5)
        fam[1] = {"JULIET:\nRomeo!", "All:\nResolved. resolved.", "VOLUMNIA:\nWhy, I pray you?",
                  "CORIOLANUS:\nNay! prithee, woman,--", "MENENIUS:\nI mean, thy general."};
    if (fam[2].size() < 5)
        fam[2] = {"JULIET:\nRomeo!\nROMEO:\nMy dear?",
                  "First Citizen:\nBefore we proceed any further, hear me speak.",
                  "MENENIUS:\nThis is good news:\nI will go meet the ladies.",
                  "BUCKINGHAM:\nI fear he will.\nHow now, what says your lord?",
                  "CATESBY:\nBad news, my lord: the field is lost and gone."};

    fam[3] = {"I count 16-12 on the board",
              "the river flows 17-23 then 15-22 to the sea",
              "my first 6-string cost 45 and a dime",
              "someday I might just 5-3-2-1 get a real job",
              "lines 27-67-29 in the mirror getting 1-3-92-5 clearer"};
    fam[4] = {
        "Lorem ipsum dolor sit amet, consectetur adipiscing elit. Vestibulum mattis in leo vel "
        "gravida.\nPellentesque libero elit, scelerisque varius vehicula a, hendrerit et tellus.",
        "Proin convallis neque nisl, nec lobortis est scelerisque tincidunt.\nNunc venenatis "
        "auctor urna.\nClass aptent taciti sociosqu ad litora torquent per conubia nostra.",
        "The quick brown fox jumps over the lazy dog while the band plays on and the narrator "
        "keeps narrating long past the point anyone asked for.",
        "Somewhere beyond the harbor the ships wait for a wind that never arrives, and the "
        "sailors tell each other stories that grow longer with every telling.",
        "A long walk through the old town takes you past the clock tower, the bakery, the "
        "locked library and the square where nobody remembers the statue's name."};
    return fam;
}

namespace {

std::string corrupted_plain_record(const ArithProblem& p, Rng& rng) {
    long long wrong = p.result;
    while (wrong == p.result)
        wrong = p.result + rng.range(-9, 9);
    return std::to_string(p.a) + "+" + std::to_string(p.b) + "=" + std::to_string(wrong) + "\n";
}

}  // namespace

FewShotResult fewshot_eval(TextCompleter& completer, const FewShotSpec& fs,
                           const Dataset& test_set, const FormatSpec& rawspec, int model_context,
                           const std::string& corpus_text) {
    FormatSpec spec = rawspec.normalized();
    if (fs.shots < 0 || fs.shots > 3)
        throw std::invalid_argument("fewshot_eval: shot count must lie in 0..3");

    std::array<std::string, 5> prefixes;
    if (fs.shots == 0) {
        prefixes.fill("");
    } else if (fs.source == ExemplarSource::text_prompt) {
        auto families = text_prompt_families(corpus_text);
        for (int s = 0; s < 5; ++s) {
            std::string pre;
            for (int k = 0; k < fs.shots && k < static_cast<int>(families[s].size()); ++k)
                pre += families[static_cast<size_t>(s)][static_cast<size_t>(k)] + "\n";
            prefixes[static_cast<size_t>(s)] = pre;
        }
    } else {
        Op op = fs.source == ExemplarSource::other_task ? fs.exemplar_op : test_set.op;
        FormatSpec ex_spec = spec;
        if (fs.source == ExemplarSource::other_task) {
            // fall back to plain when the query format has no grammar for it
            try {
                (void)format_charset(op, ex_spec);
                if (ex_spec.kind == FormatKind::simplified_scratchpad &&
                    (op != Op::add && op != Op::sub))
                    ex_spec.kind = FormatKind::plain;
            } catch (const std::exception&) {
                ex_spec.kind = FormatKind::plain;
            }
        }
        for (int s = 0; s < 5; ++s) {
            Rng rng = Rng(fs.seed).child(static_cast<uint64_t>(s) + 1);
            std::string pre;
            for (int k = 0; k < fs.shots; ++k) {
                ArithProblem p;
                switch (op) {
                    case Op::add: p = make_add(rng.range(100, 999), rng.range(100, 999)); break;
                    case Op::sub: p = make_sub(rng.range(100, 999), rng.range(100, 999)); break;
                    case Op::mul: p = make_mul(rng.range(1, 99), rng.range(1, 99)); break;
                    case Op::sine:
                        p = make_sine(Fixed4::from_scaled(rng.range(-15707, 15707)));
                        break;
                    case Op::sqrt_:
                        p = make_sqrt(Fixed4::from_scaled(rng.range(10000, 99999)));
                        break;
                }
                if (fs.source == ExemplarSource::noisy)
                    pre += corrupted_plain_record(p, rng);
                else
                    pre += render(p, ex_spec).full();
            }
            prefixes[static_cast<size_t>(s)] = pre;
        }
    }

    FewShotResult out;
    double sum = 0, sum2 = 0;
    for (int s = 0; s < 5; ++s) {
        if (model_context > 0 && !test_set.examples.empty()) {
            std::string probe =
                prefixes[static_cast<size_t>(s)] + render(test_set.examples[0], spec).prompt;
            if (static_cast<int>(probe.size()) + 8 > model_context)
                throw std::invalid_argument("fewshot_eval: exemplars overflow the model context");
        }
        EvalOptions opt;
        opt.prompt_prefix = prefixes[static_cast<size_t>(s)];
        EvalReport rep = evaluate(completer, test_set, spec, opt);
        out.per_set[static_cast<size_t>(s)] = rep.overall;
        sum += rep.overall;
        sum2 += rep.overall * rep.overall;
    }
    out.mean = sum / 5.0;
    out.stddev = std::sqrt(std::max(0.0, sum2 / 5.0 - out.mean * out.mean));
    return out;
}

std::vector<LengthGridRow> length_generalization_grid(TextCompleter& completer, Op op,
                                                      const FormatSpec& spec, int min_digits,
                                                      int max_digits,
                                                      const std::vector<int>& trained_lengths,
                                                      uint64_t seed, int samples_per_length) {
    std::vector<LengthGridRow> rows;
    for (int len = min_digits; len <= max_digits; ++len) {
        Rng rng = Rng(seed).child(static_cast<uint64_t>(len));
        Dataset d;
        d.op = op;
        long long hi = 1;
        for (int i = 0; i < len; ++i) hi *= 10;
        long long lo = len == 1 ? 0 : hi / 10;
        while (static_cast<long long>(d.examples.size()) < samples_per_length) {
            long long a = rng.range(lo, hi - 1);
            long long b = rng.range(0, hi - 1);
            if (rng.coin()) std::swap(a, b);
            switch (op) {
                case Op::add: d.examples.push_back(make_add(a, b)); break;
                case Op::sub: d.examples.push_back(make_sub(a, b)); break;
                case Op::mul: d.examples.push_back(make_mul(a, b)); break;
                default: throw std::invalid_argument("length grid: integer operations only");
            }
        }
        EvalReport rep = evaluate(completer, d, spec);
        LengthGridRow row;
        row.digits = len;
        row.accuracy = rep.overall;
        row.n = rep.n;
        row.trained = std::find(trained_lengths.begin(), trained_lengths.end(), len) !=
                      trained_lengths.end();
        rows.push_back(row);
    }
    return rows;
}

std::string length_grid_csv(const std::vector<LengthGridRow>& rows) {
    std::ostringstream s;
    s << "digits,accuracy,n,trained\n";
    for (const LengthGridRow& r : rows)
        s << r.digits << ',' << r.accuracy << ',' << r.n << ',' << (r.trained ? 1 : 0) << '\n';
    return s.str();
}

std::vector<TokenEfficiencyRow> token_efficiency_report(const std::vector<FormatKind>& formats,
                                                        const std::vector<long long>& sizes,
                                                        uint64_t seed) {
    std::vector<TokenEfficiencyRow> rows;
    for (long long n : sizes) {
        Dataset d;
        if (n > 0) d = build_balanced_addition(std::max<long long>(100, n), seed);
        for (FormatKind kind : formats) {
            FormatSpec spec;
            spec.kind = kind;
            TokenEfficiencyRow row;
            row.format = format_kind_name(kind);
            row.samples = n;
            if (n > 0) {
                double total = 0;
                for (const ArithProblem& p : d.examples) total += token_cost(render(p, spec)).total();
                row.mean_tokens = total / static_cast<double>(d.examples.size());
                row.total_tokens = row.mean_tokens * static_cast<double>(n);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::string token_efficiency_csv(const std::vector<TokenEfficiencyRow>& rows) {
    std::ostringstream s;
    s << "format,samples,mean_tokens,total_tokens\n";
    for (const TokenEfficiencyRow& r : rows)
        s << r.format << ',' << r.samples << ',' << r.mean_tokens << ',' << r.total_tokens << '\n';
    return s.str();
}

}  // namespace arithlab
