// Experiment front end: dataset generation, training, fine-tuning,
// evaluation, sampling, sweeps, matrix-completion baselines and token
// accounting, all driven by flat key=value configs with --set overrides.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "arithlab/checkpoint.hpp"
#include "arithlab/config.hpp"
#include "arithlab/evaluation.hpp"
#include "arithlab/lrmc.hpp"
#include "arithlab/sampling.hpp"
#include "arithlab/training.hpp"

namespace fs = std::filesystem;
using namespace arithlab;

namespace {

const std::set<std::string> kSchema = {
    "run.name", "run.out_dir", "run.seed",
    "task.op",
    "data.n", "data.test_n", "data.digits", "data.balance",
    "data.exclude_values", "data.exclude_digit_at",
    "data.corpus", "data.umax", "data.mul_n",
    "format.kind", "format.zero_pad", "format.pad_digits", "format.dollar_wrap",
    "format.noise", "format.sub_version", "format.digit_spacing",
    "model.preset", "model.n_layers", "model.n_heads", "model.d_embed",
    "model.context", "model.dropout", "model.weight_tying", "model.extended_vocab",
    "train.preset", "train.batch", "train.lr", "train.beta1", "train.beta2",
    "train.weight_decay", "train.iters", "train.warmup", "train.accum",
    "train.eval_interval", "train.seq_len", "train.completion_only", "train.decay_lr",
    "train.min_lr_ratio",
    "eval.checkpoint", "eval.mode", "eval.eps", "eval.shots", "eval.exemplar",
    "eval.exemplar_op", "eval.perturb", "eval.min_digits", "eval.max_digits",
    "eval.trained_lengths", "eval.samples", "eval.temperature",
    "finetune.checkpoint", "finetune.lr_scale",
    "sweep.sizes", "sweep.formats", "sweep.max_seconds_per_point",
    "lrmc.n", "lrmc.m", "lrmc.trials", "lrmc.rule",
    "tokens.formats", "tokens.sizes",
};

struct RunContext {
    KeyValueConfig cfg;
    fs::path out;
    uint64_t seed = 1337;
};

RunContext make_run(const std::string& config_path, const std::vector<std::string>& overrides,
                    const std::string& default_name) {
    RunContext rc;
    if (!config_path.empty()) rc.cfg = KeyValueConfig::from_file(config_path);
    for (const std::string& ov : overrides) rc.cfg.apply_override(ov);
    rc.cfg.validate_keys(kSchema);
    rc.seed = static_cast<uint64_t>(rc.cfg.get_int("run.seed", 1337));
    std::string name = rc.cfg.get("run.name", default_name);
    fs::path base = rc.cfg.get("run.out_dir", "runs");
    rc.out = base / name;
    fs::create_directories(rc.out);
    std::ofstream echo(rc.out / "config.echo");
    echo << rc.cfg.echo_text();
    return rc;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    f << text;
}

Op parse_op(const KeyValueConfig& cfg) {
    std::string name = cfg.get("task.op", "add");
    auto op = op_from_name(name);
    if (!op) throw std::invalid_argument("unknown task.op: " + name);
    return *op;
}

FormatSpec parse_format(const KeyValueConfig& cfg) {
    FormatSpec spec;
    auto kind = format_kind_from_name(cfg.get("format.kind", "plain"));
    if (!kind) throw std::invalid_argument("unknown format.kind: " + cfg.get("format.kind", ""));
    spec.kind = *kind;
    spec.zero_pad = cfg.get_flag("format.zero_pad", false);
    spec.pad_digits = static_cast<int>(cfg.get_int("format.pad_digits", 3));
    spec.dollar_wrap = cfg.get_flag("format.dollar_wrap", false);
    std::string noise = cfg.get("format.noise", "none");
    if (noise == "none") spec.noise = NoiseMode::none;
    else if (noise == "random_a") spec.noise = NoiseMode::random_A;
    else if (noise == "random_c") spec.noise = NoiseMode::random_C;
    else if (noise == "random_ac") spec.noise = NoiseMode::random_AC;
    else throw std::invalid_argument("unknown format.noise: " + noise);
    spec.sub_version =
        cfg.get("format.sub_version", "v1") == "v2" ? SubVersion::v2 : SubVersion::v1;
    spec.digit_spacing = cfg.get_flag("format.digit_spacing", false);
    return spec.normalized();
}

Exclusions parse_exclusions(const KeyValueConfig& cfg) {
    Exclusions ex;
    ex.values = cfg.get_int_list("data.exclude_values");
    for (const std::string& item : cfg.get_list("data.exclude_digit_at")) {
        size_t at = item.find('@');
        if (at == std::string::npos)
            throw std::invalid_argument("data.exclude_digit_at entries look like 5@1");
        ex.digit_at.emplace_back(std::stoi(item.substr(0, at)), std::stoi(item.substr(at + 1)));
    }
    return ex;
}

Dataset build_train_dataset(const KeyValueConfig& cfg, Op op, uint64_t seed) {
    long long n = cfg.get_int("data.n", 10000);
    int digits = static_cast<int>(cfg.get_int("data.digits", 3));
    auto balance = balance_from_name(cfg.get("data.balance", "both"));
    if (!balance) throw std::invalid_argument("unknown data.balance");
    switch (op) {
        case Op::add:
        case Op::sub: {
            Dataset base = digits == 3 ? build_addition_dataset(n, *balance, seed)
                                       : build_multidigit(n, digits, seed);
            return op == Op::sub ? relabel(base, Op::sub) : base;
        }
        case Op::mul: return build_mul_dataset(n, seed);
        default: return build_unary_dataset(op, n, seed);
    }
}

struct Corpus {
    Vocab vocab;
    TokenizedCorpus train, val;
    Dataset train_set, test_set;
    FormatSpec spec;
};

Corpus build_corpus(const KeyValueConfig& cfg, uint64_t seed) {
    Corpus c;
    Op op = parse_op(cfg);
    c.spec = parse_format(cfg);
    c.train_set = build_train_dataset(cfg, op, seed);
    Exclusions ex = parse_exclusions(cfg);
    if (!ex.empty()) c.train_set = apply_exclusions(c.train_set, ex).kept;
    long long test_n = cfg.get_int("data.test_n", op == Op::mul ? 7000 : 10000);
    int digits = static_cast<int>(cfg.get_int("data.digits", op == Op::mul ? 2 : 3));
    c.test_set = build_test_set(op, test_n, digits, c.train_set, seed + 1);

    std::vector<std::string> train_recs = render_records(c.train_set, c.spec, seed + 2);
    std::vector<std::string> val_recs = render_records(c.test_set, c.spec, seed + 3);

    std::string charset = format_charset(op, c.spec);
    if (cfg.get_flag("model.extended_vocab", false)) {
        // union alphabet covering text plus every task grammar
        FormatSpec probe = c.spec;
        for (Op o : {Op::add, Op::sub, Op::mul, Op::sine, Op::sqrt_})
            charset += format_charset(o, FormatSpec{});
        charset += format_charset(op, probe);
        charset += "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ ,.!?;:'-";
    }
    c.vocab = Vocab::from_symbols(charset);

    std::string train_text, val_text;
    for (const std::string& r : train_recs) train_text += r;
    for (const std::string& r : val_recs) val_text += r;

    std::string corpus_path = cfg.get("data.corpus", "");
    if (!corpus_path.empty()) {
        std::ifstream f(corpus_path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open corpus " + corpus_path);
        std::stringstream buf;
        buf << f.rdbuf();
        JointStream mixed =
            mix_with_text(buf.str(), {{op, train_recs}}, seed + 4,
                          static_cast<int>(cfg.get_int("data.umax", 0)));
        train_text = mixed.text;
        c.vocab = Vocab::build(train_text + val_text);
    }

    c.train = tokenize_text(train_text, c.vocab);
    c.val = tokenize_text(val_text, c.vocab);
    return c;
}

ModelConfig parse_model(const KeyValueConfig& cfg, int vocab_size, int longest_record) {
    std::string preset = cfg.get("model.preset", "custom");
    ModelConfig mc;
    if (preset == "nanogpt") {
        mc = ModelConfig::nanogpt(vocab_size, static_cast<int>(cfg.get_int("model.context", 256)));
    } else if (preset == "gpt2") {
        mc = ModelConfig::gpt2(vocab_size);
    } else {
        mc.n_layers = static_cast<int>(cfg.get_int("model.n_layers", 2));
        mc.n_heads = static_cast<int>(cfg.get_int("model.n_heads", 2));
        mc.d_embed = static_cast<int>(cfg.get_int("model.d_embed", 128));
        mc.context_length = static_cast<int>(cfg.get_int("model.context", 256));
        mc.vocab_size = vocab_size;
    }
    mc.vocab_size = vocab_size;
    mc.dropout = static_cast<float>(cfg.get_real("model.dropout", 0.2));
    mc.weight_tying = cfg.get_flag("model.weight_tying", true);
    if (cfg.has("model.context"))
        mc.context_length = static_cast<int>(cfg.get_int("model.context", mc.context_length));
    if (longest_record > mc.context_length)
        throw std::invalid_argument("model context " + std::to_string(mc.context_length) +
                                    " is shorter than the longest rendered sample (" +
                                    std::to_string(longest_record) + " chars)");
    mc.validate();
    return mc;
}

TrainConfig parse_train(const KeyValueConfig& cfg, uint64_t seed) {
    std::string preset = cfg.get("train.preset", "nanogpt-plain");
    TrainConfig tc;
    if (preset == "nanogpt-plain") tc = TrainConfig::nanogpt_plain();
    else if (preset == "nanogpt-scratchpad") tc = TrainConfig::nanogpt_scratchpad();
    else if (preset == "gpt2-plain") tc = TrainConfig::gpt2_plain();
    else if (preset == "gpt2-scratchpad") tc = TrainConfig::gpt2_scratchpad();
    else if (preset == "tandem") tc = TrainConfig::tandem_nanogpt();
    else if (preset == "smoke") tc = TrainConfig::smoke();
    else throw std::invalid_argument("unknown train.preset: " + preset);
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch", tc.batch_size));
    tc.lr = cfg.get_real("train.lr", tc.lr);
    tc.beta1 = cfg.get_real("train.beta1", tc.beta1);
    tc.beta2 = cfg.get_real("train.beta2", tc.beta2);
    tc.weight_decay = cfg.get_real("train.weight_decay", tc.weight_decay);
    tc.iterations = cfg.get_int("train.iters", tc.iterations);
    tc.warmup_iters = cfg.get_int("train.warmup", tc.warmup_iters);
    tc.grad_accum = static_cast<int>(cfg.get_int("train.accum", tc.grad_accum));
    tc.eval_interval = cfg.get_int("train.eval_interval", tc.eval_interval);
    tc.seq_len = static_cast<int>(cfg.get_int("train.seq_len", tc.seq_len));
    tc.completion_only_loss = cfg.get_flag("train.completion_only", tc.completion_only_loss);
    tc.decay_lr = cfg.get_flag("train.decay_lr", tc.decay_lr);
    tc.min_lr_ratio = cfg.get_real("train.min_lr_ratio", tc.min_lr_ratio);
    tc.seed = seed;
    return tc;
}

int longest_record_length(const Dataset& d, const FormatSpec& spec) {
    size_t longest = 0;
    for (const ArithProblem& p : d.examples)
        longest = std::max(longest, render(p, spec).full().size());
    return static_cast<int>(longest);
}

Dataset eval_subsample(const Dataset& full, long long n, uint64_t seed) {
    if (n <= 0 || n >= static_cast<long long>(full.examples.size())) return full;
    Dataset out;
    out.op = full.op;
    Rng rng(seed);
    std::vector<size_t> idx(full.examples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    for (long long i = 0; i < n; ++i) out.examples.push_back(full.examples[idx[static_cast<size_t>(i)]]);
    return out;
}

int cmd_generate(const RunContext& rc) {
    const KeyValueConfig& cfg = rc.cfg;
    Corpus c = build_corpus(cfg, rc.seed);
    write_file(rc.out / "train.txt", [&] {
        std::string t;
        for (uint16_t id : c.train.tokens) t += c.vocab.char_of(id);
        return t;
    }());
    write_file(rc.out / "test.txt", [&] {
        std::string t;
        for (uint16_t id : c.val.tokens) t += c.vocab.char_of(id);
        return t;
    }());
    write_manifest((rc.out / "manifest.txt").string(), c.train_set.manifest);
    c.vocab.save((rc.out / "vocab.txt").string());
    write_token_file((rc.out / "train.bin").string(), c.train.tokens,
                     static_cast<uint32_t>(c.vocab.size()));
    write_token_file((rc.out / "test.bin").string(), c.val.tokens,
                     static_cast<uint32_t>(c.vocab.size()));
    std::cout << "wrote " << c.train_set.examples.size() << " train / "
              << c.test_set.examples.size() << " test samples, vocab " << c.vocab.size()
              << ", tokens " << c.train.tokens.size() << " -> " << rc.out.string() << "\n";
    std::cout << manifest_text(c.train_set.manifest);
    return 0;
}

int run_training(const RunContext& rc, const Checkpoint* resume) {
    const KeyValueConfig& cfg = rc.cfg;
    Corpus c = build_corpus(cfg, rc.seed);
    int longest = longest_record_length(c.train_set, c.spec);
    TrainConfig tc = parse_train(cfg, rc.seed);

    GptModel model = [&] {
        if (resume) {
            if (resume->vocab_symbols != c.vocab.symbols())
                throw std::invalid_argument("checkpoint vocabulary does not match the dataset");
            GptModel m(resume->config, resume->seed);
            resume->restore_into(m);
            return m;
        }
        return GptModel(parse_model(cfg, static_cast<int>(c.vocab.size()), longest), rc.seed);
    }();
    if (tc.seq_len == 0)
        tc.seq_len = std::min(model.config().context_length,
                              std::max(32, 2 * longest));

    Dataset probe = eval_subsample(c.test_set, cfg.get_int("eval.samples", 256), rc.seed + 9);
    AdamMoments moments;
    TrainHooks hooks;
    c.vocab.save((rc.out / "vocab.txt").string());
    double best_acc = -1.0;
    hooks.eval_accuracy = [&](GptModel& m) {
        ModelCompleter mc(m, c.vocab);
        return evaluate(mc, probe, c.spec).overall;
    };
    hooks.on_eval = [&](const MetricsRow& row, GptModel& m, const AdamMoments& mm) {
        std::cout << "iter " << row.iter << " train " << row.train_loss << " val " << row.val_loss
                  << " acc " << row.eval_accuracy << " lr " << row.lr << "\n"
                  << std::flush;
        Checkpoint ck = Checkpoint::capture(m, c.vocab, (rc.out / "vocab.txt").string(),
                                            row.iter, rc.seed, &mm);
        ck.save((rc.out / "ckpt_final.bin").string());
        if (row.eval_accuracy > best_acc) {
            best_acc = row.eval_accuracy;
            ck.save((rc.out / "ckpt_best.bin").string());
        }
    };

    TrainResult r = train(model, moments, c.train, c.val, tc, hooks);
    write_file(rc.out / "metrics.csv", metrics_csv(r.log));
    if (r.skipped_steps)
        std::cout << "skipped " << r.skipped_steps << " non-finite gradient steps\n";
    std::cout << "final val loss " << r.final_val_loss << ", best probe accuracy " << best_acc
              << "\n";
    return 0;
}

int cmd_train(const RunContext& rc) { return run_training(rc, nullptr); }

int cmd_finetune(const RunContext& rc) {
    std::string path = rc.cfg.get("finetune.checkpoint", "");
    if (path.empty()) throw std::invalid_argument("finetune.checkpoint is required");
    Checkpoint ck = Checkpoint::load(path);
    return run_training(rc, &ck);
}

int cmd_eval(const RunContext& rc) {
    const KeyValueConfig& cfg = rc.cfg;
    std::string path = cfg.get("eval.checkpoint", "");
    if (path.empty()) throw std::invalid_argument("eval.checkpoint is required");
    Checkpoint ck = Checkpoint::load(path);
    Vocab vocab = ck.vocab();
    GptModel model(ck.config, ck.seed);
    ck.restore_into(model);
    double temperature = cfg.get_real("eval.temperature", 0.0);
    ModelCompleter completer(model, vocab, temperature, rc.seed);

    Op op = parse_op(cfg);
    FormatSpec spec = parse_format(cfg);
    Dataset train = build_train_dataset(cfg, op, rc.seed);
    Dataset test = build_test_set(op, cfg.get_int("data.test_n", op == Op::mul ? 7000 : 10000),
                                  static_cast<int>(cfg.get_int("data.digits", 3)), train,
                                  rc.seed + 1);
    test = eval_subsample(test, cfg.get_int("eval.samples", 0), rc.seed + 2);

    std::string mode = cfg.get("eval.mode", "standard");
    if (mode == "standard") {
        EvalOptions opt;
        opt.exclusions = parse_exclusions(cfg);
        std::vector<std::string> eps_raw = cfg.get_list("eval.eps");
        if (!eps_raw.empty()) {
            opt.eps_grid.clear();
            for (const std::string& e : eps_raw) opt.eps_grid.push_back(std::stod(e));
        }
        EvalReport rep = evaluate(completer, test, spec, opt);
        write_file(rc.out / "report.csv", rep.csv());
        write_file(rc.out / "summary.txt", rep.summary_text());
        std::cout << rep.summary_text();
    } else if (mode == "fewshot") {
        FewShotSpec fs;
        fs.shots = static_cast<int>(cfg.get_int("eval.shots", 1));
        std::string src = cfg.get("eval.exemplar", "same");
        if (src == "same") fs.source = ExemplarSource::same_task;
        else if (src == "other") fs.source = ExemplarSource::other_task;
        else if (src == "text") fs.source = ExemplarSource::text_prompt;
        else if (src == "noisy") fs.source = ExemplarSource::noisy;
        else throw std::invalid_argument("unknown eval.exemplar: " + src);
        if (fs.source == ExemplarSource::other_task) {
            auto other = op_from_name(cfg.get("eval.exemplar_op", "add"));
            if (!other) throw std::invalid_argument("unknown eval.exemplar_op");
            fs.exemplar_op = *other;
        }
        fs.seed = rc.seed + 5;
        std::string corpus_text;
        std::string corpus_path = cfg.get("data.corpus", "");
        if (!corpus_path.empty()) {
            std::ifstream f(corpus_path, std::ios::binary);
            std::stringstream buf;
            buf << f.rdbuf();
            corpus_text = buf.str();
        }
        FewShotResult r =
            fewshot_eval(completer, fs, test, spec, model.config().context_length, corpus_text);
        std::ostringstream out;
        out << "shots,source,mean,std\n"
            << fs.shots << ',' << src << ',' << r.mean << ',' << r.stddev << '\n';
        write_file(rc.out / "report.csv", out.str());
        std::cout << out.str();
    } else if (mode == "perturbation") {
        PerturbMode pm =
            cfg.get("eval.perturb", "random") == "precise" ? PerturbMode::precise : PerturbMode::random;
        PerturbationResult r = perturbation_eval(completer, test, spec, pm, rc.seed + 6);
        std::ostringstream out;
        out << "mode,n,exact,relaxed\n"
            << cfg.get("eval.perturb", "random") << ',' << r.n << ',' << r.exact << ','
            << r.relaxed << '\n';
        write_file(rc.out / "report.csv", out.str());
        std::cout << out.str();
    } else if (mode == "length_grid") {
        std::vector<int> trained;
        for (long long v : cfg.get_int_list("eval.trained_lengths"))
            trained.push_back(static_cast<int>(v));
        auto rows = length_generalization_grid(
            completer, op, spec, static_cast<int>(cfg.get_int("eval.min_digits", 1)),
            static_cast<int>(cfg.get_int("eval.max_digits", 4)), trained, rc.seed + 7);
        write_file(rc.out / "report.csv", length_grid_csv(rows));
        std::cout << length_grid_csv(rows);
    } else {
        throw std::invalid_argument("unknown eval.mode: " + mode);
    }
    return 0;
}

int cmd_sample(const RunContext& rc, const std::string& prompt, int max_new) {
    std::string path = rc.cfg.get("eval.checkpoint", "");
    if (path.empty()) throw std::invalid_argument("eval.checkpoint is required");
    Checkpoint ck = Checkpoint::load(path);
    Vocab vocab = ck.vocab();
    GptModel model(ck.config, ck.seed);
    ck.restore_into(model);
    double temperature = rc.cfg.get_real("eval.temperature", 0.8);
    ModelCompleter completer(model, vocab, temperature, rc.seed);
    std::string text = completer.complete(prompt, nullptr, max_new);
    std::cout << prompt << text << "\n";
    return 0;
}

int cmd_sweep(const RunContext& rc) {
    const KeyValueConfig& cfg = rc.cfg;
    std::vector<long long> sizes = cfg.get_int_list("sweep.sizes");
    if (sizes.empty()) sizes = {500, 1000, 2000, 5000, 10000};
    std::vector<std::string> formats = cfg.get_list("sweep.formats");
    if (formats.empty()) formats = {cfg.get("format.kind", "plain")};
    double budget = cfg.get_real("sweep.max_seconds_per_point", 0.0);

    std::ostringstream csv;
    csv << "format,samples,accuracy,val_loss,seconds\n";
    for (const std::string& fmt : formats) {
        for (long long n : sizes) {
            auto t0 = std::chrono::steady_clock::now();
            KeyValueConfig point = cfg;
            point.set("format.kind", fmt);
            point.set("data.n", std::to_string(n));
            Corpus c = build_corpus(point, rc.seed + static_cast<uint64_t>(n));
            int longest = longest_record_length(c.train_set, c.spec);
            TrainConfig tc = parse_train(point, rc.seed + static_cast<uint64_t>(n));
            GptModel model(parse_model(point, static_cast<int>(c.vocab.size()), longest),
                           rc.seed + static_cast<uint64_t>(n));
            if (tc.seq_len == 0)
                tc.seq_len = std::min(model.config().context_length, std::max(32, 2 * longest));
            AdamMoments moments;
            TrainResult r = train(model, moments, c.train, c.val, tc);
            ModelCompleter mc(model, c.vocab);
            Dataset probe = eval_subsample(c.test_set, cfg.get_int("eval.samples", 1000),
                                           rc.seed + 11);
            EvalReport rep = evaluate(mc, probe, c.spec);
            double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            csv << fmt << ',' << n << ',' << rep.overall << ',' << r.final_val_loss << ',' << secs
                << '\n';
            std::cout << fmt << " n=" << n << " acc=" << rep.overall << " (" << secs << "s)\n"
                      << std::flush;
            if (budget > 0 && secs > budget) {
                write_file(rc.out / "sweep.csv", csv.str());
                throw std::runtime_error("sweep point exceeded max_seconds_per_point");
            }
        }
    }
    write_file(rc.out / "sweep.csv", csv.str());
    return 0;
}

int cmd_lrmc(const RunContext& rc) {
    const KeyValueConfig& cfg = rc.cfg;
    std::vector<long long> n_raw = cfg.get_int_list("lrmc.n");
    std::vector<int> n_list;
    for (long long n : n_raw) n_list.push_back(static_cast<int>(n));
    if (n_list.empty()) n_list = {20, 50, 100};
    std::vector<long long> m_grid = cfg.get_int_list("lrmc.m");
    if (m_grid.empty()) {
        // geometric grid from n to n*n across the largest board
        long long lo = n_list.front(), hi = static_cast<long long>(n_list.back()) * n_list.back();
        for (double m = static_cast<double>(lo); m <= static_cast<double>(hi); m *= 1.5)
            m_grid.push_back(static_cast<long long>(m));
    }
    int trials = static_cast<int>(cfg.get_int("lrmc.trials", 100));
    FillRule rule = cfg.get("lrmc.rule", "additive") == "multiplicative"
                        ? FillRule::multiplicative
                        : FillRule::additive;
    auto pts = sweep_success(n_list, m_grid, trials, rule, rc.seed);
    write_file(rc.out / "lrmc.csv", sweep_csv(pts));
    std::cout << sweep_csv(pts);
    return 0;
}

int cmd_tokens(const RunContext& rc) {
    const KeyValueConfig& cfg = rc.cfg;
    std::vector<FormatKind> formats;
    std::vector<std::string> names = cfg.get_list("tokens.formats");
    if (names.empty()) names = {"plain", "reverse", "simplified", "detailed"};
    for (const std::string& n : names) {
        auto k = format_kind_from_name(n);
        if (!k) throw std::invalid_argument("unknown format in tokens.formats: " + n);
        formats.push_back(*k);
    }
    std::vector<long long> sizes = cfg.get_int_list("tokens.sizes");
    if (sizes.empty()) sizes = {1000, 5000, 10000};
    auto rows = token_efficiency_report(formats, sizes, rc.seed);
    write_file(rc.out / "tokens.csv", token_efficiency_csv(rows));
    std::cout << token_efficiency_csv(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"arithlab: arithmetic training lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string prompt;
    int max_new = 256;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--set", overrides, "override, e.g. --set data.n=5000")->take_all();
    };

    CLI::App* generate = app.add_subcommand("generate", "build dataset files");
    CLI::App* train_cmd = app.add_subcommand("train", "train a model from scratch");
    CLI::App* finetune_cmd = app.add_subcommand("finetune", "resume a checkpoint on new data");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    CLI::App* sample_cmd = app.add_subcommand("sample", "generate text from a checkpoint");
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "train across sample sizes");
    CLI::App* lrmc_cmd = app.add_subcommand("lrmc", "matrix-completion phase transition");
    CLI::App* tokens_cmd = app.add_subcommand("tokens", "token-efficiency accounting");
    for (CLI::App* sub : {generate, train_cmd, finetune_cmd, eval_cmd, sample_cmd, sweep_cmd,
                          lrmc_cmd, tokens_cmd})
        add_common(sub);
    sample_cmd->add_option("--prompt", prompt, "prompt text")->required();
    sample_cmd->add_option("--max-new", max_new, "generation budget");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(make_run(config_path, overrides, "generate"));
        if (train_cmd->parsed()) return cmd_train(make_run(config_path, overrides, "train"));
        if (finetune_cmd->parsed())
            return cmd_finetune(make_run(config_path, overrides, "finetune"));
        if (eval_cmd->parsed()) return cmd_eval(make_run(config_path, overrides, "eval"));
        if (sample_cmd->parsed())
            return cmd_sample(make_run(config_path, overrides, "sample"), prompt, max_new);
        if (sweep_cmd->parsed()) return cmd_sweep(make_run(config_path, overrides, "sweep"));
        if (lrmc_cmd->parsed()) return cmd_lrmc(make_run(config_path, overrides, "lrmc"));
        if (tokens_cmd->parsed()) return cmd_tokens(make_run(config_path, overrides, "tokens"));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
