// morphtag — command-line front end: tokenizer-train, train, eval, tag.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphtag/bpe.hpp"
#include "morphtag/config.hpp"
#include "morphtag/conllu.hpp"
#include "morphtag/eval.hpp"
#include "morphtag/fileio.hpp"
#include "morphtag/model.hpp"
#include "morphtag/tagger.hpp"
#include "morphtag/text.hpp"
#include "morphtag/train.hpp"

namespace fs = std::filesystem;
using namespace morphtag;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::vector<Sentence> read_corpus(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " file not found: " + path);
    return read_conllu(path);
}

int cmd_tokenizer_train(const std::vector<std::string>& inputs, long threshold, std::optional<std::size_t> max_vocab,
                        const std::string& out) {
    if (threshold < 1) throw UsageError("--threshold must be >= 1");
    std::vector<Sentence> corpus;
    for (const auto& p : inputs) {
        auto s = read_corpus(p, "input");
        corpus.insert(corpus.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    if (corpus.empty()) throw DataError("input corpus is empty");
    auto bpe = train_bpe(corpus, {threshold, max_vocab});
    save_bpe(bpe, out);
    std::printf("vocab_size=%zu merges=%zu\n", bpe.vocab_size(), bpe.merges().size());
    return kOk;
}

std::string read_text_if_exists(const std::string& path) {
    return fs::is_regular_file(path) ? read_file(path) : std::string();
}

int cmd_train(RunConfig rc, std::optional<std::size_t> stop_after) {
    validate_paths(rc);
    rc.train.validate();
    if (rc.model.max_words != rc.train.max_words) throw UsageError("max_words mismatch");

    auto train = read_corpus(rc.train_path, "train");
    auto dev = read_corpus(rc.dev_path, "dev");
    if (train.empty()) throw DataError("training set is empty: " + rc.train_path);
    if (dev.empty()) throw DataError("dev set is empty: " + rc.dev_path);
    const auto bpe = load_bpe(rc.vocab_path);
    if (rc.expected_vocab && rc.expected_vocab != bpe.vocab_size())
        throw DataError("vocab_size = " + std::to_string(rc.expected_vocab) + " but " + rc.vocab_path + " has " +
                        std::to_string(bpe.vocab_size()) + " tokens");

    std::optional<TaggerModel<float>> model;
    TrainState state;
    if (!rc.resume_path.empty()) {
        const auto ck = load_checkpoint(rc.resume_path);
        model.emplace(model_from_checkpoint<float>(ck));
        state = restore_training_state(ck, *model);
        if (model->config().vocab_size != bpe.vocab_size())
            throw DataError("resume checkpoint vocab size differs from " + rc.vocab_path);
        std::fprintf(stderr, "resuming after epoch %zu\n", state.epochs_done);
    } else {
        rc.model.vocab_size = bpe.vocab_size();
        rc.model.schemas = rc.schemas_path.empty() ? build_schemas(train) : load_schemas(rc.schemas_path);
        rc.model.validate();
        model.emplace(rc.model);
    }
    std::fprintf(stderr, "train %zu sentences, dev %zu, vocab %zu, %zu categories, %zu parameters\n", train.size(),
                 dev.size(), bpe.vocab_size(), model->config().schemas.size(), model->enumerate_parameter_count());

    std::string log_text = rc.resume_path.empty() || rc.log_path.empty() ? std::string() : read_text_if_exists(rc.log_path);
    TrainHooks hooks;
    hooks.stop_after = stop_after;
    hooks.on_epoch = [&](const EpochLog& e) {
        const auto line = e.line();
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        std::fprintf(stderr, "epoch %zu took %.1fs\n", e.epoch, e.seconds);
        if (!rc.log_path.empty()) {
            log_text += line + "\n";
            write_atomic(rc.log_path, log_text);
        }
    };
    hooks.on_best = [&](const TaggerModel<float>& m, const EpochLog& e) {
        auto ck = make_checkpoint(m);
        ck.extra["train.best_epoch"] = std::to_string(e.epoch);
        ck.extra["train.best_dev"] = detail::format_real(e.dev_accuracy);
        save_checkpoint(ck, rc.checkpoint_path);
    };
    hooks.on_state = [&](const TaggerModel<float>& m, const TrainState& st) {
        if (rc.state_dir.empty()) return;
        char name[32];
        std::snprintf(name, sizeof name, "epoch-%03zu.ckpt", st.epochs_done);
        save_checkpoint(make_training_checkpoint(m, st), (fs::path(rc.state_dir) / name).string());
    };

    auto result = train_loop(*model, bpe, train, dev, rc.train, std::move(state), hooks);

    if (!result.state.best_parameters.empty() && !fs::exists(rc.checkpoint_path)) {
        TaggerModel<float> best(model->config());
        best.import_parameters(result.state.best_parameters);
        save_checkpoint(make_checkpoint(best), rc.checkpoint_path);
    }
    if (!rc.report_path.empty() && result.state.epochs_done == rc.train.epochs) {
        auto best = model_from_checkpoint<float>(load_checkpoint(rc.checkpoint_path));
        auto test = read_corpus(rc.test_path, "test");
        if (test.empty()) throw DataError("test set is empty: " + rc.test_path);
        auto report = evaluate_model(best, bpe, test, rc.train.batch_size, rc.train.truncation);
        write_atomic(rc.report_path, format_report_table(report));
        write_atomic(rc.report_path + ".kv", format_report_kv(report));
    }
    return kOk;
}

void check_vocab(const TaggerModel<float>& model, const BpeModel& bpe, const std::string& vocab_path) {
    if (model.config().vocab_size != bpe.vocab_size())
        throw DataError("vocab " + vocab_path + " has " + std::to_string(bpe.vocab_size()) +
                        " tokens but the model expects " + std::to_string(model.config().vocab_size));
}

int cmd_eval(const std::string& model_path, const std::string& vocab_path, const std::string& test_path,
             const std::string& report_path, std::string kv_path, bool exclude_none, std::size_t batch_size) {
    if (kv_path.empty()) kv_path = report_path + ".kv";
    auto model = model_from_checkpoint<float>(load_checkpoint(model_path));
    const auto bpe = load_bpe(vocab_path);
    check_vocab(model, bpe, vocab_path);
    auto test = read_corpus(test_path, "test");
    if (test.empty()) throw DataError("test set is empty: " + test_path);

    const auto& schemas = model.config().schemas;
    for (const auto& s : build_schemas(test)) {
        auto it = std::find_if(schemas.begin(), schemas.end(), [&](const auto& m) { return m.name == s.name; });
        if (it == schemas.end())
            throw DataError("schema mismatch: test data has category '" + s.name + "' unknown to the model");
        std::size_t unseen = 0;
        for (const auto& l : s.labels) unseen += !it->contains(l);
        if (unseen)
            std::fprintf(stderr, "warning: %zu '%s' label(s) in test data are unknown to the model\n", unseen,
                         s.name.c_str());
    }
    EvalOptions opt;
    opt.none_in_prf = !exclude_none;
    auto report = evaluate_model(model, bpe, test, batch_size, Truncation::keep_first, opt);
    const auto table = format_report_table(report);
    write_atomic(report_path, table);
    write_atomic(kv_path, format_report_kv(report));
    std::fputs(table.c_str(), stdout);
    return kOk;
}

int cmd_tag(const std::string& model_path, const std::string& vocab_path, const std::string& input_path,
            const std::string& out_path, std::string format, std::size_t batch_size) {
    auto model = model_from_checkpoint<float>(load_checkpoint(model_path));
    const auto bpe = load_bpe(vocab_path);
    check_vocab(model, bpe, vocab_path);
    if (!fs::is_regular_file(input_path)) throw UsageError("input file not found: " + input_path);
    const auto text = read_file(input_path);
    if (format == "auto") {
        const auto ext = fs::path(input_path).extension().string();
        format = ext == ".conllu" || ext == ".conll" ? "conllu" : "text";
    }
    std::vector<Sentence> sentences;
    if (format == "conllu") {
        try {
            sentences = parse_conllu(text);
        } catch (const ParseError& e) {
            throw DataError(input_path + ": " + e.what());
        }
    } else {
        sentences = sentences_from_text(text);
    }
    for (std::size_t i = 0; i < sentences.size(); ++i)
        if (sentences[i].id.empty()) sentences[i].id = std::to_string(i + 1);
    auto tagged = tag_sentences(model, bpe, sentences, batch_size);
    write_atomic(out_path, format_conllu(tagged));
    std::fprintf(stderr, "tagged %zu sentences\n", tagged.size());
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Morphological tagger with an open BPE dictionary"};
    app.require_subcommand(1);

    auto* tok = app.add_subcommand("tokenizer-train", "Train the BPE subword vocabulary");
    std::vector<std::string> tok_inputs;
    long threshold = 1000;
    std::optional<std::size_t> max_vocab;
    std::string tok_out;
    tok->add_option("--input", tok_inputs, "CoNLL-U file(s)")->required();
    tok->add_option("--threshold", threshold, "minimum pair count for a merge")->capture_default_str();
    tok->add_option("--max-vocab", max_vocab, "stop once the vocabulary reaches this size");
    tok->add_option("--out", tok_out, "vocab file to write")->required();

    auto* tr = app.add_subcommand("train", "Train a tagger from a key=value config");
    std::string config_path;
    std::map<std::string, std::string> overrides;
    std::optional<std::size_t> stop_after;
    tr->add_option("--config", config_path, "config file")->required();
    for (const auto& key : run_config_keys())
        tr->add_option_function<std::string>(
            "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, "override '" + key + "'");
    tr->add_option("--stop-after", stop_after, "run at most this many epochs in this invocation");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a CoNLL-U file");
    std::string ev_model, ev_vocab, ev_test, ev_report, ev_kv;
    bool exclude_none = false;
    std::size_t ev_batch = 96;
    ev->add_option("--model", ev_model)->required();
    ev->add_option("--vocab", ev_vocab)->required();
    ev->add_option("--test", ev_test)->required();
    ev->add_option("--report", ev_report, "plain-text table")->required();
    ev->add_option("--report-kv", ev_kv, "key=value report (default: <report>.kv)");
    ev->add_flag("--exclude-none", exclude_none, "leave NONE out of macro precision/recall/F1");
    ev->add_option("--batch-size", ev_batch)->capture_default_str();

    auto* tg = app.add_subcommand("tag", "Tag plain text or CoNLL-U");
    std::string tg_model, tg_vocab, tg_input, tg_out, tg_format = "auto";
    std::size_t tg_batch = 96;
    tg->add_option("--model", tg_model)->required();
    tg->add_option("--vocab", tg_vocab)->required();
    tg->add_option("--input", tg_input, "one sentence per line, or .conllu")->required();
    tg->add_option("--out", tg_out, "CoNLL-U output")->required();
    tg->add_option("--format", tg_format)->check(CLI::IsMember({"auto", "text", "conllu"}))->capture_default_str();
    tg->add_option("--batch-size", tg_batch)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*tok) return cmd_tokenizer_train(tok_inputs, threshold, max_vocab, tok_out);
        if (*tr) {
            auto rc = load_run_config(config_path);
            std::map<std::string, std::string> kv(overrides.begin(), overrides.end());
            apply_config(rc, kv);
            return cmd_train(std::move(rc), stop_after);
        }
        if (*ev) {
            if (ev_batch == 0) throw UsageError("--batch-size must be positive");
            return cmd_eval(ev_model, ev_vocab, ev_test, ev_report, ev_kv, exclude_none, ev_batch);
        }
        if (*tg) {
            if (tg_batch == 0) throw UsageError("--batch-size must be positive");
            return cmd_tag(tg_model, tg_vocab, tg_input, tg_out, tg_format, tg_batch);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kData;
    }
    return kUsage;
}
