#pragma once

#include <charconv>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "morphtag/conllu.hpp"
#include "morphtag/error.hpp"
#include "morphtag/model.hpp"
#include "morphtag/train.hpp"

namespace morphtag {

// Everything a `train` run needs: model + optimizer settings and paths.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string train_path, dev_path, test_path;
    std::string vocab_path;
    std::string checkpoint_path;  // best-on-dev model
    std::string log_path;         // per-epoch log, optional
    std::string report_path;      // optional test report after training
    std::string state_dir;        // per-epoch resumable checkpoints, optional
    std::string resume_path;      // resumable checkpoint to continue from
    std::string schemas_path;     // fixed label inventory; built from train data when empty
    std::size_t expected_vocab = 0;  // checked against the vocab file when non-zero
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
    N out{};
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || v.empty()) throw UsageError("config: bad value for '" + key + "': '" + v + "'");
    return out;
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    if (!v.empty() && v[0] == '-') throw UsageError("config: '" + key + "' must be non-negative");
    return parse_number<std::size_t>(key, v);
}

// "15:1e-4,10:5e-5,10:1e-5"
inline std::vector<LrStage> parse_lr_stages(const std::string& key, const std::string& v) {
    std::vector<LrStage> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        auto comma = v.find(',', pos);
        if (comma == std::string::npos) comma = v.size();
        const auto item = trim_copy(std::string_view(v).substr(pos, comma - pos));
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw UsageError("config: '" + key + "' entries must be epochs:rate");
        out.push_back({parse_size(key, trim_copy(item.substr(0, colon))),
                       parse_number<double>(key, trim_copy(item.substr(colon + 1)))});
        pos = comma + 1;
    }
    return out;
}

inline std::string format_lr_stages(const std::vector<LrStage>& stages) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stages[i].epochs) + ":" + format_real(stages[i].rate);
    }
    return out;
}

} // namespace detail

// Keys accepted in config files and as `--key value` overrides.
inline const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = {
        "train", "dev", "test", "vocab", "checkpoint", "log", "report", "state_dir", "resume", "schemas",
        "vocab_size", "d_model", "n_heads_word", "n_heads_sent", "n_layers", "d_ff", "max_subtokens", "max_words",
        "score_hidden", "cls_hidden", "rope_base", "dropout", "seed",
        "batch_size", "epochs", "lr_stages", "weight_decay", "beta1", "beta2", "eps", "truncation"};
    return keys;
}

inline void set_run_config_value(RunConfig& rc, const std::string& key, const std::string& v) {
    using detail::parse_number;
    using detail::parse_size;
    auto& m = rc.model;
    auto& t = rc.train;
    if (key == "train") rc.train_path = v;
    else if (key == "dev") rc.dev_path = v;
    else if (key == "test") rc.test_path = v;
    else if (key == "vocab") rc.vocab_path = v;
    else if (key == "checkpoint") rc.checkpoint_path = v;
    else if (key == "log") rc.log_path = v;
    else if (key == "report") rc.report_path = v;
    else if (key == "state_dir") rc.state_dir = v;
    else if (key == "resume") rc.resume_path = v;
    else if (key == "schemas") rc.schemas_path = v;
    else if (key == "vocab_size") rc.expected_vocab = parse_size(key, v);
    else if (key == "d_model") m.d_model = parse_size(key, v);
    else if (key == "n_heads_word") m.n_heads_word = parse_size(key, v);
    else if (key == "n_heads_sent") m.n_heads_sent = parse_size(key, v);
    else if (key == "n_layers") m.n_layers = parse_size(key, v);
    else if (key == "d_ff") m.d_ff = parse_size(key, v);
    else if (key == "max_subtokens") m.max_subtokens = parse_size(key, v);
    else if (key == "max_words") m.max_words = t.max_words = parse_size(key, v);
    else if (key == "score_hidden") m.score_hidden = parse_size(key, v);
    else if (key == "cls_hidden") m.cls_hidden = parse_size(key, v);
    else if (key == "rope_base") m.rope_base = parse_number<double>(key, v);
    else if (key == "dropout") m.dropout = parse_number<double>(key, v);
    else if (key == "seed") m.seed = t.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "batch_size") t.batch_size = parse_size(key, v);
    else if (key == "epochs") t.epochs = parse_size(key, v);
    else if (key == "lr_stages") t.lr_stages = detail::parse_lr_stages(key, v);
    else if (key == "weight_decay") t.weight_decay = parse_number<double>(key, v);
    else if (key == "beta1") t.beta1 = parse_number<double>(key, v);
    else if (key == "beta2") t.beta2 = parse_number<double>(key, v);
    else if (key == "eps") t.eps = parse_number<double>(key, v);
    else if (key == "truncation") {
        if (v == "first") t.truncation = Truncation::keep_first;
        else if (v == "last") t.truncation = Truncation::keep_last;
        else throw UsageError("config: truncation must be 'first' or 'last'");
    } else
        throw UsageError("config: unknown key '" + key + "'");
}

// `key = value` lines; `#` starts a comment. Relative paths are taken
// relative to the config file's directory.
inline std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto t = detail::trim_copy(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
        const auto key = detail::trim_copy(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ParseError(lineno, "empty key");
        out[key] = detail::trim_copy(std::string_view(t).substr(eq + 1));
    }
    return out;
}

inline bool is_path_key(const std::string& k) {
    return k == "train" || k == "dev" || k == "test" || k == "vocab" || k == "checkpoint" || k == "log" ||
           k == "report" || k == "state_dir" || k == "resume" || k == "schemas";
}

inline void apply_config(RunConfig& rc, const std::map<std::string, std::string>& kv,
                         const std::filesystem::path& base_dir = {}) {
    for (const auto& [k, v] : kv) {
        std::string value = v;
        if (is_path_key(k) && !value.empty() && !base_dir.empty() && std::filesystem::path(value).is_relative())
            value = (base_dir / value).lexically_normal().string();
        set_run_config_value(rc, k, value);
    }
}

inline RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    std::map<std::string, std::string> kv;
    try {
        kv = parse_config_text(read_file(path));
    } catch (const ParseError& e) {
        throw UsageError(path + ":" + std::to_string(e.line()) + ": " + e.what());
    }
    apply_config(rc, kv, std::filesystem::path(path).parent_path());
    return rc;
}

// Checks every path before any work starts.
inline std::vector<CategorySchema> load_schemas(const std::string& path) {
    try {
        return parse_schemas(read_file(path));
    } catch (const ParseError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void validate_paths(const RunConfig& rc) {
    namespace fs = std::filesystem;
    auto need_file = [](const std::string& what, const std::string& p) {
        if (p.empty()) throw UsageError("config: '" + what + "' is required");
        if (!fs::is_regular_file(p)) throw UsageError("config: " + what + " file not found: " + p);
    };
    auto need_parent = [](const std::string& what, const std::string& p) {
        auto parent = fs::path(p).parent_path();
        if (!parent.empty() && !fs::is_directory(parent))
            throw UsageError("config: directory for " + what + " does not exist: " + parent.string());
    };
    need_file("train", rc.train_path);
    need_file("dev", rc.dev_path);
    need_file("vocab", rc.vocab_path);
    if (!rc.test_path.empty()) need_file("test", rc.test_path);
    if (!rc.resume_path.empty()) need_file("resume", rc.resume_path);
    if (!rc.schemas_path.empty()) need_file("schemas", rc.schemas_path);
    if (rc.checkpoint_path.empty()) throw UsageError("config: 'checkpoint' is required");
    need_parent("checkpoint", rc.checkpoint_path);
    if (!rc.log_path.empty()) need_parent("log", rc.log_path);
    if (!rc.report_path.empty()) {
        need_parent("report", rc.report_path);
        if (rc.test_path.empty()) throw UsageError("config: 'report' needs 'test'");
    }
    if (!rc.state_dir.empty() && !fs::is_directory(rc.state_dir))
        throw UsageError("config: state_dir does not exist: " + rc.state_dir);
}

} // namespace morphtag
