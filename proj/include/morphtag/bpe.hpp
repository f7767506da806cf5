#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "morphtag/conllu.hpp"
#include "morphtag/error.hpp"
#include "morphtag/fileio.hpp"
#include "morphtag/utf8.hpp"

namespace morphtag {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::size_t kMaxSubtokens = 6;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kUnkGlyph = "\xEF\xBF\xBD";  // U+FFFD

enum class Truncation { keep_first, keep_last };

// Character-level BPE restricted to the inside of words. Ids 0 and 1 are
// PAD and UNK; the remaining ids are the alphabet (sorted) followed by
// merged tokens in merge order.
class BpeModel {
public:
    using Merge = std::pair<std::string, std::string>;

    BpeModel() { reset_specials(); }

    std::size_t vocab_size() const noexcept { return tokens_.size(); }
    const std::vector<Merge>& merges() const noexcept { return merges_; }
    long merge_threshold() const noexcept { return threshold_; }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    std::optional<TokenId> id_of(std::string_view token) const {
        auto it = ids_.find(std::string(token));
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    // Rank of the merge (left, right) in training order.
    std::optional<std::size_t> merge_rank(const std::string& left, const std::string& right) const {
        auto it = ranks_.find(left + '\t' + right);
        if (it == ranks_.end()) return std::nullopt;
        return it->second;
    }

    // Adds a token unless already present; returns its id.
    TokenId add_token(const std::string& tok) {
        if (auto id = id_of(tok)) return *id;
        auto id = static_cast<TokenId>(tokens_.size());
        tokens_.push_back(tok);
        ids_.emplace(tok, id);
        return id;
    }

    void add_merge(const std::string& left, const std::string& right) {
        ranks_.emplace(left + '\t' + right, merges_.size());
        merges_.emplace_back(left, right);
        add_token(left + right);
    }

    void set_threshold(long t) noexcept { threshold_ = t; }

private:
    void reset_specials() {
        tokens_ = {std::string(kPadToken), std::string(kUnkToken)};
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;  // excludes the specials
    std::vector<Merge> merges_;
    std::unordered_map<std::string, std::size_t> ranks_;
    long threshold_ = 1;
};

struct WordEncoding {
    std::vector<TokenId> ids;  // padded to max_subtokens with PAD
    std::size_t true_length = 0;
};

namespace detail {

// Left-to-right, non-overlapping replacement of (a, b) by ab.
inline bool merge_pair(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
    bool changed = false;
    std::vector<std::string> out;
    out.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
            out.push_back(a + b);
            ++i;
            changed = true;
        } else {
            out.push_back(std::move(symbols[i]));
        }
    }
    symbols = std::move(out);
    return changed;
}

} // namespace detail

struct BpeTrainOptions {
    long merge_threshold = 1000;
    std::optional<std::size_t> max_vocab;
};

// Word forms are lowercased; pair counts are weighted by word frequency.
// Merging continues while the best pair occurs at least merge_threshold
// times and the vocabulary is below max_vocab. Equal counts are resolved by
// the lexicographically smaller concatenation, then the smaller left token.
inline BpeModel train_bpe(const std::vector<std::string>& word_forms, const BpeTrainOptions& opt) {
    if (opt.merge_threshold < 1) throw UsageError("merge threshold must be >= 1");
    if (word_forms.empty()) throw DataError("cannot train BPE on an empty corpus");

    std::map<std::string, long> freq;
    for (const auto& w : word_forms) ++freq[utf8::lower(w)];

    BpeModel model;
    model.set_threshold(opt.merge_threshold);

    std::set<std::string> alphabet;
    std::vector<std::vector<std::string>> words;
    std::vector<long> counts;
    words.reserve(freq.size());
    for (const auto& [w, n] : freq) {
        auto cs = utf8::chars(w);
        alphabet.insert(cs.begin(), cs.end());
        words.push_back(std::move(cs));
        counts.push_back(n);
    }
    for (const auto& c : alphabet) model.add_token(c);

    using Pair = std::pair<std::string, std::string>;
    std::map<Pair, long> pair_count;
    std::map<Pair, std::unordered_set<std::size_t>> where;

    auto account = [&](std::size_t wi, long sign) {
        const auto& sym = words[wi];
        for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
            Pair p{sym[i], sym[i + 1]};
            auto& c = pair_count[p];
            c += sign * counts[wi];
            if (sign > 0) where[p].insert(wi);
            if (c == 0) pair_count.erase(p);
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

    while (!pair_count.empty()) {
        if (opt.max_vocab && model.vocab_size() >= *opt.max_vocab) break;

        const Pair* best = nullptr;
        long best_count = 0;
        std::string best_concat;
        for (const auto& [p, c] : pair_count) {
            if (c < best_count) continue;
            std::string concat = p.first + p.second;
            if (c > best_count || concat < best_concat ||
                (concat == best_concat && p.first < best->first)) {
                best = &p;
                best_count = c;
                best_concat = std::move(concat);
            }
        }
        if (best_count < opt.merge_threshold) break;

        const Pair merged = *best;
        model.add_merge(merged.first, merged.second);

        auto affected = std::move(where[merged]);
        where.erase(merged);
        std::vector<std::size_t> order(affected.begin(), affected.end());
        std::sort(order.begin(), order.end());
        for (auto wi : order) {
            if (std::find(words[wi].begin(), words[wi].end(), merged.first) == words[wi].end()) continue;
            account(wi, -1);
            detail::merge_pair(words[wi], merged.first, merged.second);
            account(wi, +1);
        }
    }
    return model;
}

inline BpeModel train_bpe(const std::vector<Sentence>& corpus, const BpeTrainOptions& opt) {
    std::vector<std::string> forms;
    for (const auto& s : corpus)
        for (const auto& w : s.words) forms.push_back(w.surface);
    return train_bpe(forms, opt);
}

// Token strings of a lowercased word after applying merges in training
// order. Characters outside the alphabet stay as single-character symbols.
inline std::vector<std::string> segment(const BpeModel& model, std::string_view word) {
    auto symbols = utf8::chars(utf8::lower(word));
    std::optional<std::size_t> last;
    while (symbols.size() > 1) {
        std::optional<std::size_t> next;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto r = model.merge_rank(symbols[i], symbols[i + 1]);
            if (!r || (last && *r <= *last)) continue;
            if (!next || *r < *next) next = r;
        }
        if (!next) break;
        const auto& m = model.merges()[*next];
        detail::merge_pair(symbols, m.first, m.second);
        last = next;
    }
    return symbols;
}

inline WordEncoding encode_word(const BpeModel& model, std::string_view word,
                                std::size_t max_subtokens = kMaxSubtokens,
                                Truncation trunc = Truncation::keep_first) {
    if (word.empty()) throw DataError("cannot encode an empty word");
    auto symbols = segment(model, word);
    std::vector<TokenId> ids;
    ids.reserve(symbols.size());
    for (const auto& s : symbols) ids.push_back(model.id_of(s).value_or(kUnkId));

    WordEncoding enc;
    enc.true_length = std::min(ids.size(), max_subtokens);
    const std::size_t offset = trunc == Truncation::keep_first ? 0 : ids.size() - enc.true_length;
    enc.ids.assign(max_subtokens, kPadId);
    std::copy_n(ids.begin() + static_cast<std::ptrdiff_t>(offset), enc.true_length, enc.ids.begin());
    return enc;
}

inline std::string decode(const BpeModel& model, const std::vector<TokenId>& ids) {
    std::string out;
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size())
            throw DataError("token id " + std::to_string(id) + " out of range");
        if (id == kPadId) continue;
        if (id == kUnkId) {
            out += kUnkGlyph;
            continue;
        }
        out += model.token(id);
    }
    return out;
}

inline std::string serialize_bpe(const BpeModel& model) {
    std::string out = "BPE v1 threshold=" + std::to_string(model.merge_threshold()) + "\n";
    for (std::size_t i = 0; i < model.vocab_size(); ++i)
        out += std::to_string(i) + "\t" + model.token(static_cast<TokenId>(i)) + "\n";
    out += "#MERGES\n";
    for (const auto& [l, r] : model.merges()) out += l + "\t" + r + "\n";
    return out;
}

inline BpeModel parse_bpe(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError("vocab file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string magic = "BPE v1 threshold=";
    if (!line.starts_with("BPE ")) throw ParseError(line_no, "not a BPE vocab file");
    if (!line.starts_with(magic)) throw ParseError(line_no, "unsupported vocab version: " + line);
    BpeModel model;
    try {
        model.set_threshold(std::stol(line.substr(magic.size())));
    } catch (const std::exception&) {
        throw ParseError(line_no, "bad threshold in header");
    }

    std::vector<std::pair<std::string, std::string>> merges;
    std::vector<std::string> tokens;
    bool in_merges = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!in_merges && line == "#MERGES") {
            in_merges = true;
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(line_no, "expected a tab-separated entry");
        if (in_merges) {
            merges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
            continue;
        }
        std::size_t id = 0;
        try {
            id = std::stoul(line.substr(0, tab));
        } catch (const std::exception&) {
            throw ParseError(line_no, "bad token id");
        }
        if (id != tokens.size()) throw ParseError(line_no, "token ids must be contiguous from 0");
        tokens.push_back(line.substr(tab + 1));
    }
    if (!in_merges) throw DataError("vocab file has no #MERGES section");
    if (tokens.size() < 2) throw DataError("vocab file lacks the PAD/UNK entries");

    // Single code points form the alphabet; merges re-derive the rest in order.
    for (std::size_t i = 2; i < tokens.size(); ++i)
        if (utf8::decode(tokens[i]).size() == 1) model.add_token(tokens[i]);
    for (const auto& [l, r] : merges) {
        if (!model.id_of(l) || !model.id_of(r))
            throw DataError("merge '" + l + "' + '" + r + "' references an unknown token");
        model.add_merge(l, r);
    }
    if (model.vocab_size() != tokens.size()) throw DataError("vocab and merge list disagree");
    for (std::size_t i = 2; i < tokens.size(); ++i)
        if (model.token(static_cast<TokenId>(i)) != tokens[i])
            throw DataError("vocab order does not match merge order at id " + std::to_string(i));
    return model;
}

inline BpeModel load_bpe(const std::string& path) { return parse_bpe(read_file(path)); }

inline void save_bpe(const BpeModel& model, const std::string& path) {
    write_atomic(path, serialize_bpe(model));
}

} // namespace morphtag
