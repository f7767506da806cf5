#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "morphtag/error.hpp"

namespace morphtag {

inline constexpr std::string_view kNoneLabel = "NONE";
inline constexpr std::string_view kUposCategory = "upos";

struct Word {
    std::string surface;
    // category -> label; categories missing here read as NONE
    std::map<std::string, std::string> labels;
    // raw HEAD / DEPREL columns, kept out of the tagging schema
    std::string head;
    std::string deprel;

    const std::string& label(const std::string& category) const {
        static const std::string none(kNoneLabel);
        auto it = labels.find(category);
        return it == labels.end() ? none : it->second;
    }
};

struct Sentence {
    std::string id;
    std::vector<Word> words;
};

struct CategorySchema {
    std::string name;
    std::vector<std::string> labels;  // sorted, contains NONE exactly once
    std::size_t none_index = 0;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t size() const noexcept { return labels.size(); }

    // Index of `label`, or npos for labels the schema has never seen.
    std::size_t index_of(std::string_view label) const {
        auto it = std::lower_bound(labels.begin(), labels.end(), label);
        if (it != labels.end() && *it == label)
            return static_cast<std::size_t>(it - labels.begin());
        return npos;
    }

    bool contains(std::string_view label) const {
        return std::binary_search(labels.begin(), labels.end(), label);
    }

    friend bool operator==(const CategorySchema&, const CategorySchema&) = default;
};

struct CorpusStats {
    std::size_t sentence_count = 0;
    std::size_t word_count = 0;
    double mean_sentence_length = 0.0;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace detail

// Parses UD CoNLL-U text. Multiword-token ranges ("4-5") and empty nodes
// ("5.1") are skipped; FEATS is exploded into one category per feature.
inline std::vector<Sentence> parse_conllu(std::string_view text) {
    std::vector<Sentence> out;
    Sentence current;
    std::size_t line_no = 0;
    std::size_t pos = 0;

    auto flush = [&] {
        if (!current.words.empty()) {
            if (current.id.empty()) current.id = std::to_string(out.size() + 1);
            out.push_back(std::move(current));
        }
        current = Sentence{};
    };

    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (detail::trim(line).empty()) {
            flush();
            continue;
        }
        if (line.front() == '#') {
            auto body = detail::trim(line.substr(1));
            if (body.starts_with("sent_id")) {
                auto eq = body.find('=');
                if (eq != std::string_view::npos)
                    current.id = std::string(detail::trim(body.substr(eq + 1)));
            }
            continue;
        }

        auto cols = detail::split(line, '\t');
        if (cols.size() != 10)
            throw ParseError(line_no, "expected 10 tab-separated columns, got " +
                                          std::to_string(cols.size()));
        std::string_view id = cols[0];
        if (id.empty()) throw ParseError(line_no, "empty ID column");
        if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos)
            continue;
        if (cols[1].empty()) throw ParseError(line_no, "empty FORM column");

        Word w;
        w.surface = std::string(cols[1]);
        if (cols[3] != "_") w.labels.emplace(kUposCategory, cols[3]);
        if (cols[5] != "_") {
            for (auto feat : detail::split(cols[5], '|')) {
                auto eq = feat.find('=');
                if (eq == std::string_view::npos || eq == 0 || eq + 1 == feat.size())
                    throw ParseError(line_no, "malformed feature '" + std::string(feat) + "'");
                w.labels[std::string(feat.substr(0, eq))] = std::string(feat.substr(eq + 1));
            }
        }
        w.head = std::string(cols[6]);
        w.deprel = std::string(cols[7]);
        current.words.push_back(std::move(w));
    }
    flush();
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<Sentence> read_conllu(const std::string& path) {
    try {
        return parse_conllu(read_file(path));
    } catch (const ParseError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline std::vector<CategorySchema> build_schemas(const std::vector<Sentence>& sentences) {
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& s : sentences)
        for (const auto& w : s.words)
            for (const auto& [cat, label] : w.labels) seen[cat].insert(label);

    std::vector<CategorySchema> out;
    out.reserve(seen.size());
    for (auto& [name, labels] : seen) {
        labels.insert(std::string(kNoneLabel));
        CategorySchema schema;
        schema.name = name;
        schema.labels.assign(labels.begin(), labels.end());
        schema.none_index = schema.index_of(kNoneLabel);
        out.push_back(std::move(schema));
    }
    return out;
}

// Makes every schema category explicit on every word (NONE when unset).
inline void normalize(std::vector<Sentence>& sentences, const std::vector<CategorySchema>& schemas) {
    for (auto& s : sentences)
        for (auto& w : s.words)
            for (const auto& schema : schemas)
                w.labels.try_emplace(schema.name, kNoneLabel);
}

inline CorpusStats corpus_stats(const std::vector<Sentence>& sentences) {
    CorpusStats st;
    st.sentence_count = sentences.size();
    for (const auto& s : sentences) st.word_count += s.words.size();
    if (st.sentence_count > 0)
        st.mean_sentence_length = static_cast<double>(st.word_count) / st.sentence_count;
    return st;
}

// One line per schema: `name<TAB>label|label|...`.
inline std::string serialize_schemas(const std::vector<CategorySchema>& schemas) {
    std::string out;
    for (const auto& s : schemas) {
        out += s.name;
        out += '\t';
        for (std::size_t i = 0; i < s.labels.size(); ++i) {
            if (i) out += '|';
            out += s.labels[i];
        }
        out += '\n';
    }
    return out;
}

inline CategorySchema make_schema(std::string name, std::vector<std::string> labels) {
    labels.emplace_back(kNoneLabel);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    CategorySchema s{std::move(name), std::move(labels), 0};
    s.none_index = s.index_of(kNoneLabel);
    return s;
}

// Inverse of serialize_schemas; NONE is added when missing.
inline std::vector<CategorySchema> parse_schemas(std::string_view text) {
    std::vector<CategorySchema> out;
    std::size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0) throw ParseError(lineno, "expected 'name<TAB>labels'");
        std::vector<std::string> labels;
        for (const auto& l : detail::split(line.substr(tab + 1), '|'))
            if (!l.empty()) labels.emplace_back(l);
        out.push_back(make_schema(std::string(line.substr(0, tab)), std::move(labels)));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].name == out[i - 1].name) throw DataError("duplicate schema '" + out[i].name + "'");
    return out;
}

// Writes FORM, UPOS and FEATS (non-NONE labels, sorted by name); other
// columns are "_" and HEAD/DEPREL are left unspecified.
inline std::string format_conllu(const std::vector<Sentence>& sentences) {
    std::string out;
    for (const auto& s : sentences) {
        out += "# sent_id = " + s.id + "\n";
        for (std::size_t i = 0; i < s.words.size(); ++i) {
            const auto& w = s.words[i];
            std::string upos = "_";
            std::string feats;
            for (const auto& [cat, label] : w.labels) {
                if (label == kNoneLabel) continue;
                if (cat == kUposCategory) {
                    upos = label;
                    continue;
                }
                if (!feats.empty()) feats += '|';
                feats += cat + "=" + label;
            }
            if (feats.empty()) feats = "_";
            out += std::to_string(i + 1) + "\t" + w.surface + "\t_\t" + upos + "\t_\t" + feats +
                   "\t_\t_\t_\t_\n";
        }
        out += "\n";
    }
    return out;
}

} // namespace morphtag
