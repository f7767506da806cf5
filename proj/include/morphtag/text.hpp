#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "morphtag/conllu.hpp"
#include "morphtag/utf8.hpp"

namespace morphtag {

namespace detail {

// ASCII punctuation plus the usual typographic marks in Russian text.
// Hyphens and apostrophes stay inside words ("кто-то", "д'Артаньян").
inline bool is_split_punct(char32_t c) {
    if (c < 0x80) return c != '-' && c != '\'' && c != '_' && std::string_view("!\"#$%&()*+,./:;<=>?@[\\]^`{|}~").find(static_cast<char>(c)) != std::string_view::npos;
    switch (c) {
        case U'«': case U'»': case U'„': case U'“': case U'”': case U'‘': case U'’':
        case U'—': case U'–': case U'…': case U'‹': case U'›': case U'¡': case U'¿':
            return true;
        default:
            return false;
    }
}

inline bool is_space(char32_t c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f' || c == 0xA0 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x202F || c == 0x205F || c == 0x3000;
}

} // namespace detail

// Naive raw-text word splitting: whitespace separates words and every
// punctuation mark becomes its own word.
inline std::vector<std::string> tokenize_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    std::size_t pos = 0;
    while (pos < line.size()) {
        const std::size_t start = pos;
        const char32_t c = utf8::next(line, pos);
        if (detail::is_space(c)) {
            flush();
        } else if (detail::is_split_punct(c)) {
            flush();
            out.emplace_back(line.substr(start, pos - start));
        } else {
            cur.append(line.substr(start, pos - start));
        }
    }
    flush();
    return out;
}

// One sentence per non-blank line.
inline std::vector<Sentence> sentences_from_text(std::string_view text) {
    std::vector<Sentence> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto words = tokenize_line(text.substr(pos, eol - pos));
        pos = eol + 1;
        if (words.empty()) continue;
        Sentence s;
        s.id = std::to_string(out.size() + 1);
        for (auto& w : words) s.words.push_back(Word{std::move(w), {}, {}, {}});
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace morphtag
