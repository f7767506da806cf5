#pragma once

// Deliberately naive reference BPE: recounts every adjacent pair over the
// whole corpus on each iteration, no incremental bookkeeping. Shared by the
// unit tests and the acceptance harness.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "morphtag/rng.hpp"

namespace morphtag::testkit {

// `n` tokens over a skewed distribution of short words on a 5-letter
// alphabet, so pair counts span a useful range.
inline std::vector<std::string> synthetic_words(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<std::string> types;
    for (int i = 0; i < 30; ++i) {
        std::string w;
        const std::size_t len = 2 + rng.below(6);
        for (std::size_t j = 0; j < len; ++j) w += static_cast<char>('a' + rng.below(5));
        types.push_back(w);
    }
    std::vector<std::string> out;
    while (out.size() < n) {
        // index ~ min of two uniforms: favours the head of the list
        const auto i = std::min(rng.below(types.size()), rng.below(types.size()));
        out.push_back(types[i]);
    }
    return out;
}

struct OracleRun {
    std::vector<std::pair<std::string, std::string>> merges;
    std::map<std::string, std::vector<std::string>> segmentation;  // per word type
};

inline OracleRun oracle_bpe(const std::vector<std::string>& corpus, long threshold, std::optional<std::size_t> max_vocab) {
    std::map<std::string, long> freq;
    for (const auto& w : corpus) ++freq[w];  // ASCII lowercase input only

    std::map<std::string, std::vector<std::string>> seg;
    std::set<std::string> vocab;
    for (const auto& [w, n] : freq) {
        std::vector<std::string> s;
        for (char c : w) s.emplace_back(1, c);
        vocab.insert(s.begin(), s.end());
        seg[w] = s;
    }

    OracleRun run;
    while (true) {
        if (max_vocab && 2 + vocab.size() >= *max_vocab) break;
        std::map<std::pair<std::string, std::string>, long> counts;
        for (const auto& [w, s] : seg)
            for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] += freq[w];
        if (counts.empty()) break;
        // best = max count, then min concatenation, then min left token
        std::vector<std::tuple<long, std::string, std::string, std::string>> cands;
        for (const auto& [p, c] : counts) cands.emplace_back(-c, p.first + p.second, p.first, p.second);
        std::sort(cands.begin(), cands.end());
        const auto& [neg, concat, left, right] = cands.front();
        if (-neg < threshold) break;
        run.merges.emplace_back(left, right);
        vocab.insert(concat);
        for (auto& [w, s] : seg) {
            std::vector<std::string> out;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
                    out.push_back(concat);
                    ++i;
                } else {
                    out.push_back(s[i]);
                }
            }
            s = out;
        }
    }
    run.segmentation = seg;
    return run;
}

inline std::vector<std::pair<std::string, std::string>> oracle_bpe_merges(const std::vector<std::string>& corpus,
                                                                          long threshold,
                                                                          std::optional<std::size_t> max_vocab) {
    return oracle_bpe(corpus, threshold, max_vocab).merges;
}

inline std::map<std::string, std::vector<std::string>> oracle_segmentations(const std::vector<std::string>& corpus,
                                                                            long threshold,
                                                                            std::optional<std::size_t> max_vocab) {
    return oracle_bpe(corpus, threshold, max_vocab).segmentation;
}

} // namespace morphtag::testkit
