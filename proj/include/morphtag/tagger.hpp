#pragma once

#include <string>
#include <vector>

#include "morphtag/bpe.hpp"
#include "morphtag/conllu.hpp"
#include "morphtag/model.hpp"
#include "morphtag/train.hpp"

namespace morphtag {

// Predicts every schema category for every word. Sentences longer than the
// model's max_words are tagged in consecutive chunks so no word is dropped.
// Returns copies of the input sentences whose labels hold the predictions.
template <typename T>
std::vector<Sentence> tag_sentences(const TaggerModel<T>& model, const BpeModel& bpe,
                                    const std::vector<Sentence>& input, std::size_t batch_size = 96,
                                    Truncation trunc = Truncation::keep_first) {
    const auto& cfg = model.config();
    std::vector<Sentence> chunks;
    std::vector<std::pair<std::size_t, std::size_t>> origin;  // (sentence, first word)
    for (std::size_t i = 0; i < input.size(); ++i)
        for (std::size_t w = 0; w < input[i].words.size(); w += cfg.max_words) {
            Sentence c;
            const auto end = std::min(input[i].words.size(), w + cfg.max_words);
            c.words.assign(input[i].words.begin() + static_cast<std::ptrdiff_t>(w),
                           input[i].words.begin() + static_cast<std::ptrdiff_t>(end));
            chunks.push_back(std::move(c));
            origin.emplace_back(i, w);
        }

    std::vector<Sentence> out = input;
    for (auto& s : out)
        for (auto& w : s.words) w.labels.clear();
    if (chunks.empty()) return out;

    WordEncoder enc(bpe, cfg.max_subtokens, trunc);
    auto batches = make_batches(chunks, enc, cfg.schemas, {batch_size, cfg.max_words, std::nullopt});
    auto pred = predict(model, batches, chunks.size());
    for (std::size_t c = 0; c < cfg.schemas.size(); ++c)
        for (std::size_t k = 0; k < chunks.size(); ++k) {
            const auto [si, first] = origin[k];
            for (std::size_t w = 0; w < pred[c][k].size(); ++w)
                out[si].words[first + w].labels[cfg.schemas[c].name] = cfg.schemas[c].labels[pred[c][k][w]];
        }
    return out;
}

} // namespace morphtag
