#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "morphtag/bpe.hpp"
#include "morphtag/conllu.hpp"
#include "morphtag/model.hpp"
#include "morphtag/rng.hpp"
#include "morphtag/tensor.hpp"

#ifndef MORPHTAG_TEST_DATA
#define MORPHTAG_TEST_DATA "tests/data"
#endif

namespace morphtag::testkit {

inline std::string data_path(const std::string& name) { return std::string(MORPHTAG_TEST_DATA) + "/" + name; }

inline std::vector<Sentence> fixture_corpus() { return read_conllu(data_path("tagged_ru.conllu")); }

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

// Values bounded away from zero, for ops with a kink at 0 (relu).
inline std::vector<double> random_away_from_zero(std::size_t n, std::uint64_t seed) {
    auto v = random_values(n, seed, 0.1, 1.0);
    SplitMix64 rng(seed ^ 0xABCDEF);
    for (auto& x : v)
        if (rng.uniform() < 0.5) x = -x;
    return v;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst;
};

// ||a - n|| / max(||a||, ||n||, 1e-6) per input, where `a` is the analytic
// gradient and `n` the central finite difference with step h. The floor keeps
// inputs whose true gradient is zero (e.g. attention key biases, which shift
// every score in a row equally) from reporting round-off as relative error.
inline GradCheck check_gradients(const std::function<ag::Tensor<double>()>& loss_fn,
                                 std::vector<std::pair<std::string, ag::Tensor<double>>> inputs, double h = 1e-4) {
    for (auto& [name, t] : inputs) t.zero_grad();
    auto loss = loss_fn();
    loss.backward();
    GradCheck out;
    for (auto& [name, t] : inputs) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto data = t.mutable_data();
        double diff2 = 0, a2 = 0, n2 = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = loss_fn().item();
            data[i] = keep - h;
            const double down = loss_fn().item();
            data[i] = keep;
            const double numeric = (up - down) / (2 * h);
            diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
        const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
        if (rel >= out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst = name;
        }
    }
    return out;
}

// Scalar probe of an op's output: sum(out * R) for a fixed random R.
inline ag::Tensor<double> probe(const ag::Tensor<double>& out, std::uint64_t seed = 99) {
    auto r = ag::Tensor<double>::from(out.shape(), random_values(out.numel(), seed));
    return ag::sum_all(ag::mul(out, r));
}

// Small schemas resembling the fixture's categories.
inline std::vector<CategorySchema> toy_schemas() {
    return {make_schema("Case", {"Acc", "Gen", "Nom"}), make_schema("Number", {"Plur", "Sing"}),
            make_schema("upos", {"ADJ", "NOUN", "PUNCT", "VERB"})};
}

inline ModelConfig tiny_config(std::size_t vocab = 64, std::uint64_t seed = 11) {
    ModelConfig c;
    c.d_model = 16;
    c.n_heads_word = 2;
    c.n_heads_sent = 2;
    c.n_layers = 2;
    c.d_ff = 24;
    c.score_hidden = 8;
    c.cls_hidden = 12;
    c.max_words = 32;
    c.vocab_size = vocab;
    c.seed = seed;
    c.schemas = toy_schemas();
    return c;
}

// A hand-built batch: `lengths[b][w]` subtokens per word, random ids.
inline EncodedBatch random_batch(const std::vector<std::vector<std::size_t>>& lengths, std::size_t vocab,
                                 std::uint64_t seed, std::size_t subtokens = kMaxSubtokens,
                                 const std::vector<CategorySchema>& schemas = {}) {
    SplitMix64 rng(seed);
    EncodedBatch b;
    b.batch = lengths.size();
    b.subtokens = subtokens;
    for (const auto& row : lengths) b.words = std::max(b.words, row.size());
    const std::size_t slots = b.batch * b.words;
    b.token_ids.assign(slots * subtokens, kPadId);
    b.subtoken_lengths.assign(slots, 0);
    b.word_mask.assign(slots, 0);
    b.gold.assign(schemas.size(), std::vector<std::int32_t>(slots, ag::kIgnoreIndex));
    for (std::size_t r = 0; r < lengths.size(); ++r) {
        b.sentence_index.push_back(r);
        for (std::size_t w = 0; w < lengths[r].size(); ++w) {
            const std::size_t slot = r * b.words + w;
            b.word_mask[slot] = 1;
            b.subtoken_lengths[slot] = lengths[r][w];
            for (std::size_t s = 0; s < lengths[r][w]; ++s)
                b.token_ids[slot * subtokens + s] = static_cast<TokenId>(2 + rng.below(vocab - 2));
            for (std::size_t c = 0; c < schemas.size(); ++c)
                b.gold[c][slot] = static_cast<std::int32_t>(rng.below(schemas[c].size()));
        }
    }
    return b;
}

} // namespace morphtag::testkit
