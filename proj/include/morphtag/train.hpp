#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "morphtag/bpe.hpp"
#include "morphtag/conllu.hpp"
#include "morphtag/error.hpp"
#include "morphtag/eval.hpp"
#include "morphtag/model.hpp"
#include "morphtag/rng.hpp"

namespace morphtag {

struct LrStage {
    std::size_t epochs = 0;
    double rate = 0.0;
};

struct TrainConfig {
    std::size_t batch_size = 96;
    std::size_t epochs = 35;
    std::vector<LrStage> lr_stages = {{15, 1e-4}, {10, 5e-5}, {10, 1e-5}};
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 20240601;
    std::size_t max_words = 256;
    Truncation truncation = Truncation::keep_first;

    void validate() const {
        auto fail = [](const std::string& m) { throw UsageError("train config: " + m); };
        if (batch_size == 0) fail("batch_size must be positive");
        if (epochs == 0) fail("epochs must be positive");
        if (max_words == 0) fail("max_words must be positive");
        std::size_t total = 0;
        for (const auto& s : lr_stages) {
            if (!(s.rate > 0.0)) fail("learning rates must be positive");
            total += s.epochs;
        }
        if (total != epochs)
            fail("lr stages cover " + std::to_string(total) + " epochs but epochs = " + std::to_string(epochs));
        if (weight_decay < 0.0) fail("weight_decay must be non-negative");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
        if (!(eps > 0.0)) fail("eps must be positive");
    }
};

// Piecewise-constant learning rate; `epoch` is zero-based.
inline double lr_for_epoch(const TrainConfig& cfg, std::size_t epoch) {
    if (epoch >= cfg.epochs)
        throw UsageError("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(cfg.epochs));
    std::size_t start = 0;
    for (const auto& s : cfg.lr_stages) {
        if (epoch < start + s.epochs) return s.rate;
        start += s.epochs;
    }
    throw UsageError("lr schedule does not cover epoch " + std::to_string(epoch));
}

// Caches BPE encodings per surface form; one instance per thread.
class WordEncoder {
public:
    WordEncoder(const BpeModel& bpe, std::size_t max_subtokens, Truncation trunc)
      : bpe_(bpe), max_subtokens_(max_subtokens), trunc_(trunc) {}

    const WordEncoding& operator()(const std::string& word) {
        auto it = cache_.find(word);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(word, encode_word(bpe_, word, max_subtokens_, trunc_)).first->second;
    }

    std::size_t max_subtokens() const noexcept { return max_subtokens_; }

private:
    const BpeModel& bpe_;
    std::size_t max_subtokens_;
    Truncation trunc_;
    std::unordered_map<std::string, WordEncoding> cache_;
};

struct BatchOptions {
    std::size_t batch_size = 96;
    std::size_t max_words = 256;
    std::optional<std::uint64_t> shuffle_seed;  // keep corpus order when unset
};

// Groups sentences (shuffled when a seed is given) into padded batches.
// Sentences longer than max_words are truncated. Gold indices are the
// schema index of each word's label (NONE when absent); padding slots and
// labels outside the schema carry ag::kIgnoreIndex.
inline std::vector<EncodedBatch> make_batches(const std::vector<Sentence>& sentences, WordEncoder& encoder,
                                              const std::vector<CategorySchema>& schemas, const BatchOptions& opt) {
    if (opt.batch_size == 0) throw UsageError("batch_size must be positive");
    std::vector<std::size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (opt.shuffle_seed) shuffle(order, *opt.shuffle_seed);

    const std::size_t s = encoder.max_subtokens();
    std::vector<EncodedBatch> out;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
        const std::size_t end = std::min(order.size(), start + opt.batch_size);
        EncodedBatch b;
        b.batch = end - start;
        b.subtokens = s;
        for (std::size_t i = start; i < end; ++i)
            b.words = std::max(b.words, std::min(sentences[order[i]].words.size(), opt.max_words));
        const std::size_t slots = b.batch * b.words;
        b.token_ids.assign(slots * s, kPadId);
        b.subtoken_lengths.assign(slots, 0);
        b.word_mask.assign(slots, 0);
        b.gold.assign(schemas.size(), std::vector<std::int32_t>(slots, ag::kIgnoreIndex));
        for (std::size_t i = start; i < end; ++i) {
            const auto& sent = sentences[order[i]];
            b.sentence_index.push_back(order[i]);
            const std::size_t row = i - start;
            const std::size_t n = std::min(sent.words.size(), opt.max_words);
            for (std::size_t w = 0; w < n; ++w) {
                const std::size_t slot = row * b.words + w;
                const auto& enc = encoder(sent.words[w].surface);
                std::copy(enc.ids.begin(), enc.ids.end(), b.token_ids.begin() + static_cast<std::ptrdiff_t>(slot * s));
                b.subtoken_lengths[slot] = enc.true_length;
                b.word_mask[slot] = 1;
                for (std::size_t c = 0; c < schemas.size(); ++c) {
                    const auto idx = schemas[c].index_of(sent.words[w].label(schemas[c].name));
                    if (idx != CategorySchema::npos) b.gold[c][slot] = static_cast<std::int32_t>(idx);
                }
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

// Mean over categories of the mean cross-entropy over real words.
// Categories with no scorable word in the batch are skipped.
template <typename T>
Tensor<T> multi_head_loss(const std::vector<Tensor<T>>& logits, const EncodedBatch& batch) {
    if (logits.size() != batch.gold.size())
        throw ShapeError("multi_head_loss: " + std::to_string(logits.size()) + " heads for " +
                         std::to_string(batch.gold.size()) + " gold categories");
    if (batch.real_words() == 0) throw DataError("multi_head_loss: batch has no real words");
    std::vector<Tensor<T>> parts;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        const auto& g = batch.gold[c];
        if (std::all_of(g.begin(), g.end(), [](auto v) { return v == ag::kIgnoreIndex; })) continue;
        const std::size_t classes = logits[c].dim(-1);
        parts.push_back(ag::cross_entropy(ag::reshape(logits[c], {logits[c].numel() / classes, classes}), g));
    }
    if (parts.empty()) throw DataError("multi_head_loss: no category has a scorable word");
    Tensor<T> total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) total = ag::add(total, parts[i]);
    return ag::scale(total, T(1) / static_cast<T>(parts.size()));
}

struct AdamWParams {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moments for one parameter tensor.
template <typename T>
struct MomentBuffers {
    std::vector<T> m, v;
};

// One AdamW update of `param` in place at 1-based step `step`:
//   p <- p - lr*lambda*p               (decoupled decay)
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void adamw_step(std::span<T> param, std::span<const T> grad, MomentBuffers<T>& state, std::size_t step,
                const AdamWParams& hp) {
    if (grad.size() != param.size()) throw ShapeError("adamw_step: gradient/parameter size mismatch");
    if (state.m.size() != param.size()) state.m.assign(param.size(), T(0));
    if (state.v.size() != param.size()) state.v.assign(param.size(), T(0));
    for (auto g : grad)
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("adamw_step: non-finite gradient");
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
    const T decay = static_cast<T>(1.0 - hp.lr * hp.weight_decay);
    const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
    for (std::size_t i = 0; i < param.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (T(1) - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (T(1) - b2) * grad[i] * grad[i];
        const double mhat = static_cast<double>(state.m[i]) / bc1;
        const double vhat = static_cast<double>(state.v[i]) / bc2;
        param[i] *= decay;
        param[i] -= static_cast<T>(hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
}

template <typename T>
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(std::size_t n_params) : moments_(n_params) {}

    std::size_t step_count() const noexcept { return step_; }
    const std::vector<MomentBuffers<T>>& moments() const noexcept { return moments_; }

    // Applies one update to every parameter of `model` using its gradients.
    void step(TaggerModel<T>& model, const AdamWParams& hp) {
        auto& params = model.parameters();
        if (moments_.size() != params.size()) moments_.resize(params.size());
        for (const auto& [name, t] : params)
            for (auto g : t.grad())
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericError("non-finite gradient in '" + name + "'");
        ++step_;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto t = params[i].second;
            std::vector<T> zeros;
            std::span<const T> g = t.grad();
            if (!t.has_grad()) {
                zeros.assign(t.numel(), T(0));
                g = zeros;
            }
            adamw_step<T>(t.mutable_data(), g, moments_[i], step_, hp);
        }
    }

    void restore(std::size_t step, std::vector<MomentBuffers<T>> moments) {
        step_ = step;
        moments_ = std::move(moments);
    }

private:
    std::vector<MomentBuffers<T>> moments_;
    std::size_t step_ = 0;
};

// Argmax per word (ties to the lowest index) over every real word of every
// batch, re-assembled into corpus order: result[category][sentence][word].
template <typename T>
std::vector<LabelGrid> predict(const TaggerModel<T>& model, const std::vector<EncodedBatch>& batches,
                               std::size_t sentence_count) {
    const auto& schemas = model.config().schemas;
    std::vector<LabelGrid> out(schemas.size(), LabelGrid(sentence_count));
    for (const auto& b : batches) {
        auto logits = model.forward(b);
        for (std::size_t c = 0; c < schemas.size(); ++c) {
            const std::size_t k = schemas[c].size();
            const auto data = logits[c].data();
            for (std::size_t row = 0; row < b.batch; ++row) {
                auto& dst = out[c][b.sentence_index[row]];
                dst.clear();
                for (std::size_t w = 0; w < b.words; ++w) {
                    const std::size_t slot = row * b.words + w;
                    if (!b.word_mask[slot]) continue;
                    const T* z = data.data() + slot * k;
                    dst.push_back(static_cast<std::size_t>(std::max_element(z, z + k) - z));
                }
            }
        }
    }
    return out;
}

// Pairs predictions with gold labels; gold sentences are cut to max_words
// to match what the model saw.
inline std::vector<CategoryLabels> align_predictions(const std::vector<LabelGrid>& pred,
                                                     const std::vector<Sentence>& gold,
                                                     const std::vector<CategorySchema>& schemas,
                                                     std::size_t max_words) {
    std::vector<CategoryLabels> out;
    for (std::size_t c = 0; c < schemas.size(); ++c) {
        CategoryLabels cl;
        cl.name = schemas[c].name;
        cl.none_index = schemas[c].none_index;
        cl.pred = pred[c];
        cl.gold = gold_labels(gold, schemas[c]);
        for (auto& row : cl.gold)
            if (row.size() > max_words) row.resize(max_words);
        out.push_back(std::move(cl));
    }
    return out;
}

template <typename T>
MetricsReport evaluate_model(const TaggerModel<T>& model, const BpeModel& bpe, const std::vector<Sentence>& corpus,
                             std::size_t batch_size, Truncation trunc = Truncation::keep_first,
                             const EvalOptions& opt = {}) {
    WordEncoder enc(bpe, model.config().max_subtokens, trunc);
    BatchOptions bo{batch_size, model.config().max_words, std::nullopt};
    auto batches = make_batches(corpus, enc, model.config().schemas, bo);
    auto pred = predict(model, batches, corpus.size());
    return evaluate(align_predictions(pred, corpus, model.config().schemas, model.config().max_words), opt);
}

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
    double seconds = 0.0;

    // `epoch<TAB>lr<TAB>train_loss<TAB>dev_acc`
    std::string line() const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu\t%.6g\t%.6f\t%.6f", epoch, lr, train_loss, dev_accuracy);
        return buf;
    }
};

// Everything needed to continue a run bit-for-bit.
struct TrainState {
    std::size_t epochs_done = 0;
    double best_dev = -1.0;
    std::vector<NamedArray> best_parameters;
    AdamW<float> optimizer;
};

struct TrainHooks {
    std::function<void(const EpochLog&)> on_epoch;
    // Called after each epoch with the model and full resumable state.
    std::function<void(const TaggerModel<float>&, const TrainState&)> on_state;
    // Called when dev accuracy improves.
    std::function<void(const TaggerModel<float>&, const EpochLog&)> on_best;
    // Stop after this many epochs in this call (for interrupted-run tests).
    std::optional<std::size_t> stop_after;
};

struct TrainResult {
    std::vector<EpochLog> log;
    TrainState state;
};

// Per epoch: shuffled batches -> forward -> loss -> backward -> AdamW, then
// dev all-category word accuracy; the best-on-dev parameters are kept.
inline TrainResult train_loop(TaggerModel<float>& model, const BpeModel& bpe, const std::vector<Sentence>& train,
                              const std::vector<Sentence>& dev, const TrainConfig& cfg, TrainState state = {},
                              const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train.empty()) throw DataError("training set is empty");
    if (dev.empty()) throw DataError("dev set is empty");
    if (model.config().max_words != cfg.max_words)
        throw UsageError("model max_words differs from training max_words");

    WordEncoder enc(bpe, model.config().max_subtokens, cfg.truncation);
    BatchOptions dev_opt{cfg.batch_size, cfg.max_words, std::nullopt};
    const auto dev_batches = make_batches(dev, enc, model.config().schemas, dev_opt);

    TrainResult result;
    std::size_t ran = 0;
    for (std::size_t epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        if (hooks.stop_after && ran == *hooks.stop_after) break;
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_for_epoch(cfg, epoch);
        const AdamWParams hp{lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps};
        BatchOptions opt{cfg.batch_size, cfg.max_words, derive_seed(cfg.seed, 1000 + epoch)};
        auto batches = make_batches(train, enc, model.config().schemas, opt);

        double loss_sum = 0.0;
        std::size_t bi = 0;
        for (const auto& b : batches) {
            SplitMix64 drop_rng(derive_seed(cfg.seed, (epoch << 32) + bi++));
            model.zero_grad();
            auto logits = model.forward(b, model.config().dropout > 0 ? &drop_rng : nullptr);
            auto loss = multi_head_loss(logits, b);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(bi));
            loss.backward();
            state.optimizer.step(model, hp);
            loss_sum += lv;
        }

        auto pred = predict(model, dev_batches, dev.size());
        auto cats = align_predictions(pred, dev, model.config().schemas, cfg.max_words);
        const double dev_acc = joint_accuracies(cats).word_full;

        EpochLog log{epoch + 1, lr, loss_sum / static_cast<double>(batches.size()), dev_acc,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
        result.log.push_back(log);
        state.epochs_done = epoch + 1;
        if (dev_acc > state.best_dev) {
            state.best_dev = dev_acc;
            state.best_parameters = model.export_parameters();
            if (hooks.on_best) hooks.on_best(model, log);
        }
        if (hooks.on_epoch) hooks.on_epoch(log);
        if (hooks.on_state) hooks.on_state(model, state);
        ++ran;
    }
    result.state = std::move(state);
    return result;
}

// Training checkpoint: model parameters plus optimizer moments, the
// best-on-dev parameters and the epoch counter.
inline Checkpoint make_training_checkpoint(const TaggerModel<float>& model, const TrainState& state) {
    Checkpoint ck = make_checkpoint(model);
    ck.extra["train.epochs_done"] = std::to_string(state.epochs_done);
    ck.extra["train.best_dev"] = detail::format_real(state.best_dev);
    ck.extra["adam.step"] = std::to_string(state.optimizer.step_count());
    const auto& params = model.parameters();
    const auto& moments = state.optimizer.moments();
    for (std::size_t i = 0; i < params.size() && i < moments.size(); ++i) {
        const auto& shape = params[i].second.shape();
        const auto& mb = moments[i];
        if (mb.m.empty()) continue;
        ck.arrays.push_back({"adam.m." + params[i].first, shape, mb.m});
        ck.arrays.push_back({"adam.v." + params[i].first, shape, mb.v});
    }
    for (const auto& a : state.best_parameters) ck.arrays.push_back({"best." + a.name, a.shape, a.data});
    return ck;
}

inline TrainState restore_training_state(const Checkpoint& ck, const TaggerModel<float>& model) {
    TrainState st;
    auto get = [&](const std::string& k) -> std::string {
        auto it = ck.extra.find(k);
        if (it == ck.extra.end()) throw DataError("checkpoint is not resumable: missing '" + k + "'");
        return it->second;
    };
    st.epochs_done = std::stoull(get("train.epochs_done"));
    st.best_dev = std::stod(get("train.best_dev"));
    const std::size_t step = std::stoull(get("adam.step"));
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& a : ck.arrays) by_name[a.name] = &a;
    std::vector<MomentBuffers<float>> moments;
    for (const auto& [name, t] : model.parameters()) {
        MomentBuffers<float> mb;
        auto m = by_name.find("adam.m." + name);
        auto v = by_name.find("adam.v." + name);
        if (m != by_name.end() && v != by_name.end()) {
            mb.m = m->second->data;
            mb.v = v->second->data;
        }
        moments.push_back(std::move(mb));
        auto b = by_name.find("best." + name);
        if (b != by_name.end()) st.best_parameters.push_back({name, b->second->shape, b->second->data});
    }
    st.optimizer.restore(step, std::move(moments));
    return st;
}

} // namespace morphtag
