#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "morphtag/bpe.hpp"
#include "morphtag/conllu.hpp"
#include "morphtag/error.hpp"
#include "morphtag/fileio.hpp"
#include "morphtag/rng.hpp"
#include "morphtag/tensor.hpp"

namespace morphtag {

using ag::Shape;
using ag::Tensor;

struct ModelConfig {
    std::size_t d_model = 128;
    std::size_t n_heads_word = 4;
    std::size_t n_heads_sent = 4;
    std::size_t n_layers = 4;
    std::size_t d_ff = 512;
    std::size_t max_subtokens = kMaxSubtokens;
    std::size_t max_words = 256;
    std::size_t vocab_size = 0;
    std::size_t score_hidden = 64;
    std::size_t cls_hidden = 128;
    double rope_base = 10000.0;
    double dropout = 0.0;
    std::uint64_t seed = 20240601;
    std::vector<CategorySchema> schemas;

    void validate() const {
        auto fail = [](const std::string& m) { throw UsageError("model config: " + m); };
        if (d_model == 0 || d_model % 2 != 0) fail("d_model must be positive and even");
        if (n_heads_word == 0 || d_model % n_heads_word != 0) fail("d_model must be divisible by n_heads_word");
        if (n_heads_sent == 0 || d_model % n_heads_sent != 0) fail("d_model must be divisible by n_heads_sent");
        if (d_ff == 0 || score_hidden == 0 || cls_hidden == 0) fail("hidden widths must be positive");
        if (max_subtokens == 0 || max_words == 0) fail("max_subtokens and max_words must be positive");
        if (vocab_size < 2) fail("vocab_size must cover PAD and UNK");
        if (schemas.empty()) fail("at least one category schema is required");
        if (!(rope_base > 1.0)) fail("rope_base must exceed 1");
        if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
    }
};

// Closed-form scalar count of every parameter tensor:
//   V*d                                   token embedding
// + 4(d^2 + d)                            intra-word attention Q, K, V, O
// + d*s + s + s + 1                       token scorer d -> s -> 1
// + L * (4(d^2 + d) + 2*d*f + f + 5d)     encoder blocks (attention, FF, 2 layer norms)
// + sum_c (d*h + h + h*|c| + |c|)         classifier heads d -> h -> |labels|
inline std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    std::size_t n = c.vocab_size * d;
    n += 4 * (d * d + d);
    n += d * c.score_hidden + 2 * c.score_hidden + 1;
    n += c.n_layers * (4 * (d * d + d) + 2 * d * c.d_ff + c.d_ff + 5 * d);
    for (const auto& s : c.schemas) n += d * c.cls_hidden + c.cls_hidden + c.cls_hidden * s.size() + s.size();
    return n;
}

// A batch after BPE encoding. Word slots past a sentence's end are padding:
// their word_mask entry is 0, subtoken_lengths entry 0 and ids all PAD.
struct EncodedBatch {
    std::size_t batch = 0;
    std::size_t words = 0;
    std::size_t subtokens = kMaxSubtokens;
    std::vector<TokenId> token_ids;               // [batch * words * subtokens]
    std::vector<std::size_t> subtoken_lengths;    // [batch * words]
    std::vector<std::uint8_t> word_mask;          // [batch * words]
    std::vector<std::vector<std::int32_t>> gold;  // per category, [batch * words]
    std::vector<std::size_t> sentence_index;      // source position of each row

    std::size_t real_words() const {
        std::size_t n = 0;
        for (auto m : word_mask) n += m;
        return n;
    }
};

template <typename T>
struct Linear {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out]

    Tensor<T> operator()(const Tensor<T>& x) const { return ag::add(ag::matmul(x, weight), bias); }
};

template <typename T>
struct AttentionParams {
    Linear<T> q, k, v, o;
};

template <typename T>
struct EncoderBlock {
    AttentionParams<T> attn;
    Linear<T> ff1, ff2;
    Tensor<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

template <typename T>
struct ClassifierHead {
    Linear<T> hidden, out;
};

inline constexpr double kMaskedScore = -1e9;

// Rotates each (2i, 2i+1) pair of the last axis by p * base^(-2i/d), where p
// is the row's index along axis -2, so positions restart at 0 in every
// leading slice (every word for subtokens, every sentence for words).
template <typename T>
Tensor<T> apply_rope(const Tensor<T>& x, double base) {
    if (x.ndim() < 2) throw ShapeError("apply_rope: need [..., positions, d], got " + ag::to_string(x.shape()));
    const std::size_t d = x.dim(-1), positions = x.dim(-2);
    if (d % 2 != 0) throw ShapeError("apply_rope: odd embedding width " + std::to_string(d));
    const std::size_t slices = x.numel() / (d * positions);
    std::vector<T> cosv(positions * d / 2), sinv(positions * d / 2);
    for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t i = 0; i < d / 2; ++i) {
            const double theta = static_cast<double>(p) * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            cosv[p * d / 2 + i] = static_cast<T>(std::cos(theta));
            sinv[p * d / 2 + i] = static_cast<T>(std::sin(theta));
        }
    std::vector<T> v(x.numel());
    const T* xv = x.data().data();
    for (std::size_t s = 0; s < slices; ++s)
        for (std::size_t p = 0; p < positions; ++p) {
            const std::size_t row = (s * positions + p) * d;
            for (std::size_t i = 0; i < d / 2; ++i) {
                const T c = cosv[p * d / 2 + i], sn = sinv[p * d / 2 + i];
                const T a = xv[row + 2 * i], b = xv[row + 2 * i + 1];
                v[row + 2 * i] = a * c - b * sn;
                v[row + 2 * i + 1] = a * sn + b * c;
            }
        }
    return ag::detail::make_result<T>(x.shape(), std::move(v), {x}, [=](ag::Node<T>& self) {
        auto* gx = ag::detail::grad_of(self, 0);
        for (std::size_t s = 0; s < slices; ++s)
            for (std::size_t p = 0; p < positions; ++p) {
                const std::size_t row = (s * positions + p) * d;
                for (std::size_t i = 0; i < d / 2; ++i) {
                    const T c = cosv[p * d / 2 + i], sn = sinv[p * d / 2 + i];
                    const T ga = self.grad[row + 2 * i], gb = self.grad[row + 2 * i + 1];
                    (*gx)[row + 2 * i] += ga * c + gb * sn;
                    (*gx)[row + 2 * i + 1] += -ga * sn + gb * c;
                }
            }
    });
}

// Key-padding mask expanded to [N, L, L]: entry (n, i, j) is 1 when key j of
// row n is padding.
inline std::vector<std::uint8_t> key_padding_mask(std::span<const std::size_t> lengths, std::size_t len) {
    std::vector<std::uint8_t> m(lengths.size() * len * len, 0);
    for (std::size_t n = 0; n < lengths.size(); ++n)
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = lengths[n]; j < len; ++j) m[(n * len + i) * len + j] = 1;
    return m;
}

// Multi-head scaled dot-product self-attention over x [N, L, d].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, std::size_t heads,
                               std::span<const std::uint8_t> masked, std::vector<Tensor<T>>* weights = nullptr) {
    const std::size_t d = x.dim(-1), dh = d / heads;
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    const auto q = p.q(x), k = p.k(x), v = p.v(x);
    std::vector<Tensor<T>> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto qh = ag::narrow(q, -1, h * dh, dh);
        auto kh = ag::narrow(k, -1, h * dh, dh);
        auto vh = ag::narrow(v, -1, h * dh, dh);
        auto scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
        auto probs = ag::softmax(ag::masked_fill(scores, masked, static_cast<T>(kMaskedScore)), -1);
        if (weights) weights->push_back(probs);
        outs.push_back(ag::matmul(probs, vh));
    }
    return p.o(heads == 1 ? outs[0] : ag::concat(outs, -1));
}

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

template <typename T>
class TaggerModel {
public:
    using value_type = T;

    TaggerModel() = default;

    explicit TaggerModel(ModelConfig config) : config_(std::move(config)) {
        config_.validate();
        build();
        initialize();
    }

    const ModelConfig& config() const noexcept { return config_; }

    // Parameters in the fixed checkpoint order.
    const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const noexcept { return params_; }

    std::size_t enumerate_parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    const Tensor<T>& token_embedding() const { return embedding_; }
    const AttentionParams<T>& word_attention() const { return word_attn_; }
    const Linear<T>& score_hidden() const { return score_hidden_; }
    const Linear<T>& score_out() const { return score_out_; }
    const std::vector<EncoderBlock<T>>& encoder() const { return blocks_; }
    const std::vector<ClassifierHead<T>>& heads() const { return heads_; }
    std::vector<ClassifierHead<T>>& mutable_heads() { return heads_; }

    // [N, S, d] token vectors -> [N, S, d]; every word needs >= 1 real subtoken.
    Tensor<T> intra_word_attention(const Tensor<T>& tokens, std::span<const std::size_t> lengths,
                                   std::vector<Tensor<T>>* weights = nullptr) const {
        check_words(tokens, lengths, "intra_word_attention");
        const auto mask = key_padding_mask(lengths, tokens.dim(-2));
        return multi_head_attention(tokens, word_attn_, config_.n_heads_word, mask, weights);
    }

    // [N, S, d] -> [N, S] softmax weights, exactly 0 on padded subtokens.
    Tensor<T> token_scores(const Tensor<T>& tokens, std::span<const std::size_t> lengths) const {
        check_words(tokens, lengths, "token_scores");
        const std::size_t n = tokens.dim(0), s = tokens.dim(1);
        auto raw = ag::reshape(score_out_(ag::relu(score_hidden_(tokens))), {n, s});
        std::vector<std::uint8_t> pad(n * s, 0);
        for (std::size_t w = 0; w < n; ++w)
            for (std::size_t j = lengths[w]; j < s; ++j) pad[w * s + j] = 1;
        return ag::softmax(ag::masked_fill(raw, pad, static_cast<T>(kMaskedScore)), -1);
    }

    // sum_i weights[i] * tokens[i] per word: [N, S, d] x [N, S] -> [N, d].
    static Tensor<T> aggregate_words(const Tensor<T>& tokens, const Tensor<T>& weights) {
        const std::size_t n = tokens.dim(0), s = tokens.dim(1), d = tokens.dim(2);
        if (weights.shape() != Shape{n, s})
            throw ShapeError("aggregate_words: weights " + ag::to_string(weights.shape()) + " for tokens " +
                             ag::to_string(tokens.shape()));
        return ag::reshape(ag::matmul(ag::reshape(weights, {n, 1, s}), tokens), {n, d});
    }

    // Post-norm transformer encoder over [B, W, d] with a word padding mask.
    Tensor<T> encoder_stack(Tensor<T> x, std::span<const std::uint8_t> word_mask, SplitMix64* rng = nullptr) const {
        if (x.ndim() != 3 || x.dim(-1) != config_.d_model)
            throw ShapeError("encoder_stack: expected [B, W, " + std::to_string(config_.d_model) + "], got " +
                             ag::to_string(x.shape()));
        const std::size_t b = x.dim(0), w = x.dim(1);
        if (word_mask.size() != b * w) throw ShapeError("encoder_stack: word mask does not match " + ag::to_string(x.shape()));
        std::vector<std::uint8_t> masked(b * w * w, 0);
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t j = 0; j < w; ++j) masked[(s * w + i) * w + j] = word_mask[s * w + j] ? 0 : 1;
        const double p = rng ? config_.dropout : 0.0;
        for (const auto& blk : blocks_) {
            auto a = multi_head_attention(x, blk.attn, config_.n_heads_sent, masked);
            if (p > 0) a = ag::dropout(a, p, *rng);
            x = ag::layer_norm(ag::add(x, a), blk.ln1_gain, blk.ln1_bias);
            auto f = blk.ff2(ag::relu(blk.ff1(x)));
            if (p > 0) f = ag::dropout(f, p, *rng);
            x = ag::layer_norm(ag::add(x, f), blk.ln2_gain, blk.ln2_bias);
        }
        return x;
    }

    // One [.., |labels|] logit tensor per schema, in schema order.
    std::vector<Tensor<T>> classify(const Tensor<T>& words) const {
        std::vector<Tensor<T>> out;
        out.reserve(heads_.size());
        for (const auto& h : heads_) out.push_back(h.out(ag::relu(h.hidden(words))));
        return out;
    }

    struct Trace {
        Tensor<T> token_weights;  // [B*W, S]
        Tensor<T> word_vectors;   // [B*W, d], before word-level RoPE
    };

    // Full pipeline: embed -> token RoPE -> intra-word attention -> scores ->
    // weighted aggregation -> word RoPE -> encoder -> classifier heads.
    // Pass an rng to enable dropout (training only).
    std::vector<Tensor<T>> forward(const EncodedBatch& batch, SplitMix64* rng = nullptr, Trace* trace = nullptr) const {
        const std::size_t b = batch.batch, w = batch.words, s = batch.subtokens, d = config_.d_model;
        if (s != config_.max_subtokens)
            throw ShapeError("forward: batch has " + std::to_string(s) + " subtokens per word, model expects " +
                             std::to_string(config_.max_subtokens));
        if (batch.token_ids.size() != b * w * s || batch.subtoken_lengths.size() != b * w || batch.word_mask.size() != b * w)
            throw ShapeError("forward: inconsistent batch buffers");
        for (auto id : batch.token_ids)
            if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size)
                throw DataError("forward: token id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(config_.vocab_size));

        // Padding word slots see only their first (PAD) subtoken; they are
        // excluded again at word level by the encoder mask and the loss.
        std::vector<std::size_t> lengths(batch.subtoken_lengths);
        for (std::size_t i = 0; i < lengths.size(); ++i) {
            if (lengths[i] == 0 && batch.word_mask[i]) throw DataError("forward: real word without subtokens");
            lengths[i] = std::max<std::size_t>(lengths[i], 1);
        }

        auto tokens = ag::embedding_lookup(embedding_, batch.token_ids, {b * w, s});
        tokens = apply_rope(tokens, config_.rope_base);
        tokens = intra_word_attention(tokens, lengths);
        auto weights = token_scores(tokens, lengths);
        auto words = aggregate_words(tokens, weights);
        if (trace) *trace = Trace{weights, words};
        auto sent = apply_rope(ag::reshape(words, {b, w, d}), config_.rope_base);
        sent = encoder_stack(sent, batch.word_mask, rng);
        return classify(sent);
    }

    template <typename U>
    TaggerModel<U> cast() const {
        TaggerModel<U> out;
        out.config_ = config_;
        out.build();
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto src = params_[i].second.data();
            auto dst = out.params_[i].second.mutable_data();
            std::transform(src.begin(), src.end(), dst.begin(), [](T v) { return static_cast<U>(v); });
        }
        return out;
    }

    std::vector<NamedArray> export_parameters() const {
        std::vector<NamedArray> out;
        for (const auto& [name, t] : params_)
            out.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
        return out;
    }

    void import_parameters(const std::vector<NamedArray>& arrays) {
        std::map<std::string, const NamedArray*> by_name;
        for (const auto& a : arrays) by_name[a.name] = &a;
        for (auto& [name, t] : params_) {
            auto it = by_name.find(name);
            if (it == by_name.end()) throw DataError("checkpoint lacks parameter '" + name + "'");
            if (it->second->shape != t.shape())
                throw DataError("checkpoint parameter '" + name + "' has shape " + ag::to_string(it->second->shape) +
                                ", model expects " + ag::to_string(t.shape()));
            auto dst = t.mutable_data();
            std::transform(it->second->data.begin(), it->second->data.end(), dst.begin(),
                           [](float v) { return static_cast<T>(v); });
        }
    }

private:
    template <typename U>
    friend class TaggerModel;

    void check_words(const Tensor<T>& tokens, std::span<const std::size_t> lengths, const char* op) const {
        if (tokens.ndim() != 3) throw ShapeError(std::string(op) + ": expected [N, S, d], got " + ag::to_string(tokens.shape()));
        if (lengths.size() != tokens.dim(0))
            throw ShapeError(std::string(op) + ": " + std::to_string(lengths.size()) + " lengths for " +
                             ag::to_string(tokens.shape()));
        for (auto l : lengths) {
            if (l == 0) throw DataError(std::string(op) + ": word with every subtoken masked");
            if (l > tokens.dim(1)) throw ShapeError(std::string(op) + ": length exceeds subtoken axis");
        }
    }

    Tensor<T> param(const std::string& name, Shape shape, T fill) {
        auto t = Tensor<T>::full(std::move(shape), fill, true);
        params_.emplace_back(name, t);
        return t;
    }

    Linear<T> linear(const std::string& name, std::size_t in, std::size_t out) {
        Linear<T> l;
        l.weight = param(name + ".weight", {in, out}, T(0));
        l.bias = param(name + ".bias", {out}, T(0));
        return l;
    }

    AttentionParams<T> attention(const std::string& name) {
        const std::size_t d = config_.d_model;
        return {linear(name + ".q", d, d), linear(name + ".k", d, d), linear(name + ".v", d, d), linear(name + ".o", d, d)};
    }

    void build() {
        params_.clear();
        const std::size_t d = config_.d_model;
        embedding_ = param("token_embedding", {config_.vocab_size, d}, T(0));
        word_attn_ = attention("word_attn");
        score_hidden_ = linear("score.hidden", d, config_.score_hidden);
        score_out_ = linear("score.out", config_.score_hidden, 1);
        blocks_.clear();
        for (std::size_t i = 0; i < config_.n_layers; ++i) {
            const std::string p = "encoder." + std::to_string(i);
            EncoderBlock<T> blk;
            blk.attn = attention(p + ".attn");
            blk.ff1 = linear(p + ".ff1", d, config_.d_ff);
            blk.ff2 = linear(p + ".ff2", config_.d_ff, d);
            blk.ln1_gain = param(p + ".ln1.gain", {d}, T(1));
            blk.ln1_bias = param(p + ".ln1.bias", {d}, T(0));
            blk.ln2_gain = param(p + ".ln2.gain", {d}, T(1));
            blk.ln2_bias = param(p + ".ln2.bias", {d}, T(0));
            blocks_.push_back(std::move(blk));
        }
        heads_.clear();
        for (const auto& s : config_.schemas) {
            const std::string p = "head." + s.name;
            heads_.push_back({linear(p + ".hidden", d, config_.cls_hidden), linear(p + ".out", config_.cls_hidden, s.size())});
        }
    }

    // N(0, 0.02) for matrices (2-D tensors), biases and gains keep their fill.
    void initialize() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& t = params_[i].second;
            if (t.ndim() != 2) continue;
            SplitMix64 rng(derive_seed(config_.seed, i));
            for (auto& v : t.mutable_data()) v = static_cast<T>(rng.normal() * 0.02);
        }
    }

    ModelConfig config_;
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    Tensor<T> embedding_;
    AttentionParams<T> word_attn_;
    Linear<T> score_hidden_, score_out_;
    std::vector<EncoderBlock<T>> blocks_;
    std::vector<ClassifierHead<T>> heads_;
};

// ---------------------------------------------------------------------------
// Checkpoint file:
//   MORPHTAG v1
//   key=value lines (model config, seed, `schema.<name>=l1|l2|...`, extras)
//   #PARAMS
//   per array: "<name> <ndim> <dims...>\n" then numel float32 little-endian
// Arrays follow TaggerModel::parameters() order, then any optimizer state.
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelConfig config;
    std::map<std::string, std::string> extra;  // training state etc.
    std::vector<NamedArray> arrays;
};

namespace detail {

inline void append_f32_le(std::string& out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

inline float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

inline std::string format_real(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    const auto& c = ck.config;
    std::string out = "MORPHTAG v1\n";
    auto kv = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
    kv("d_model", std::to_string(c.d_model));
    kv("n_heads_word", std::to_string(c.n_heads_word));
    kv("n_heads_sent", std::to_string(c.n_heads_sent));
    kv("n_layers", std::to_string(c.n_layers));
    kv("d_ff", std::to_string(c.d_ff));
    kv("max_subtokens", std::to_string(c.max_subtokens));
    kv("max_words", std::to_string(c.max_words));
    kv("vocab_size", std::to_string(c.vocab_size));
    kv("score_hidden", std::to_string(c.score_hidden));
    kv("cls_hidden", std::to_string(c.cls_hidden));
    kv("rope_base", detail::format_real(c.rope_base));
    kv("dropout", detail::format_real(c.dropout));
    kv("seed", std::to_string(c.seed));
    for (const auto& s : c.schemas) {
        std::string labels;
        for (std::size_t i = 0; i < s.labels.size(); ++i) labels += (i ? "|" : "") + s.labels[i];
        kv("schema." + s.name, labels);
    }
    for (const auto& [k, v] : ck.extra) kv(k, v);
    out += "#PARAMS\n";
    for (const auto& a : ck.arrays) {
        out += a.name + " " + std::to_string(a.shape.size());
        for (auto dim : a.shape) out += " " + std::to_string(dim);
        out += "\n";
        for (float v : a.data) detail::append_f32_le(out, v);
    }
    return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
    std::size_t pos = 0, line_no = 0;
    auto next_line = [&]() -> std::optional<std::string> {
        if (pos >= bytes.size()) return std::nullopt;
        auto eol = bytes.find('\n', pos);
        if (eol == std::string_view::npos) throw DataError("checkpoint truncated");
        std::string line(bytes.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        return line;
    };
    auto header = next_line();
    if (!header || !header->starts_with("MORPHTAG ")) throw DataError("not a checkpoint file");
    if (*header != "MORPHTAG v1") throw DataError("unsupported checkpoint version: " + *header);

    Checkpoint ck;
    auto& c = ck.config;
    std::map<std::string, std::string> kv;
    while (true) {
        auto line = next_line();
        if (!line) throw DataError("checkpoint has no #PARAMS section");
        if (*line == "#PARAMS") break;
        auto eq = line->find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value in checkpoint header");
        kv[line->substr(0, eq)] = line->substr(eq + 1);
    }
    auto take = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw DataError("checkpoint lacks '" + k + "'");
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto take_size = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(take(k))); };
    try {
        c.d_model = take_size("d_model");
        c.n_heads_word = take_size("n_heads_word");
        c.n_heads_sent = take_size("n_heads_sent");
        c.n_layers = take_size("n_layers");
        c.d_ff = take_size("d_ff");
        c.max_subtokens = take_size("max_subtokens");
        c.max_words = take_size("max_words");
        c.vocab_size = take_size("vocab_size");
        c.score_hidden = take_size("score_hidden");
        c.cls_hidden = take_size("cls_hidden");
        c.rope_base = std::stod(take("rope_base"));
        c.dropout = std::stod(take("dropout"));
        c.seed = std::stoull(take("seed"));
    } catch (const std::invalid_argument&) {
        throw DataError("checkpoint header holds a non-numeric value");
    }
    for (auto it = kv.begin(); it != kv.end();) {
        if (it->first.starts_with("schema.")) {
            std::vector<std::string> labels;
            for (auto l : detail::split(it->second, '|')) labels.emplace_back(l);
            auto s = make_schema(it->first.substr(7), labels);
            c.schemas.push_back(std::move(s));
            it = kv.erase(it);
        } else {
            ++it;
        }
    }
    ck.extra = std::move(kv);

    while (auto line = next_line()) {
        std::istringstream ss(*line);
        NamedArray a;
        std::size_t nd = 0;
        if (!(ss >> a.name >> nd)) throw DataError("malformed parameter record: " + *line);
        a.shape.resize(nd);
        for (auto& dim : a.shape)
            if (!(ss >> dim)) throw DataError("malformed parameter record: " + *line);
        const std::size_t n = ag::numel(a.shape);
        if (pos + 4 * n > bytes.size()) throw DataError("checkpoint truncated in '" + a.name + "'");
        a.data.resize(n);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        for (std::size_t i = 0; i < n; ++i) a.data[i] = detail::read_f32_le(p + 4 * i);
        pos += 4 * n;
        ck.arrays.push_back(std::move(a));
    }
    return ck;
}

template <typename T>
Checkpoint make_checkpoint(const TaggerModel<T>& model) {
    return Checkpoint{model.config(), {}, model.export_parameters()};
}

template <typename T>
TaggerModel<T> model_from_checkpoint(const Checkpoint& ck) {
    auto cfg = ck.config;
    cfg.validate();
    TaggerModel<T> m(cfg);
    m.import_parameters(ck.arrays);
    return m;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) { write_atomic(path, serialize_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

} // namespace morphtag
