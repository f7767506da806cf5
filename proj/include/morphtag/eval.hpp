#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "morphtag/conllu.hpp"
#include "morphtag/error.hpp"

namespace morphtag {

// Label indices per sentence, per word, for one category.
using LabelGrid = std::vector<std::vector<std::size_t>>;

inline constexpr std::array<std::string_view, 13> kJoint13Categories = {
    "upos", "Mood", "VerbForm", "Person", "Animacy", "Degree", "Variant",
    "Number", "Gender", "NumForm", "Case", "Tense", "Voice"};

struct CategoryLabels {
    std::string name;
    std::size_t none_index = 0;
    LabelGrid pred;
    LabelGrid gold;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct CategoryMetrics {
    std::string name;
    double accuracy = 0.0;
    double sentence_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct JointAccuracy {
    double word_13 = 0.0;
    double word_full = 0.0;
    double sentence_full = 0.0;
};

struct MetricsReport {
    std::vector<CategoryMetrics> categories;
    double mean_accuracy = 0.0;           // over every reported category
    double mean_feature_accuracy = 0.0;   // morphological features only (upos excluded)
    double joint_word_accuracy_13 = 0.0;
    double joint_word_accuracy_full = 0.0;
    double joint_sentence_accuracy_full = 0.0;
    std::vector<std::string> joint_13_present;
    std::size_t sentence_count = 0;
    std::size_t word_count = 0;
    bool none_in_prf = true;
};

namespace detail {

inline void check_aligned(const LabelGrid& pred, const LabelGrid& gold) {
    if (pred.size() != gold.size())
        throw DataError("prediction has " + std::to_string(pred.size()) + " sentences, gold has " +
                        std::to_string(gold.size()));
    for (std::size_t s = 0; s < pred.size(); ++s)
        if (pred[s].size() != gold[s].size())
            throw DataError("sentence " + std::to_string(s) + " has mismatched word counts");
}

} // namespace detail

inline double category_accuracy(const LabelGrid& pred, const LabelGrid& gold) {
    detail::check_aligned(pred, gold);
    std::size_t total = 0, correct = 0;
    for (std::size_t s = 0; s < pred.size(); ++s)
        for (std::size_t w = 0; w < pred[s].size(); ++w) {
            ++total;
            correct += pred[s][w] == gold[s][w];
        }
    return total ? static_cast<double>(correct) / total : 0.0;
}

inline double sentence_accuracy(const LabelGrid& pred, const LabelGrid& gold) {
    detail::check_aligned(pred, gold);
    if (pred.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) ok += pred[s] == gold[s];
    return static_cast<double>(ok) / pred.size();
}

// Unweighted mean over labels occurring in gold of per-label precision,
// recall and F1 (0 wherever a denominator vanishes). `excluded` drops one
// label (e.g. NONE) from the average and from the gold label set.
inline Prf macro_prf(const LabelGrid& pred, const LabelGrid& gold, std::optional<std::size_t> excluded = std::nullopt) {
    detail::check_aligned(pred, gold);
    std::map<std::size_t, std::array<std::size_t, 3>> counts;  // tp, fp, fn
    for (std::size_t s = 0; s < pred.size(); ++s)
        for (std::size_t w = 0; w < pred[s].size(); ++w) {
            const auto p = pred[s][w], g = gold[s][w];
            if (p == g) {
                ++counts[g][0];
            } else {
                ++counts[g][2];
                ++counts[p][1];
            }
        }
    std::set<std::size_t> gold_labels;
    for (const auto& row : gold) gold_labels.insert(row.begin(), row.end());
    if (excluded) gold_labels.erase(*excluded);

    Prf out;
    if (gold_labels.empty()) return out;
    for (auto label : gold_labels) {
        const auto& [tp, fp, fn] = counts[label];
        const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double r = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        out.precision += p;
        out.recall += r;
        out.f1 += f;
    }
    const double n = static_cast<double>(gold_labels.size());
    out.precision /= n;
    out.recall /= n;
    out.f1 /= n;
    return out;
}

// Word-level and sentence-level accuracy requiring every listed category
// to be correct at once. The 13-category figure uses the subset of
// kJoint13Categories that is present in `cats`.
inline JointAccuracy joint_accuracies(const std::vector<CategoryLabels>& cats) {
    JointAccuracy out;
    if (cats.empty()) return out;
    const auto& ref = cats.front().gold;
    for (const auto& c : cats) {
        detail::check_aligned(c.pred, c.gold);
        detail::check_aligned(c.gold, ref);
    }
    std::vector<bool> in13;
    for (const auto& c : cats)
        in13.push_back(std::find(kJoint13Categories.begin(), kJoint13Categories.end(), c.name) != kJoint13Categories.end());

    std::size_t words = 0, ok13 = 0, ok_full = 0, sent_ok = 0;
    for (std::size_t s = 0; s < ref.size(); ++s) {
        bool sentence_ok = true;
        for (std::size_t w = 0; w < ref[s].size(); ++w) {
            bool all = true, all13 = true;
            for (std::size_t c = 0; c < cats.size(); ++c) {
                const bool hit = cats[c].pred[s][w] == cats[c].gold[s][w];
                all = all && hit;
                if (in13[c]) all13 = all13 && hit;
            }
            ++words;
            ok13 += all13;
            ok_full += all;
            sentence_ok = sentence_ok && all;
        }
        sent_ok += sentence_ok;
    }
    if (words) {
        out.word_13 = static_cast<double>(ok13) / words;
        out.word_full = static_cast<double>(ok_full) / words;
    }
    if (!ref.empty()) out.sentence_full = static_cast<double>(sent_ok) / ref.size();
    return out;
}

inline double mean_accuracy(const MetricsReport& report) {
    if (report.categories.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : report.categories) s += c.accuracy;
    return s / report.categories.size();
}

struct EvalOptions {
    bool none_in_prf = true;  // count NONE as an ordinary label in macro P/R/F1
};

inline MetricsReport evaluate(const std::vector<CategoryLabels>& cats, const EvalOptions& opt = {}) {
    MetricsReport r;
    r.none_in_prf = opt.none_in_prf;
    double feat_sum = 0.0;
    std::size_t feat_n = 0;
    for (const auto& c : cats) {
        CategoryMetrics m;
        m.name = c.name;
        m.accuracy = category_accuracy(c.pred, c.gold);
        m.sentence_accuracy = sentence_accuracy(c.pred, c.gold);
        auto prf = macro_prf(c.pred, c.gold, opt.none_in_prf ? std::nullopt : std::optional(c.none_index));
        m.precision = prf.precision;
        m.recall = prf.recall;
        m.f1 = prf.f1;
        if (c.name != kUposCategory) {
            feat_sum += m.accuracy;
            ++feat_n;
        }
        r.categories.push_back(std::move(m));
        if (std::find(kJoint13Categories.begin(), kJoint13Categories.end(), c.name) != kJoint13Categories.end())
            r.joint_13_present.push_back(c.name);
    }
    r.mean_accuracy = mean_accuracy(r);
    r.mean_feature_accuracy = feat_n ? feat_sum / feat_n : 0.0;
    auto j = joint_accuracies(cats);
    r.joint_word_accuracy_13 = j.word_13;
    r.joint_word_accuracy_full = j.word_full;
    r.joint_sentence_accuracy_full = j.sentence_full;
    if (!cats.empty()) {
        r.sentence_count = cats.front().gold.size();
        for (const auto& row : cats.front().gold) r.word_count += row.size();
    }
    return r;
}

// Gold label grid for one schema; labels the schema has never seen get
// fresh indices past the schema so they can never match a prediction.
inline LabelGrid gold_labels(const std::vector<Sentence>& sentences, const CategorySchema& schema) {
    LabelGrid out;
    std::map<std::string, std::size_t> unseen;
    out.reserve(sentences.size());
    for (const auto& s : sentences) {
        std::vector<std::size_t> row;
        row.reserve(s.words.size());
        for (const auto& w : s.words) {
            const auto& label = w.label(schema.name);
            auto idx = schema.index_of(label);
            if (idx == CategorySchema::npos) idx = unseen.try_emplace(label, schema.size() + unseen.size()).first->second;
            row.push_back(idx);
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline std::string format_report_table(const MetricsReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %9s %9s %9s %9s %9s\n", "Feature", "Accuracy", "SentAcc", "Precision",
                  "Recall", "F1");
    out += buf;
    for (const auto& c : r.categories) {
        std::snprintf(buf, sizeof buf, "%-12s %9.5f %9.5f %9.5f %9.5f %9.5f\n", c.name.c_str(), c.accuracy,
                      c.sentence_accuracy, c.precision, c.recall, c.f1);
        out += buf;
    }
    out += "\n";
    std::snprintf(buf, sizeof buf, "mean accuracy (all categories)       %.5f\n", r.mean_accuracy);
    out += buf;
    std::snprintf(buf, sizeof buf, "mean accuracy (features, no upos)    %.5f\n", r.mean_feature_accuracy);
    out += buf;
    std::snprintf(buf, sizeof buf, "joint word accuracy (%zu of 13)       %.5f\n", r.joint_13_present.size(),
                  r.joint_word_accuracy_13);
    out += buf;
    std::snprintf(buf, sizeof buf, "joint word accuracy (all)            %.5f\n", r.joint_word_accuracy_full);
    out += buf;
    std::snprintf(buf, sizeof buf, "joint sentence accuracy (all)        %.5f\n", r.joint_sentence_accuracy_full);
    out += buf;
    std::snprintf(buf, sizeof buf, "sentences %zu, words %zu, NONE in P/R/F1: %s\n", r.sentence_count, r.word_count,
                  r.none_in_prf ? "yes" : "no");
    out += buf;
    return out;
}

inline std::string format_report_kv(const MetricsReport& r) {
    std::string out;
    char buf[256];
    auto kv = [&](const std::string& k, double v) {
        std::snprintf(buf, sizeof buf, "%s=%.6f\n", k.c_str(), v);
        out += buf;
    };
    for (const auto& c : r.categories) {
        kv(c.name + ".accuracy", c.accuracy);
        kv(c.name + ".sentence_accuracy", c.sentence_accuracy);
        kv(c.name + ".precision", c.precision);
        kv(c.name + ".recall", c.recall);
        kv(c.name + ".f1", c.f1);
    }
    kv("mean_accuracy", r.mean_accuracy);
    kv("mean_feature_accuracy", r.mean_feature_accuracy);
    kv("joint_word_accuracy_13", r.joint_word_accuracy_13);
    kv("joint_word_accuracy_full", r.joint_word_accuracy_full);
    kv("joint_sentence_accuracy_full", r.joint_sentence_accuracy_full);
    out += "joint_13_categories=" + std::to_string(r.joint_13_present.size()) + "\n";
    out += "sentences=" + std::to_string(r.sentence_count) + "\n";
    out += "words=" + std::to_string(r.word_count) + "\n";
    out += std::string("none_in_prf=") + (r.none_in_prf ? "1" : "0") + "\n";
    return out;
}

} // namespace morphtag
