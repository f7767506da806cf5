#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "morphtag/eval.hpp"
#include "morphtag/rng.hpp"
#include "metrics_oracle.hpp"
#include "test_util.hpp"

using namespace morphtag;
using morphtag::testkit::random_fixture;
using morphtag::testkit::recount;

namespace {

const std::vector<std::string> kThirteen = {"upos", "Mood", "VerbForm", "Person", "Animacy", "Degree", "Variant",
                                            "Number", "Gender", "NumForm", "Case", "Tense", "Voice"};

} // namespace

TEST(Metrics, HandComputedTwoByTwo) {
    // confusion (rows gold, cols pred): [[1, 1], [0, 2]]
    const LabelGrid gold = {{0, 0, 1, 1}}, pred = {{0, 1, 1, 1}};
    EXPECT_DOUBLE_EQ(category_accuracy(pred, gold), 0.75);
    auto prf = macro_prf(pred, gold);
    EXPECT_NEAR(prf.precision, (1.0 + 2.0 / 3.0) / 2, 1e-12);
    EXPECT_NEAR(prf.recall, (0.5 + 1.0) / 2, 1e-12);
    EXPECT_NEAR(prf.f1, (2.0 / 3.0 + 0.8) / 2, 1e-12);
    EXPECT_DOUBLE_EQ(sentence_accuracy(pred, gold), 0.0);
}

TEST(Metrics, PerfectPredictionScoresOne) {
    const LabelGrid g = {{0, 2}, {1}};
    EXPECT_EQ(category_accuracy(g, g), 1.0);
    EXPECT_EQ(sentence_accuracy(g, g), 1.0);
    auto prf = macro_prf(g, g);
    EXPECT_EQ(prf.precision, 1.0);
    EXPECT_EQ(prf.f1, 1.0);
}

TEST(Metrics, ExcludingNoneDropsItFromTheAverage) {
    const LabelGrid gold = {{0, 0, 1, 1}}, pred = {{0, 1, 1, 1}};
    auto prf = macro_prf(pred, gold, 0);
    EXPECT_NEAR(prf.precision, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(prf.recall, 1.0, 1e-12);
}

TEST(Metrics, MisalignedInputsAreDataErrors) {
    EXPECT_THROW(category_accuracy({{0}}, {{0}, {1}}), DataError);
    EXPECT_THROW(category_accuracy({{0, 1}}, {{0}}), DataError);
}

TEST(Metrics, EmptyCorpus) {
    EXPECT_EQ(category_accuracy({}, {}), 0.0);
    EXPECT_EQ(sentence_accuracy({}, {}), 0.0);
    EXPECT_EQ(joint_accuracies({}).word_full, 0.0);
}

TEST(MetricsProperty, MatchNaiveRecount) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto cats = random_fixture(seed, {"Case"});
        const auto& c = cats[0];
        auto ref = recount(c.pred, c.gold);
        EXPECT_NEAR(category_accuracy(c.pred, c.gold), ref.accuracy, 1e-12);
        auto prf = macro_prf(c.pred, c.gold);
        EXPECT_NEAR(prf.precision, ref.precision, 1e-12);
        EXPECT_NEAR(prf.recall, ref.recall, 1e-12);
        EXPECT_NEAR(prf.f1, ref.f1, 1e-12);
        auto ex = recount(c.pred, c.gold, c.none_index);
        auto prf_ex = macro_prf(c.pred, c.gold, c.none_index);
        EXPECT_NEAR(prf_ex.precision, ex.precision, 1e-12);
        EXPECT_NEAR(prf_ex.f1, ex.f1, 1e-12);
    }
}

TEST(MetricsProperty, InvariantUnderSentencePermutation) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto cats = random_fixture(seed, {"upos", "Case", "Foo"});
        auto perm = cats;
        std::vector<std::size_t> order(cats[0].gold.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, seed + 7);
        for (std::size_t c = 0; c < cats.size(); ++c)
            for (std::size_t i = 0; i < order.size(); ++i) {
                perm[c].gold[i] = cats[c].gold[order[i]];
                perm[c].pred[i] = cats[c].pred[order[i]];
            }
        EXPECT_EQ(format_report_kv(evaluate(cats)), format_report_kv(evaluate(perm)));
    }
}

TEST(MetricsProperty, JointAccuracyChain) {
    auto names = kThirteen;
    names.push_back("Aspect");
    names.push_back("Reflex");
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto cats = random_fixture(seed, names, 10, 0.95);
        auto j = joint_accuracies(cats);
        double min13 = 1.0;
        for (const auto& c : cats) {
            const double a = category_accuracy(c.pred, c.gold);
            if (std::find(kThirteen.begin(), kThirteen.end(), c.name) != kThirteen.end()) min13 = std::min(min13, a);
            EXPECT_LE(j.word_full, a + 1e-12);
        }
        EXPECT_LE(j.word_full, j.word_13 + 1e-12);
        EXPECT_LE(j.word_13, min13 + 1e-12);
        for (const auto& c : cats) EXPECT_LE(j.sentence_full, sentence_accuracy(c.pred, c.gold) + 1e-12);
    }
}

TEST(MetricsProperty, AllValuesInUnitInterval) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto r = evaluate(random_fixture(seed, {"upos", "Case", "Number"}, 8, 0.5));
        for (const auto& c : r.categories)
            for (double v : {c.accuracy, c.sentence_accuracy, c.precision, c.recall, c.f1}) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
    }
}

TEST(Metrics, SentenceAccuracyCanExceedWordAccuracy) {
    // One correct one-word sentence, one three-word sentence entirely wrong:
    // word accuracy 1/4, sentence accuracy 1/2. Sentence-level accuracy is
    // not bounded by word-level accuracy once sentence lengths differ.
    const LabelGrid gold = {{0}, {0, 0, 0}}, pred = {{0}, {1, 1, 1}};
    EXPECT_DOUBLE_EQ(category_accuracy(pred, gold), 0.25);
    EXPECT_DOUBLE_EQ(sentence_accuracy(pred, gold), 0.5);
}

TEST(Metrics, OneWrongCategoryCostsOneWordInJoint13) {
    auto cats = random_fixture(3, kThirteen, 10, 1.0);
    std::size_t n = 0;
    for (const auto& row : cats[0].gold) n += row.size();
    EXPECT_EQ(joint_accuracies(cats).word_13, 1.0);
    auto& w = cats[10].pred[2][0];  // Case, sentence 2, word 0
    w = w == 0 ? 1 : 0;
    auto j = joint_accuracies(cats);
    EXPECT_NEAR(j.word_13, 1.0 - 1.0 / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(j.word_full, j.word_13, 1e-12);
    EXPECT_NEAR(j.sentence_full, 1.0 - 1.0 / static_cast<double>(cats[0].gold.size()), 1e-12);
}

TEST(Metrics, Joint13IgnoresOtherCategories) {
    auto cats = random_fixture(4, {"upos", "Case", "Reflex"}, 6, 1.0);
    auto& w = cats[2].pred[0][0];
    w = w == 0 ? 1 : 0;
    auto j = joint_accuracies(cats);
    EXPECT_EQ(j.word_13, 1.0);
    EXPECT_LT(j.word_full, 1.0);
    auto r = evaluate(cats);
    EXPECT_EQ(r.joint_13_present, (std::vector<std::string>{"upos", "Case"}));
}

TEST(Metrics, MeansOverCategories) {
    auto cats = random_fixture(9, {"upos", "Case", "Number"}, 10, 0.7);
    auto r = evaluate(cats);
    double all = 0, feats = 0;
    for (const auto& c : cats) {
        const double a = category_accuracy(c.pred, c.gold);
        all += a;
        if (c.name != "upos") feats += a;
    }
    EXPECT_NEAR(r.mean_accuracy, all / 3, 1e-12);
    EXPECT_NEAR(r.mean_feature_accuracy, feats / 2, 1e-12);
    EXPECT_NEAR(mean_accuracy(r), all / 3, 1e-12);
}

TEST(Metrics, GoldLabelsGiveUnseenLabelsFreshIndices) {
    auto corpus = parse_conllu("1\tа\t_\tNOUN\t_\tCase=Voc\t0\troot\t_\t_\n2\tб\t_\tNOUN\t_\tCase=Nom\t1\tnmod\t_\t_\n");
    auto schema = make_schema("Case", {"Nom"});
    auto g = gold_labels(corpus, schema);
    EXPECT_EQ(g[0][0], schema.size());
    EXPECT_EQ(g[0][1], schema.index_of("Nom"));
}

TEST(Metrics, ReportFormatsListEveryCategory) {
    auto r = evaluate(random_fixture(1, {"upos", "Case"}));
    const auto table = format_report_table(r), kv = format_report_kv(r);
    for (const auto* name : {"upos", "Case"}) {
        EXPECT_NE(table.find(name), std::string::npos);
        EXPECT_NE(kv.find(std::string(name) + ".f1="), std::string::npos);
    }
    EXPECT_NE(kv.find("joint_word_accuracy_13="), std::string::npos);
    EXPECT_NE(kv.find("none_in_prf=1"), std::string::npos);
}

TEST(Metrics, FixtureAgainstItselfIsPerfect) {
    auto corpus = testkit::fixture_corpus();
    std::vector<CategoryLabels> cats;
    for (const auto& s : build_schemas(corpus)) {
        auto g = gold_labels(corpus, s);
        cats.push_back({s.name, s.none_index, g, g});
    }
    auto r = evaluate(cats);
    EXPECT_EQ(r.joint_word_accuracy_full, 1.0);
    EXPECT_EQ(r.joint_sentence_accuracy_full, 1.0);
    EXPECT_EQ(r.sentence_count, 50u);
}

TEST(MetricsProperty, JointMatchesBruteForce) {
    auto names = kThirteen;
    names.push_back("Reflex");
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto cats = random_fixture(seed, names, 10, 0.97);
        auto j = joint_accuracies(cats);
        auto ref = testkit::recount_joint(cats, kThirteen);
        EXPECT_DOUBLE_EQ(j.word_13, ref.word_13);
        EXPECT_DOUBLE_EQ(j.word_full, ref.word_full);
        EXPECT_DOUBLE_EQ(j.sentence_full, ref.sentence_full);
    }
}
