#include <gtest/gtest.h>

#include <algorithm>

#include "morphtag/conllu.hpp"
#include "morphtag/rng.hpp"
#include "morphtag/text.hpp"
#include "morphtag/utf8.hpp"
#include "test_util.hpp"

using namespace morphtag;

namespace {

std::string line(const std::string& id, const std::string& form, const std::string& upos, const std::string& feats) {
    return id + "\t" + form + "\t_\t" + upos + "\t_\t" + feats + "\t0\troot\t_\t_\n";
}

} // namespace

TEST(Utf8, DecodesAndLowercasesCyrillic) {
    EXPECT_EQ(utf8::chars("Ёж").size(), 2u);
    EXPECT_EQ(utf8::lower("МОСКВА Ёлка ABC"), "москва ёлка abc");
    EXPECT_EQ(utf8::lower("ЀЏ"), "ѐџ");
}

TEST(Utf8, MalformedBytesBecomeReplacementChar) {
    const std::string bad = "a\xC3";  // truncated 2-byte sequence
    auto cs = utf8::chars(bad);
    ASSERT_EQ(cs.size(), 2u);
    EXPECT_EQ(cs[1], "\xEF\xBF\xBD");
}

TEST(Conllu, TwoTokenBlockExplodesFeats) {
    auto s = parse_conllu(line("1", "кот", "NOUN", "Case=Nom|Number=Sing") + line("2", "спит", "VERB", "_"));
    ASSERT_EQ(s.size(), 1u);
    ASSERT_EQ(s[0].words.size(), 2u);
    const auto& w1 = s[0].words[0];
    EXPECT_EQ(w1.surface, "кот");
    EXPECT_EQ(w1.labels.size(), 3u);
    EXPECT_EQ(w1.labels.at("upos"), "NOUN");
    EXPECT_EQ(w1.labels.at("Case"), "Nom");
    EXPECT_EQ(w1.labels.at("Number"), "Sing");
    const auto& w2 = s[0].words[1];
    EXPECT_EQ(w2.labels.size(), 1u);
    EXPECT_EQ(w2.label("Case"), "NONE");
}

TEST(Conllu, SkipsRangesAndEmptyNodesAndReadsIds) {
    std::string text = "# sent_id = s7\n# text = x\n";
    text += "1-2\tнасчёт\t_\t_\t_\t_\t_\t_\t_\t_\n";
    text += line("1", "на", "ADP", "_") + line("2", "счёт", "NOUN", "Case=Acc");
    text += "2.1\tесть\t_\tVERB\t_\t_\t_\t_\t_\t_\n";
    text += "\n\n" + line("1", "да", "PART", "_");
    auto s = parse_conllu(text);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].id, "s7");
    EXPECT_EQ(s[0].words.size(), 2u);
    EXPECT_EQ(s[1].words.size(), 1u);
}

TEST(Conllu, CrlfAccepted) {
    auto s = parse_conllu("1\tа\t_\tCCONJ\t_\t_\t0\troot\t_\t_\r\n\r\n");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].words[0].labels.at("upos"), "CCONJ");
}

TEST(Conllu, KeepsHeadAndDeprelOutOfLabels) {
    auto s = parse_conllu("1\tа\t_\tCCONJ\t_\t_\t3\tcc\t_\t_\n");
    EXPECT_EQ(s[0].words[0].head, "3");
    EXPECT_EQ(s[0].words[0].deprel, "cc");
    EXPECT_EQ(s[0].words[0].labels.count("head"), 0u);
}

TEST(Conllu, WrongColumnCountNamesLine) {
    const std::string text = "# c\n" + line("1", "а", "X", "_") + "2\tб\t_\tX\n";
    try {
        parse_conllu(text);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Conllu, MalformedFeatureIsAnError) {
    EXPECT_THROW(parse_conllu(line("1", "а", "X", "Case")), ParseError);
}

TEST(Conllu, EmptyInputIsEmptyList) {
    EXPECT_TRUE(parse_conllu("").empty());
    EXPECT_TRUE(parse_conllu("\n\n# only comments\n").empty());
}

TEST(Conllu, SchemasFromCaseOnlyCorpus) {
    auto s = parse_conllu(line("1", "а", "NOUN", "Case=Nom") + line("2", "б", "NOUN", "Case=Gen"));
    auto schemas = build_schemas(s);
    ASSERT_EQ(schemas.size(), 2u);
    EXPECT_EQ(schemas[0].name, "Case");
    EXPECT_EQ(schemas[0].labels, (std::vector<std::string>{"Gen", "NONE", "Nom"}));
    EXPECT_EQ(schemas[0].none_index, 1u);
    EXPECT_EQ(schemas[1].name, "upos");
}

TEST(Conllu, NoFeatsGivesOnlyUpos) {
    auto s = parse_conllu(line("1", "а", "X", "_"));
    auto schemas = build_schemas(s);
    ASSERT_EQ(schemas.size(), 1u);
    EXPECT_EQ(schemas[0].name, "upos");
}

TEST(Conllu, SchemaSerializationIndependentOfOrder) {
    auto corpus = testkit::fixture_corpus();
    const auto ref = serialize_schemas(build_schemas(corpus));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto shuffled = corpus;
        shuffle(shuffled, seed);
        for (auto& s : shuffled) shuffle(s.words, seed + 100);
        EXPECT_EQ(serialize_schemas(build_schemas(shuffled)), ref);
    }
}

TEST(Conllu, SchemaRoundTripThroughText) {
    auto schemas = build_schemas(testkit::fixture_corpus());
    EXPECT_EQ(parse_schemas(serialize_schemas(schemas)), schemas);
}

TEST(Conllu, NormalizeMakesEveryCategoryExplicit) {
    auto corpus = testkit::fixture_corpus();
    auto schemas = build_schemas(corpus);
    normalize(corpus, schemas);
    for (const auto& s : corpus)
        for (const auto& w : s.words)
            for (const auto& sc : schemas) {
                ASSERT_EQ(w.labels.count(sc.name), 1u);
                EXPECT_TRUE(sc.contains(w.labels.at(sc.name)));
            }
}

TEST(Conllu, UnseenLabelIsNpos) {
    auto sc = make_schema("Case", {"Nom"});
    EXPECT_EQ(sc.index_of("Voc"), CategorySchema::npos);
    EXPECT_EQ(sc.index_of("NONE"), sc.none_index);
}

TEST(Conllu, CorpusStats) {
    EXPECT_EQ(corpus_stats({}).sentence_count, 0u);
    EXPECT_EQ(corpus_stats({}).mean_sentence_length, 0.0);
    std::vector<Sentence> two(2);
    two[0].words.resize(3);
    two[1].words.resize(5);
    auto st = corpus_stats(two);
    EXPECT_EQ(st.sentence_count, 2u);
    EXPECT_EQ(st.word_count, 8u);
    EXPECT_DOUBLE_EQ(st.mean_sentence_length, 4.0);
}

TEST(Conllu, WordCountConservedOnFixture) {
    auto corpus = testkit::fixture_corpus();
    std::size_t n = 0;
    for (const auto& s : corpus) n += s.words.size();
    auto st = corpus_stats(corpus);
    EXPECT_EQ(st.word_count, n);
    EXPECT_EQ(st.sentence_count, 50u);
    EXPECT_NEAR(st.mean_sentence_length, static_cast<double>(n) / 50.0, 0.01);
}

TEST(Conllu, FormatRoundTripsFormUposFeats) {
    auto corpus = testkit::fixture_corpus();
    auto again = parse_conllu(format_conllu(corpus));
    ASSERT_EQ(again.size(), corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        ASSERT_EQ(again[i].words.size(), corpus[i].words.size());
        EXPECT_EQ(again[i].id, corpus[i].id);
        for (std::size_t w = 0; w < corpus[i].words.size(); ++w) {
            EXPECT_EQ(again[i].words[w].surface, corpus[i].words[w].surface);
            EXPECT_EQ(again[i].words[w].labels, corpus[i].words[w].labels);
        }
    }
}

TEST(Conllu, ReadMissingFileIsDataError) {
    EXPECT_THROW(read_conllu("/nonexistent/x.conllu"), DataError);
}

TEST(Text, SplitsWhitespaceAndPunctuation) {
    EXPECT_EQ(tokenize_line("Кто-то пришёл, «вчера»!"),
              (std::vector<std::string>{"Кто-то", "пришёл", ",", "«", "вчера", "»", "!"}));
    EXPECT_TRUE(tokenize_line("   \t ").empty());
}

TEST(Text, OneSentencePerNonBlankLine) {
    auto s = sentences_from_text("раз два\n\nтри.\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].words.size(), 2u);
    EXPECT_EQ(s[1].words.size(), 2u);
    EXPECT_TRUE(sentences_from_text("").empty());
}
