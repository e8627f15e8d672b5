#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "uda/corpus.hpp"
#include "uda/errors.hpp"

using namespace uda;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
    CHECK(tokenize("Good movie!") == std::vector<std::string>{"good", "movie", "!"});
    CHECK(tokenize("\"quoted\"") == std::vector<std::string>{"\"", "quoted", "\""});
    CHECK(tokenize("a  b") == std::vector<std::string>{"a", "b"});
    CHECK(tokenize("don't") == std::vector<std::string>{"don't"});
}

TEST_CASE("classification loader") {
    const auto path = write_temp("cls.jsonl",
                                 "{\"text\":\"good movie\",\"label\":\"pos\"}\n"
                                 "{\"text\":\"bad\",\"label\":null}\n"
                                 "{\"text\":\"awful\",\"label\":\"neg\"}\n"
                                 "{\"text\":\"fine\",\"label\":\"pos\"}\n");
    const auto corpus = load_classification_corpus(path);
    REQUIRE(corpus.examples.size() == 4);
    CHECK(corpus.examples[0].tokens.size() == 2);
    CHECK(corpus.examples[0].label == 0);  // first-seen interning
    CHECK_FALSE(corpus.examples[1].label.has_value());
    CHECK(corpus.examples[2].label == 1);
    CHECK(corpus.examples[3].label == 0);
    CHECK(corpus.label_names == std::vector<std::string>{"pos", "neg"});
}

TEST_CASE("classification loader errors") {
    CHECK_THROWS_AS(load_classification_corpus(write_temp("bad1.jsonl", "{oops\n")),
                    DataError);
    CHECK_THROWS_AS(load_classification_corpus(write_temp("bad2.jsonl",
                                                          "{\"text\":7,\"label\":null}\n")),
                    DataError);
    CHECK_THROWS_AS(load_classification_corpus(write_temp("bad3.jsonl",
                                                          "{\"text\":\"x\",\"label\":3}\n")),
                    DataError);
    CHECK_THROWS_AS(load_classification_corpus(write_temp("empty.jsonl", "")), DataError);
}

TEST_CASE("conll loader") {
    const auto path = write_temp("c1.conll",
                                 "-DOCSTART- O\n\n"
                                 "EU NNP B-ORG\nrejects VBZ O\n\n"
                                 "Peter NNP B-PER\nBlack NNP I-PER\n");
    const auto corpus = load_conll_corpus(path);
    REQUIRE(corpus.examples.size() == 2);
    CHECK(corpus.examples[0].tokens == std::vector<std::string>{"EU", "rejects"});
    CHECK(corpus.tag_names[0] == "O");
    const auto& tags0 = *corpus.examples[0].tags;
    CHECK(corpus.tag_names[tags0[0]] == "B-ORG");
    CHECK(corpus.tag_names[tags0[1]] == "O");
}

TEST_CASE("conll loader repairs illegal I tags") {
    const auto path = write_temp("c2.conll", "a I-PER\nb I-PER\nc I-ORG\n");
    const auto corpus = load_conll_corpus(path);
    const auto& tags = *corpus.examples[0].tags;
    CHECK(corpus.tag_names[tags[0]] == "B-PER");
    CHECK(corpus.tag_names[tags[1]] == "I-PER");
    CHECK(corpus.tag_names[tags[2]] == "B-ORG");
}

TEST_CASE("conll loader errors") {
    CHECK_THROWS_AS(load_conll_corpus(write_temp("c3.conll", "lonely\n")), DataError);
    CHECK_THROWS_AS(load_conll_corpus(write_temp("c4.conll", "-DOCSTART- O\n")),
                    DataError);
    CHECK_THROWS_AS(load_conll_corpus(write_temp("c5.conll", "a X-FOO\n")), DataError);
}

TEST_CASE("vocabulary construction") {
    const Vocabulary v = build_vocabulary({{"a", "a", "b"}}, 1);
    CHECK(v.size() == 3);
    CHECK(v.lookup("a") == 1);  // highest count after unk
    CHECK(v.lookup("b") == 2);
    CHECK(v.lookup("zzz") == Vocabulary::kUnkId);
    CHECK(v.surface(0) == "<unk>");

    const Vocabulary v2 = build_vocabulary({{"a", "a", "b"}}, 2);
    CHECK(v2.lookup("b") == Vocabulary::kUnkId);

    // Ties broken lexicographically.
    const Vocabulary v3 = build_vocabulary({{"y", "x", "y", "x", "y", "x"}}, 1);
    CHECK(v3.lookup("x") == 1);
    CHECK(v3.lookup("y") == 2);

    CHECK_THROWS_AS(build_vocabulary({}, 1), DataError);
}

TEST_CASE("subset sampling per class") {
    ClassificationCorpus pool;
    pool.label_names = {"pos", "neg"};
    for (int i = 0; i < 30; ++i) {
        pool.examples.push_back({{"w"}, i % 2});
    }
    const auto split = sample_labeled_subset(pool, 10, 7);
    CHECK(split.labeled.size() == 20);
    CHECK(split.unlabeled.size() == 10);

    int pos = 0;
    for (std::size_t i : split.labeled) {
        if (*pool.examples[i].label == 0) ++pos;
    }
    CHECK(pos == 10);

    // Determinism and disjointness.
    const auto again = sample_labeled_subset(pool, 10, 7);
    CHECK(again.labeled == split.labeled);
    CHECK(again.unlabeled == split.unlabeled);
    for (std::size_t i : split.labeled) {
        for (std::size_t u : split.unlabeled) CHECK(i != u);
    }

    const auto other = sample_labeled_subset(pool, 10, 8);
    CHECK(other.labeled != split.labeled);

    const auto empty = sample_labeled_subset(pool, 0, 7);
    CHECK(empty.labeled.empty());
    CHECK(empty.unlabeled.size() == 30);

    CHECK_THROWS_WITH_AS(sample_labeled_subset(pool, 16, 7),
                         doctest::Contains("pos"), DataError);
}

TEST_CASE("subset sampling sentences") {
    TaggingCorpus pool;
    for (int i = 0; i < 12; ++i) {
        pool.examples.push_back({{"w"}, std::vector<int>{0}});
    }
    const auto split = sample_labeled_subset(pool, 5, 3);
    CHECK(split.labeled.size() == 5);
    CHECK(split.unlabeled.size() == 7);
    CHECK_THROWS_AS(sample_labeled_subset(pool, 13, 3), DataError);
}

TEST_CASE("intern maps through vocabulary") {
    const Vocabulary v = build_vocabulary({{"a", "b", "a"}}, 1);
    CHECK(intern({"a", "zzz", "b"}, v) == TokenSequence{1, 0, 2});
}
