#ifndef UDA_CORPUS_HPP
#define UDA_CORPUS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace uda {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

// Token vocabulary with ids assigned by descending count, ties broken
// lexicographically. Id 0 is reserved for the unknown token.
class Vocabulary {
public:
    static constexpr TokenId kUnkId = 0;

    Vocabulary() = default;

    // tokens[0] must be the unk surface form.
    Vocabulary(std::vector<std::string> tokens, std::vector<std::int64_t> counts);

    TokenId lookup(const std::string& token) const;
    const std::string& surface(TokenId id) const { return tokens_.at(id); }
    std::int64_t count(TokenId id) const { return counts_.at(id); }
    int size() const { return static_cast<int>(tokens_.size()); }

    // Stable hash over the surface strings, used to pair checkpoints with
    // the vocabulary they were trained against.
    std::uint64_t hash() const;

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_{"<unk>"};
    std::vector<std::int64_t> counts_{0};
    std::unordered_map<std::string, TokenId> index_;
};

struct ClassificationExample {
    std::vector<std::string> tokens;   // surface forms, pre-vocabulary
    std::optional<int> label;          // absent for unlabeled examples
};

struct TaggingExample {
    std::vector<std::string> tokens;
    std::optional<std::vector<int>> tags;  // same length as tokens when present
};

struct ClassificationCorpus {
    std::vector<ClassificationExample> examples;
    std::vector<std::string> label_names;  // dense ids, first-seen order
};

struct TaggingCorpus {
    std::vector<TaggingExample> examples;
    std::vector<std::string> tag_names;  // dense ids, O first
};

// Labeled/unlabeled split of one pool. Indices refer into the source pool;
// unlabeled examples have their labels hidden by the consumer.
struct DatasetSplit {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
    std::uint64_t seed = 0;
};

// Lowercases, splits punctuation off word edges, then splits on whitespace.
std::vector<std::string> tokenize(const std::string& text);

ClassificationCorpus load_classification_corpus(const std::string& path);
TaggingCorpus load_conll_corpus(const std::string& path);

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpora,
                            int min_count);

TokenSequence intern(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// Per-class sampling for classification: exactly k per class.
DatasetSplit sample_labeled_subset(const ClassificationCorpus& pool, int per_class,
                                   std::uint64_t seed);
// Sentence sampling for tagging: exactly m sentences.
DatasetSplit sample_labeled_subset(const TaggingCorpus& pool, int sentences,
                                   std::uint64_t seed);

}  // namespace uda

#endif
