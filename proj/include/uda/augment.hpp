#ifndef UDA_AUGMENT_HPP
#define UDA_AUGMENT_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "uda/corpus.hpp"
#include "uda/rng.hpp"

namespace uda {

enum class PerturbMode { kUniform, kContextual, kParaphrase };

struct PerturbationConfig {
    double replace_prob = 0.3;
    int top_k = 10;
    PerturbMode mode = PerturbMode::kUniform;
};

// Center-word proposer conditioned on (left, right) neighbor ids, with
// add-alpha smoothing and a smoothed unigram backoff for unseen contexts.
// A desk-scale stand-in for masked-language-model replacement.
class ContextProposer {
public:
    static constexpr TokenId kBoundary = -1;

    // Normalized proposal distribution over all vocabulary ids for a context.
    std::vector<double> propose(TokenId left, TokenId right) const;

    int vocab_size() const { return vocab_size_; }

    friend ContextProposer train_context_proposer(
        const std::vector<TokenSequence>& corpus, int vocab_size, double alpha);

private:
    struct PairHash {
        std::size_t operator()(const std::pair<TokenId, TokenId>& p) const {
            return std::hash<std::int64_t>()(
                (static_cast<std::int64_t>(p.first) << 32) ^
                static_cast<std::uint32_t>(p.second));
        }
    };

    int vocab_size_ = 0;
    double alpha_ = 0.1;
    std::unordered_map<std::pair<TokenId, TokenId>, std::vector<std::int64_t>, PairHash>
        context_counts_;
    std::vector<std::int64_t> unigram_counts_;
    std::int64_t unigram_total_ = 0;
};

ContextProposer train_context_proposer(const std::vector<TokenSequence>& corpus,
                                       int vocab_size, double alpha = 0.1);

// Fixed paraphrases keyed by example index, produced externally.
class ParaphraseTable {
public:
    bool contains(std::size_t id) const { return table_.count(id) > 0; }
    const TokenSequence& lookup(std::size_t id) const;
    std::size_t size() const { return table_.size(); }
    void insert(std::size_t id, TokenSequence paraphrase);

private:
    std::unordered_map<std::size_t, TokenSequence> table_;
};

ParaphraseTable load_paraphrase_pairs(const std::string& path,
                                      std::size_t corpus_size,
                                      const Vocabulary& vocab);

TokenSequence uniform_random_replace(const TokenSequence& x,
                                     const PerturbationConfig& cfg,
                                     const Vocabulary& vocab, Rng& rng);

TokenSequence contextual_replace(const TokenSequence& x,
                                 const PerturbationConfig& cfg,
                                 const ContextProposer& proposer, Rng& rng);

}  // namespace uda

#endif
