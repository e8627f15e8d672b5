#include "uda/augment.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "uda/errors.hpp"

namespace uda {

std::vector<double> ContextProposer::propose(TokenId left, TokenId right) const {
    std::vector<double> scores(vocab_size_);
    auto it = context_counts_.find({left, right});
    if (it != context_counts_.end()) {
        const auto& counts = it->second;
        double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(),
                                                           std::int64_t{0}));
        total += alpha_ * vocab_size_;
        for (int t = 0; t < vocab_size_; ++t) {
            scores[t] = (counts[t] + alpha_) / total;
        }
    } else {
        // Backoff: smoothed unigram distribution.
        const double total = unigram_total_ + alpha_ * vocab_size_;
        for (int t = 0; t < vocab_size_; ++t) {
            scores[t] = (unigram_counts_[t] + alpha_) / total;
        }
    }
    return scores;
}

ContextProposer train_context_proposer(const std::vector<TokenSequence>& corpus,
                                       int vocab_size, double alpha) {
    if (corpus.empty()) throw DataError("cannot train proposer on an empty corpus");
    if (alpha <= 0) throw DataError("smoothing constant must be positive");

    ContextProposer p;
    p.vocab_size_ = vocab_size;
    p.alpha_ = alpha;
    p.unigram_counts_.assign(vocab_size, 0);

    for (const auto& seq : corpus) {
        const std::size_t n = seq.size();
        for (std::size_t j = 0; j < n; ++j) {
            const TokenId left = j > 0 ? seq[j - 1] : ContextProposer::kBoundary;
            const TokenId right = j + 1 < n ? seq[j + 1] : ContextProposer::kBoundary;
            auto& counts = p.context_counts_[{left, right}];
            if (counts.empty()) counts.assign(vocab_size, 0);
            ++counts[seq[j]];
            ++p.unigram_counts_[seq[j]];
            ++p.unigram_total_;
        }
    }
    return p;
}

const TokenSequence& ParaphraseTable::lookup(std::size_t id) const {
    auto it = table_.find(id);
    if (it == table_.end()) {
        throw DataError("no paraphrase for example " + std::to_string(id));
    }
    return it->second;
}

void ParaphraseTable::insert(std::size_t id, TokenSequence paraphrase) {
    if (!table_.emplace(id, std::move(paraphrase)).second) {
        throw DataError("duplicate paraphrase id " + std::to_string(id));
    }
}

ParaphraseTable load_paraphrase_pairs(const std::string& path,
                                      std::size_t corpus_size,
                                      const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open paraphrase file: " + path);

    ParaphraseTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": malformed JSON record: " + e.what());
        }
        if (!rec.contains("id") || !rec["id"].is_number_integer() ||
            !rec.contains("paraphrase") || !rec["paraphrase"].is_string()) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": record needs integer \"id\" and string \"paraphrase\"");
        }
        const std::int64_t id = rec["id"].get<std::int64_t>();
        if (id < 0 || static_cast<std::size_t>(id) >= corpus_size) {
            throw DataError(path + ":" + std::to_string(line_no) + ": id " +
                            std::to_string(id) + " not in corpus");
        }
        table.insert(static_cast<std::size_t>(id),
                     intern(tokenize(rec["paraphrase"].get<std::string>()), vocab));
    }
    return table;
}

TokenSequence uniform_random_replace(const TokenSequence& x,
                                     const PerturbationConfig& cfg,
                                     const Vocabulary& vocab, Rng& rng) {
    const int non_unk = vocab.size() - 1;
    if (non_unk < 2) {
        throw DataError("vocabulary too small for replacement (need >= 2 non-unk tokens)");
    }
    TokenSequence out = x;
    for (auto& id : out) {
        if (rng.uniform() >= cfg.replace_prob) continue;
        // Uniform over non-unk ids excluding the original token.
        const bool skip_original = id != Vocabulary::kUnkId;
        const std::uint64_t choices = skip_original ? non_unk - 1 : non_unk;
        TokenId pick = static_cast<TokenId>(1 + rng.below(choices));
        if (skip_original && pick >= id) ++pick;
        id = pick;
    }
    return out;
}

TokenSequence contextual_replace(const TokenSequence& x,
                                 const PerturbationConfig& cfg,
                                 const ContextProposer& proposer, Rng& rng) {
    TokenSequence out = x;
    const std::size_t n = x.size();
    for (std::size_t j = 0; j < n; ++j) {
        if (rng.uniform() >= cfg.replace_prob) continue;

        const TokenId left = j > 0 ? x[j - 1] : ContextProposer::kBoundary;
        const TokenId right = j + 1 < n ? x[j + 1] : ContextProposer::kBoundary;
        const std::vector<double> scores = proposer.propose(left, right);

        // Rank non-unk tokens by score, ties toward the lower id.
        std::vector<TokenId> ranked;
        ranked.reserve(scores.size() - 1);
        for (TokenId t = 1; t < static_cast<TokenId>(scores.size()); ++t) {
            ranked.push_back(t);
        }
        std::stable_sort(ranked.begin(), ranked.end(), [&](TokenId a, TokenId b) {
            return scores[a] > scores[b];
        });

        // Candidates are the overall top-k, minus the original token. If the
        // original was the only top-k entry, fall back to the next-best token.
        std::vector<TokenId> candidates;
        for (TokenId t : ranked) {
            if (static_cast<int>(candidates.size()) >= cfg.top_k) break;
            candidates.push_back(t);
        }
        std::erase(candidates, x[j]);
        if (candidates.empty()) {
            for (TokenId t : ranked) {
                if (t != x[j]) {
                    candidates.push_back(t);
                    break;
                }
            }
        }
        if (candidates.empty()) {
            throw DataError("vocabulary too small for contextual replacement");
        }

        double total = 0;
        for (TokenId t : candidates) total += scores[t];
        double u = rng.uniform() * total;
        TokenId pick = candidates.back();
        for (TokenId t : candidates) {
            u -= scores[t];
            if (u < 0) {
                pick = t;
                break;
            }
        }
        out[j] = pick;
    }
    return out;
}

}  // namespace uda
