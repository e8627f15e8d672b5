#include "uda/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "uda/errors.hpp"
#include "uda/rng.hpp"

namespace uda {

Vocabulary::Vocabulary(std::vector<std::string> tokens,
                       std::vector<std::int64_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        index_.emplace(tokens_[i], static_cast<TokenId>(i));
    }
}

TokenId Vocabulary::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

std::uint64_t Vocabulary::hash() const {
    // FNV-1a over surface strings with a separator byte.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens_) {
        for (unsigned char c : t) {
            h = (h ^ c) * 0x100000001b3ULL;
        }
        h = (h ^ 0x1f) * 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> tokenize(const std::string& text) {
    auto is_punct = [](unsigned char c) { return std::ispunct(c) != 0; };
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        // Peel punctuation off both edges as separate tokens.
        std::size_t begin = 0, end = word.size();
        std::vector<std::string> leading;
        while (begin < end && is_punct(word[begin])) {
            leading.push_back(std::string(1, word[begin++]));
        }
        std::vector<std::string> trailing;
        while (end > begin && is_punct(word[end - 1])) {
            trailing.push_back(std::string(1, word[--end]));
        }
        for (auto& t : leading) out.push_back(std::move(t));
        if (end > begin) out.push_back(word.substr(begin, end - begin));
        for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) {
            out.push_back(std::move(*it));
        }
    }
    return out;
}

ClassificationCorpus load_classification_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);

    ClassificationCorpus corpus;
    std::unordered_map<std::string, int> label_ids;
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
        if (!rec.contains("text") || !rec["text"].is_string()) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": missing or non-string \"text\" field");
        }
        if (!rec.contains("label") || !(rec["label"].is_string() || rec["label"].is_null())) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": \"label\" must be a string or null");
        }
        ClassificationExample ex;
        ex.tokens = tokenize(rec["text"].get<std::string>());
        if (rec["label"].is_string()) {
            const std::string name = rec["label"].get<std::string>();
            auto [it, inserted] = label_ids.emplace(name, static_cast<int>(corpus.label_names.size()));
            if (inserted) corpus.label_names.push_back(name);
            ex.label = it->second;
        }
        corpus.examples.push_back(std::move(ex));
    }
    if (corpus.examples.empty()) throw DataError("empty corpus file: " + path);
    return corpus;
}

namespace {

// Splits "B-ORG" into kind 'B' and type "ORG"; O has empty type.
struct BioTag {
    char kind;         // 'B', 'I', or 'O'
    std::string type;
};

BioTag parse_bio(const std::string& tag, const std::string& where) {
    if (tag == "O") return {'O', ""};
    if (tag.size() >= 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
        return {tag[0], tag.substr(2)};
    }
    throw DataError(where + ": tag \"" + tag + "\" is not valid BIO");
}

// Rewrites an I-tag that opens a span illegally to a B-tag of the same type.
std::vector<std::string> repair_bio(std::vector<std::string> tags,
                                    const std::string& where) {
    std::string open_type;  // type of span currently open, empty if none
    for (auto& tag : tags) {
        BioTag t = parse_bio(tag, where);
        if (t.kind == 'I' && t.type != open_type) {
            tag = "B-" + t.type;
            t.kind = 'B';
        }
        open_type = (t.kind == 'O') ? "" : t.type;
    }
    return tags;
}

}  // namespace

TaggingCorpus load_conll_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);

    TaggingCorpus corpus;
    std::unordered_map<std::string, int> tag_ids;
    corpus.tag_names.push_back("O");
    tag_ids.emplace("O", 0);

    std::vector<std::string> tokens;
    std::vector<std::string> tags;
    std::string line;
    std::size_t line_no = 0;
    std::size_t block_start = 1;

    auto flush = [&]() {
        if (tokens.empty()) return;
        const std::string where = path + ":" + std::to_string(block_start);
        TaggingExample ex;
        ex.tokens = tokens;
        std::vector<int> ids;
        for (const auto& tag : repair_bio(tags, where)) {
            auto [it, inserted] = tag_ids.emplace(tag, static_cast<int>(corpus.tag_names.size()));
            if (inserted) corpus.tag_names.push_back(tag);
            ids.push_back(it->second);
        }
        ex.tags = std::move(ids);
        corpus.examples.push_back(std::move(ex));
        tokens.clear();
        tags.clear();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::vector<std::string> cols;
        std::string col;
        while (ss >> col) cols.push_back(col);
        if (cols.empty()) {
            flush();
            block_start = line_no + 1;
            continue;
        }
        if (cols[0] == "-DOCSTART-") continue;
        if (cols.size() < 2) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": token line has fewer than 2 columns");
        }
        if (tokens.empty()) block_start = line_no;
        tokens.push_back(cols.front());
        tags.push_back(cols.back());
    }
    flush();
    if (corpus.examples.empty()) throw DataError("empty tagging corpus: " + path);
    return corpus;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpora,
                            int min_count) {
    if (corpora.empty()) throw DataError("cannot build vocabulary from empty corpora");
    std::map<std::string, std::int64_t> counts;
    for (const auto& seq : corpora) {
        for (const auto& tok : seq) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::int64_t>> kept;
    std::int64_t unk_count = 0;
    for (const auto& [tok, n] : counts) {
        if (n >= min_count) {
            kept.emplace_back(tok, n);
        } else {
            unk_count += n;
        }
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens{"<unk>"};
    std::vector<std::int64_t> token_counts{unk_count};
    for (auto& [tok, n] : kept) {
        tokens.push_back(std::move(tok));
        token_counts.push_back(n);
    }
    return Vocabulary(std::move(tokens), std::move(token_counts));
}

TokenSequence intern(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    TokenSequence ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
    return ids;
}

namespace {

// Draws k indices uniformly without replacement via partial Fisher-Yates.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool,
                                                  std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

DatasetSplit make_split(std::vector<std::size_t> labeled, std::size_t pool_size,
                        std::uint64_t seed) {
    DatasetSplit split;
    split.seed = seed;
    std::vector<bool> taken(pool_size, false);
    for (std::size_t i : labeled) taken[i] = true;
    split.labeled = std::move(labeled);
    for (std::size_t i = 0; i < pool_size; ++i) {
        if (!taken[i]) split.unlabeled.push_back(i);
    }
    return split;
}

}  // namespace

DatasetSplit sample_labeled_subset(const ClassificationCorpus& pool, int per_class,
                                   std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(pool.label_names.size());
    for (std::size_t i = 0; i < pool.examples.size(); ++i) {
        if (pool.examples[i].label) by_class[*pool.examples[i].label].push_back(i);
    }
    Rng rng = Rng::derive(seed, 0x5b5e17);
    std::vector<std::size_t> labeled;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < static_cast<std::size_t>(per_class)) {
            throw DataError("class \"" + pool.label_names[c] + "\" has only " +
                            std::to_string(by_class[c].size()) + " examples, need " +
                            std::to_string(per_class));
        }
        auto drawn = draw_without_replacement(by_class[c], per_class, rng);
        labeled.insert(labeled.end(), drawn.begin(), drawn.end());
    }
    std::sort(labeled.begin(), labeled.end());
    return make_split(std::move(labeled), pool.examples.size(), seed);
}

DatasetSplit sample_labeled_subset(const TaggingCorpus& pool, int sentences,
                                   std::uint64_t seed) {
    if (pool.examples.size() < static_cast<std::size_t>(sentences)) {
        throw DataError("pool has only " + std::to_string(pool.examples.size()) +
                        " sentences, need " + std::to_string(sentences));
    }
    std::vector<std::size_t> all(pool.examples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Rng rng = Rng::derive(seed, 0x5b5e17);
    auto labeled = draw_without_replacement(std::move(all), sentences, rng);
    return make_split(std::move(labeled), pool.examples.size(), seed);
}

}  // namespace uda
