#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <unordered_map>
#include <vector>

#include "tcnn/text.hpp"

namespace tcnn {

struct KnowledgeEntry {
    std::string id;
    std::string title;
    std::string answer;
};

/// Knowledge base loaded from JSONL ({"id","title","answer"} per line).
struct KnowledgeBase {
    std::vector<KnowledgeEntry> entries;
    std::unordered_map<std::string, std::size_t> by_id;

    static KnowledgeBase load(const std::string& path);
    void add(KnowledgeEntry entry);  // DataError on duplicate id
    const KnowledgeEntry& get(const std::string& id) const;
    bool contains(const std::string& id) const { return by_id.count(id) > 0; }
};

/// Fielded BM25 inverted index over title and answer, the candidate
/// generation stage in front of the neural reranker.
class Bm25Index {
public:
    struct Params {
        double k1 = 1.2;
        double b = 0.75;
        double title_weight = 2.0;
        double answer_weight = 1.0;
    };

    static Bm25Index build(const KnowledgeBase& kb, TokenizeMode mode, const Params& params = {});

    /// Top-k (id, score) by descending score, ties by ascending id. Queries
    /// with no indexed token return an empty list.
    std::vector<std::pair<std::string, double>> search(const std::string& query, std::size_t k) const;

    std::size_t doc_count() const { return doc_ids_.size(); }
    std::size_t term_count() const { return postings_.size(); }
    TokenizeMode mode() const { return mode_; }
    const Params& params() const { return params_; }
    std::uint64_t kb_hash() const { return kb_hash_; }

    void save(const std::string& path) const;
    static Bm25Index load(const std::string& path);

private:
    static constexpr int kNumFields = 2;  // 0 = title, 1 = answer

    struct Posting {
        std::uint32_t doc;
        std::uint8_t field;
        std::uint32_t tf;
    };

    TokenizeMode mode_ = TokenizeMode::Whitespace;
    Params params_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::array<std::uint32_t, 2>> doc_lengths_;
    double avg_length_[2] = {0.0, 0.0};
    std::uint64_t kb_hash_ = 0;
};

/// FNV-1a over ids, titles and answers; ties index and checkpoint to one KB.
std::uint64_t hash_kb(const KnowledgeBase& kb);

}  // namespace tcnn
