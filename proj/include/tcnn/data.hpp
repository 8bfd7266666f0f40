#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcnn/bm25.hpp"

namespace tcnn {

struct LabeledTriple {
    std::string query;
    std::string kb_id;
    int label = 0;  // 1 related, 0 unrelated
};

struct Splits {
    std::vector<LabeledTriple> train, valid, test;
    std::uint64_t seed = 0;
};

/// JSONL with keys query, kb_id, label; every kb_id must resolve in the KB.
std::vector<LabeledTriple> load_dataset(const std::string& path, const KnowledgeBase& kb);

/// Seeded shuffle then 60/20/20 partition.
Splits split(const std::vector<LabeledTriple>& triples, std::uint64_t seed);

struct SyntheticFiles {
    std::string kb_path;
    std::string dataset_path;
};

/// Deterministic templated FAQ corpus (orders, shipping, refunds, accounts):
/// related queries are rule-based title paraphrases, unrelated ones pair a
/// paraphrase with a different entry; labels balanced.
SyntheticFiles generate_synthetic(std::uint64_t seed, std::size_t n_entries, std::size_t n_queries,
                                  const std::string& out_dir);

}  // namespace tcnn
