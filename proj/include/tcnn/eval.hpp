#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tcnn/bm25.hpp"
#include "tcnn/model.hpp"

namespace tcnn {

struct Candidate {
    std::string kb_id;
    double score = 0.0;
    int label = 0;
};

/// One evaluated query with candidates sorted by score descending,
/// ties by ascending kb id.
struct RankedQuery {
    std::string query;
    std::vector<Candidate> candidates;
};

struct ThresholdMetrics {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t answered = 0;
    std::size_t correct = 0;
    std::size_t with_relevant = 0;
};

struct EvalReport {
    std::vector<ThresholdMetrics> grid;
    ThresholdMetrics selected;  // best F1, ties to the smallest threshold
};

double f1_score(double precision, double recall);

using TripleScorer = std::function<double(const std::string& query, const KnowledgeEntry& entry)>;

/// Score and sort one query's candidates; labels default to 0 for candidates
/// absent from the label map.
RankedQuery rank_candidates(const std::string& query, const std::vector<std::string>& candidate_ids,
                            const KnowledgeBase& kb, const TripleScorer& scorer,
                            const std::unordered_map<std::string, int>& labels);

struct EvalQuery {
    std::string query;
    std::vector<std::string> candidate_ids;
    std::unordered_map<std::string, int> labels;  // kb_id -> label
};

/// rank_candidates over a batch; scoring fans out over `threads` workers
/// (read-only model), aggregation order stays deterministic.
std::vector<RankedQuery> rerank_all(const std::vector<EvalQuery>& queries, const KnowledgeBase& kb,
                                    const TripleScorer& scorer, std::size_t threads = 1);

/// answered = top-1 score >= tau; correct = answered with related top-1;
/// R@1 denominator = queries having at least one related candidate.
ThresholdMetrics metrics_at_threshold(const std::vector<RankedQuery>& queries, double tau);

EvalReport threshold_sweep(const std::vector<RankedQuery>& queries, const std::vector<double>& grid);
EvalReport threshold_sweep(const std::vector<RankedQuery>& queries, double step = 0.01);

/// Cosine of mean word embeddings, mapped to [0,1]; Q against the average of
/// the T and A sentence vectors. OOV and PAD tokens do not contribute.
double word_average_score(const std::string& query, const std::string& title, const std::string& answer,
                          const Vocabulary& vocab, const EmbeddingTable& embeddings, TokenizeMode mode);

struct LatencyStats {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p95_ms = 0.0;
};

struct ProbeTriple {
    std::vector<std::uint32_t> q_ids, t_ids, a_ids;
};

/// Wall-clock per-triple scoring time, single-threaded, after 10 warm-ups.
LatencyStats latency_bench(const ModelParams& params, const ModelConfig& cfg,
                           const std::vector<ProbeTriple>& probes, std::size_t repetitions);

struct MethodResult {
    std::string method;
    EvalReport report;
};

/// Aligned plain-text table with Methods / Threshold / Precision@1 /
/// Recall@1 / F1@1 columns.
std::string report_table(const std::vector<MethodResult>& results);
std::string report_json(const std::vector<MethodResult>& results);

}  // namespace tcnn
