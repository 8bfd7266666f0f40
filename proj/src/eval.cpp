#include "tcnn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace tcnn {

double f1_score(double precision, double recall) {
    const double sum = precision + recall;
    if (sum <= 0.0) return 0.0;
    return 2.0 * precision * recall / sum;
}

RankedQuery rank_candidates(const std::string& query, const std::vector<std::string>& candidate_ids,
                            const KnowledgeBase& kb, const TripleScorer& scorer,
                            const std::unordered_map<std::string, int>& labels) {
    RankedQuery out;
    out.query = query;
    for (const auto& id : candidate_ids) {
        const KnowledgeEntry& entry = kb.get(id);
        Candidate c;
        c.kb_id = id;
        c.score = scorer(query, entry);
        auto it = labels.find(id);
        c.label = it == labels.end() ? 0 : it->second;
        out.candidates.push_back(std::move(c));
    }
    std::sort(out.candidates.begin(), out.candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.score != b.score ? a.score > b.score : a.kb_id < b.kb_id;
    });
    return out;
}

std::vector<RankedQuery> rerank_all(const std::vector<EvalQuery>& queries, const KnowledgeBase& kb,
                                    const TripleScorer& scorer, std::size_t threads) {
    std::vector<RankedQuery> out(queries.size());
    if (threads <= 1 || queries.size() <= 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) {
            out[i] = rank_candidates(queries[i].query, queries[i].candidate_ids, kb, scorer,
                                     queries[i].labels);
        }
        return out;
    }
    threads = std::min(threads, queries.size());
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < queries.size(); i = next.fetch_add(1)) {
                out[i] = rank_candidates(queries[i].query, queries[i].candidate_ids, kb, scorer,
                                         queries[i].labels);
            }
        });
    }
    for (auto& w : workers) w.join();
    return out;
}

ThresholdMetrics metrics_at_threshold(const std::vector<RankedQuery>& queries, double tau) {
    ThresholdMetrics m;
    m.threshold = tau;
    for (const RankedQuery& rq : queries) {
        if (rq.candidates.empty()) continue;
        const bool has_relevant = std::any_of(rq.candidates.begin(), rq.candidates.end(),
                                              [](const Candidate& c) { return c.label == 1; });
        if (has_relevant) ++m.with_relevant;
        const Candidate& top = rq.candidates.front();
        if (top.score >= tau) {
            ++m.answered;
            if (top.label == 1) ++m.correct;
        }
    }
    m.precision = m.answered == 0 ? 0.0 : static_cast<double>(m.correct) / m.answered;
    m.recall = m.with_relevant == 0 ? 0.0 : static_cast<double>(m.correct) / m.with_relevant;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

EvalReport threshold_sweep(const std::vector<RankedQuery>& queries, const std::vector<double>& grid) {
    if (grid.empty()) throw ArgError("threshold_sweep: empty grid");
    EvalReport report;
    for (double tau : grid) report.grid.push_back(metrics_at_threshold(queries, tau));
    report.selected = report.grid.front();
    for (const ThresholdMetrics& m : report.grid) {
        if (m.f1 > report.selected.f1) report.selected = m;  // ties keep the smallest threshold
    }
    return report;
}

EvalReport threshold_sweep(const std::vector<RankedQuery>& queries, double step) {
    if (!(step > 0.0 && step <= 1.0)) throw ArgError("threshold_sweep: step must be in (0, 1]");
    std::vector<double> grid;
    for (std::size_t i = 0;; ++i) {
        const double tau = static_cast<double>(i) * step;
        if (tau >= 1.0) break;
        grid.push_back(tau);
    }
    grid.push_back(1.0);
    return threshold_sweep(queries, grid);
}

namespace {

std::vector<double> sentence_vector(const std::string& text, const Vocabulary& vocab,
                                    const EmbeddingTable& embeddings, TokenizeMode mode) {
    std::vector<double> vec(embeddings.dim(), 0.0);
    std::size_t count = 0;
    for (const auto& tok : tokenize(text, mode)) {
        const std::uint32_t id = vocab.lookup(tok);
        if (id == kPadId || id == kUnkId) continue;
        for (std::size_t i = 0; i < vec.size(); ++i) vec[i] += embeddings.table(i, id);
        ++count;
    }
    if (count > 0) {
        for (double& x : vec) x /= static_cast<double>(count);
    }
    return vec;
}

}  // namespace

double word_average_score(const std::string& query, const std::string& title, const std::string& answer,
                          const Vocabulary& vocab, const EmbeddingTable& embeddings, TokenizeMode mode) {
    const auto q = sentence_vector(query, vocab, embeddings, mode);
    const auto t = sentence_vector(title, vocab, embeddings, mode);
    const auto a = sentence_vector(answer, vocab, embeddings, mode);
    std::vector<double> ta(q.size());
    for (std::size_t i = 0; i < ta.size(); ++i) ta[i] = 0.5 * (t[i] + a[i]);
    return (cosine(q, ta) + 1.0) / 2.0;
}

LatencyStats latency_bench(const ModelParams& params, const ModelConfig& cfg,
                           const std::vector<ProbeTriple>& probes, std::size_t repetitions) {
    if (probes.empty()) throw ArgError("latency_bench: no probe triples");
    if (repetitions < 1) throw ArgError("latency_bench: repetitions must be >= 1");
    using clock = std::chrono::steady_clock;
    volatile double sink = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        const ProbeTriple& p = probes[i % probes.size()];
        sink = sink + score(p.q_ids, p.t_ids, p.a_ids, params, cfg);
    }
    std::vector<double> times_ms;
    times_ms.reserve(repetitions * probes.size());
    for (std::size_t r = 0; r < repetitions; ++r) {
        for (const ProbeTriple& p : probes) {
            const auto t0 = clock::now();
            sink = sink + score(p.q_ids, p.t_ids, p.a_ids, params, cfg);
            const auto t1 = clock::now();
            times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    }
    std::sort(times_ms.begin(), times_ms.end());
    LatencyStats stats;
    double total = 0.0;
    for (double t : times_ms) total += t;
    stats.mean_ms = total / static_cast<double>(times_ms.size());
    stats.median_ms = times_ms[times_ms.size() / 2];
    stats.p95_ms = times_ms[std::min(times_ms.size() - 1,
                                     static_cast<std::size_t>(0.95 * static_cast<double>(times_ms.size())))];
    return stats;
}

std::string report_table(const std::vector<MethodResult>& results) {
    std::size_t name_width = std::string("Methods").size();
    for (const auto& r : results) name_width = std::max(name_width, r.method.size());
    std::ostringstream out;
    out << std::left;
    out.width(static_cast<std::streamsize>(name_width + 2));
    out << "Methods";
    out << "Threshold  Precision@1  Recall@1  F1@1\n";
    char buf[96];
    for (const auto& r : results) {
        const ThresholdMetrics& m = r.report.selected;
        out.width(static_cast<std::streamsize>(name_width + 2));
        out << r.method;
        std::snprintf(buf, sizeof(buf), "%-11.2f%-13.3f%-10.3f%.3f", m.threshold, m.precision,
                      m.recall, m.f1);
        out << buf << '\n';
    }
    return out.str();
}

std::string report_json(const std::vector<MethodResult>& results) {
    nlohmann::json root = nlohmann::json::array();
    for (const auto& r : results) {
        nlohmann::json grid = nlohmann::json::array();
        for (const auto& m : r.report.grid) {
            grid.push_back({{"threshold", m.threshold},
                            {"precision_at_1", m.precision},
                            {"recall_at_1", m.recall},
                            {"f1_at_1", m.f1}});
        }
        const ThresholdMetrics& sel = r.report.selected;
        root.push_back({{"method", r.method},
                        {"selected_threshold", sel.threshold},
                        {"precision_at_1", sel.precision},
                        {"recall_at_1", sel.recall},
                        {"f1_at_1", sel.f1},
                        {"answered", sel.answered},
                        {"correct", sel.correct},
                        {"queries_with_relevant", sel.with_relevant},
                        {"grid", std::move(grid)}});
    }
    return root.dump(2);
}

}  // namespace tcnn
