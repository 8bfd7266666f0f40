#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "tcnn/eval.hpp"

using namespace tcnn;

namespace {

// q1 top-1 (0.9, related); q2 top-1 (0.8, unrelated) but q2 has a related
// candidate below; q3 top-1 (0.4, related).
std::vector<RankedQuery> fixture() {
    RankedQuery q1{"q1", {{"a", 0.9, 1}}};
    RankedQuery q2{"q2", {{"b", 0.8, 0}, {"c", 0.6, 1}}};
    RankedQuery q3{"q3", {{"d", 0.4, 1}}};
    return {q1, q2, q3};
}

// One-pass re-derivation of the metric definitions, independent of the
// library's counting code.
ThresholdMetrics oracle_metrics(const std::vector<RankedQuery>& queries, double tau) {
    std::size_t answered = 0, correct = 0, with_relevant = 0;
    for (const auto& q : queries) {
        bool has_related = false;
        for (const auto& c : q.candidates) has_related = has_related || c.label == 1;
        if (has_related) ++with_relevant;
        if (q.candidates.empty() || q.candidates.front().score < tau) continue;
        ++answered;
        if (q.candidates.front().label == 1) ++correct;
    }
    ThresholdMetrics m;
    m.threshold = tau;
    m.answered = answered;
    m.correct = correct;
    m.with_relevant = with_relevant;
    m.precision = answered ? static_cast<double>(correct) / answered : 0.0;
    m.recall = with_relevant ? static_cast<double>(correct) / with_relevant : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

}  // namespace

TEST_CASE("f1 score") {
    CHECK(f1_score(0.0, 0.0) == 0.0);
    CHECK(f1_score(1.0, 1.0) == doctest::Approx(1.0));
    // published two-decimal operating points reproduce to three decimals
    CHECK(f1_score(0.878, 0.953) == doctest::Approx(0.914).epsilon(0.0006));
    CHECK(f1_score(0.891, 0.920) == doctest::Approx(0.905).epsilon(0.0006));
}

TEST_CASE("metrics at threshold") {
    auto ranked = fixture();

    SUBCASE("hand-enumerated fixture at 0.5") {
        ThresholdMetrics m = metrics_at_threshold(ranked, 0.5);
        CHECK(m.answered == 2);
        CHECK(m.correct == 1);
        CHECK(m.with_relevant == 3);
        CHECK(m.precision == doctest::Approx(0.5));
        CHECK(m.recall == doctest::Approx(1.0 / 3.0));
        CHECK(m.f1 == doctest::Approx(0.4));
    }

    SUBCASE("threshold 0 answers everything") {
        RankedQuery r1{"q1", {{"a", 0.9, 1}}};
        RankedQuery r2{"q2", {{"b", 0.2, 1}}};
        ThresholdMetrics m = metrics_at_threshold({r1, r2}, 0.0);
        CHECK(m.precision == doctest::Approx(1.0));
        CHECK(m.recall == doctest::Approx(1.0));
        CHECK(m.f1 == doctest::Approx(1.0));
    }

    SUBCASE("threshold 1 with all scores below answers nothing") {
        ThresholdMetrics m = metrics_at_threshold(ranked, 1.0);
        CHECK(m.answered == 0);
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }

    SUBCASE("matches the one-pass oracle on random inputs") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> unit(0, 1);
        std::uniform_int_distribution<int> coin(0, 1);
        std::uniform_int_distribution<std::size_t> n_cands(0, 4);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<RankedQuery> queries;
            for (int q = 0; q < 8; ++q) {
                RankedQuery rq;
                rq.query = "q" + std::to_string(q);
                std::size_t n = n_cands(rng);
                for (std::size_t c = 0; c < n; ++c) {
                    rq.candidates.push_back({"k" + std::to_string(c), unit(rng), coin(rng)});
                }
                std::sort(rq.candidates.begin(), rq.candidates.end(),
                          [](const Candidate& x, const Candidate& y) { return x.score > y.score; });
                queries.push_back(std::move(rq));
            }
            const double tau = unit(rng);
            ThresholdMetrics got = metrics_at_threshold(queries, tau);
            ThresholdMetrics want = oracle_metrics(queries, tau);
            CHECK(got.answered == want.answered);
            CHECK(got.correct == want.correct);
            CHECK(got.with_relevant == want.with_relevant);
            CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-12));
            CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-12));
            CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
        }
    }
}

TEST_CASE("threshold sweep") {
    auto ranked = fixture();

    SUBCASE("explicit grid picks the best F1") {
        EvalReport report = threshold_sweep(ranked, std::vector<double>{0.3, 0.5, 0.85});
        REQUIRE(report.grid.size() == 3);
        CHECK(report.grid[0].f1 == doctest::Approx(2.0 / 3.0));
        CHECK(report.grid[1].f1 == doctest::Approx(0.4));
        CHECK(report.grid[2].f1 == doctest::Approx(0.5));
        CHECK(report.selected.threshold == doctest::Approx(0.3));
    }

    SUBCASE("ties select the smallest threshold") {
        RankedQuery r{"q", {{"a", 0.9, 1}}};
        EvalReport report = threshold_sweep({r}, 0.1);
        CHECK(report.selected.threshold == doctest::Approx(0.0));
        CHECK(report.selected.f1 == doctest::Approx(1.0));
    }

    SUBCASE("step grid spans [0,1]") {
        EvalReport report = threshold_sweep(ranked, 0.25);
        REQUIRE(report.grid.size() == 5);
        CHECK(report.grid.front().threshold == doctest::Approx(0.0));
        CHECK(report.grid.back().threshold == doctest::Approx(1.0));
    }

    SUBCASE("invalid step") {
        CHECK_THROWS_AS(threshold_sweep(ranked, 0.0), ArgError);
        CHECK_THROWS_AS(threshold_sweep(ranked, 1.5), ArgError);
    }

    SUBCASE("F1 values are invariant under an order-preserving transform") {
        const std::vector<double> grid{0.2, 0.4, 0.6, 0.8};
        EvalReport before = threshold_sweep(ranked, grid);

        auto squash = [](double x) { return x * x; };  // monotone on [0,1]
        std::vector<RankedQuery> mapped = ranked;
        for (auto& q : mapped) {
            for (auto& c : q.candidates) c.score = squash(c.score);
        }
        std::vector<double> mapped_grid(grid.size());
        std::transform(grid.begin(), grid.end(), mapped_grid.begin(), squash);
        EvalReport after = threshold_sweep(mapped, mapped_grid);

        REQUIRE(after.grid.size() == before.grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(after.grid[i].f1 == doctest::Approx(before.grid[i].f1).epsilon(1e-12));
        }
    }
}

TEST_CASE("rank candidates") {
    KnowledgeBase kb;
    kb.add({"k1", "refund policy", "within 30 days"});
    kb.add({"k2", "shipping times", "three to five days"});
    kb.add({"k3", "account reset", "use the portal"});

    const std::unordered_map<std::string, double> fixed_scores{{"k1", 0.7}, {"k2", 0.7}, {"k3", 0.2}};
    TripleScorer scorer = [&](const std::string&, const KnowledgeEntry& e) {
        return fixed_scores.at(e.id);
    };

    SUBCASE("single candidate is top-1") {
        RankedQuery rq = rank_candidates("q", {"k3"}, kb, scorer, {{"k3", 1}});
        REQUIRE(rq.candidates.size() == 1);
        CHECK(rq.candidates[0].kb_id == "k3");
        CHECK(rq.candidates[0].label == 1);
    }

    SUBCASE("equal scores order by ascending id") {
        RankedQuery rq = rank_candidates("q", {"k2", "k1"}, kb, scorer, {});
        REQUIRE(rq.candidates.size() == 2);
        CHECK(rq.candidates[0].kb_id == "k1");
        CHECK(rq.candidates[1].kb_id == "k2");
        CHECK(rq.candidates[0].label == 0);  // unlabeled defaults to 0
    }

    SUBCASE("input order does not matter") {
        RankedQuery a = rank_candidates("q", {"k1", "k2", "k3"}, kb, scorer, {});
        RankedQuery b = rank_candidates("q", {"k3", "k2", "k1"}, kb, scorer, {});
        REQUIRE(a.candidates.size() == b.candidates.size());
        for (std::size_t i = 0; i < a.candidates.size(); ++i) {
            CHECK(a.candidates[i].kb_id == b.candidates[i].kb_id);
        }
    }

    SUBCASE("unknown candidate id") {
        CHECK_THROWS_AS(rank_candidates("q", {"nope"}, kb, scorer, {}), DataError);
    }

    SUBCASE("multi-threaded rerank matches single-threaded") {
        std::vector<EvalQuery> queries;
        for (int i = 0; i < 9; ++i) {
            queries.push_back({"q" + std::to_string(i), {"k1", "k2", "k3"}, {{"k1", 1}}});
        }
        auto one = rerank_all(queries, kb, scorer, 1);
        auto four = rerank_all(queries, kb, scorer, 4);
        REQUIRE(one.size() == four.size());
        for (std::size_t i = 0; i < one.size(); ++i) {
            CHECK(one[i].query == four[i].query);
            REQUIRE(one[i].candidates.size() == four[i].candidates.size());
            for (std::size_t j = 0; j < one[i].candidates.size(); ++j) {
                CHECK(one[i].candidates[j].kb_id == four[i].candidates[j].kb_id);
                CHECK(one[i].candidates[j].score == four[i].candidates[j].score);
            }
        }
    }
}

TEST_CASE("word average baseline") {
    Vocabulary vocab = Vocabulary::build({{"aa"}, {"bb"}, {"cc"}});
    EmbeddingTable emb;
    emb.table = Mat(2, vocab.size());
    // orthogonal unit embeddings: aa=(1,0), bb=(0,1), cc=(1,0)
    emb.table(0, vocab.lookup("aa")) = 1.0;
    emb.table(1, vocab.lookup("bb")) = 1.0;
    emb.table(0, vocab.lookup("cc")) = 1.0;

    SUBCASE("identical texts score 1") {
        CHECK(word_average_score("aa bb", "aa bb", "aa bb", vocab, emb, TokenizeMode::Whitespace) ==
              doctest::Approx(1.0));
    }

    SUBCASE("orthogonal sentence vectors score 0.5") {
        CHECK(word_average_score("aa", "bb", "bb", vocab, emb, TokenizeMode::Whitespace) ==
              doctest::Approx(0.5));
    }

    SUBCASE("all-OOV query scores 0.5") {
        CHECK(word_average_score("zz yy", "aa", "aa", vocab, emb, TokenizeMode::Whitespace) ==
              doctest::Approx(0.5));
    }

    SUBCASE("synonyms under shared embeddings score 1") {
        CHECK(word_average_score("aa", "cc", "cc", vocab, emb, TokenizeMode::Whitespace) ==
              doctest::Approx(1.0));
    }

    SUBCASE("symmetric in title/answer order") {
        const double ab = word_average_score("aa", "aa bb", "cc", vocab, emb, TokenizeMode::Whitespace);
        const double ba = word_average_score("aa", "cc", "aa bb", vocab, emb, TokenizeMode::Whitespace);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    }
}

TEST_CASE("latency bench") {
    ModelConfig cfg;
    cfg.variant = Variant::Tcnn;
    cfg.s = 6;
    cfg.l = 4;
    cfg.w = 2;
    cfg.d = 3;
    cfg.blocks = 1;
    ModelParams params = ModelParams::init(cfg, 8);
    ProbeTriple probe{{2, 3, 4, 0, 0, 0}, {3, 5, 0, 0, 0, 0}, {6, 7, 2, 0, 0, 0}};

    SUBCASE("argument errors") {
        CHECK_THROWS_AS(latency_bench(params, cfg, {}, 5), ArgError);
        CHECK_THROWS_AS(latency_bench(params, cfg, {probe}, 0), ArgError);
    }

    SUBCASE("ordered statistics") {
        LatencyStats stats = latency_bench(params, cfg, {probe}, 20);
        CHECK(stats.mean_ms > 0.0);
        CHECK(stats.median_ms > 0.0);
        CHECK(stats.p95_ms >= stats.median_ms);
    }
}

TEST_CASE("report formatting") {
    MethodResult mr;
    mr.method = "TCNN";
    mr.report = threshold_sweep(fixture(), std::vector<double>{0.3, 0.5});

    const std::string table = report_table({mr});
    CHECK(table.find("Methods") != std::string::npos);
    CHECK(table.find("Threshold") != std::string::npos);
    CHECK(table.find("Precision@1") != std::string::npos);
    CHECK(table.find("Recall@1") != std::string::npos);
    CHECK(table.find("F1@1") != std::string::npos);
    CHECK(table.find("TCNN") != std::string::npos);

    const std::string json = report_json({mr});
    CHECK(json.find("\"TCNN\"") != std::string::npos);
    CHECK(json.find("threshold") != std::string::npos);
}
