#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcnn/data.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/gradcheck.hpp"
#include "tcnn/train.hpp"

namespace {

using namespace tcnn;

std::size_t env_threads() {
    const char* raw = std::getenv("TCNN_THREADS");
    if (!raw) return 1;
    const long v = std::strtol(raw, nullptr, 10);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
}

void echo(const std::string& key, const std::string& value) {
    std::cerr << "# " << key << "=" << value << "\n";
}

Vocabulary build_vocabulary(const KnowledgeBase& kb, const std::vector<LabeledTriple>& triples,
                            TokenizeMode mode, std::size_t min_count) {
    std::vector<std::vector<std::string>> docs;
    for (const auto& e : kb.entries) {
        docs.push_back(tokenize(e.title, mode));
        docs.push_back(tokenize(e.answer, mode));
    }
    for (const auto& t : triples) docs.push_back(tokenize(t.query, mode));
    return Vocabulary::build(docs, min_count);
}

TripleScorer model_scorer(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                          TokenizeMode mode) {
    return [&params, &cfg, &vocab, mode](const std::string& query, const KnowledgeEntry& entry) {
        return score(encode(tokenize(query, mode), vocab, cfg.s),
                     encode(tokenize(entry.title, mode), vocab, cfg.s),
                     encode(tokenize(entry.answer, mode), vocab, cfg.s), params, cfg);
    };
}

std::vector<EvalQuery> retrieval_queries(const std::vector<LabeledTriple>& triples,
                                         const Bm25Index& index, std::size_t k) {
    std::vector<EvalQuery> queries;
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& t : triples) {
        auto [it, inserted] = seen.try_emplace(t.query, queries.size());
        if (inserted) {
            EvalQuery q;
            q.query = t.query;
            for (const auto& [id, bm25_score] : index.search(t.query, k)) {
                q.candidate_ids.push_back(id);
            }
            queries.push_back(std::move(q));
        }
        queries[it->second].labels[t.kb_id] = std::max(queries[it->second].labels[t.kb_id], t.label);
    }
    return queries;
}

int run(int argc, char** argv) {
    CLI::App app{"TCNN retrieval-based QA matching engine"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; command-line flags win");

    std::uint64_t seed = 1;
    std::size_t threads = env_threads();
    app.add_option("--seed", seed, "global RNG seed");
    app.add_option("--threads", threads, "scoring parallelism (also TCNN_THREADS)");

    // ---- index ----
    auto* cmd_index = app.add_subcommand("index", "build a BM25 index over a knowledge base");
    std::string idx_kb, idx_out, idx_mode = "whitespace";
    Bm25Index::Params bm25_params;
    cmd_index->add_option("--kb", idx_kb, "KB JSONL file")->required();
    cmd_index->add_option("--out", idx_out, "output index file")->required();
    cmd_index->add_option("--k1", bm25_params.k1, "BM25 k1");
    cmd_index->add_option("--b", bm25_params.b, "BM25 b");
    cmd_index->add_option("--title-weight", bm25_params.title_weight, "title field weight");
    cmd_index->add_option("--answer-weight", bm25_params.answer_weight, "answer field weight");
    cmd_index->add_option("--mode", idx_mode, "tokenizer: whitespace | cjk-char");

    // ---- train ----
    auto* cmd_train = app.add_subcommand("train", "train a matching model");
    std::string tr_variant = "tcnn", tr_kb, tr_train, tr_valid, tr_out, tr_mode = "whitespace";
    ModelConfig mcfg;
    TrainConfig tcfg;
    bool two_tower = false;
    cmd_train->add_option("--variant", tr_variant, "tcnn | atcnn1 | atcnn2")->required();
    cmd_train->add_option("--kb", tr_kb, "KB JSONL file")->required();
    cmd_train->add_option("--train", tr_train, "training JSONL file")->required();
    cmd_train->add_option("--valid", tr_valid, "validation JSONL file")->required();
    cmd_train->add_option("--out", tr_out, "output checkpoint path")->required();
    cmd_train->add_option("--mode", tr_mode, "tokenizer: whitespace | cjk-char");
    cmd_train->add_option("--s", mcfg.s, "sequence length");
    cmd_train->add_option("--l", mcfg.l, "embedding dimension");
    cmd_train->add_option("--w", mcfg.w, "convolution window");
    cmd_train->add_option("--d", mcfg.d, "filters per block");
    cmd_train->add_option("--blocks", mcfg.blocks, "convolution blocks");
    cmd_train->add_flag("--two-tower", two_tower, "match (Q,T) only, ignore answers");
    cmd_train->add_option("--lr", tcfg.learning_rate, "AdaGrad learning rate");
    cmd_train->add_option("--lambda", tcfg.lambda, "L2 penalty");
    cmd_train->add_option("--batch", tcfg.batch_size, "batch size");
    cmd_train->add_option("--epochs", tcfg.max_epochs, "max epochs");
    cmd_train->add_option("--patience", tcfg.patience, "early-stopping patience");
    cmd_train->add_option("--pos-weight", tcfg.pos_weight,
                          "positive class weight (<=0: negatives/positives)");

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "retrieve, rerank and report P@1/R@1/F1@1");
    std::string ev_model, ev_kb, ev_index, ev_test, ev_threshold = "auto", ev_json_out;
    std::size_t ev_k = 15;
    double ev_step = 0.01;
    bool ev_baseline = false;
    cmd_eval->add_option("--model", ev_model, "checkpoint file")->required();
    cmd_eval->add_option("--kb", ev_kb, "KB JSONL file")->required();
    cmd_eval->add_option("--index", ev_index, "BM25 index file")->required();
    cmd_eval->add_option("--test", ev_test, "test JSONL file")->required();
    cmd_eval->add_option("--threshold", ev_threshold, "'auto' (sweep) or a fixed value");
    cmd_eval->add_option("--k", ev_k, "candidates per query");
    cmd_eval->add_option("--step", ev_step, "sweep grid step");
    cmd_eval->add_flag("--baseline", ev_baseline, "add a WordAverage baseline row");
    cmd_eval->add_option("--json-out", ev_json_out, "also write the report as JSON");

    // ---- query ----
    auto* cmd_query = app.add_subcommand("query", "answer one question");
    std::string qu_model, qu_kb, qu_index, qu_text;
    std::size_t qu_k = 15;
    double qu_threshold = 0.5;
    cmd_query->add_option("--model", qu_model, "checkpoint file")->required();
    cmd_query->add_option("--kb", qu_kb, "KB JSONL file")->required();
    cmd_query->add_option("--index", qu_index, "BM25 index file")->required();
    cmd_query->add_option("--k", qu_k, "candidates to retrieve");
    cmd_query->add_option("--threshold", qu_threshold, "answer confidence threshold");
    cmd_query->add_option("question", qu_text, "question text");

    // ---- gradcheck ----
    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::string gc_variant = "tcnn";
    cmd_gradcheck->add_option("--variant", gc_variant, "tcnn | atcnn1 | atcnn2");

    // ---- bench ----
    auto* cmd_bench = app.add_subcommand("bench", "per-triple scoring latency");
    std::string be_model;
    std::size_t be_reps = 100;
    cmd_bench->add_option("--model", be_model, "checkpoint file")->required();
    cmd_bench->add_option("--repetitions", be_reps, "timed repetitions per probe");

    // ---- synth ----
    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic FAQ corpus");
    std::size_t sy_entries = 500, sy_queries = 300;
    std::string sy_out = ".";
    cmd_synth->add_option("--entries", sy_entries, "knowledge entries");
    cmd_synth->add_option("--queries", sy_queries, "labeled queries");
    cmd_synth->add_option("--out-dir", sy_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    echo("seed", std::to_string(seed));
    echo("threads", std::to_string(threads));

    if (*cmd_index) {
        echo("kb", idx_kb);
        echo("out", idx_out);
        echo("mode", idx_mode);
        echo("k1", std::to_string(bm25_params.k1));
        echo("b", std::to_string(bm25_params.b));
        const KnowledgeBase kb = KnowledgeBase::load(idx_kb);
        const Bm25Index index = Bm25Index::build(kb, tokenize_mode_from_string(idx_mode), bm25_params);
        index.save(idx_out);
        std::cout << index.doc_count() << " documents, " << index.term_count() << " terms\n";
        return 0;
    }

    if (*cmd_train) {
        mcfg.variant = variant_from_string(tr_variant);
        mcfg.use_answer = !two_tower;
        mcfg.seed = seed;
        tcfg.seed = seed;
        const TokenizeMode mode = tokenize_mode_from_string(tr_mode);
        echo("variant", tr_variant);
        echo("s", std::to_string(mcfg.s));
        echo("l", std::to_string(mcfg.l));
        echo("w", std::to_string(mcfg.w));
        echo("d", std::to_string(mcfg.d));
        echo("blocks", std::to_string(mcfg.blocks));
        echo("use_answer", mcfg.use_answer ? "1" : "0");
        echo("lr", std::to_string(tcfg.learning_rate));
        echo("lambda", std::to_string(tcfg.lambda));
        echo("batch", std::to_string(tcfg.batch_size));
        echo("epochs", std::to_string(tcfg.max_epochs));
        echo("patience", std::to_string(tcfg.patience));

        const KnowledgeBase kb = KnowledgeBase::load(tr_kb);
        const auto train_set = load_dataset(tr_train, kb);
        const auto valid_set = load_dataset(tr_valid, kb);
        const Vocabulary vocab = build_vocabulary(kb, train_set, mode, 1);
        echo("vocab_size", std::to_string(vocab.size()));

        const TrainResult result = train(train_set, valid_set, kb, vocab, mode, mcfg, tcfg);
        save_checkpoint(result.checkpoint, tr_out);
        vocab.save(tr_out + ".vocab");
        nlohmann::json hist = nlohmann::json::array();
        for (const auto& e : result.history) {
            hist.push_back({{"epoch", e.epoch}, {"loss", e.mean_loss}, {"valid_f1", e.valid_f1}});
        }
        std::ofstream hout(tr_out + ".history.json", std::ios::binary);
        hout << hist.dump(2) << "\n";
        std::cout << "best epoch " << result.checkpoint.epoch << ", validation F1@1 "
                  << result.checkpoint.best_valid_f1 << "\n";
        return 0;
    }

    if (*cmd_eval) {
        const Checkpoint ckpt = load_checkpoint(ev_model);
        const Vocabulary vocab = Vocabulary::load(ev_model + ".vocab");
        const KnowledgeBase kb = KnowledgeBase::load(ev_kb);
        const Bm25Index index = Bm25Index::load(ev_index);
        const auto test_set = load_dataset(ev_test, kb);
        const TokenizeMode mode = index.mode();
        echo("model", ev_model);
        echo("variant", to_string(ckpt.config.variant));
        echo("k", std::to_string(ev_k));
        echo("threshold", ev_threshold);

        const auto queries = retrieval_queries(test_set, index, ev_k);
        const auto scorer = model_scorer(ckpt.params, ckpt.config, vocab, mode);
        const auto ranked = rerank_all(queries, kb, scorer, threads);

        std::vector<MethodResult> results;
        if (ev_threshold == "auto") {
            results.push_back({to_string(ckpt.config.variant), threshold_sweep(ranked, ev_step)});
        } else {
            const double tau = std::strtod(ev_threshold.c_str(), nullptr);
            if (!(tau >= 0.0 && tau <= 1.0)) throw ArgError("threshold must be in [0,1] or 'auto'");
            results.push_back(
                {to_string(ckpt.config.variant), threshold_sweep(ranked, std::vector<double>{tau})});
        }
        if (ev_baseline) {
            const TripleScorer wa = [&](const std::string& query, const KnowledgeEntry& entry) {
                return word_average_score(query, entry.title, entry.answer, vocab, ckpt.params.embeddings,
                                          mode);
            };
            const auto wa_ranked = rerank_all(queries, kb, wa, threads);
            results.push_back({"WordAverage", threshold_sweep(wa_ranked, ev_step)});
        }
        std::cout << report_table(results);
        if (!ev_json_out.empty()) {
            std::ofstream jout(ev_json_out, std::ios::binary);
            if (!jout) throw IoError("cannot write report: " + ev_json_out);
            jout << report_json(results) << "\n";
        }
        return 0;
    }

    if (*cmd_query) {
        if (qu_text.empty()) {
            std::cerr << "usage: tcnn query --model M --kb KB --index I \"question text\"\n";
            return 2;
        }
        const Checkpoint ckpt = load_checkpoint(qu_model);
        const Vocabulary vocab = Vocabulary::load(qu_model + ".vocab");
        const KnowledgeBase kb = KnowledgeBase::load(qu_kb);
        const Bm25Index index = Bm25Index::load(qu_index);
        if (index.kb_hash() != ckpt.kb_hash) {
            std::cerr << "model and index disagree on the knowledge base (hash mismatch)\n";
            return 2;
        }
        const auto candidates = index.search(qu_text, qu_k);
        const auto scorer = model_scorer(ckpt.params, ckpt.config, vocab, index.mode());
        std::vector<std::string> ids;
        for (const auto& [id, bm25_score] : candidates) ids.push_back(id);
        const RankedQuery ranked = rank_candidates(qu_text, ids, kb, scorer, {});
        for (const Candidate& c : ranked.candidates) {
            std::cout << c.kb_id << "\t" << c.score << "\t" << kb.get(c.kb_id).title << "\n";
        }
        if (!ranked.candidates.empty() && ranked.candidates.front().score >= qu_threshold) {
            std::cout << "answer: " << kb.get(ranked.candidates.front().kb_id).answer << "\n";
        } else {
            std::cout << "no confident answer\n";
        }
        return 0;
    }

    if (*cmd_gradcheck) {
        echo("variant", gc_variant);
        const GradCheckReport report = gradient_check(variant_from_string(gc_variant), seed);
        std::unordered_map<std::string, double> per_group;
        for (const auto& g : report.groups) {
            const auto base = g.name.substr(0, g.name.find(" ("));
            per_group[base] = std::max(per_group[base], g.max_rel_err);
        }
        std::vector<std::string> names;
        for (const auto& [name, _] : per_group) names.push_back(name);
        std::sort(names.begin(), names.end());
        for (const auto& name : names) {
            std::cout << name << "\tmax_rel_err=" << per_group[name] << "\n";
        }
        std::cout << (report.passed() ? "PASS" : "FAIL") << " worst=" << report.worst << "\n";
        return report.passed() ? 0 : 3;
    }

    if (*cmd_bench) {
        if (be_reps < 1) {
            std::cerr << "bench: --repetitions must be >= 1\n";
            return 2;
        }
        const Checkpoint ckpt = load_checkpoint(be_model);
        std::mt19937_64 rng(seed);
        const std::size_t vocab_size = ckpt.params.embeddings.vocab_size();
        std::uniform_int_distribution<std::uint32_t> dist(1, static_cast<std::uint32_t>(vocab_size - 1));
        std::vector<ProbeTriple> probes(5);
        for (auto& p : probes) {
            p.q_ids.resize(ckpt.config.s);
            p.t_ids.resize(ckpt.config.s);
            p.a_ids.resize(ckpt.config.s);
            for (auto& id : p.q_ids) id = dist(rng);
            for (auto& id : p.t_ids) id = dist(rng);
            for (auto& id : p.a_ids) id = dist(rng);
        }
        const LatencyStats stats = latency_bench(ckpt.params, ckpt.config, probes, be_reps);
        std::cout << "mean " << stats.mean_ms << " ms, median " << stats.median_ms << " ms, p95 "
                  << stats.p95_ms << " ms per triple\n";
        return 0;
    }

    if (*cmd_synth) {
        echo("entries", std::to_string(sy_entries));
        echo("queries", std::to_string(sy_queries));
        echo("out_dir", sy_out);
        std::filesystem::create_directories(sy_out);
        const SyntheticFiles files = generate_synthetic(seed, sy_entries, sy_queries, sy_out);
        std::cout << files.kb_path << "\n" << files.dataset_path << "\n";
        return 0;
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const tcnn::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const tcnn::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const tcnn::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
