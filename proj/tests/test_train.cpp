#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tcnn/train.hpp"

using namespace tcnn;

namespace {

struct Fixture {
    KnowledgeBase kb;
    Vocabulary vocab;
    ModelConfig cfg;
    std::vector<LabeledTriple> train_set, valid_set;
};

Fixture make_fixture() {
    Fixture fx;
    fx.kb.add({"k1", "refund policy details", "items return within thirty days"});
    fx.kb.add({"k2", "shipping cost table", "standard delivery rates by zone"});
    fx.kb.add({"k3", "password reset steps", "use the account portal link"});
    fx.kb.add({"k4", "order tracking page", "check status with the order number"});

    const std::vector<std::pair<std::string, std::string>> queries = {
        {"how do refund policy details work", "k1"},
        {"where is the shipping cost table", "k2"},
        {"what are the password reset steps", "k3"},
        {"find the order tracking page", "k4"},
    };

    std::vector<std::vector<std::string>> docs;
    for (const auto& e : fx.kb.entries) {
        docs.push_back(tokenize(e.title + " " + e.answer, TokenizeMode::Whitespace));
    }
    for (const auto& [q, id] : queries) docs.push_back(tokenize(q, TokenizeMode::Whitespace));
    fx.vocab = Vocabulary::build(docs);

    // related pair + one unrelated pairing per query
    for (std::size_t i = 0; i < queries.size(); ++i) {
        fx.train_set.push_back({queries[i].first, queries[i].second, 1});
        fx.train_set.push_back({queries[i].first, queries[(i + 1) % queries.size()].second, 0});
    }
    fx.valid_set = fx.train_set;

    fx.cfg.variant = Variant::Tcnn;
    fx.cfg.s = 8;
    fx.cfg.l = 6;
    fx.cfg.w = 2;
    fx.cfg.d = 4;
    fx.cfg.blocks = 1;
    fx.cfg.seed = 3;
    return fx;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("adagrad step") {
    SUBCASE("first step divides by the gradient magnitude") {
        Mat p(1, 1), g(1, 1, {1.0}), acc(1, 1);
        adagrad_step(p, g, acc, 0.1);
        CHECK(p(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
        CHECK(acc(0, 0) == doctest::Approx(1.0));
    }

    SUBCASE("second identical step shrinks by sqrt(2)") {
        Mat p(1, 1), g(1, 1, {1.0}), acc(1, 1);
        adagrad_step(p, g, acc, 0.1);
        adagrad_step(p, g, acc, 0.1);
        CHECK(p(0, 0) == doctest::Approx(-0.17071).epsilon(1e-4));
    }

    SUBCASE("zero gradient leaves the parameter unchanged") {
        Mat p(2, 2, {1, 2, 3, 4}), g(2, 2), acc(2, 2);
        adagrad_step(p, g, acc, 0.5);
        CHECK(p.v == std::vector<double>{1, 2, 3, 4});
    }

    SUBCASE("shape mismatch") {
        Mat p(1, 2), g(2, 1), acc(1, 2);
        CHECK_THROWS_AS(adagrad_step(p, g, acc, 0.1), ShapeError);
    }
}

TEST_CASE("bce loss") {
    CHECK(bce_loss(0.5, 1, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(bce_loss(0.5, 1, 2.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
    CHECK(bce_loss(0.999999, 1, 1.0) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(bce_loss(1e-6, 0, 1.0) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK_THROWS_AS(bce_loss(0.0, 1, 1.0), ArgError);
    CHECK_THROWS_AS(bce_loss(1.0, 1, 1.0), ArgError);
    CHECK_THROWS_AS(bce_loss(0.5, 2, 1.0), ArgError);
}

TEST_CASE("balanced pos_weight zeroes the initial bias gradient") {
    // at initialization every score is 0.5, so the bias gradient is
    // proportional to (neg - pos_weight * pos); pos_weight = neg/pos cancels it
    ModelConfig cfg;
    cfg.s = 5;
    cfg.l = 4;
    cfg.w = 2;
    cfg.d = 3;
    cfg.blocks = 1;
    ModelParams params = ModelParams::init(cfg, 10);

    std::vector<Example> batch;
    for (int i = 0; i < 8; ++i) {
        Example ex;
        ex.q_ids = {2, 3, 0, 0, 0};
        ex.t_ids = {4, 5, 0, 0, 0};
        ex.a_ids = {6, 7, 0, 0, 0};
        ex.label = i < 2 ? 1 : 0;  // 2 positives, 6 negatives
        batch.push_back(ex);
    }
    GradResult gr = gradients(batch, params, cfg, 0.0, 3.0);
    CHECK(gr.grads.out_bias(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("training loop") {
    Fixture fx = make_fixture();
    TrainConfig tcfg;
    tcfg.learning_rate = 0.05;
    tcfg.lambda = 0.0;
    tcfg.batch_size = 4;
    tcfg.max_epochs = 10;
    tcfg.patience = 3;
    tcfg.seed = 5;

    SUBCASE("history and checkpoint are consistent") {
        TrainResult res = train(fx.train_set, fx.valid_set, fx.kb, fx.vocab,
                                TokenizeMode::Whitespace, fx.cfg, tcfg);
        REQUIRE(!res.history.empty());
        double best = 0.0;
        for (const auto& st : res.history) {
            CHECK(std::isfinite(st.mean_loss));
            best = std::max(best, st.valid_f1);
        }
        CHECK(res.checkpoint.best_valid_f1 == doctest::Approx(best));
        CHECK(res.checkpoint.vocab_hash == fx.vocab.hash());
        CHECK(res.checkpoint.kb_hash == hash_kb(fx.kb));
    }

    SUBCASE("PAD embedding column stays exactly zero") {
        TrainResult res = train(fx.train_set, fx.valid_set, fx.kb, fx.vocab,
                                TokenizeMode::Whitespace, fx.cfg, tcfg);
        const Mat& emb = res.checkpoint.params.embeddings.table;
        for (std::size_t i = 0; i < emb.rows; ++i) CHECK(emb(i, kPadId) == 0.0);
    }

    SUBCASE("same seeds give bitwise-identical checkpoints") {
        TrainResult a = train(fx.train_set, fx.valid_set, fx.kb, fx.vocab,
                              TokenizeMode::Whitespace, fx.cfg, tcfg);
        TrainResult b = train(fx.train_set, fx.valid_set, fx.kb, fx.vocab,
                              TokenizeMode::Whitespace, fx.cfg, tcfg);
        save_checkpoint(a.checkpoint, "ckpt_a.bin");
        save_checkpoint(b.checkpoint, "ckpt_b.bin");
        CHECK(slurp("ckpt_a.bin") == slurp("ckpt_b.bin"));
        std::remove("ckpt_a.bin");
        std::remove("ckpt_b.bin");
    }

    SUBCASE("patience 1 with constant validation F1 stops after 2 epochs") {
        // single related candidate per query: sweep always finds F1 = 1
        std::vector<LabeledTriple> frozen_valid = {{fx.train_set[0].query, fx.train_set[0].kb_id, 1}};
        TrainConfig quick = tcfg;
        quick.patience = 1;
        quick.max_epochs = 50;
        TrainResult res = train(fx.train_set, frozen_valid, fx.kb, fx.vocab,
                                TokenizeMode::Whitespace, fx.cfg, quick);
        CHECK(res.history.size() == 2);
    }

    SUBCASE("empty split is rejected") {
        CHECK_THROWS_AS(train({}, fx.valid_set, fx.kb, fx.vocab, TokenizeMode::Whitespace, fx.cfg, tcfg),
                        ArgError);
    }
}

TEST_CASE("checkpoint persistence") {
    Fixture fx = make_fixture();
    Checkpoint ckpt;
    ckpt.config = fx.cfg;
    ckpt.params = ModelParams::init(fx.cfg, fx.vocab.size());
    // non-trivial output layer so round-trip scores are informative
    for (std::size_t i = 0; i < ckpt.params.out_weights.v.size(); ++i) {
        ckpt.params.out_weights.v[i] = 0.37 * static_cast<double>(i + 1);
    }
    ckpt.epoch = 7;
    ckpt.best_valid_f1 = 0.8125;
    ckpt.vocab_hash = fx.vocab.hash();
    ckpt.kb_hash = hash_kb(fx.kb);

    const std::string path = "ckpt_test.bin";
    save_checkpoint(ckpt, path);

    SUBCASE("save, load, save is byte-identical") {
        const std::string first = slurp(path);
        Checkpoint loaded = load_checkpoint(path);
        save_checkpoint(loaded, "ckpt_test2.bin");
        CHECK(slurp("ckpt_test2.bin") == first);
        std::remove("ckpt_test2.bin");
    }

    SUBCASE("round-trip preserves scores bitwise") {
        Checkpoint loaded = load_checkpoint(path);
        CHECK(loaded.epoch == 7);
        CHECK(loaded.best_valid_f1 == 0.8125);
        CHECK(loaded.vocab_hash == ckpt.vocab_hash);
        CHECK(loaded.kb_hash == ckpt.kb_hash);
        const std::vector<std::uint32_t> q{2, 3, 4, 0, 0, 0, 0, 0};
        const std::vector<std::uint32_t> t{5, 6, 0, 0, 0, 0, 0, 0};
        const std::vector<std::uint32_t> a{7, 8, 9, 0, 0, 0, 0, 0};
        CHECK(score(q, t, a, loaded.params, loaded.config) == score(q, t, a, ckpt.params, ckpt.config));
    }

    SUBCASE("truncated file") {
        std::string bytes = slurp(path);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }

    SUBCASE("bad magic") {
        std::string bytes = slurp(path);
        bytes[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }

    SUBCASE("version bump names both versions") {
        std::string bytes = slurp(path);
        bytes[4] = 2;  // u32 LE version field right after the magic
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        try {
            load_checkpoint(path);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("2") != std::string::npos);
            CHECK(msg.find("1") != std::string::npos);
        }
    }

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint("no_such_ckpt.bin"), IoError);
    }

    std::remove(path.c_str());
}
