#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tcnn/data.hpp"
#include "tcnn/text.hpp"

using namespace tcnn;

namespace {

KnowledgeBase two_entry_kb() {
    KnowledgeBase kb;
    kb.add({"k1", "refund policy", "within 30 days"});
    kb.add({"k2", "shipping fee", "standard rates"});
    return kb;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string triple_key(const LabeledTriple& t) {
    return t.query + "\x01" + t.kb_id + "\x01" + std::to_string(t.label);
}

}  // namespace

TEST_CASE("load dataset") {
    const std::string path = "dataset_test.jsonl";
    KnowledgeBase kb = two_entry_kb();

    SUBCASE("empty file gives empty list") {
        write_file(path, "");
        CHECK(load_dataset(path, kb).empty());
    }

    SUBCASE("valid lines load in order") {
        write_file(path,
                   R"({"query":"how do refunds work","kb_id":"k1","label":1})" "\n"
                   R"({"query":"how do refunds work","kb_id":"k2","label":0})" "\n"
                   R"({"query":"what is the shipping fee","kb_id":"k2","label":1})" "\n");
        auto triples = load_dataset(path, kb);
        REQUIRE(triples.size() == 3);
        CHECK(triples[0].kb_id == "k1");
        CHECK(triples[0].label == 1);
        CHECK(triples[2].query == "what is the shipping fee");
    }

    SUBCASE("non-binary label is a parse error naming the line") {
        write_file(path,
                   R"({"query":"q","kb_id":"k1","label":1})" "\n"
                   R"({"query":"q","kb_id":"k1","label":2})" "\n");
        try {
            load_dataset(path, kb);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("2") != std::string::npos);
        }
    }

    SUBCASE("malformed json is a parse error") {
        write_file(path, "{oops\n");
        CHECK_THROWS_AS(load_dataset(path, kb), ParseError);
    }

    SUBCASE("unknown kb id is a data error") {
        write_file(path, R"({"query":"q","kb_id":"nope","label":1})" "\n");
        CHECK_THROWS_AS(load_dataset(path, kb), DataError);
    }

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset("no_such_dataset.jsonl", kb), IoError);
    }

    std::remove(path.c_str());
}

TEST_CASE("split") {
    std::vector<LabeledTriple> triples;
    for (int i = 0; i < 10; ++i) {
        triples.push_back({"query " + std::to_string(i), "k1", i % 2});
    }

    SUBCASE("60/20/20 sizes") {
        Splits s = split(triples, 1);
        CHECK(s.train.size() == 6);
        CHECK(s.valid.size() == 2);
        CHECK(s.test.size() == 2);
    }

    SUBCASE("partition: union equals the input multiset") {
        Splits s = split(triples, 9);
        std::multiset<std::string> in, out;
        for (const auto& t : triples) in.insert(triple_key(t));
        for (const auto& t : s.train) out.insert(triple_key(t));
        for (const auto& t : s.valid) out.insert(triple_key(t));
        for (const auto& t : s.test) out.insert(triple_key(t));
        CHECK(in == out);
    }

    SUBCASE("deterministic per seed") {
        Splits a = split(triples, 42);
        Splits b = split(triples, 42);
        REQUIRE(a.train.size() == b.train.size());
        for (std::size_t i = 0; i < a.train.size(); ++i) {
            CHECK(a.train[i].query == b.train[i].query);
        }
    }

    SUBCASE("different seeds shuffle differently") {
        Splits base = split(triples, 0);
        bool any_differ = false;
        for (std::uint64_t seed = 1; seed <= 20 && !any_differ; ++seed) {
            Splits other = split(triples, seed);
            for (std::size_t i = 0; i < base.train.size(); ++i) {
                if (base.train[i].query != other.train[i].query) {
                    any_differ = true;
                    break;
                }
            }
        }
        CHECK(any_differ);
    }

    SUBCASE("too few triples") {
        std::vector<LabeledTriple> few(triples.begin(), triples.begin() + 4);
        CHECK_THROWS_AS(split(few, 1), ArgError);
    }
}

TEST_CASE("synthetic generator") {
    namespace fs = std::filesystem;
    const std::string dir = "synth_test_out";
    fs::create_directories(dir);

    SUBCASE("same seed gives byte-identical files") {
        SyntheticFiles a = generate_synthetic(7, 20, 60, dir + "/a");
        SyntheticFiles b = generate_synthetic(7, 20, 60, dir + "/b");
        CHECK(slurp(a.kb_path) == slurp(b.kb_path));
        CHECK(slurp(a.dataset_path) == slurp(b.dataset_path));
    }

    SUBCASE("different seeds give different datasets") {
        SyntheticFiles a = generate_synthetic(7, 20, 60, dir + "/a");
        SyntheticFiles c = generate_synthetic(8, 20, 60, dir + "/c");
        CHECK(slurp(a.dataset_path) != slurp(c.dataset_path));
    }

    SUBCASE("output passes its own load validation") {
        SyntheticFiles files = generate_synthetic(3, 15, 50, dir + "/v");
        KnowledgeBase kb = KnowledgeBase::load(files.kb_path);
        CHECK(kb.entries.size() == 15);
        auto triples = load_dataset(files.dataset_path, kb);
        CHECK(triples.size() == 50);
    }

    SUBCASE("labels balanced within 5 percent at 300 queries") {
        SyntheticFiles files = generate_synthetic(42, 25, 300, dir + "/bal");
        KnowledgeBase kb = KnowledgeBase::load(files.kb_path);
        auto triples = load_dataset(files.dataset_path, kb);
        std::size_t pos = 0;
        for (const auto& t : triples) pos += static_cast<std::size_t>(t.label);
        const double frac = static_cast<double>(pos) / static_cast<double>(triples.size());
        CHECK(frac >= 0.45);
        CHECK(frac <= 0.55);
    }

    SUBCASE("related queries share a content token with their entry") {
        SyntheticFiles files = generate_synthetic(11, 20, 120, dir + "/tok");
        KnowledgeBase kb = KnowledgeBase::load(files.kb_path);
        auto triples = load_dataset(files.dataset_path, kb);
        const std::set<std::string> stop = {"a", "an", "the", "is", "my",  "to", "do",
                                            "i",  "how", "can", "of", "for", "on", "what"};
        for (const auto& t : triples) {
            if (t.label != 1) continue;
            const KnowledgeEntry& e = kb.get(t.kb_id);
            auto entry_toks = tokenize(e.title + " " + e.answer, TokenizeMode::Whitespace);
            std::set<std::string> entry_set(entry_toks.begin(), entry_toks.end());
            bool shares = false;
            for (const auto& tok : tokenize(t.query, TokenizeMode::Whitespace)) {
                if (stop.count(tok) == 0 && entry_set.count(tok) > 0) {
                    shares = true;
                    break;
                }
            }
            INFO("query: ", t.query, " entry: ", e.title);
            CHECK(shares);
        }
    }

    SUBCASE("argument checks") {
        CHECK_THROWS_AS(generate_synthetic(1, 5, 50, dir + "/bad"), ArgError);
        CHECK_THROWS_AS(generate_synthetic(1, 20, 5, dir + "/bad"), ArgError);
    }

    fs::remove_all(dir);
}
