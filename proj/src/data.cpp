#include "tcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

namespace tcnn {

std::vector<LabeledTriple> load_dataset(const std::string& path, const KnowledgeBase& kb) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read dataset file: " + path);
    std::vector<LabeledTriple> triples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("query") || !j.contains("kb_id") || !j.contains("label")) {
            throw ParseError("dataset line " + std::to_string(lineno) + ": missing query/kb_id/label");
        }
        if (!j["label"].is_number_integer()) {
            throw ParseError("dataset line " + std::to_string(lineno) + ": label must be an integer");
        }
        const int label = j["label"].get<int>();
        if (label != 0 && label != 1) {
            throw ParseError("dataset line " + std::to_string(lineno) + ": label " +
                             std::to_string(label) + " not in {0,1}");
        }
        LabeledTriple t{j["query"].get<std::string>(), j["kb_id"].get<std::string>(), label};
        if (!kb.contains(t.kb_id)) {
            throw DataError("dataset line " + std::to_string(lineno) + ": unknown kb_id " + t.kb_id);
        }
        triples.push_back(std::move(t));
    }
    return triples;
}

Splits split(const std::vector<LabeledTriple>& triples, std::uint64_t seed) {
    if (triples.size() < 5) {
        throw ArgError("split: need at least 5 triples, got " + std::to_string(triples.size()));
    }
    std::vector<LabeledTriple> shuffled = triples;
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto n = shuffled.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    Splits out;
    out.seed = seed;
    out.train.assign(shuffled.begin(), shuffled.begin() + n_train);
    out.valid.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_valid);
    out.test.assign(shuffled.begin() + n_train + n_valid, shuffled.end());
    return out;
}

namespace {

const std::vector<std::string> kItems = {
    "jacket", "phone", "blender", "sofa", "laptop", "headphones", "watch", "camera", "printer",
    "keyboard", "backpack", "monitor", "kettle", "mattress", "bicycle", "charger", "speaker",
    "tablet", "vacuum", "drone", "toaster", "lamp", "router", "grill", "scooter"};

const std::vector<std::string> kQualifiers = {
    "red", "blue", "green", "black", "white", "silver", "golden", "compact", "wireless", "vintage",
    "foldable", "premium", "budget", "ceramic", "leather", "bamboo", "chrome", "matte", "slim",
    "rugged", "smart", "turbo", "classic", "deluxe", "mini"};

struct DomainSpec {
    std::string title_fmt;   // {q} {item} placeholders
    std::string answer_fmt;
    std::vector<std::string> query_fmts;
};

// four FAQ domains; every template keeps the {q} {item} tokens so related
// queries always share content tokens with their entry
const std::vector<DomainSpec> kDomains = {
    {"how do i track my {q} {item} order",
     "your {q} {item} order can be tracked from the orders page once it has shipped",
     {"how to track my {q} {item} order", "where is my {q} {item} order",
      "can i trace the {q} {item} purchase", "track {q} {item} order status"}},
    {"how long does shipping take for the {q} {item}",
     "standard shipping for the {q} {item} usually takes three to five business days",
     {"when will my {q} {item} arrive", "how long is delivery for the {q} {item}",
      "shipping time for {q} {item}", "{q} {item} delivery how many days"}},
    {"how do i return my {q} {item}",
     "to return your {q} {item} open the returns page and print the prepaid label",
     {"how to return the {q} {item}", "can i get a refund for my {q} {item}",
      "i want to send the {q} {item} back", "refund the {q} {item} please"}},
    {"how do i update my account for the {q} {item} purchase",
     "account details for your {q} {item} purchase can be updated in the profile settings",
     {"how to change my account for the {q} {item} purchase",
      "update account details after buying the {q} {item}",
      "edit my profile for the {q} {item} order", "account settings for my {q} {item}"}}};

std::string fill(std::string fmt, const std::string& q, const std::string& item) {
    const auto replace = [&](const std::string& key, const std::string& value) {
        const auto pos = fmt.find(key);
        if (pos != std::string::npos) fmt.replace(pos, key.size(), value);
    };
    replace("{q}", q);
    replace("{item}", item);
    return fmt;
}

struct EntrySeed {
    std::size_t domain;
    std::string qualifier;
    std::string item;
};

EntrySeed entry_seed(std::size_t i) {
    const std::size_t combos = kItems.size() * kQualifiers.size();
    const std::size_t combo = i % combos;
    const std::size_t series = i / combos;
    EntrySeed seed;
    seed.domain = i % kDomains.size();
    seed.qualifier = kQualifiers[combo % kQualifiers.size()];
    seed.item = kItems[combo / kQualifiers.size()];
    if (series > 0) seed.item += " gen" + std::to_string(series + 1);
    return seed;
}

}  // namespace

SyntheticFiles generate_synthetic(std::uint64_t seed, std::size_t n_entries, std::size_t n_queries,
                                  const std::string& out_dir) {
    if (n_entries < 10) throw ArgError("generate_synthetic: need n_entries >= 10");
    if (n_queries < 10) throw ArgError("generate_synthetic: need n_queries >= 10");

    std::mt19937_64 rng(seed);
    KnowledgeBase kb;
    for (std::size_t i = 0; i < n_entries; ++i) {
        const EntrySeed es = entry_seed(i);
        const DomainSpec& dom = kDomains[es.domain];
        KnowledgeEntry entry;
        entry.id = "kb" + std::to_string(i);
        entry.title = fill(dom.title_fmt, es.qualifier, es.item);
        entry.answer = fill(dom.answer_fmt, es.qualifier, es.item);
        kb.add(std::move(entry));
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    SyntheticFiles files;
    files.kb_path = out_dir + "/kb.jsonl";
    files.dataset_path = out_dir + "/dataset.jsonl";

    std::ofstream kb_out(files.kb_path, std::ios::binary);
    if (!kb_out) throw IoError("cannot write KB file: " + files.kb_path);
    for (const auto& e : kb.entries) {
        nlohmann::json j{{"id", e.id}, {"title", e.title}, {"answer", e.answer}};
        kb_out << j.dump() << '\n';
    }

    std::ofstream ds_out(files.dataset_path, std::ios::binary);
    if (!ds_out) throw IoError("cannot write dataset file: " + files.dataset_path);
    std::uniform_int_distribution<std::size_t> pick_entry(0, n_entries - 1);
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
        const int label = qi % 2 == 0 ? 1 : 0;
        const std::size_t src = pick_entry(rng);
        const EntrySeed es = entry_seed(src);
        const DomainSpec& dom = kDomains[es.domain];
        std::uniform_int_distribution<std::size_t> pick_fmt(0, dom.query_fmts.size() - 1);
        const std::string query = fill(dom.query_fmts[pick_fmt(rng)], es.qualifier, es.item);
        std::size_t target = src;
        if (label == 0) {
            while (target == src) target = pick_entry(rng);
        }
        nlohmann::json j{{"query", query}, {"kb_id", "kb" + std::to_string(target)}, {"label", label}};
        ds_out << j.dump() << '\n';
    }
    return files;
}

}  // namespace tcnn
