#include "tcnn/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace tcnn {

KnowledgeBase KnowledgeBase::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read KB file: " + path);
    KnowledgeBase kb;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("KB line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("id") || !j.contains("title") || !j.contains("answer")) {
            throw ParseError("KB line " + std::to_string(lineno) + ": missing id/title/answer");
        }
        KnowledgeEntry entry{j["id"].get<std::string>(), j["title"].get<std::string>(),
                             j["answer"].get<std::string>()};
        if (entry.title.empty()) {
            throw ParseError("KB line " + std::to_string(lineno) + ": empty title");
        }
        kb.add(std::move(entry));
    }
    return kb;
}

void KnowledgeBase::add(KnowledgeEntry entry) {
    if (by_id.count(entry.id)) throw DataError("duplicate KB id: " + entry.id);
    by_id.emplace(entry.id, entries.size());
    entries.push_back(std::move(entry));
}

const KnowledgeEntry& KnowledgeBase::get(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown KB id: " + id);
    return entries[it->second];
}

std::uint64_t hash_kb(const KnowledgeBase& kb) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&](const std::string& s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        h ^= 0x1F;
        h *= 1099511628211ULL;
    };
    for (const auto& e : kb.entries) {
        mix(e.id);
        mix(e.title);
        mix(e.answer);
    }
    return h;
}

Bm25Index Bm25Index::build(const KnowledgeBase& kb, TokenizeMode mode, const Params& params) {
    Bm25Index index;
    index.mode_ = mode;
    index.params_ = params;
    index.kb_hash_ = hash_kb(kb);
    std::uint64_t total_len[2] = {0, 0};
    for (std::size_t doc = 0; doc < kb.entries.size(); ++doc) {
        const auto& e = kb.entries[doc];
        index.doc_ids_.push_back(e.id);
        std::array<std::uint32_t, 2> lens{0, 0};
        for (int field = 0; field < kNumFields; ++field) {
            const auto tokens = tokenize(field == 0 ? e.title : e.answer, mode);
            lens[field] = static_cast<std::uint32_t>(tokens.size());
            total_len[field] += tokens.size();
            std::unordered_map<std::string, std::uint32_t> tf;
            for (const auto& tok : tokens) ++tf[tok];
            for (const auto& [tok, count] : tf) {
                index.postings_[tok].push_back(
                    {static_cast<std::uint32_t>(doc), static_cast<std::uint8_t>(field), count});
            }
        }
        index.doc_lengths_.push_back(lens);
    }
    for (int field = 0; field < kNumFields; ++field) {
        index.avg_length_[field] = index.doc_ids_.empty()
                                       ? 0.0
                                       : static_cast<double>(total_len[field]) / index.doc_ids_.size();
    }
    // deterministic posting order regardless of hash-map iteration
    for (auto& [tok, list] : index.postings_) {
        std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) {
            return a.doc != b.doc ? a.doc < b.doc : a.field < b.field;
        });
    }
    return index;
}

std::vector<std::pair<std::string, double>> Bm25Index::search(const std::string& query,
                                                              std::size_t k) const {
    if (k < 1) throw ArgError("search: k must be >= 1");
    const auto terms = tokenize(query, mode_);
    const double n_docs = static_cast<double>(doc_ids_.size());
    std::unordered_map<std::uint32_t, double> scores;
    for (const auto& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        // document frequency over documents containing the term in any field
        std::size_t df = 0;
        std::uint32_t last_doc = UINT32_MAX;
        for (const Posting& p : it->second) {
            if (p.doc != last_doc) {
                ++df;
                last_doc = p.doc;
            }
        }
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const Posting& p : it->second) {
            const double len = doc_lengths_[p.doc][p.field];
            const double avg = avg_length_[p.field];
            const double norm = p.tf * (params_.k1 + 1.0) /
                                (p.tf + params_.k1 * (1.0 - params_.b + params_.b * len / avg));
            const double field_weight = p.field == 0 ? params_.title_weight : params_.answer_weight;
            scores[p.doc] += field_weight * idf * norm;
        }
    }
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(scores.size());
    for (const auto& [doc, sc] : scores) ranked.emplace_back(doc_ids_[doc], sc);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("index file truncated");
    return value;
}

void write_str(std::ofstream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::ifstream& in) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw DataError("index file truncated");
    return s;
}

constexpr char kIndexMagic[4] = {'B', 'M', '2', '5'};

}  // namespace

void Bm25Index::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write index file: " + path);
    out.write(kIndexMagic, 4);
    write_pod<std::uint32_t>(out, 1);  // format version
    write_pod<std::uint8_t>(out, mode_ == TokenizeMode::Whitespace ? 0 : 1);
    write_pod<double>(out, params_.k1);
    write_pod<double>(out, params_.b);
    write_pod<double>(out, params_.title_weight);
    write_pod<double>(out, params_.answer_weight);
    write_pod<std::uint64_t>(out, kb_hash_);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(doc_ids_.size()));
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        write_str(out, doc_ids_[i]);
        write_pod<std::uint32_t>(out, doc_lengths_[i][0]);
        write_pod<std::uint32_t>(out, doc_lengths_[i][1]);
    }
    std::vector<std::string> terms;
    terms.reserve(postings_.size());
    for (const auto& [tok, _] : postings_) terms.push_back(tok);
    std::sort(terms.begin(), terms.end());
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(terms.size()));
    for (const auto& term : terms) {
        write_str(out, term);
        const auto& list = postings_.at(term);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(list.size()));
        for (const Posting& p : list) {
            write_pod<std::uint32_t>(out, p.doc);
            write_pod<std::uint8_t>(out, p.field);
            write_pod<std::uint32_t>(out, p.tf);
        }
    }
    if (!out) throw IoError("failed writing index file: " + path);
}

Bm25Index Bm25Index::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read index file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kIndexMagic, 4) != 0) throw DataError("not a BM25 index file: " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != 1) throw DataError("unsupported index version " + std::to_string(version));
    Bm25Index index;
    index.mode_ = read_pod<std::uint8_t>(in) == 0 ? TokenizeMode::Whitespace : TokenizeMode::CjkChar;
    index.params_.k1 = read_pod<double>(in);
    index.params_.b = read_pod<double>(in);
    index.params_.title_weight = read_pod<double>(in);
    index.params_.answer_weight = read_pod<double>(in);
    index.kb_hash_ = read_pod<std::uint64_t>(in);
    const auto n_docs = read_pod<std::uint32_t>(in);
    std::uint64_t total_len[2] = {0, 0};
    for (std::uint32_t i = 0; i < n_docs; ++i) {
        index.doc_ids_.push_back(read_str(in));
        std::array<std::uint32_t, 2> lens{read_pod<std::uint32_t>(in), read_pod<std::uint32_t>(in)};
        total_len[0] += lens[0];
        total_len[1] += lens[1];
        index.doc_lengths_.push_back(lens);
    }
    for (int f = 0; f < 2; ++f) {
        index.avg_length_[f] = n_docs == 0 ? 0.0 : static_cast<double>(total_len[f]) / n_docs;
    }
    const auto n_terms = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_terms; ++i) {
        const std::string term = read_str(in);
        const auto n_postings = read_pod<std::uint32_t>(in);
        auto& list = index.postings_[term];
        list.reserve(n_postings);
        for (std::uint32_t p = 0; p < n_postings; ++p) {
            Posting posting{};
            posting.doc = read_pod<std::uint32_t>(in);
            posting.field = read_pod<std::uint8_t>(in);
            posting.tf = read_pod<std::uint32_t>(in);
            list.push_back(posting);
        }
    }
    return index;
}

}  // namespace tcnn
