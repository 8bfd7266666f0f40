#include "tcnn/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace tcnn {

namespace {

// Decodes one UTF-8 codepoint starting at i; advances i past it. Malformed
// bytes are passed through as single-byte codepoints.
char32_t next_codepoint(const std::string& s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return b0;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const unsigned char bk = byte(i + k);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

bool is_space_cp(char32_t cp) {
    switch (cp) {
        case U'\t': case U'\n': case U'\v': case U'\f': case U'\r': case U' ':
        case 0x0085: case 0x00A0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_cjk_cp(char32_t cp) {
    return (cp >= 0x3040 && cp <= 0x30FF) ||    // kana
           (cp >= 0x3400 && cp <= 0x4DBF) ||    // CJK ext A
           (cp >= 0x4E00 && cp <= 0x9FFF) ||    // CJK unified
           (cp >= 0xAC00 && cp <= 0xD7AF) ||    // hangul
           (cp >= 0xF900 && cp <= 0xFAFF) ||    // compatibility ideographs
           (cp >= 0x20000 && cp <= 0x2FA1F);    // ext B..F
}

void append_codepoint(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text, TokenizeMode mode) {
    std::vector<std::string> tokens;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = next_codepoint(text, i);
        if (is_space_cp(cp)) {
            flush();
        } else if (mode == TokenizeMode::CjkChar && is_cjk_cp(cp)) {
            flush();
            std::string one;
            append_codepoint(one, cp);
            tokens.push_back(one);
        } else if (cp < 0x80) {
            current.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
        } else {
            append_codepoint(current, cp);
        }
    }
    flush();
    return tokens;
}

TokenizeMode tokenize_mode_from_string(const std::string& s) {
    if (s == "whitespace") return TokenizeMode::Whitespace;
    if (s == "cjk-char") return TokenizeMode::CjkChar;
    throw ArgError("unknown tokenize mode: " + s);
}

std::string to_string(TokenizeMode mode) {
    return mode == TokenizeMode::Whitespace ? "whitespace" : "cjk-char";
}

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& docs, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> order;
    for (const auto& doc : docs) {
        for (const auto& tok : doc) {
            auto [it, inserted] = counts.try_emplace(tok, 0);
            if (inserted) order.push_back(tok);
            ++it->second;
        }
    }
    Vocabulary vocab;
    for (const auto& tok : order) {
        if (counts[tok] >= min_count) vocab.add(tok);
    }
    return vocab;
}

std::uint32_t Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

std::uint32_t Vocabulary::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(id_to_token_.size());
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (std::size_t id = 0; id < id_to_token_.size(); ++id) {
        out << id_to_token_[id] << '\t' << id << '\n';
    }
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("vocabulary line " + std::to_string(lineno) + ": missing tab");
        }
        const std::string token = line.substr(0, tab);
        const auto id = static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1)));
        if (id < 2) continue;  // PAD/UNK preallocated
        if (vocab.add(token) != id) {
            throw ParseError("vocabulary line " + std::to_string(lineno) + ": non-dense id " +
                             std::to_string(id));
        }
    }
    return vocab;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&](unsigned char b) {
        h ^= b;
        h *= 1099511628211ULL;
    };
    for (const auto& tok : id_to_token_) {
        for (char c : tok) mix(static_cast<unsigned char>(c));
        mix('\n');
    }
    return h;
}

std::vector<std::uint32_t> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                  std::size_t s) {
    if (s < 1) throw ArgError("encode: sequence length must be >= 1");
    std::vector<std::uint32_t> ids(s, kPadId);
    const std::size_t n = std::min(tokens.size(), s);
    for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.lookup(tokens[i]);
    return ids;
}

EmbeddingTable EmbeddingTable::random_init(std::size_t l, std::size_t vocab_size, std::uint64_t seed) {
    EmbeddingTable emb;
    emb.table = Mat(l, vocab_size);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = 1; j < vocab_size; ++j) {  // column 0 (PAD) stays zero
            emb.table(i, j) = dist(rng);
        }
    }
    return emb;
}

void EmbeddingTable::load_pretrained(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read pretrained vectors: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string token;
        iss >> token;
        const std::uint32_t id = vocab.lookup(token);
        if (id == kUnkId && token != vocab.token(kUnkId)) continue;  // not in vocabulary
        std::vector<double> vec;
        double x;
        while (iss >> x) vec.push_back(x);
        if (vec.size() != dim()) {
            throw ParseError("pretrained line " + std::to_string(lineno) + ": " +
                             std::to_string(vec.size()) + " values, expected " + std::to_string(dim()));
        }
        if (id == kPadId) continue;
        for (std::size_t i = 0; i < dim(); ++i) table(i, id) = vec[i];
    }
}

Mat EmbeddingTable::embed(const std::vector<std::uint32_t>& ids) const {
    Mat out(dim(), ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (ids[j] >= vocab_size()) {
            throw DataError("embed: id " + std::to_string(ids[j]) + " out of range (V=" +
                            std::to_string(vocab_size()) + ")");
        }
        for (std::size_t i = 0; i < dim(); ++i) out(i, j) = table(i, ids[j]);
    }
    return out;
}

void embed_backward(const std::vector<std::uint32_t>& ids, const Mat& d_map, Mat& d_table) {
    if (d_map.cols != ids.size() || d_map.rows != d_table.rows) {
        throw ShapeError("embed_backward: shape mismatch");
    }
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (ids[j] == kPadId) continue;
        for (std::size_t i = 0; i < d_map.rows; ++i) d_table(i, ids[j]) += d_map(i, j);
    }
}

}  // namespace tcnn
