#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "tcnn/mat.hpp"

namespace tcnn {

enum class TokenizeMode { Whitespace, CjkChar };

/// Lowercased tokens split on Unicode whitespace; CjkChar additionally emits
/// each CJK codepoint as its own token. Total on any UTF-8 input.
std::vector<std::string> tokenize(const std::string& text, TokenizeMode mode);

TokenizeMode tokenize_mode_from_string(const std::string& s);
std::string to_string(TokenizeMode mode);

constexpr std::uint32_t kPadId = 0;
constexpr std::uint32_t kUnkId = 1;

class Vocabulary {
public:
    Vocabulary();

    /// Ids are assigned densely in first-seen order after PAD/UNK; tokens
    /// below min_count are dropped (they map to UNK at lookup time).
    static Vocabulary build(const std::vector<std::vector<std::string>>& docs, std::size_t min_count = 1);

    std::uint32_t lookup(const std::string& token) const;  // unseen -> kUnkId
    std::uint32_t add(const std::string& token);           // idempotent
    std::size_t size() const { return id_to_token_.size(); }

    const std::string& token(std::uint32_t id) const { return id_to_token_.at(id); }

    void save(const std::string& path) const;  // "token<TAB>id" lines
    static Vocabulary load(const std::string& path);

    /// FNV-1a over the id-ordered token list; ties a checkpoint to its vocab.
    std::uint64_t hash() const;

private:
    std::unordered_map<std::string, std::uint32_t> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// Map tokens to ids, truncate to s, right-pad with PAD.
std::vector<std::uint32_t> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                  std::size_t s);

/// Columns are embedding vectors; column 0 (PAD) is pinned to zero and is
/// never updated by training.
struct EmbeddingTable {
    Mat table;  // l x V

    std::size_t dim() const { return table.rows; }
    std::size_t vocab_size() const { return table.cols; }

    static EmbeddingTable random_init(std::size_t l, std::size_t vocab_size, std::uint64_t seed);

    /// "token v1 ... vl" per line; tokens absent from the file keep their
    /// random initialization.
    void load_pretrained(const std::string& path, const Vocabulary& vocab);

    Mat embed(const std::vector<std::uint32_t>& ids) const;  // l x ids.size()
};

/// Scatter a d(loss)/d(embedded map) back into table columns. The PAD column
/// never receives gradient.
void embed_backward(const std::vector<std::uint32_t>& ids, const Mat& d_map, Mat& d_table);

}  // namespace tcnn
