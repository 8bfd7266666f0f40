#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tcnn/bm25.hpp"
#include "tcnn/data.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/gradcheck.hpp"
#include "tcnn/ops.hpp"
#include "tcnn/train.hpp"

namespace py = pybind11;
using namespace tcnn;

namespace {

using PyMat = std::vector<std::vector<double>>;

Mat to_mat(const PyMat& rows) {
    if (rows.empty()) throw ShapeError("matrix must have at least one row");
    Mat m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols) throw ShapeError("ragged matrix rows");
        for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
    }
    return m;
}

PyMat from_mat(const Mat& m) {
    PyMat out(m.rows, std::vector<double>(m.cols));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out[i][j] = m(i, j);
    return out;
}

/// Inference wrapper around a trained checkpoint plus its vocabulary,
/// knowledge base and BM25 index.
class Matcher {
public:
    Matcher(const std::string& checkpoint_path, const std::string& kb_path,
            const std::string& index_path)
        : ckpt_(load_checkpoint(checkpoint_path)),
          vocab_(Vocabulary::load(checkpoint_path + ".vocab")),
          kb_(KnowledgeBase::load(kb_path)),
          index_(Bm25Index::load(index_path)) {}

    double score_triple(const std::string& query, const std::string& title,
                        const std::string& answer) const {
        const TokenizeMode mode = index_.mode();
        const auto& cfg = ckpt_.config;
        return score(encode(tokenize(query, mode), vocab_, cfg.s),
                     encode(tokenize(title, mode), vocab_, cfg.s),
                     encode(tokenize(answer, mode), vocab_, cfg.s), ckpt_.params, cfg);
    }

    std::vector<std::pair<std::string, double>> query(const std::string& text, std::size_t k) const {
        std::vector<std::string> ids;
        for (const auto& [id, bm25_score] : index_.search(text, k)) ids.push_back(id);
        const TripleScorer scorer = [this](const std::string& q, const KnowledgeEntry& e) {
            return score_triple(q, e.title, e.answer);
        };
        std::vector<std::pair<std::string, double>> out;
        for (const Candidate& c : rank_candidates(text, ids, kb_, scorer, {}).candidates) {
            out.emplace_back(c.kb_id, c.score);
        }
        return out;
    }

    std::string variant() const { return to_string(ckpt_.config.variant); }

private:
    Checkpoint ckpt_;
    Vocabulary vocab_;
    KnowledgeBase kb_;
    Bm25Index index_;
};

}  // namespace

PYBIND11_MODULE(_tcnn, m) {
    m.doc() = "triple-tower CNN question-answering matching engine";

    m.def("matmul", [](const PyMat& a, const PyMat& b) { return from_mat(matmul(to_mat(a), to_mat(b))); });
    m.def("cosine", [](const std::vector<double>& u, const std::vector<double>& v) {
        return cosine(u, v);
    });
    m.def("wide_conv_forward",
          [](const PyMat& input, const PyMat& filter, const std::vector<double>& bias, std::size_t w,
             std::size_t channels, std::size_t d_in) {
              const Mat in = to_mat(input);
              if (d_in == 0) d_in = in.rows / channels;
              return from_mat(wide_conv_forward(in, to_mat(filter), bias, w, channels, d_in));
          },
          py::arg("input"), py::arg("filter"), py::arg("bias"), py::arg("w"), py::arg("channels") = 1,
          py::arg("d_in") = 0);
    m.def("avg_pool_window",
          [](const PyMat& m_in, std::size_t w) { return from_mat(avg_pool_window(to_mat(m_in), w)); });
    m.def("weighted_pool_window",
          [](const PyMat& m_in, const std::vector<double>& weights, std::size_t w) {
              return from_mat(weighted_pool_window(to_mat(m_in), weights, w));
          });
    m.def("avg_pool_all", [](const PyMat& m_in) { return avg_pool_all(to_mat(m_in)); });
    m.def("attention_matrix", [](const PyMat& first, const PyMat& second) {
        return from_mat(attention_matrix(to_mat(first), to_mat(second)));
    });
    m.def("pooling_weights", [](const PyMat& a_qt, const PyMat& a_qa) {
        return pooling_weights(to_mat(a_qt), to_mat(a_qa));
    });
    m.def("f1_score", &f1_score);
    m.def("tokenize", [](const std::string& text, const std::string& mode) {
        return tokenize(text, tokenize_mode_from_string(mode));
    }, py::arg("text"), py::arg("mode") = "whitespace");
    m.def("gradient_check", [](const std::string& variant, std::uint64_t seed) {
        return gradient_check(variant_from_string(variant), seed).worst;
    }, py::arg("variant"), py::arg("seed") = 1);
    m.def("generate_synthetic", [](std::uint64_t seed, std::size_t entries, std::size_t queries,
                                   const std::string& out_dir) {
        const SyntheticFiles f = generate_synthetic(seed, entries, queries, out_dir);
        return std::make_pair(f.kb_path, f.dataset_path);
    });

    py::class_<Matcher>(m, "Matcher")
        .def(py::init<const std::string&, const std::string&, const std::string&>(),
             py::arg("checkpoint_path"), py::arg("kb_path"), py::arg("index_path"))
        .def("score_triple", &Matcher::score_triple)
        .def("query", &Matcher::query, py::arg("text"), py::arg("k") = 15)
        .def_property_readonly("variant", &Matcher::variant);
}
