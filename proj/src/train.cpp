#include "tcnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace tcnn {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ArgError("TrainConfig: learning rate must be positive");
    if (batch_size < 1) throw ArgError("TrainConfig: batch size must be >= 1");
    if (patience < 1) throw ArgError("TrainConfig: patience must be >= 1");
    if (max_epochs < 1) throw ArgError("TrainConfig: max epochs must be >= 1");
    if (lambda < 0.0) throw ArgError("TrainConfig: lambda must be >= 0");
}

void adagrad_step(Mat& param, const Mat& grad, Mat& accumulator, double lr) {
    if (!param.same_shape(grad) || !param.same_shape(accumulator)) {
        throw ShapeError("adagrad_step: " + param.shape_str() + " / " + grad.shape_str() + " / " +
                         accumulator.shape_str());
    }
    if (!(lr > 0.0)) throw ArgError("adagrad_step: lr must be positive");
    for (std::size_t i = 0; i < param.v.size(); ++i) {
        accumulator.v[i] += grad.v[i] * grad.v[i];
        param.v[i] -= lr * grad.v[i] / std::sqrt(accumulator.v[i] + 1e-8);
    }
}

double bce_loss(double p, int y, double pos_weight) {
    if (!(p > 0.0 && p < 1.0)) throw ArgError("bce_loss: p must be strictly inside (0,1)");
    if (y != 0 && y != 1) throw ArgError("bce_loss: label must be 0 or 1");
    return -(pos_weight * y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

Example make_example(const LabeledTriple& triple, const KnowledgeBase& kb, const Vocabulary& vocab,
                     TokenizeMode mode, std::size_t s) {
    const KnowledgeEntry& entry = kb.get(triple.kb_id);
    Example ex;
    ex.q_ids = encode(tokenize(triple.query, mode), vocab, s);
    ex.t_ids = encode(tokenize(entry.title, mode), vocab, s);
    ex.a_ids = encode(tokenize(entry.answer, mode), vocab, s);
    ex.label = triple.label;
    return ex;
}

std::vector<EvalQuery> queries_from_triples(const std::vector<LabeledTriple>& triples) {
    std::vector<EvalQuery> queries;
    std::unordered_map<std::string, std::size_t> index;
    for (const LabeledTriple& t : triples) {
        auto [it, inserted] = index.try_emplace(t.query, queries.size());
        if (inserted) queries.push_back(EvalQuery{t.query, {}, {}});
        EvalQuery& q = queries[it->second];
        if (!q.labels.count(t.kb_id)) {
            q.candidate_ids.push_back(t.kb_id);
            q.labels.emplace(t.kb_id, t.label);
        }
    }
    return queries;
}

double validation_f1(const std::vector<LabeledTriple>& valid_set, const KnowledgeBase& kb,
                     const Vocabulary& vocab, TokenizeMode mode, const ModelParams& params,
                     const ModelConfig& cfg) {
    const auto queries = queries_from_triples(valid_set);
    const TripleScorer scorer = [&](const std::string& query, const KnowledgeEntry& entry) {
        return score(encode(tokenize(query, mode), vocab, cfg.s),
                     encode(tokenize(entry.title, mode), vocab, cfg.s),
                     encode(tokenize(entry.answer, mode), vocab, cfg.s), params, cfg);
    };
    const auto ranked = rerank_all(queries, kb, scorer);
    return threshold_sweep(ranked).selected.f1;
}

TrainResult train(const std::vector<LabeledTriple>& train_set, const std::vector<LabeledTriple>& valid_set,
                  const KnowledgeBase& kb, const Vocabulary& vocab, TokenizeMode mode,
                  const ModelConfig& cfg, const TrainConfig& tcfg) {
    cfg.validate();
    tcfg.validate();
    if (train_set.empty() || valid_set.empty()) throw ArgError("train: empty split");

    std::vector<Example> examples;
    examples.reserve(train_set.size());
    std::size_t positives = 0;
    for (const LabeledTriple& t : train_set) {
        examples.push_back(make_example(t, kb, vocab, mode, cfg.s));
        positives += t.label;
    }
    double pos_weight = tcfg.pos_weight;
    if (pos_weight <= 0.0) {
        pos_weight = positives == 0 ? 1.0
                                    : static_cast<double>(examples.size() - positives) /
                                          static_cast<double>(positives);
    }

    ModelParams params = ModelParams::init(cfg, vocab.size());
    ModelParams accum = ModelParams::zeros_like(params);

    TrainResult result;
    result.checkpoint.config = cfg;
    result.checkpoint.params = params;
    result.checkpoint.vocab_hash = vocab.hash();
    result.checkpoint.kb_hash = hash_kb(kb);
    double best_f1 = -1.0;
    std::size_t no_improve = 0;

    std::mt19937_64 rng(tcfg.seed);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const std::size_t end = std::min(start + tcfg.batch_size, order.size());
            std::vector<Example> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
            GradResult gr;
            try {
                gr = gradients(batch, params, cfg, tcfg.lambda, pos_weight);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(batches) + ": " + e.what());
            }
            epoch_loss += gr.loss;
            ++batches;

            std::vector<Mat*> grad_tensors;
            gr.grads.for_each_tensor([&](const std::string&, Mat& t) { grad_tensors.push_back(&t); });
            std::vector<Mat*> accum_tensors;
            accum.for_each_tensor([&](const std::string&, Mat& t) { accum_tensors.push_back(&t); });
            std::size_t idx = 0;
            params.for_each_tensor([&](const std::string& name, Mat& t) {
                adagrad_step(t, *grad_tensors[idx], *accum_tensors[idx], tcfg.learning_rate);
                ++idx;
                if (name == "embedding") {
                    for (std::size_t i = 0; i < t.rows; ++i) t(i, kPadId) = 0.0;  // PAD pinned
                }
            });
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = epoch_loss / static_cast<double>(batches);
        stats.valid_f1 = validation_f1(valid_set, kb, vocab, mode, params, cfg);
        result.history.push_back(stats);

        if (stats.valid_f1 > best_f1) {
            best_f1 = stats.valid_f1;
            result.checkpoint.params = params;
            result.checkpoint.epoch = epoch;
            result.checkpoint.best_valid_f1 = best_f1;
            no_improve = 0;
        } else {
            ++no_improve;
            if (no_improve >= tcfg.patience) break;
        }
    }
    return result;
}

namespace {

constexpr char kCkptMagic[4] = {'T', 'C', 'N', 'N'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("checkpoint truncated");
    return value;
}

std::string hex_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return buf;
}

std::string config_blob(const Checkpoint& ckpt) {
    std::ostringstream out;
    out << "variant=" << to_string(ckpt.config.variant) << '\n'
        << "s=" << ckpt.config.s << '\n'
        << "l=" << ckpt.config.l << '\n'
        << "w=" << ckpt.config.w << '\n'
        << "d=" << ckpt.config.d << '\n'
        << "blocks=" << ckpt.config.blocks << '\n'
        << "use_answer=" << (ckpt.config.use_answer ? 1 : 0) << '\n'
        << "seed=" << ckpt.config.seed << '\n'
        << "vocab_size=" << ckpt.params.embeddings.vocab_size() << '\n'
        << "epoch=" << ckpt.epoch << '\n'
        << "best_valid_f1=" << hex_double(ckpt.best_valid_f1) << '\n'
        << "vocab_hash=" << ckpt.vocab_hash << '\n'
        << "kb_hash=" << ckpt.kb_hash << '\n';
    return out.str();
}

std::unordered_map<std::string, std::string> parse_blob(const std::string& blob) {
    std::unordered_map<std::string, std::string> kv;
    std::istringstream in(blob);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint config: malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kCkptMagic, 4);
    write_pod<std::uint32_t>(out, ckpt.version);
    const std::string blob = config_blob(ckpt);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    std::vector<std::pair<std::string, const Mat*>> tensors;
    ckpt.params.for_each_tensor([&](const std::string& name, const Mat& t) {
        tensors.emplace_back(name, &t);
    });
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint64_t>(out, t->rows);
        write_pod<std::uint64_t>(out, t->cols);
        out.write(reinterpret_cast<const char*>(t->v.data()),
                  static_cast<std::streamsize>(t->v.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0) throw DataError("not a checkpoint: " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != 1) {
        throw DataError("checkpoint version " + std::to_string(version) + ", this build reads version 1");
    }
    const auto blob_len = read_pod<std::uint32_t>(in);
    std::string blob(blob_len, '\0');
    in.read(blob.data(), blob_len);
    if (!in) throw DataError("checkpoint truncated");
    const auto kv = parse_blob(blob);
    const auto field = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("checkpoint config missing key: " + key);
        return it->second;
    };

    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.config.variant = variant_from_string(field("variant"));
    ckpt.config.s = std::stoull(field("s"));
    ckpt.config.l = std::stoull(field("l"));
    ckpt.config.w = std::stoull(field("w"));
    ckpt.config.d = std::stoull(field("d"));
    ckpt.config.blocks = std::stoull(field("blocks"));
    ckpt.config.use_answer = field("use_answer") == "1";
    ckpt.config.seed = std::stoull(field("seed"));
    ckpt.epoch = std::stoull(field("epoch"));
    ckpt.best_valid_f1 = std::strtod(field("best_valid_f1").c_str(), nullptr);
    ckpt.vocab_hash = std::stoull(field("vocab_hash"));
    ckpt.kb_hash = std::stoull(field("kb_hash"));
    const std::size_t vocab_size = std::stoull(field("vocab_size"));

    ckpt.params = ModelParams::zeros_like(ModelParams::init(ckpt.config, vocab_size));
    std::unordered_map<std::string, Mat*> layout;
    ckpt.params.for_each_tensor([&](const std::string& name, Mat& t) { layout.emplace(name, &t); });

    const auto n_tensors = read_pod<std::uint32_t>(in);
    if (n_tensors != layout.size()) {
        throw DataError("checkpoint corrupt: " + std::to_string(n_tensors) + " tensors, expected " +
                        std::to_string(layout.size()));
    }
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = read_pod<std::uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("checkpoint truncated");
        const auto rows = read_pod<std::uint64_t>(in);
        const auto cols = read_pod<std::uint64_t>(in);
        auto it = layout.find(name);
        if (it == layout.end()) throw DataError("checkpoint corrupt: unexpected tensor " + name);
        Mat& t = *it->second;
        if (t.rows != rows || t.cols != cols) {
            throw DataError("checkpoint corrupt: tensor " + name + " is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", config expects " + t.shape_str());
        }
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!in) throw DataError("checkpoint truncated");
    }
    return ckpt;
}

}  // namespace tcnn
