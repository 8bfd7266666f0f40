#include "tcnn/gradcheck.hpp"

#include <cmath>
#include <random>

namespace tcnn {

namespace {

std::vector<std::uint32_t> random_ids(std::size_t s, std::size_t vocab_size, std::mt19937_64& rng) {
    // a couple of PAD positions at the tail, like a short real sentence
    std::uniform_int_distribution<std::uint32_t> dist(1, static_cast<std::uint32_t>(vocab_size - 1));
    std::vector<std::uint32_t> ids(s, kPadId);
    const std::size_t filled = s > 2 ? s - 2 : s;
    for (std::size_t i = 0; i < filled; ++i) ids[i] = dist(rng);
    return ids;
}

}  // namespace

GradCheckReport gradient_check(Variant variant, std::uint64_t seed, std::size_t n_batches,
                               bool use_answer) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.s = 7;
    cfg.l = 8;
    cfg.d = 6;
    cfg.w = 3;
    cfg.blocks = 2;
    cfg.use_answer = use_answer;
    cfg.seed = seed;
    const std::size_t vocab_size = 12;
    const double eps = 1e-5;
    const double lambda = 1e-3;
    const double pos_weight = 1.3;

    ModelParams params = ModelParams::init(cfg, vocab_size);
    // a zero output layer would hide most of the graph from the check
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> out_dist(-0.5, 0.5);
    for (double& x : params.out_weights.v) x = out_dist(rng);
    params.out_bias(0, 0) = out_dist(rng);

    GradCheckReport report;
    std::uniform_int_distribution<int> label_dist(0, 1);
    for (std::size_t b = 0; b < n_batches; ++b) {
        std::vector<Example> batch;
        for (std::size_t e = 0; e < 2; ++e) {
            Example ex;
            ex.q_ids = random_ids(cfg.s, vocab_size, rng);
            ex.t_ids = random_ids(cfg.s, vocab_size, rng);
            ex.a_ids = random_ids(cfg.s, vocab_size, rng);
            ex.label = label_dist(rng);
            batch.push_back(std::move(ex));
        }

        GradResult analytic = gradients(batch, params, cfg, lambda, pos_weight);

        std::vector<const Mat*> analytic_tensors;
        analytic.grads.for_each_tensor(
            [&](const std::string&, const Mat& t) { analytic_tensors.push_back(&t); });

        std::size_t idx = 0;
        params.for_each_tensor([&](const std::string& name, Mat& t) {
            const Mat& ga = *analytic_tensors[idx++];
            double max_diff = 0.0;
            double max_fd = 0.0;
            for (std::size_t i = 0; i < t.v.size(); ++i) {
                if (name == "embedding" && i % t.cols == kPadId) continue;  // pinned column
                const double orig = t.v[i];
                t.v[i] = orig + eps;
                const double fp = batch_loss(batch, params, cfg, lambda, pos_weight);
                t.v[i] = orig - eps;
                const double fm = batch_loss(batch, params, cfg, lambda, pos_weight);
                t.v[i] = orig;
                const double fd = (fp - fm) / (2.0 * eps);
                max_diff = std::max(max_diff, std::fabs(ga.v[i] - fd));
                max_fd = std::max(max_fd, std::fabs(fd));
            }
            const double rel = max_diff / std::max(1.0, max_fd);
            const std::string group = name + " (batch " + std::to_string(b) + ")";
            report.groups.push_back({group, rel});
            report.worst = std::max(report.worst, rel);
        });
    }
    return report;
}

}  // namespace tcnn
