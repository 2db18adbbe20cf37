#include "cogspeech/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/jsonw.hpp"
#include "cogspeech/core/rng.hpp"

namespace cogspeech {
namespace {

void check_head(const RegressionHead& head) {
    if (head.W1.rows() != kHiddenDim || head.b1.size() != kHiddenDim ||
        head.W2.cols() != kHiddenDim || head.W2.rows() != 1 ||
        head.W1.cols() < 1) {
        throw ArgumentError("regression head has invalid shapes: W1 " +
                            std::to_string(head.W1.rows()) + "x" +
                            std::to_string(head.W1.cols()));
    }
}

void check_batch(const RegressionHead& head,
                 const std::vector<TrainingExample>& batch) {
    if (batch.empty()) {
        throw ArgumentError("empty batch");
    }
    for (const auto& ex : batch) {
        if (ex.embedding.size() != head.input_dim()) {
            throw ArgumentError("example dimension " +
                                std::to_string(ex.embedding.size()) +
                                " does not match head input " +
                                std::to_string(head.input_dim()));
        }
        if (!std::isfinite(ex.target_normalized)) {
            throw NumericError("non-finite training target for subject " +
                               ex.subject_id);
        }
    }
}

double evaluate_mse(const RegressionHead& head,
                    const std::vector<TrainingExample>& examples) {
    if (examples.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double acc = 0.0;
    for (const auto& ex : examples) {
        const double e = forward(head, ex.embedding) - ex.target_normalized;
        acc += e * e;
    }
    return acc / static_cast<double>(examples.size());
}

struct AdamState {
    Eigen::MatrixXd mW1, vW1;
    Eigen::VectorXd mb1, vb1;
    Eigen::RowVectorXd mW2, vW2;
    double mb2 = 0.0, vb2 = 0.0;
    long t = 0;

    explicit AdamState(const RegressionHead& head)
        : mW1(Eigen::MatrixXd::Zero(head.W1.rows(), head.W1.cols())),
          vW1(Eigen::MatrixXd::Zero(head.W1.rows(), head.W1.cols())),
          mb1(Eigen::VectorXd::Zero(head.b1.size())),
          vb1(Eigen::VectorXd::Zero(head.b1.size())),
          mW2(Eigen::RowVectorXd::Zero(head.W2.cols())),
          vW2(Eigen::RowVectorXd::Zero(head.W2.cols())) {}
};

template <typename P, typename G, typename M>
void adam_update(P& param, const G& grad, M& m, M& v, long t,
                 const TrainConfig& cfg) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = (cfg.adam_beta2 * v.array() +
         (1.0 - cfg.adam_beta2) * grad.array().square())
            .matrix();
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    param.array() -= cfg.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + cfg.adam_epsilon);
}

void adam_update_scalar(double& param, double grad, double& m, double& v,
                        long t, const TrainConfig& cfg) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    param -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) +
                                              cfg.adam_epsilon);
}

}  // namespace

RegressionHead init_head(std::uint64_t seed, int input_dim) {
    if (input_dim < 1) {
        throw ArgumentError("input_dim must be positive");
    }
    RegressionHead head;
    head.W1.resize(kHiddenDim, input_dim);
    head.b1 = Eigen::VectorXd::Zero(kHiddenDim);
    head.W2.resize(kHiddenDim);
    head.b2 = 0.0;

    SplitMix64 rng(mix_seed(seed, 0x1d));
    const double bound1 = std::sqrt(6.0 / (input_dim + kHiddenDim));
    for (Eigen::Index r = 0; r < head.W1.rows(); ++r) {
        for (Eigen::Index c = 0; c < head.W1.cols(); ++c) {
            head.W1(r, c) = rng.next_double(-bound1, bound1);
        }
    }
    const double bound2 = std::sqrt(6.0 / (kHiddenDim + 1));
    for (Eigen::Index c = 0; c < head.W2.cols(); ++c) {
        head.W2(c) = rng.next_double(-bound2, bound2);
    }
    return head;
}

double forward(const RegressionHead& head, const Eigen::VectorXd& h) {
    check_head(head);
    if (h.size() != head.input_dim()) {
        throw ArgumentError("forward: input dimension " +
                            std::to_string(h.size()) + " does not match " +
                            std::to_string(head.input_dim()));
    }
    if (!h.allFinite()) {
        throw NumericError("forward: non-finite input");
    }
    const Eigen::VectorXd hidden =
        ((head.W1 * h + head.b1).array().max(0.0)).matrix();
    return head.W2.dot(hidden) + head.b2;
}

double mse_loss(const Eigen::VectorXd& predictions,
                const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size()) {
        throw ArgumentError("mse_loss: length mismatch (" +
                            std::to_string(predictions.size()) + " vs " +
                            std::to_string(targets.size()) + ")");
    }
    if (predictions.size() == 0) {
        throw ArgumentError("mse_loss: empty input");
    }
    return (predictions - targets).squaredNorm() /
           static_cast<double>(predictions.size());
}

HeadGradients backward(const RegressionHead& head,
                       const std::vector<TrainingExample>& batch) {
    check_head(head);
    check_batch(head, batch);
    const auto n = static_cast<double>(batch.size());

    HeadGradients g;
    g.W1 = Eigen::MatrixXd::Zero(head.W1.rows(), head.W1.cols());
    g.b1 = Eigen::VectorXd::Zero(head.b1.size());
    g.W2 = Eigen::RowVectorXd::Zero(head.W2.cols());
    g.b2 = 0.0;

    for (const auto& ex : batch) {
        const Eigen::VectorXd z = head.W1 * ex.embedding + head.b1;
        const Eigen::VectorXd a = z.array().max(0.0).matrix();
        const double pred = head.W2.dot(a) + head.b2;
        const double dpred = 2.0 * (pred - ex.target_normalized) / n;

        g.W2 += dpred * a.transpose();
        g.b2 += dpred;
        // ReLU gate: strict positivity, so the subgradient at 0 is 0.
        const Eigen::VectorXd dz =
            (z.array() > 0.0)
                .select(head.W2.transpose().array() * dpred, 0.0)
                .matrix();
        g.W1 += dz * ex.embedding.transpose();
        g.b1 += dz;
    }
    return g;
}

TrainResult train(const RegressionHead& initial,
                  const std::vector<TrainingExample>& train_examples,
                  const std::vector<TrainingExample>& dev_examples,
                  const TrainConfig& config) {
    check_head(initial);
    if (train_examples.empty()) {
        throw ArgumentError("train: no training examples");
    }
    check_batch(initial, train_examples);
    if (!dev_examples.empty()) {
        check_batch(initial, dev_examples);
    }
    if (config.learning_rate <= 0.0 || config.epochs < 1 ||
        config.batch_size < 1) {
        throw ArgumentError("train: invalid config");
    }

    RegressionHead head = initial;
    AdamState adam(head);
    SplitMix64 rng(mix_seed(config.seed, 0x7a));

    TrainResult result;
    result.head = head;
    result.history.reserve(static_cast<std::size_t>(config.epochs));
    double best_metric = std::numeric_limits<double>::infinity();
    // Selection falls back to train MSE when no dev set is given.
    const bool select_on_dev = !dev_examples.empty();

    std::vector<std::size_t> order(train_examples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(),
                         start + static_cast<std::size_t>(config.batch_size));
            std::vector<TrainingExample> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(train_examples[order[k]]);
            }
            const HeadGradients g = backward(head, batch);
            if (config.optimizer == Optimizer::Sgd) {
                head.W1 -= config.learning_rate * g.W1;
                head.b1 -= config.learning_rate * g.b1;
                head.W2 -= config.learning_rate * g.W2;
                head.b2 -= config.learning_rate * g.b2;
            } else {
                ++adam.t;
                adam_update(head.W1, g.W1, adam.mW1, adam.vW1, adam.t, config);
                adam_update(head.b1, g.b1, adam.mb1, adam.vb1, adam.t, config);
                adam_update(head.W2, g.W2, adam.mW2, adam.vW2, adam.t, config);
                adam_update_scalar(head.b2, g.b2, adam.mb2, adam.vb2, adam.t,
                                   config);
            }
        }

        EpochStats stats;
        stats.train_mse = evaluate_mse(head, train_examples);
        stats.dev_mse = evaluate_mse(head, dev_examples);
        if (!std::isfinite(stats.train_mse)) {
            throw NumericError("training diverged at epoch " +
                               std::to_string(epoch + 1));
        }
        result.history.push_back(stats);

        const double metric = select_on_dev ? stats.dev_mse : stats.train_mse;
        if (metric < best_metric) {
            best_metric = metric;
            result.head = head;
            result.best_epoch = epoch;
        }
    }
    return result;
}

double predict_subject(const RegressionHead& head,
                       const std::map<TaskKind, Embedding>& embeddings,
                       const NormalizationParams& params,
                       Aggregation aggregation) {
    if (embeddings.empty()) {
        throw ArgumentError("predict_subject: no task embeddings");
    }
    std::vector<double> preds;
    preds.reserve(embeddings.size());
    for (const auto& [task, emb] : embeddings) {
        preds.push_back(forward(head, emb));
    }

    double combined = 0.0;
    if (aggregation == Aggregation::Mean) {
        for (double p : preds) combined += p;
        combined /= static_cast<double>(preds.size());
    } else {
        std::sort(preds.begin(), preds.end());
        const std::size_t mid = preds.size() / 2;
        combined = (preds.size() % 2 == 1)
                       ? preds[mid]
                       : 0.5 * (preds[mid - 1] + preds[mid]);
    }
    const double denorm = denormalize_score(combined, params);
    return std::clamp(denorm, static_cast<double>(kMmseMin),
                      static_cast<double>(kMmseMax));
}

GradCheckResult gradient_check(std::uint64_t seed, int probes, double step,
                               double kink_guard) {
    SplitMix64 rng(mix_seed(seed, 0x6c));
    RegressionHead head = init_head(rng.next_u64());

    std::vector<TrainingExample> batch(8);
    for (auto& ex : batch) {
        ex.embedding.resize(kEmbeddingDim);
        for (Eigen::Index i = 0; i < kEmbeddingDim; ++i) {
            ex.embedding[i] = rng.next_double(-1.0, 1.0);
        }
        ex.embedding.normalize();
        ex.target_normalized = rng.next_double(0.0, 1.0);
    }

    auto loss_at = [&](const RegressionHead& h) {
        Eigen::VectorXd p(batch.size()), t(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            p[static_cast<Eigen::Index>(i)] = forward(h, batch[i].embedding);
            t[static_cast<Eigen::Index>(i)] = batch[i].target_normalized;
        }
        return mse_loss(p, t);
    };

    const HeadGradients g = backward(head, batch);

    GradCheckResult result;
    result.probes = probes;
    int drawn = 0;
    while (drawn < probes) {
        // Parameter classes: 0 -> W1, 1 -> b1, 2 -> W2, 3 -> b2.
        const auto cls = static_cast<int>(rng.next_below(4));
        double analytic = 0.0;
        RegressionHead hp = head, hm = head;
        if (cls == 0 || cls == 1) {
            const auto row =
                static_cast<Eigen::Index>(rng.next_below(kHiddenDim));
            // Re-draw probes whose pre-activation is effectively on the
            // ReLU kink for any batch element.
            bool near_kink = false;
            for (const auto& ex : batch) {
                const double z =
                    head.W1.row(row).dot(ex.embedding) + head.b1[row];
                if (std::abs(z) < kink_guard) {
                    near_kink = true;
                    break;
                }
            }
            if (near_kink) {
                continue;
            }
            if (cls == 0) {
                const auto col = static_cast<Eigen::Index>(
                    rng.next_below(static_cast<std::uint64_t>(head.W1.cols())));
                analytic = g.W1(row, col);
                hp.W1(row, col) += step;
                hm.W1(row, col) -= step;
            } else {
                analytic = g.b1[row];
                hp.b1[row] += step;
                hm.b1[row] -= step;
            }
        } else if (cls == 2) {
            const auto col =
                static_cast<Eigen::Index>(rng.next_below(kHiddenDim));
            analytic = g.W2[col];
            hp.W2[col] += step;
            hm.W2[col] -= step;
        } else {
            analytic = g.b2;
            hp.b2 += step;
            hm.b2 -= step;
        }

        const double numeric = (loss_at(hp) - loss_at(hm)) / (2.0 * step);
        const double denom =
            std::max({std::abs(numeric), std::abs(analytic), 1e-12});
        result.max_relative_error = std::max(
            result.max_relative_error, std::abs(numeric - analytic) / denom);
        ++drawn;
    }
    return result;
}

void save_head_checkpoint(const std::filesystem::path& path,
                          const RegressionHead& head,
                          const NormalizationParams& norm,
                          const TrainConfig& config,
                          const StandardizationParams* acoustic) {
    check_head(head);
    validate_params(norm);
    JsonWriter w;
    w.begin_object();
    w.kv("version", 1);
    w.key("norm");
    w.begin_object();
    w.kv("y_min", norm.y_min);
    w.kv("y_max", norm.y_max);
    w.end_object();
    w.key("W1");
    w.begin_array();
    for (Eigen::Index r = 0; r < head.W1.rows(); ++r) {
        w.begin_array();
        for (Eigen::Index c = 0; c < head.W1.cols(); ++c) {
            w.value(head.W1(r, c));
        }
        w.end_array();
    }
    w.end_array();
    w.key("b1");
    w.begin_array();
    for (Eigen::Index i = 0; i < head.b1.size(); ++i) {
        w.value(head.b1[i]);
    }
    w.end_array();
    w.key("W2");
    w.begin_array();
    w.begin_array();
    for (Eigen::Index c = 0; c < head.W2.cols(); ++c) {
        w.value(head.W2[c]);
    }
    w.end_array();
    w.end_array();
    w.kv("b2", head.b2);
    w.key("config");
    w.begin_object();
    w.kv("learning_rate", config.learning_rate);
    w.kv("epochs", config.epochs);
    w.kv("batch_size", config.batch_size);
    w.kv("optimizer",
         config.optimizer == Optimizer::Adam ? "adam" : "sgd");
    w.kv("init", "glorot_uniform");
    w.end_object();
    w.kv("seed", config.seed);
    if (acoustic != nullptr) {
        w.key("acoustic");
        w.begin_object();
        w.key("mean");
        w.begin_array();
        for (Eigen::Index i = 0; i < acoustic->mean.size(); ++i) {
            w.value(acoustic->mean[i]);
        }
        w.end_array();
        w.key("std");
        w.begin_array();
        for (Eigen::Index i = 0; i < acoustic->std.size(); ++i) {
            w.value(acoustic->std[i]);
        }
        w.end_array();
        w.end_object();
    }
    w.end_object();
    atomic_write_file(path, w.str());
}

HeadCheckpoint load_head_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad head checkpoint " + path.string() + ": " +
                          e.what());
    }
    try {
        HeadCheckpoint ckpt;
        ckpt.norm.y_min = j.at("norm").at("y_min").get<double>();
        ckpt.norm.y_max = j.at("norm").at("y_max").get<double>();

        const auto& w1 = j.at("W1");
        const auto rows = static_cast<Eigen::Index>(w1.size());
        const auto cols =
            rows > 0 ? static_cast<Eigen::Index>(w1.at(0).size()) : 0;
        ckpt.head.W1.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = w1.at(static_cast<std::size_t>(r));
            if (static_cast<Eigen::Index>(row.size()) != cols) {
                throw FormatError("ragged W1 in checkpoint");
            }
            for (Eigen::Index c = 0; c < cols; ++c) {
                ckpt.head.W1(r, c) = row.at(static_cast<std::size_t>(c));
            }
        }
        const auto& b1 = j.at("b1");
        ckpt.head.b1.resize(static_cast<Eigen::Index>(b1.size()));
        for (Eigen::Index i = 0; i < ckpt.head.b1.size(); ++i) {
            ckpt.head.b1[i] = b1.at(static_cast<std::size_t>(i));
        }
        const auto& w2 = j.at("W2").at(0);
        ckpt.head.W2.resize(static_cast<Eigen::Index>(w2.size()));
        for (Eigen::Index i = 0; i < ckpt.head.W2.cols(); ++i) {
            ckpt.head.W2[i] = w2.at(static_cast<std::size_t>(i));
        }
        ckpt.head.b2 = j.at("b2").get<double>();

        const auto& cfg = j.at("config");
        ckpt.config.learning_rate = cfg.at("learning_rate").get<double>();
        ckpt.config.epochs = cfg.at("epochs").get<int>();
        ckpt.config.batch_size = cfg.at("batch_size").get<int>();
        ckpt.config.optimizer = cfg.at("optimizer").get<std::string>() == "sgd"
                                    ? Optimizer::Sgd
                                    : Optimizer::Adam;
        ckpt.config.seed = j.at("seed").get<std::uint64_t>();

        check_head(ckpt.head);
        validate_params(ckpt.norm);
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad head checkpoint " + path.string() + ": " +
                          e.what());
    }
}

}  // namespace cogspeech
