#include "cogspeech/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/fnv.hpp"
#include "cogspeech/core/jsonw.hpp"
#include "cogspeech/core/rng.hpp"

namespace cogspeech {
namespace {

void check_labels(const std::vector<int>& labels, Eigen::Index n_rows,
                  std::size_t n_classes) {
    if (labels.size() != static_cast<std::size_t>(n_rows)) {
        throw ArgumentError("label count does not match rows");
    }
    std::set<int> distinct;
    for (int l : labels) {
        if (l < 0 || l >= static_cast<int>(n_classes)) {
            throw ArgumentError("label index " + std::to_string(l) +
                                " outside class order");
        }
        distinct.insert(l);
    }
    if (distinct.size() < 2) {
        throw ArgumentError("degenerate labels: need at least 2 classes, got " +
                            std::to_string(distinct.size()));
    }
}

void check_probs(const Eigen::VectorXd& p, const char* who) {
    if (p.minCoeff() < -1e-9) {
        throw ArgumentError(std::string(who) + ": negative probability");
    }
    if (std::abs(p.sum() - 1.0) > 1e-6) {
        throw ArgumentError(std::string(who) +
                            ": probabilities do not sum to 1");
    }
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
    const double m = scores.maxCoeff();
    Eigen::VectorXd e = (scores.array() - m).exp().matrix();
    return e / e.sum();
}

int argmax_class(const Eigen::VectorXd& scores) {
    int best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

LinearSvmModel train_svm(const Eigen::MatrixXd& X,
                         const std::vector<int>& labels,
                         const std::vector<std::string>& class_order,
                         const SvmConfig& config) {
    const Eigen::Index n = X.rows();
    const Eigen::Index dim = X.cols();
    if (n == 0 || dim == 0) {
        throw ArgumentError("train_svm: empty feature matrix");
    }
    if (config.lambda <= 0.0 || config.epochs < 1) {
        throw ArgumentError("train_svm: invalid config");
    }
    check_labels(labels, n, class_order.size());

    LinearSvmModel model;
    model.class_order = class_order;
    model.weights = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(class_order.size()), dim);
    model.bias =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(class_order.size()));

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::size_t c = 0; c < class_order.size(); ++c) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
        double b = 0.0;
        // Stream keyed by class name, not position, so permuting the class
        // order permutes the trained rows exactly.
        SplitMix64 rng(mix_seed(config.seed, fnv1a64(class_order[c])));
        long t = 0;
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            shuffle(order, rng);
            for (std::size_t k : order) {
                ++t;
                const double eta = 1.0 / (config.lambda * static_cast<double>(t));
                const auto i = static_cast<Eigen::Index>(k);
                const double y =
                    labels[k] == static_cast<int>(c) ? 1.0 : -1.0;
                const double margin = y * (w.dot(X.row(i)) + b);
                w *= (1.0 - eta * config.lambda);
                if (margin < 1.0) {
                    w += eta * y * X.row(i).transpose();
                    b += eta * y;  // bias stays unregularized
                }
            }
        }
        model.weights.row(static_cast<Eigen::Index>(c)) = w.transpose();
        model.bias[static_cast<Eigen::Index>(c)] = b;
    }
    return model;
}

Eigen::VectorXd svm_margins(const LinearSvmModel& model,
                            const Eigen::VectorXd& x) {
    if (x.size() != model.weights.cols()) {
        throw ArgumentError("svm_margins: dimension mismatch (" +
                            std::to_string(x.size()) + " vs " +
                            std::to_string(model.weights.cols()) + ")");
    }
    return model.weights * x + model.bias;
}

Eigen::VectorXd svm_probs(const LinearSvmModel& model,
                          const Eigen::VectorXd& x) {
    return softmax(svm_margins(model, x));
}

double svm_objective(const LinearSvmModel& model, const Eigen::MatrixXd& X,
                     const std::vector<int>& labels, double lambda) {
    const Eigen::Index n = X.rows();
    if (labels.size() != static_cast<std::size_t>(n)) {
        throw ArgumentError("svm_objective: label count mismatch");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
        double hinge = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double y =
                labels[static_cast<std::size_t>(i)] == static_cast<int>(c)
                    ? 1.0
                    : -1.0;
            const double m =
                y * (model.weights.row(c).dot(X.row(i)) + model.bias[c]);
            hinge += std::max(0.0, 1.0 - m);
        }
        total += 0.5 * lambda * model.weights.row(c).squaredNorm() +
                 hinge / static_cast<double>(n);
    }
    return total;
}

double embed_clf_loss_and_grad(const Eigen::MatrixXd& W,
                               const Eigen::VectorXd& b,
                               const Eigen::MatrixXd& X,
                               const std::vector<int>& labels,
                               Eigen::MatrixXd* grad_W,
                               Eigen::VectorXd* grad_b) {
    const Eigen::Index n = X.rows();
    const Eigen::Index n_classes = W.rows();
    if (labels.size() != static_cast<std::size_t>(n)) {
        throw ArgumentError("embed_clf: label count mismatch");
    }

    // Row-wise stable log-softmax.
    Eigen::MatrixXd logits = X * W.transpose();
    logits.rowwise() += b.transpose();
    double loss = 0.0;
    Eigen::MatrixXd probs(n, n_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        const double z = e.sum();
        probs.row(i) = (e / z).matrix().transpose();
        const int y = labels[static_cast<std::size_t>(i)];
        loss -= logits(i, y) - m - std::log(z);
    }
    loss /= static_cast<double>(n);

    if (grad_W != nullptr || grad_b != nullptr) {
        Eigen::MatrixXd delta = probs;  // n x C
        for (Eigen::Index i = 0; i < n; ++i) {
            delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        }
        delta /= static_cast<double>(n);
        if (grad_W != nullptr) {
            *grad_W = delta.transpose() * X;
        }
        if (grad_b != nullptr) {
            *grad_b = delta.colwise().sum().transpose();
        }
    }
    return loss;
}

EmbedClassifierModel train_embed_clf(const Eigen::MatrixXd& X,
                                     const std::vector<int>& labels,
                                     const std::vector<std::string>& class_order,
                                     const EmbedClfConfig& config) {
    const Eigen::Index n = X.rows();
    const Eigen::Index dim = X.cols();
    if (n == 0 || dim == 0) {
        throw ArgumentError("train_embed_clf: empty matrix");
    }
    if (config.learning_rate <= 0.0 || config.epochs < 1) {
        throw ArgumentError("train_embed_clf: invalid config");
    }
    check_labels(labels, n, class_order.size());
    const auto n_classes = static_cast<Eigen::Index>(class_order.size());

    EmbedClassifierModel model;
    model.class_order = class_order;
    model.weights.resize(n_classes, dim);
    for (Eigen::Index r = 0; r < n_classes; ++r) {
        // Per-row streams keyed by class name (see train_svm).
        SplitMix64 rng(mix_seed(
            config.seed,
            fnv1a64(class_order[static_cast<std::size_t>(r)]) ^ 0xce));
        for (Eigen::Index c = 0; c < dim; ++c) {
            model.weights(r, c) = rng.next_double(-1e-3, 1e-3);
        }
    }
    model.bias = Eigen::VectorXd::Zero(n_classes);

    Eigen::MatrixXd grad_W;
    Eigen::VectorXd grad_b;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = embed_clf_loss_and_grad(
            model.weights, model.bias, X, labels, &grad_W, &grad_b);
        if (!std::isfinite(loss)) {
            throw NumericError("embed classifier diverged at epoch " +
                               std::to_string(epoch + 1));
        }
        model.weights -= config.learning_rate * grad_W;
        model.bias -= config.learning_rate * grad_b;
    }
    return model;
}

Eigen::VectorXd embed_probs(const EmbedClassifierModel& model,
                            const Eigen::VectorXd& h) {
    if (h.size() != model.weights.cols()) {
        throw ArgumentError("embed_probs: dimension mismatch");
    }
    return softmax(model.weights * h + model.bias);
}

std::pair<int, Eigen::VectorXd> ensemble_predict(const Eigen::VectorXd& p_svm,
                                                 const Eigen::VectorXd& p_text,
                                                 const EnsembleConfig& cfg) {
    if (p_svm.size() != p_text.size() || p_svm.size() == 0) {
        throw ArgumentError("ensemble_predict: size mismatch");
    }
    if (cfg.w_svm < 0.0 || cfg.w_text < 0.0 ||
        std::abs(cfg.w_svm + cfg.w_text - 1.0) > 1e-9) {
        throw ArgumentError("ensemble weights must be >= 0 and sum to 1");
    }
    check_probs(p_svm, "ensemble_predict(p_svm)");
    check_probs(p_text, "ensemble_predict(p_text)");

    Eigen::VectorXd combined = cfg.w_svm * p_svm + cfg.w_text * p_text;
    return {argmax_class(combined), std::move(combined)};
}

namespace {

void write_matrix(JsonWriter& w, const char* key, const Eigen::MatrixXd& m) {
    w.key(key);
    w.begin_array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        w.begin_array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            w.value(m(r, c));
        }
        w.end_array();
    }
    w.end_array();
}

void write_vector(JsonWriter& w, const char* key, const Eigen::VectorXd& v) {
    w.key(key);
    w.begin_array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        w.value(v[i]);
    }
    w.end_array();
}

Eigen::MatrixXd read_matrix(const nlohmann::json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw FormatError("ragged matrix in checkpoint");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

Eigen::VectorXd read_vector(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    }
    return v;
}

}  // namespace

void save_clf_checkpoint(const std::filesystem::path& path,
                         const ClassifierCheckpoint& ckpt) {
    JsonWriter w;
    w.begin_object();
    w.kv("version", 1);
    w.key("svm");
    w.begin_object();
    write_matrix(w, "weights", ckpt.svm.weights);
    write_vector(w, "bias", ckpt.svm.bias);
    w.kv("lambda", ckpt.svm_config.lambda);
    w.kv("epochs", ckpt.svm_config.epochs);
    w.end_object();
    w.key("embed_clf");
    w.begin_object();
    write_matrix(w, "weights", ckpt.embed_clf.weights);
    write_vector(w, "bias", ckpt.embed_clf.bias);
    w.kv("learning_rate", ckpt.embed_config.learning_rate);
    w.kv("epochs", ckpt.embed_config.epochs);
    w.end_object();
    w.key("standardizer");
    w.begin_object();
    write_vector(w, "mean", ckpt.standardizer.mean);
    write_vector(w, "std", ckpt.standardizer.std);
    w.end_object();
    w.key("ensemble");
    w.begin_object();
    w.kv("w_svm", ckpt.ensemble.w_svm);
    w.kv("w_text", ckpt.ensemble.w_text);
    w.end_object();
    w.key("class_order");
    w.begin_array();
    for (const auto& c : ckpt.class_order) {
        w.value(c);
    }
    w.end_array();
    w.kv("binary_mode", ckpt.binary_mode);
    w.kv("seed", ckpt.seed);
    w.end_object();
    atomic_write_file(path, w.str());
}

ClassifierCheckpoint load_clf_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad classifier checkpoint " + path.string() +
                          ": " + e.what());
    }
    try {
        ClassifierCheckpoint ckpt;
        ckpt.class_order = j.at("class_order").get<std::vector<std::string>>();
        ckpt.svm.class_order = ckpt.class_order;
        ckpt.svm.weights = read_matrix(j.at("svm").at("weights"));
        ckpt.svm.bias = read_vector(j.at("svm").at("bias"));
        ckpt.svm_config.lambda = j.at("svm").at("lambda").get<double>();
        ckpt.svm_config.epochs = j.at("svm").at("epochs").get<int>();
        ckpt.embed_clf.class_order = ckpt.class_order;
        ckpt.embed_clf.weights = read_matrix(j.at("embed_clf").at("weights"));
        ckpt.embed_clf.bias = read_vector(j.at("embed_clf").at("bias"));
        ckpt.embed_config.learning_rate =
            j.at("embed_clf").at("learning_rate").get<double>();
        ckpt.embed_config.epochs = j.at("embed_clf").at("epochs").get<int>();
        ckpt.standardizer.mean = read_vector(j.at("standardizer").at("mean"));
        ckpt.standardizer.std = read_vector(j.at("standardizer").at("std"));
        ckpt.standardizer.zero_variance.assign(
            static_cast<std::size_t>(ckpt.standardizer.mean.size()), false);
        ckpt.ensemble.w_svm = j.at("ensemble").at("w_svm").get<double>();
        ckpt.ensemble.w_text = j.at("ensemble").at("w_text").get<double>();
        ckpt.binary_mode = j.at("binary_mode").get<bool>();
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad classifier checkpoint " + path.string() +
                          ": " + e.what());
    }
}

}  // namespace cogspeech
