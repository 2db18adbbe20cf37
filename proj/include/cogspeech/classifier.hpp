#pragma once
// Diagnostic-class track: one-vs-rest linear SVM (Pegasos) over
// standardized acoustic+readability features, a multinomial logistic
// classifier over text embeddings, and the weighted soft-voting ensemble
// that combines their probability vectors.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cogspeech/features.hpp"

namespace cogspeech {

inline const std::vector<std::string> kDefaultClassOrder = {"HC", "MCI",
                                                            "Dementia"};
inline const std::vector<std::string> kBinaryClassOrder = {"HC", "Impaired"};

struct SvmConfig {
    double lambda = 1e-2;  // L2 regularization strength
    int epochs = 200;
    std::uint64_t seed = 0;
};

struct LinearSvmModel {
    Eigen::MatrixXd weights;  // n_classes x feature dim
    Eigen::VectorXd bias;     // n_classes
    std::vector<std::string> class_order;
};

struct EmbedClfConfig {
    double learning_rate = 0.5;
    int epochs = 300;
    std::uint64_t seed = 0;
};

struct EmbedClassifierModel {
    Eigen::MatrixXd weights;  // n_classes x embedding dim
    Eigen::VectorXd bias;     // n_classes
    std::vector<std::string> class_order;
};

struct EnsembleConfig {
    double w_svm = 0.6;
    double w_text = 0.4;
};

// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& scores);

// X: rows are standardized feature vectors; labels index into class_order.
// Each class trains an independent binary hinge+L2 objective with the
// Pegasos schedule (step 1/(lambda*t), seeded per-epoch shuffles).
LinearSvmModel train_svm(const Eigen::MatrixXd& X,
                         const std::vector<int>& labels,
                         const std::vector<std::string>& class_order,
                         const SvmConfig& config);

// Per-class margins W x + b.
Eigen::VectorXd svm_margins(const LinearSvmModel& model,
                            const Eigen::VectorXd& x);

// Softmax over the margins.
Eigen::VectorXd svm_probs(const LinearSvmModel& model,
                          const Eigen::VectorXd& x);

// Hinge + L2 objective the Pegasos runs should have decreased.
double svm_objective(const LinearSvmModel& model, const Eigen::MatrixXd& X,
                     const std::vector<int>& labels, double lambda);

// Mean cross-entropy and its gradients for the logistic model; the
// training loop and the finite-difference test share this path.
double embed_clf_loss_and_grad(const Eigen::MatrixXd& W,
                               const Eigen::VectorXd& b,
                               const Eigen::MatrixXd& X,
                               const std::vector<int>& labels,
                               Eigen::MatrixXd* grad_W,
                               Eigen::VectorXd* grad_b);

// Full-batch gradient descent on mean cross-entropy.
EmbedClassifierModel train_embed_clf(const Eigen::MatrixXd& X,
                                     const std::vector<int>& labels,
                                     const std::vector<std::string>& class_order,
                                     const EmbedClfConfig& config);

Eigen::VectorXd embed_probs(const EmbedClassifierModel& model,
                            const Eigen::VectorXd& h);

// Weighted soft vote: combined = w_svm * p_svm + w_text * p_text; the
// class is the argmax with ties broken by class order.
std::pair<int, Eigen::VectorXd> ensemble_predict(const Eigen::VectorXd& p_svm,
                                                 const Eigen::VectorXd& p_text,
                                                 const EnsembleConfig& cfg);

// First maximal entry (fixed class-order tie-break).
int argmax_class(const Eigen::VectorXd& scores);

// Everything the classification track needs at inference time, persisted
// as one JSON checkpoint.
struct ClassifierCheckpoint {
    LinearSvmModel svm;
    SvmConfig svm_config;
    EmbedClassifierModel embed_clf;
    EmbedClfConfig embed_config;
    StandardizationParams standardizer;
    EnsembleConfig ensemble;
    std::vector<std::string> class_order;
    bool binary_mode = false;
    std::uint64_t seed = 0;
};

void save_clf_checkpoint(const std::filesystem::path& path,
                         const ClassifierCheckpoint& ckpt);

ClassifierCheckpoint load_clf_checkpoint(const std::filesystem::path& path);

}  // namespace cogspeech
