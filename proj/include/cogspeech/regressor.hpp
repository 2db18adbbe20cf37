#pragma once
// The MMSE regression head: score = W2 * relu(W1 h + b1) + b2 over 768-d
// embeddings, trained on normalized targets with mean squared error.
// Training is single-threaded and bit-deterministic given (seed, data,
// config); model selection picks the epoch with the lowest dev MSE.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cogspeech/encoder.hpp"
#include "cogspeech/features.hpp"
#include "cogspeech/manifest.hpp"

namespace cogspeech {

inline constexpr int kHiddenDim = 64;

struct RegressionHead {
    Eigen::MatrixXd W1;      // kHiddenDim x input_dim
    Eigen::VectorXd b1;      // kHiddenDim
    Eigen::RowVectorXd W2;   // 1 x kHiddenDim
    double b2 = 0.0;

    Eigen::Index input_dim() const { return W1.cols(); }
};

struct HeadGradients {
    Eigen::MatrixXd W1;
    Eigen::VectorXd b1;
    Eigen::RowVectorXd W2;
    double b2 = 0.0;
};

enum class Optimizer { Sgd, Adam };
enum class Aggregation { Mean, Median };

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 300;
    int batch_size = 16;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

struct TrainingExample {
    Embedding embedding;
    double target_normalized = 0.0;
    std::string subject_id;
    TaskKind task = TaskKind::CTD;
};

struct EpochStats {
    double train_mse = 0.0;
    double dev_mse = 0.0;  // NaN when no dev examples were supplied
};

struct TrainResult {
    RegressionHead head;                // parameters of the selected epoch
    std::vector<EpochStats> history;    // one entry per epoch
    int best_epoch = 0;                 // 0-based index into history
};

// Glorot-uniform init (bound sqrt(6/(fan_in+fan_out))), zero biases,
// driven by the SplitMix64 stream so identical seeds give identical bits.
RegressionHead init_head(std::uint64_t seed, int input_dim = kEmbeddingDim);

double forward(const RegressionHead& head, const Eigen::VectorXd& h);

double mse_loss(const Eigen::VectorXd& predictions,
                const Eigen::VectorXd& targets);

// Analytic gradients of the mean-batch MSE; the ReLU subgradient at 0 is 0.
HeadGradients backward(const RegressionHead& head,
                       const std::vector<TrainingExample>& batch);

TrainResult train(const RegressionHead& head,
                  const std::vector<TrainingExample>& train_examples,
                  const std::vector<TrainingExample>& dev_examples,
                  const TrainConfig& config);

// Per-task forward passes aggregated (mean or median) in normalized space,
// denormalized, then clamped to the MMSE range.
double predict_subject(const RegressionHead& head,
                       const std::map<TaskKind, Embedding>& embeddings,
                       const NormalizationParams& params,
                       Aggregation aggregation = Aggregation::Mean);

struct GradCheckResult {
    double max_relative_error = 0.0;
    int probes = 0;
};

// Central-difference probe of `backward` at randomly drawn parameter
// coordinates; probes whose pre-activation sits within kink_guard of a
// ReLU kink are re-drawn.
GradCheckResult gradient_check(std::uint64_t seed, int probes = 20,
                               double step = 1e-5,
                               double kink_guard = 1e-6);

// Checkpoint I/O (JSON, floats at 17 significant digits). The acoustic
// standardizer block is present only for heads trained on embeddings
// augmented with acoustic features.
void save_head_checkpoint(const std::filesystem::path& path,
                          const RegressionHead& head,
                          const NormalizationParams& norm,
                          const TrainConfig& config,
                          const StandardizationParams* acoustic = nullptr);

struct HeadCheckpoint {
    RegressionHead head;
    NormalizationParams norm;
    TrainConfig config;
};

HeadCheckpoint load_head_checkpoint(const std::filesystem::path& path);

}  // namespace cogspeech
