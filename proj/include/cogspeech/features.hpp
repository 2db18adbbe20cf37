#pragma once
// Classification-track features: a 26-dimensional acoustic functional
// vector (voice-report style low-level descriptors with mean/std/p20/p80
// functionals) and a 7-dimensional transcript readability vector, plus the
// train-set standardizer applied before the SVM.

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "cogspeech/audio.hpp"

namespace cogspeech {

inline constexpr int kAcousticDim = 26;
inline constexpr int kReadabilityDim = 7;

using AcousticVec = Eigen::Matrix<double, kAcousticDim, 1>;
using ReadabilityVec = Eigen::Matrix<double, kReadabilityDim, 1>;

// The frozen feature order. Indexes into AcousticVec; the golden-file test
// pins this layout.
inline constexpr std::array<const char*, kAcousticDim> kAcousticFeatureNames = {
    "logE_mean",     "logE_std",     "logE_p20",     "logE_p80",
    "zcr_mean",      "zcr_std",      "zcr_p20",      "zcr_p80",
    "centroid_mean", "centroid_std", "centroid_p20", "centroid_p80",
    "rolloff85_mean", "rolloff85_std", "rolloff85_p20", "rolloff85_p80",
    "f0_mean",       "f0_std",       "f0_p20",       "f0_p80",
    "jitter_local",  "shimmer_local", "voiced_ratio", "pause_count_per_min",
    "mean_pause_s",  "phonation_ratio"};

inline constexpr std::array<const char*, kReadabilityDim>
    kReadabilityFeatureNames = {
        "word_count",       "type_token_ratio", "mean_word_len_chars",
        "mean_sentence_len_words", "flesch_reading_ease", "filler_rate",
        "words_per_minute"};

struct AcousticConfig {
    // Normalized-autocorrelation peak needed to call a frame voiced.
    double voicing_threshold = 0.45;
    // Pause threshold: logE below max logE minus this (25 dB in natural-log
    // power units), sustained for at least min_pause_s.
    double pause_log_drop = 5.756;
    double min_pause_s = 0.2;
    // F0 search range in Hz.
    double f0_min_hz = 50.0;
    double f0_max_hz = 400.0;
};

// 25 ms frames, 10 ms hop; Hann window for the spectral descriptors; F0 by
// normalized autocorrelation with parabolic peak refinement. Input shorter
// than one frame yields the all-zero fallback vector.
AcousticVec extract_acoustic(const AudioBuffer& buf,
                             const AcousticConfig& cfg = {});

// Whitespace words, {.!?} sentence splits, vowel-group syllables for the
// Flesch score, fixed filler list with "you know" matched as a bigram.
// Empty text yields the all-zero vector.
ReadabilityVec extract_readability(const std::string& text,
                                   double duration_s);

struct StandardizationParams {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;  // entries > 0; zero-variance dims forced to 1
    std::vector<bool> zero_variance;
};

// Per-dimension z-score parameters over the training rows (population std).
StandardizationParams fit_standardizer(const std::vector<Eigen::VectorXd>& train);

Eigen::VectorXd apply_standardizer(const StandardizationParams& params,
                                   const Eigen::VectorXd& x);

}  // namespace cogspeech
