#include "cogspeech/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fft.hpp"

namespace cogspeech {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kFrameLen = 400;   // 25 ms at 16 kHz
constexpr int kFrameHop = 160;   // 10 ms
constexpr int kFftSize = 512;
constexpr double kEnergyFloor = 1e-12;  // mean-square silence floor

double percentile(std::vector<double> v, double q) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) {
        return v.back();
    }
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[lo + 1] - v[lo]) * frac;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// mean, std, p20, p80 in the frozen functional order.
void put_functionals(AcousticVec& out, int base, const std::vector<double>& v) {
    out[base + 0] = mean_of(v);
    out[base + 1] = pop_std(v);
    out[base + 2] = percentile(v, 0.20);
    out[base + 3] = percentile(v, 0.80);
}

struct FramePitch {
    bool voiced = false;
    double period_samples = 0.0;  // refined lag
};

// Normalized autocorrelation peak over the lag range for [f0_min, f0_max],
// with parabolic interpolation around the integer peak so a stable tone
// yields a stable sub-sample period.
FramePitch frame_pitch(const double* x, int len, const AcousticConfig& cfg) {
    const int lag_min = std::max(
        2, static_cast<int>(std::floor(kTargetSampleRate / cfg.f0_max_hz)));
    const int lag_max = std::min(
        len - 2, static_cast<int>(std::ceil(kTargetSampleRate / cfg.f0_min_hz)));
    FramePitch result;
    if (lag_max <= lag_min) {
        return result;
    }

    auto norm_corr = [&](int lag) {
        double num = 0.0, e0 = 0.0, e1 = 0.0;
        const int n = len - lag;
        for (int i = 0; i < n; ++i) {
            num += x[i] * x[i + lag];
            e0 += x[i] * x[i];
            e1 += x[i + lag] * x[i + lag];
        }
        const double denom = std::sqrt(e0 * e1);
        return denom > kEnergyFloor ? num / denom : 0.0;
    };

    int best_lag = 0;
    double best_r = -2.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
        const double r = norm_corr(lag);
        if (r > best_r) {
            best_r = r;
            best_lag = lag;
        }
    }
    if (best_lag == 0 || best_r < cfg.voicing_threshold) {
        return result;
    }

    double lag_hat = best_lag;
    if (best_lag > lag_min && best_lag < lag_max) {
        const double rm = norm_corr(best_lag - 1);
        const double rp = norm_corr(best_lag + 1);
        const double denom = rm - 2.0 * best_r + rp;
        if (std::abs(denom) > 1e-12) {
            double delta = 0.5 * (rm - rp) / denom;
            delta = std::clamp(delta, -0.5, 0.5);
            lag_hat += delta;
        }
    }

    result.voiced = true;
    result.period_samples = lag_hat;
    return result;
}

}  // namespace

AcousticVec extract_acoustic(const AudioBuffer& buf,
                             const AcousticConfig& cfg) {
    if (buf.sample_rate != kTargetSampleRate) {
        throw PreconditionError("extract_acoustic requires 16 kHz input, got " +
                                std::to_string(buf.sample_rate) + " Hz");
    }
    AcousticVec out = AcousticVec::Zero();
    const auto n = static_cast<int>(buf.samples.size());
    if (n < kFrameLen) {
        return out;  // all-fallback
    }
    const int n_frames = 1 + (n - kFrameLen) / kFrameHop;

    // Hann window for the spectral descriptors only.
    Eigen::ArrayXd hann(kFrameLen);
    for (int i = 0; i < kFrameLen; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (kFrameLen - 1));
    }
    const double bin_hz =
        static_cast<double>(kTargetSampleRate) / kFftSize;

    std::vector<double> log_e(n_frames), zcr(n_frames), centroid(n_frames),
        rolloff(n_frames);
    std::vector<double> f0_voiced;
    std::vector<double> period_by_frame(n_frames,
                                        std::numeric_limits<double>::quiet_NaN());
    std::vector<double> mean_sq_by_frame(n_frames, 0.0);
    std::vector<double> rms_by_frame(n_frames, 0.0);
    std::vector<bool> voiced(n_frames, false);

    std::vector<std::complex<double>> spectrum(kFftSize);
    for (int f = 0; f < n_frames; ++f) {
        const double* x = buf.samples.data() + f * kFrameHop;

        double sum_sq = 0.0;
        int crossings = 0;
        for (int i = 0; i < kFrameLen; ++i) {
            sum_sq += x[i] * x[i];
            if (i > 0 && ((x[i - 1] >= 0.0) != (x[i] >= 0.0))) {
                ++crossings;
            }
        }
        const double mean_sq = sum_sq / kFrameLen;
        log_e[f] = std::log(std::max(mean_sq, kEnergyFloor));
        zcr[f] = static_cast<double>(crossings) / (kFrameLen - 1);
        mean_sq_by_frame[f] = mean_sq;
        rms_by_frame[f] = std::sqrt(mean_sq);

        for (int i = 0; i < kFftSize; ++i) {
            spectrum[i] = (i < kFrameLen)
                              ? std::complex<double>(x[i] * hann[i], 0.0)
                              : std::complex<double>(0.0, 0.0);
        }
        fft_inplace(spectrum);
        double mag_sum = 0.0, weighted = 0.0, pow_sum = 0.0;
        std::array<double, kFftSize / 2 + 1> pow_bins{};
        for (int k = 0; k <= kFftSize / 2; ++k) {
            const double m = std::abs(spectrum[k]);
            mag_sum += m;
            weighted += m * (k * bin_hz);
            pow_bins[k] = m * m;
            pow_sum += pow_bins[k];
        }
        if (mag_sum > 1e-12) {
            centroid[f] = weighted / mag_sum;
            double acc = 0.0;
            int k = 0;
            for (; k <= kFftSize / 2; ++k) {
                acc += pow_bins[k];
                if (acc >= 0.85 * pow_sum) {
                    break;
                }
            }
            rolloff[f] = k * bin_hz;
        }

        const FramePitch fp = frame_pitch(x, kFrameLen, cfg);
        if (fp.voiced) {
            voiced[f] = true;
            period_by_frame[f] = fp.period_samples;
            f0_voiced.push_back(std::clamp(
                kTargetSampleRate / fp.period_samples, cfg.f0_min_hz,
                cfg.f0_max_hz));
        }
    }

    put_functionals(out, 0, log_e);
    put_functionals(out, 4, zcr);
    put_functionals(out, 8, centroid);
    put_functionals(out, 12, rolloff);
    put_functionals(out, 16, f0_voiced);  // voiced frames only; empty -> 0

    // Jitter/shimmer over consecutive voiced frame pairs.
    std::vector<double> period_deltas, amp_deltas, voiced_periods, voiced_amps;
    for (int f = 0; f < n_frames; ++f) {
        if (!voiced[f]) {
            continue;
        }
        voiced_periods.push_back(period_by_frame[f]);
        voiced_amps.push_back(rms_by_frame[f]);
        if (f > 0 && voiced[f - 1]) {
            period_deltas.push_back(
                std::abs(period_by_frame[f] - period_by_frame[f - 1]));
            amp_deltas.push_back(
                std::abs(rms_by_frame[f] - rms_by_frame[f - 1]));
        }
    }
    if (!period_deltas.empty() && mean_of(voiced_periods) > 0.0) {
        out[20] = mean_of(period_deltas) / mean_of(voiced_periods);
    }
    if (!amp_deltas.empty() && mean_of(voiced_amps) > 0.0) {
        out[21] = mean_of(amp_deltas) / mean_of(voiced_amps);
    }
    out[22] = static_cast<double>(std::count(voiced.begin(), voiced.end(), true)) /
              n_frames;

    // Pauses: maximal runs of low-energy frames lasting at least
    // min_pause_s. Digital silence sits at the energy floor and counts.
    const double log_e_max = *std::max_element(log_e.begin(), log_e.end());
    const double threshold = log_e_max - cfg.pause_log_drop;
    const auto min_frames = static_cast<int>(
        std::ceil(cfg.min_pause_s / (static_cast<double>(kFrameHop) /
                                     kTargetSampleRate)));
    const double frame_hop_s = static_cast<double>(kFrameHop) / kTargetSampleRate;

    int pause_count = 0;
    double total_pause_s = 0.0;
    int run = 0;
    auto close_run = [&]() {
        if (run >= min_frames) {
            ++pause_count;
            total_pause_s += run * frame_hop_s;
        }
        run = 0;
    };
    for (int f = 0; f < n_frames; ++f) {
        const bool is_pause =
            log_e[f] < threshold || mean_sq_by_frame[f] <= kEnergyFloor;
        if (is_pause) {
            ++run;
        } else {
            close_run();
        }
    }
    close_run();

    const double duration_s = buf.duration_s();
    out[23] = duration_s > 0.0 ? pause_count / (duration_s / 60.0) : 0.0;
    out[24] = pause_count > 0 ? total_pause_s / pause_count : 0.0;
    out[25] = duration_s > 0.0
                  ? std::clamp(1.0 - total_pause_s / duration_s, 0.0, 1.0)
                  : 0.0;
    return out;
}

namespace {

bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
           c == '\v';
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (is_space_byte(c)) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur += static_cast<char>(c);
        }
    }
    if (!cur.empty()) {
        tokens.push_back(cur);
    }
    return tokens;
}

std::string fold_word(const std::string& token) {
    // Lowercase and strip leading/trailing non-alphanumeric bytes, so
    // "Um," matches the filler list entry "um".
    std::string t;
    for (unsigned char c : token) {
        t += static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);
    }
    std::size_t b = 0, e = t.size();
    auto is_alnum = [](unsigned char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    };
    while (b < e && !is_alnum(static_cast<unsigned char>(t[b]))) ++b;
    while (e > b && !is_alnum(static_cast<unsigned char>(t[e - 1]))) --e;
    return t.substr(b, e - b);
}

int count_syllables(const std::string& folded) {
    auto is_vowel = [](char c) {
        return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' ||
               c == 'y';
    };
    int groups = 0;
    bool in_group = false;
    for (char c : folded) {
        if (is_vowel(c)) {
            if (!in_group) {
                ++groups;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    return std::max(groups, 1);
}

}  // namespace

ReadabilityVec extract_readability(const std::string& text,
                                   double duration_s) {
    if (duration_s < 0.0) {
        throw ArgumentError("duration_s must be >= 0");
    }
    ReadabilityVec out = ReadabilityVec::Zero();
    const auto tokens = whitespace_tokens(text);
    if (tokens.empty()) {
        return out;
    }
    const auto n_words = static_cast<double>(tokens.size());

    // Sentences: non-empty spans between {. ! ?}, at least one.
    int sentences = 0;
    bool span_has_word = false;
    for (unsigned char c : text) {
        if (c == '.' || c == '!' || c == '?') {
            if (span_has_word) {
                ++sentences;
            }
            span_has_word = false;
        } else if (!is_space_byte(c)) {
            span_has_word = true;
        }
    }
    if (span_has_word) {
        ++sentences;
    }
    sentences = std::max(sentences, 1);

    std::vector<std::string> folded(tokens.size());
    double total_chars = 0.0;
    double total_syllables = 0.0;
    std::vector<std::string> types;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        folded[i] = fold_word(tokens[i]);
        total_chars += static_cast<double>(tokens[i].size());
        total_syllables += count_syllables(folded[i]);
        types.push_back(folded[i]);
    }
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());

    int fillers = 0;
    for (std::size_t i = 0; i < folded.size(); ++i) {
        const std::string& w = folded[i];
        if (w == "um" || w == "uh" || w == "er" || w == "ah" || w == "hmm" ||
            w == "like") {
            ++fillers;
        } else if (w == "you" && i + 1 < folded.size() &&
                   folded[i + 1] == "know") {
            ++fillers;
        }
    }

    out[0] = n_words;
    out[1] = static_cast<double>(types.size()) / n_words;
    out[2] = total_chars / n_words;
    out[3] = n_words / sentences;
    out[4] = 206.835 - 1.015 * (n_words / sentences) -
             84.6 * (total_syllables / n_words);
    out[5] = fillers / n_words;
    out[6] = duration_s > 0.0 ? 60.0 * n_words / duration_s : 0.0;
    return out;
}

StandardizationParams fit_standardizer(
    const std::vector<Eigen::VectorXd>& train) {
    if (train.size() < 2) {
        throw ArgumentError("fit_standardizer: need at least 2 vectors");
    }
    const Eigen::Index dim = train.front().size();
    for (const auto& v : train) {
        if (v.size() != dim) {
            throw ArgumentError("fit_standardizer: inconsistent dimensions");
        }
    }
    StandardizationParams params;
    params.mean = Eigen::VectorXd::Zero(dim);
    for (const auto& v : train) {
        params.mean += v;
    }
    params.mean /= static_cast<double>(train.size());

    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (const auto& v : train) {
        var += (v - params.mean).cwiseAbs2();
    }
    var /= static_cast<double>(train.size());

    params.std = var.cwiseSqrt();
    params.zero_variance.assign(static_cast<std::size_t>(dim), false);
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (params.std[i] <= 0.0) {
            // Constant dimensions pass through apply_standardizer unchanged.
            params.std[i] = 1.0;
            params.mean[i] = 0.0;
            params.zero_variance[static_cast<std::size_t>(i)] = true;
        }
    }
    return params;
}

Eigen::VectorXd apply_standardizer(const StandardizationParams& params,
                                   const Eigen::VectorXd& x) {
    if (x.size() != params.mean.size()) {
        throw ArgumentError("apply_standardizer: dimension mismatch (" +
                            std::to_string(x.size()) + " vs " +
                            std::to_string(params.mean.size()) + ")");
    }
    return (x - params.mean).cwiseQuotient(params.std);
}

}  // namespace cogspeech
