#pragma once
// WAV ingestion and preprocessing: PCM16 reading, resampling to the 16 kHz
// rate the transcription backends expect, and fixed 30-second segmentation.

#include <Eigen/Core>
#include <filesystem>
#include <vector>

namespace cogspeech {

inline constexpr int kTargetSampleRate = 16000;
inline constexpr int kSegmentSeconds = 30;
inline constexpr int kSegmentSamples = kTargetSampleRate * kSegmentSeconds;

struct AudioBuffer {
    Eigen::ArrayXd samples;  // amplitudes in [-1, 1]
    int sample_rate = kTargetSampleRate;

    Eigen::Index size() const { return samples.size(); }
    bool empty() const { return samples.size() == 0; }
    double duration_s() const {
        return sample_rate > 0
                   ? static_cast<double>(samples.size()) / sample_rate
                   : 0.0;
    }
};

// RIFF/WAVE, PCM 16-bit little-endian, mono or stereo. Samples are scaled
// by 1/32768; stereo is downmixed by per-frame channel average.
AudioBuffer read_wav(const std::filesystem::path& path);

// Rational polyphase resampler: windowed sinc, Hann window, 32 zero
// crossings per side, phase taps normalized to unit sum (constants pass
// through exactly). Input at 16 kHz is returned as a bit-exact copy.
AudioBuffer resample_to_16k(const AudioBuffer& buf);

// Consecutive non-overlapping 30 s windows; the final window is
// zero-padded to full length. Empty input yields one all-zero segment.
std::vector<AudioBuffer> segment_30s(const AudioBuffer& buf);

// Number of 30 s windows the buffer spans (what segment_30s returns).
std::size_t segment_count(const AudioBuffer& buf);

}  // namespace cogspeech
