#include "cogspeech/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "cogspeech/core/errors.hpp"

namespace cogspeech {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kZeroCrossings = 32;
constexpr std::array<int, 5> kAcceptedRates = {8000, 16000, 22050, 44100,
                                               48000};

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] |
                                      (static_cast<std::uint16_t>(p[1]) << 8));
}

double sinc_pi(double x) {
    if (std::abs(x) < 1e-12) {
        return 1.0;
    }
    const double px = kPi * x;
    return std::sin(px) / px;
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open wav: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();

    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
        std::memcmp(p + 8, "WAVE", 4) != 0) {
        throw FormatError("not a RIFF/WAVE file: " + path.string());
    }

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;

    std::size_t off = 12;
    while (off + 8 <= n) {
        const char* id = bytes.data() + off;
        const std::uint32_t len = read_u32(p + off + 4);
        const std::size_t body = off + 8;
        if (body + len > n) {
            throw FormatError("truncated chunk in wav: " + path.string());
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) {
                throw FormatError("truncated fmt chunk: " + path.string());
            }
            format = read_u16(p + body);
            channels = read_u16(p + body + 2);
            rate = read_u32(p + body + 4);
            bits = read_u16(p + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = p + body;
            data_len = len;
        }
        off = body + len + (len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) {
        throw FormatError("missing fmt/data chunk: " + path.string());
    }
    if (format != 1 || bits != 16) {
        throw FormatError("unsupported wav format (PCM16 required): " +
                          path.string());
    }
    if (channels != 1 && channels != 2) {
        throw FormatError("unsupported channel count " +
                          std::to_string(channels) + ": " + path.string());
    }
    if (std::find(kAcceptedRates.begin(), kAcceptedRates.end(),
                  static_cast<int>(rate)) == kAcceptedRates.end()) {
        throw FormatError("unsupported sample rate " + std::to_string(rate) +
                          ": " + path.string());
    }
    const std::uint32_t frame_bytes = channels * 2u;
    if (data_len % frame_bytes != 0) {
        throw FormatError("wav data not frame-aligned: " + path.string());
    }

    const std::size_t frames = data_len / frame_bytes;
    AudioBuffer buf;
    buf.sample_rate = static_cast<int>(rate);
    buf.samples.resize(static_cast<Eigen::Index>(frames));
    for (std::size_t i = 0; i < frames; ++i) {
        const unsigned char* fp = data + i * frame_bytes;
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const auto raw = static_cast<std::int16_t>(read_u16(fp + 2 * c));
            acc += static_cast<double>(raw) / 32768.0;
        }
        buf.samples[static_cast<Eigen::Index>(i)] = acc / channels;
    }
    return buf;
}

AudioBuffer resample_to_16k(const AudioBuffer& buf) {
    if (buf.sample_rate <= 0) {
        throw PreconditionError("invalid sample rate");
    }
    if (buf.sample_rate == kTargetSampleRate) {
        return buf;
    }
    AudioBuffer out;
    out.sample_rate = kTargetSampleRate;
    if (buf.empty()) {
        out.samples.resize(0);
        return out;
    }

    const std::int64_t g = std::gcd(buf.sample_rate, kTargetSampleRate);
    const std::int64_t up = kTargetSampleRate / g;    // L
    const std::int64_t down = buf.sample_rate / g;    // M
    const double cutoff =
        std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    const double half_width = kZeroCrossings / cutoff;  // in input samples
    const auto kmax = static_cast<std::int64_t>(std::floor(half_width)) + 1;

    // One tap table per polyphase branch; branch p covers output positions
    // whose fractional input offset is p/up. Taps are normalized to unit
    // sum so a constant signal passes through unchanged.
    const std::int64_t kmin = -kmax;
    const std::size_t taps_per_phase = static_cast<std::size_t>(kmax - kmin + 1);
    std::vector<double> taps(static_cast<std::size_t>(up) * taps_per_phase);
    for (std::int64_t p = 0; p < up; ++p) {
        const double frac = static_cast<double>(p) / static_cast<double>(up);
        double sum = 0.0;
        double* h = &taps[static_cast<std::size_t>(p) * taps_per_phase];
        for (std::int64_t k = kmin; k <= kmax; ++k) {
            const double x = static_cast<double>(k) - frac;
            double v = 0.0;
            if (std::abs(x) <= half_width) {
                const double w = 0.5 + 0.5 * std::cos(kPi * x / half_width);
                v = cutoff * sinc_pi(cutoff * x) * w;
            }
            h[k - kmin] = v;
            sum += v;
        }
        for (std::size_t t = 0; t < taps_per_phase; ++t) {
            h[t] /= sum;
        }
    }

    const std::int64_t in_len = buf.samples.size();
    const std::int64_t out_len = (in_len * up + down / 2) / down;
    out.samples.resize(static_cast<Eigen::Index>(out_len));
    for (std::int64_t nidx = 0; nidx < out_len; ++nidx) {
        const std::int64_t num = nidx * down;
        const std::int64_t base = num / up;
        const std::int64_t phase = num % up;
        const double* h = &taps[static_cast<std::size_t>(phase) * taps_per_phase];
        double acc = 0.0;
        const std::int64_t lo = std::max<std::int64_t>(kmin, -base);
        const std::int64_t hi = std::min<std::int64_t>(kmax, in_len - 1 - base);
        for (std::int64_t k = lo; k <= hi; ++k) {
            acc += buf.samples[static_cast<Eigen::Index>(base + k)] *
                   h[k - kmin];
        }
        out.samples[static_cast<Eigen::Index>(nidx)] = acc;
    }
    return out;
}

std::size_t segment_count(const AudioBuffer& buf) {
    if (buf.samples.size() == 0) {
        return 1;
    }
    return static_cast<std::size_t>(
        (buf.samples.size() + kSegmentSamples - 1) / kSegmentSamples);
}

std::vector<AudioBuffer> segment_30s(const AudioBuffer& buf) {
    if (buf.sample_rate != kTargetSampleRate) {
        throw PreconditionError("segment_30s requires 16 kHz input, got " +
                                std::to_string(buf.sample_rate) + " Hz");
    }
    const std::size_t count = segment_count(buf);
    std::vector<AudioBuffer> segments(count);
    for (std::size_t s = 0; s < count; ++s) {
        AudioBuffer& seg = segments[s];
        seg.sample_rate = kTargetSampleRate;
        seg.samples = Eigen::ArrayXd::Zero(kSegmentSamples);
        const auto begin = static_cast<Eigen::Index>(s) * kSegmentSamples;
        const Eigen::Index len =
            std::min<Eigen::Index>(kSegmentSamples, buf.samples.size() - begin);
        if (len > 0) {
            seg.samples.head(len) = buf.samples.segment(begin, len);
        }
    }
    return segments;
}

}  // namespace cogspeech
