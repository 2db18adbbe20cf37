#include "cogspeech/encoder.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/fnv.hpp"
#include "cogspeech/core/jsonw.hpp"
#include "cogspeech/core/subprocess.hpp"

namespace cogspeech {
namespace {

bool is_ws(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
           c == '\v';
}

// ASCII case folding; bytes >= 0x80 are treated as token separators so the
// hashing stays byte-deterministic regardless of locale.
bool is_token_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

void validate_embedding(const Embedding& e, const std::string& who) {
    if (e.size() != kEmbeddingDim) {
        throw ArgumentError(who + ": expected " +
                            std::to_string(kEmbeddingDim) + " values, got " +
                            std::to_string(e.size()));
    }
    if (!e.allFinite()) {
        throw NumericError(who + ": embedding contains non-finite values");
    }
}

}  // namespace

Embedding mock_encode(const std::string& text) {
    Embedding values = Embedding::Zero(kEmbeddingDim);
    std::string token;
    bool any = false;
    auto flush = [&]() {
        if (token.empty()) {
            return;
        }
        const std::uint64_t h = fnv1a64(token);
        const auto idx = static_cast<Eigen::Index>(h % kEmbeddingDim);
        values[idx] += (h >> 63) ? -1.0 : 1.0;
        any = true;
        token.clear();
    };
    for (unsigned char c : text) {
        const auto lower = static_cast<unsigned char>(
            (c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);
        if (is_token_byte(lower)) {
            token += static_cast<char>(lower);
        } else {
            flush();
        }
    }
    flush();
    if (!any) {
        return values;
    }
    const double norm = values.norm();
    if (norm > 0.0) {
        values /= norm;
    }
    return values;
}

Embedding MockEncoder::encode_text(const std::string& text) const {
    return mock_encode(text);
}

Embedding ExternalEncoder::encode_text(const std::string& text) const {
    auto argv = split_command(command_);
    if (argv.empty()) {
        throw ArgumentError("encoder_command is empty");
    }
    const SubprocessResult r = run_subprocess(argv, text, timeout_s_);
    if (r.timed_out) {
        throw TimeoutError("encoder backend timed out after " +
                           std::to_string(timeout_s_) + " s");
    }
    if (r.exit_code != 0) {
        throw BackendError("encoder backend exited with code " +
                           std::to_string(r.exit_code) + "\n" + r.err);
    }

    Embedding values(kEmbeddingDim);
    std::istringstream in(r.out);
    std::string field;
    Eigen::Index count = 0;
    while (in >> field) {
        if (count >= kEmbeddingDim) {
            ++count;  // keep counting for the error message
            continue;
        }
        char* end = nullptr;
        const double v = std::strtod(field.c_str(), &end);
        if (end == field.c_str() || *end != '\0') {
            throw FormatError("encoder output is not numeric: '" + field +
                              "'");
        }
        values[count++] = v;
    }
    if (count != kEmbeddingDim) {
        throw ArgumentError("encoder emitted " + std::to_string(count) +
                            " numbers, expected " +
                            std::to_string(kEmbeddingDim));
    }
    validate_embedding(values, "external encoder");
    return values;
}

std::string truncate_tokens(const std::string& text, std::size_t max_tokens) {
    std::size_t i = 0;
    std::size_t tokens = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_ws(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (i >= n) {
            break;
        }
        ++tokens;
        while (i < n && !is_ws(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (tokens == max_tokens) {
            return text.substr(0, i);
        }
    }
    return text;
}

Embedding encode(const EncoderBackend& backend, const std::string& text) {
    const Embedding e = backend.encode_text(truncate_tokens(text));
    validate_embedding(e, backend.name() + " encoder");
    return e;
}

std::string embedding_cache_key(const std::string& backend_name,
                                const std::string& text) {
    std::uint64_t h = fnv1a64(backend_name);
    const unsigned char sep = 0;
    h = fnv1a64(&sep, 1, h);
    h = fnv1a64(text, h);
    return to_hex16(h);
}

std::optional<Embedding> embedding_cache_lookup(
    const std::filesystem::path& cache_dir, const std::string& key) {
    const auto contents = read_file_if_exists(cache_dir / (key + ".emb.txt"));
    if (!contents) {
        return std::nullopt;
    }
    Embedding values(kEmbeddingDim);
    std::istringstream in(*contents);
    Eigen::Index count = 0;
    double v = 0.0;
    while (in >> v) {
        if (count >= kEmbeddingDim) {
            throw FormatError("embedding cache entry too long: " + key);
        }
        values[count++] = v;
    }
    if (count != kEmbeddingDim) {
        throw FormatError("embedding cache entry truncated: " + key);
    }
    return values;
}

void embedding_cache_store(const std::filesystem::path& cache_dir,
                           const std::string& key, const Embedding& values) {
    validate_embedding(values, "embedding_cache_store");
    std::string out;
    out.reserve(values.size() * 20);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += format_double(values[i]);
    }
    atomic_write_file(cache_dir / (key + ".emb.txt"), out);
}

}  // namespace cogspeech
