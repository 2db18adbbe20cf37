#pragma once
// Minimal JSON writer with byte-deterministic output: keys are emitted in
// insertion order, floats as %.17g (exact double round trip). All run-dir
// artifacts (checkpoints, stage indexes, reports) go through this writer;
// reading them back uses nlohmann::json.

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cogspeech/core/errors.hpp"

namespace cogspeech {

inline std::string format_double(double v) {
    if (!std::isfinite(v)) {
        throw NumericError("cannot serialize non-finite value");
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string json_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

// Streaming writer; callers are responsible for balanced begin/end calls.
class JsonWriter {
public:
    void begin_object() { prefix(); out_ += '{'; stack_.push_back(State::kObjectFirst); }
    void end_object() { stack_.pop_back(); out_ += '}'; closed(); }
    void begin_array() { prefix(); out_ += '['; stack_.push_back(State::kArrayFirst); }
    void end_array() { stack_.pop_back(); out_ += ']'; closed(); }

    void key(std::string_view k) {
        comma_if_needed();
        out_ += '"';
        out_ += json_escape(k);
        out_ += "\":";
        pending_key_ = true;
    }

    void value(std::string_view s) { prefix(); out_ += '"'; out_ += json_escape(s); out_ += '"'; }
    void value(const char* s) { value(std::string_view(s)); }
    void value(double v) { prefix(); out_ += format_double(v); }
    void value(std::int64_t v) { prefix(); out_ += std::to_string(v); }
    void value(std::uint64_t v) { prefix(); out_ += std::to_string(v); }
    void value(int v) { value(static_cast<std::int64_t>(v)); }
    void value(bool v) { prefix(); out_ += v ? "true" : "false"; }
    void null() { prefix(); out_ += "null"; }

    template <typename T>
    void kv(std::string_view k, const T& v) {
        key(k);
        value(v);
    }

    const std::string& str() const { return out_; }

private:
    enum class State { kObjectFirst, kObject, kArrayFirst, kArray };

    void comma_if_needed() {
        if (stack_.empty()) return;
        State& st = stack_.back();
        if (st == State::kObject || st == State::kArray) {
            out_ += ',';
        } else {
            st = (st == State::kObjectFirst) ? State::kObject : State::kArray;
        }
    }

    void prefix() {
        if (pending_key_) {
            pending_key_ = false;
            return;
        }
        comma_if_needed();
    }

    void closed() { pending_key_ = false; }

    std::string out_;
    std::vector<State> stack_;
    bool pending_key_ = false;
};

}  // namespace cogspeech
