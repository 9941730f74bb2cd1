#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

#include "ucan/core/error.hpp"

namespace ucan {

/// The three tracer domains. A=FDG, B=UCB-J, C=PiB in the clinical setting.
enum class TracerId : int { A = 0, B = 1, C = 2 };

inline constexpr int kNumDomains = 3;
inline constexpr std::array<TracerId, 3> kAllTracers{TracerId::A, TracerId::B, TracerId::C};

constexpr int ordinal(TracerId t) noexcept { return static_cast<int>(t); }

inline TracerId tracer_from_ordinal(int i) {
    if (i < 0 || i >= kNumDomains) throw ValidationError("tracer ordinal out of range: " + std::to_string(i));
    return static_cast<TracerId>(i);
}

inline char tracer_letter(TracerId t) { return static_cast<char>('A' + ordinal(t)); }

inline std::string to_string(TracerId t) { return std::string(1, tracer_letter(t)); }

inline TracerId parse_tracer(std::string_view s) {
    if (s.size() == 1) {
        char c = s[0];
        if (c >= 'a' && c <= 'c') c = static_cast<char>(c - 'a' + 'A');
        if (c >= 'A' && c <= 'C') return static_cast<TracerId>(c - 'A');
    }
    throw ValidationError("unknown tracer '" + std::string(s) + "' (expected A, B or C)");
}

/// Ordered (source, target) pair with source != target.
struct TranslationTask {
    TracerId source;
    TracerId target;

    friend bool operator==(const TranslationTask&, const TranslationTask&) = default;

    std::string name() const { return to_string(source) + "->" + to_string(target); }
    std::string slug() const { return to_string(source) + "to" + to_string(target); }
};

/// All six translation tasks in reporting order: A->B, A->C, B->A, B->C, C->A, C->B.
inline std::array<TranslationTask, 6> all_tasks() {
    std::array<TranslationTask, 6> out{};
    std::size_t k = 0;
    for (TracerId s : kAllTracers)
        for (TracerId t : kAllTracers)
            if (s != t) out[k++] = {s, t};
    return out;
}

inline int task_index(TranslationTask t) {
    auto tasks = all_tasks();
    for (int i = 0; i < 6; ++i)
        if (tasks[i] == t) return i;
    throw ValidationError("identity translation " + t.name() + " is not a task");
}

}  // namespace ucan
