#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ucan/core/error.hpp"

namespace ucan {

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// k-fold partition of a seeded shuffle. Test splits are contiguous chunks
/// whose sizes differ by at most one; ids keep their input order within a split.
inline std::vector<Fold> split_folds(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k must be >= 2, got " + std::to_string(k));
    if (static_cast<std::size_t>(k) > ids.size())
        throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) + " available studies");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<int> fold_of(ids.size());
    const std::size_t n = ids.size(), base = n / static_cast<std::size_t>(k), extra = n % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) fold_of[order[pos++]] = static_cast<int>(f);
    }
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i)
        for (int f = 0; f < k; ++f) (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(ids[i]);
    return folds;
}

}  // namespace ucan
