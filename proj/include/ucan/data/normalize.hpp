#pragma once

#include <cmath>
#include <utility>

#include "ucan/core/volume.hpp"

namespace ucan {

/// Pre-normalization maximum of one volume.
struct NormRecord {
    double max_value = 1.0;

    friend bool operator==(const NormRecord&, const NormRecord&) = default;
};

/// Maps v to (v / max(v)) * 2 - 1, so the maximum voxel becomes exactly 1.
inline std::pair<Volume, NormRecord> normalize(const Volume& v) {
    if (v.empty()) throw DegenerateInput("cannot normalize an empty volume");
    const double m = v.max();
    if (!(m > 0.0)) throw DegenerateInput("volume maximum is " + std::to_string(m) + ", must be > 0");
    Volume out = v;
    for (double& x : out.data()) x = (x / m) * 2.0 - 1.0;
    return {std::move(out), NormRecord{m}};
}

/// Inverse of normalize. Values outside [-1, 1] are mapped linearly, not clamped.
inline Volume denormalize(const Volume& v, const NormRecord& rec) {
    if (!(rec.max_value > 0.0) || !std::isfinite(rec.max_value))
        throw InvalidRecord("max_value must be a positive finite number, got " + std::to_string(rec.max_value));
    Volume out = v;
    for (double& x : out.data()) x = ((x + 1.0) / 2.0) * rec.max_value;
    return out;
}

}  // namespace ucan
