#pragma once

#include <map>
#include <string>

#include "ucan/core/tracer.hpp"
#include "ucan/core/volume.hpp"
#include "ucan/data/normalize.hpp"

namespace ucan {

/// One subject's co-registered bundle.
struct Study {
    std::string id;
    std::map<TracerId, Volume> pet;
    Volume mr;
    std::map<std::string, Volume> roi_masks;
    std::map<TracerId, NormRecord> norm_records;

    bool has(TracerId t) const { return pet.count(t) != 0; }
    bool complete() const { return pet.size() == kAllTracers.size() && !mr.empty(); }

    const Volume& tracer(TracerId t) const {
        auto it = pet.find(t);
        if (it == pet.end()) throw MissingModality("study '" + id + "' has no tracer " + to_string(t) + " volume");
        return it->second;
    }

    const Shape3& shape() const { return mr.shape(); }

    /// Geometry and mask checks. With `require_all_tracers`, A, B and C must be present.
    void validate(bool require_all_tracers = true) const {
        if (mr.empty()) throw MissingModality("study '" + id + "' has no MR volume");
        if (require_all_tracers)
            for (TracerId t : kAllTracers) (void)tracer(t);
        for (const auto& [t, v] : pet)
            if (!v.same_geometry(mr))
                throw ShapeMismatch("study '" + id + "': tracer " + to_string(t) + " is " + v.shape().str() + ", MR is " + mr.shape().str());
        for (const auto& [name, m] : roi_masks) {
            if (!m.same_geometry(mr)) throw ShapeMismatch("study '" + id + "': ROI '" + name + "' geometry differs from MR");
            if (!is_binary(m)) throw ValidationError("study '" + id + "': ROI mask '" + name + "' is not binary");
        }
        for (const auto& [t, r] : norm_records)
            if (!(r.max_value > 0.0)) throw InvalidRecord("study '" + id + "': tracer " + to_string(t) + " record max <= 0");
    }
};

/// Brain support: voxels whose MR exceeds 10% of the MR maximum.
inline Volume brain_mask(const Volume& mr) {
    const double thr = 0.1 * mr.max();
    Volume m(mr.shape(), mr.voxel_size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = mr[i] > thr ? 1.0 : 0.0;
    return m;
}

}  // namespace ucan
