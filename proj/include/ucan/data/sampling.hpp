#pragma once

#include <algorithm>
#include <array>
#include <random>

#include "ucan/data/domain_label.hpp"
#include "ucan/data/study.hpp"

namespace ucan {

/// A study with every modality mapped to [-1, 1].
struct NormalizedStudy {
    std::string id;
    std::array<Volume, 3> pet;
    Volume mr;
    std::array<NormRecord, 3> records;
    Volume brain;  // binary support mask
    std::array<Shape3, 2> bbox;  // inclusive-exclusive corners of the brain support

    const Volume& tracer(TracerId t) const { return pet[static_cast<std::size_t>(ordinal(t))]; }
    const NormRecord& record(TracerId t) const { return records[static_cast<std::size_t>(ordinal(t))]; }
};

inline NormalizedStudy normalize_study(const Study& s) {
    s.validate(true);
    NormalizedStudy n;
    n.id = s.id;
    for (TracerId t : kAllTracers) {
        auto [v, rec] = normalize(s.tracer(t));
        n.pet[static_cast<std::size_t>(ordinal(t))] = std::move(v);
        n.records[static_cast<std::size_t>(ordinal(t))] = rec;
    }
    n.mr = normalize(s.mr).first;
    n.brain = brain_mask(s.mr);
    const Shape3& sh = s.shape();
    Shape3 lo{sh.d, sh.h, sh.w}, hi{0, 0, 0};
    for (std::size_t z = 0; z < sh.d; ++z)
        for (std::size_t y = 0; y < sh.h; ++y)
            for (std::size_t x = 0; x < sh.w; ++x)
                if (n.brain.at(z, y, x) > 0.0) {
                    lo = {std::min(lo.d, z), std::min(lo.h, y), std::min(lo.w, x)};
                    hi = {std::max(hi.d, z + 1), std::max(hi.h, y + 1), std::max(hi.w, x + 1)};
                }
    if (hi.d == 0) {
        lo = {0, 0, 0};
        hi = sh;
    }
    n.bbox = {lo, hi};
    return n;
}

struct TrainingSample {
    Volume x_pet;
    Volume x_mr;
    Volume y_gt;
    DomainLabel m_target;
    DomainLabel m_source;
};

/// Source uniform over {A, B, C}; target uniform over the other two.
template <class Rng>
TranslationTask sample_task(Rng& rng) {
    std::uniform_int_distribution<int> src(0, kNumDomains - 1);
    std::uniform_int_distribution<int> step(1, kNumDomains - 1);
    const int s = src(rng);
    return {tracer_from_ordinal(s), tracer_from_ordinal((s + step(rng)) % kNumDomains)};
}

template <class Rng>
TrainingSample sample_training_pair(const NormalizedStudy& ns, Rng& rng) {
    const TranslationTask task = sample_task(rng);
    const Shape3 s = ns.mr.shape();
    return {ns.tracer(task.source), ns.mr, ns.tracer(task.target), DomainLabel(task.target, s),
            DomainLabel(task.source, s)};
}

template <class Rng>
TrainingSample sample_training_pair(const Study& study, Rng& rng) {
    if (!study.complete()) {
        for (TracerId t : kAllTracers) (void)study.tracer(t);
        if (study.mr.empty()) throw MissingModality("study '" + study.id + "' has no MR volume");
    }
    return sample_training_pair(normalize_study(study), rng);
}

/// Patch origin along one axis: uniform over placements overlapping the brain
/// box, clamped to the volume.
template <class Rng>
std::size_t patch_origin(std::size_t lo, std::size_t hi, std::size_t extent, std::size_t patch, Rng& rng) {
    if (patch > extent) throw ShapeMismatch("patch extent " + std::to_string(patch) + " exceeds volume extent " + std::to_string(extent));
    const std::size_t max_origin = extent - patch;
    std::size_t first = lo, last = hi > patch ? hi - patch : 0;
    if (first > last) {
        const std::size_t centre = (lo + hi) / 2;
        first = last = centre > patch / 2 ? centre - patch / 2 : 0;
    }
    first = std::min(first, max_origin);
    last = std::min(last, max_origin);
    std::uniform_int_distribution<std::size_t> d(first, last);
    return d(rng);
}

/// A task drawn as in sample_training_pair, cropped to a random patch inside
/// the brain bounding box.
template <class Rng>
TrainingSample sample_training_patch(const NormalizedStudy& ns, Shape3 patch, Rng& rng) {
    const TranslationTask task = sample_task(rng);
    const Shape3 s = ns.mr.shape();
    const auto& [lo, hi] = ns.bbox;
    const Shape3 origin{patch_origin(lo.d, hi.d, s.d, patch.d, rng), patch_origin(lo.h, hi.h, s.h, patch.h, rng),
                        patch_origin(lo.w, hi.w, s.w, patch.w, rng)};
    return {crop(ns.tracer(task.source), origin, patch), crop(ns.mr, origin, patch),
            crop(ns.tracer(task.target), origin, patch), DomainLabel(task.target, patch),
            DomainLabel(task.source, patch)};
}

}  // namespace ucan
