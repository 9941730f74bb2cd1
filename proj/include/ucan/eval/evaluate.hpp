#pragma once

#include <optional>

#include "ucan/data/study.hpp"
#include "ucan/eval/inference.hpp"
#include "ucan/eval/metrics.hpp"
#include "ucan/eval/report.hpp"

namespace ucan::eval {

/// Appends one metric row and its ROI bias rows. A missing prediction or
/// ground truth yields "n/a" cells rather than zeros.
inline void append_metrics(MetricReport& report, const std::string& method, TranslationTask task, const Study& study,
                           int fold, const std::optional<Volume>& pred, bool full_fov) {
    const Volume* gt = study.has(task.target) ? &study.tracer(task.target) : nullptr;
    MetricRow row{method, task.name(), study.id, fold, std::nullopt, std::nullopt};
    const bool ok = pred && gt;
    if (ok) {
        require_same_shape(*pred, *gt, "prediction vs ground truth");
        const Volume mask = brain_mask(study.mr);
        const Volume* m = full_fov ? nullptr : &mask;
        row.nmse_percent = nmse(*pred, *gt, m);
        row.ssim = ssim(*pred, *gt, m);
    }
    report.rows.push_back(row);
    for (const auto& [name, roi] : study.roi_masks)
        report.bias_rows.push_back({method, task.name(), study.id, fold, name,
                                    ok ? std::optional<double>(roi_bias(*pred, *gt, roi)) : std::nullopt});
}

inline std::optional<NormRecord> target_record(const Study& s, TracerId t) {
    if (auto it = s.norm_records.find(t); it != s.norm_records.end()) return it->second;
    if (s.has(t)) return NormRecord{s.tracer(t).max()};
    return std::nullopt;
}

/// Copy-the-input baseline: the source volume in normalized space, mapped
/// back with the target tracer's record.
inline std::optional<Volume> copy_baseline(const Study& s, TranslationTask task) {
    auto rec = target_record(s, task.target);
    if (!rec || !s.has(task.source)) return std::nullopt;
    return denormalize(normalize(s.tracer(task.source)).first, *rec);
}

/// Evaluates the model and the copy baseline on all six tasks of one study.
template <class T>
void evaluate_study(const nets::Generator<T>& g, const Study& s, int fold, const SlidingWindow& sw, bool full_fov,
                    MetricReport& report) {
    for (const auto& task : all_tasks()) {
        std::optional<Volume> pred;
        auto rec = target_record(s, task.target);
        if (s.has(task.source) && rec) pred = infer_whole_volume(g, s.tracer(task.source), s.mr, task.target, sw, rec);
        append_metrics(report, kModelMethod, task, s, fold, pred, full_fov);
        append_metrics(report, kCopyMethod, task, s, fold, copy_baseline(s, task), full_fov);
    }
}

}  // namespace ucan::eval
