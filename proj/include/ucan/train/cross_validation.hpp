#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ucan/data/folds.hpp"
#include "ucan/eval/evaluate.hpp"
#include "ucan/eval/plot.hpp"
#include "ucan/train/trainer.hpp"

namespace ucan::train {

struct FoldPlan {
    int fold = 0;
    std::vector<std::string> train, val, test;
};

/// Splits ids into k folds; the last `val_holdout` training ids of each fold
/// are held out for checkpoint selection when enough remain to train on.
inline std::vector<FoldPlan> plan_folds(const std::vector<std::string>& ids, const TrainConfig& cfg) {
    std::vector<FoldPlan> out;
    const auto folds = split_folds(ids, cfg.num_folds, cfg.seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        FoldPlan p{static_cast<int>(f), folds[f].train, {}, folds[f].test};
        const auto hold = static_cast<std::size_t>(cfg.val_holdout);
        if (hold > 0 && p.train.size() > hold) {
            p.val.assign(p.train.end() - static_cast<std::ptrdiff_t>(hold), p.train.end());
            p.train.resize(p.train.size() - hold);
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline std::filesystem::path fold_dir(const std::filesystem::path& run, int fold) {
    return run / ("fold_" + std::to_string(fold));
}

/// Trains one model per fold, evaluates its best checkpoint (and the copy
/// baseline) on the fold's test studies, and writes the pooled report and
/// plots under `run_dir/report`.
inline eval::MetricReport run_cross_validation(const TrainConfig& cfg, const std::vector<Study>& studies,
                                               const std::filesystem::path& run_dir) {
    cfg.validate_or_throw();
    std::map<std::string, const Study*> by_id;
    std::vector<std::string> ids;
    for (const auto& s : studies) {
        s.validate(true);
        if (!by_id.emplace(s.id, &s).second) throw ValidationError("duplicate study id '" + s.id + "'");
        ids.push_back(s.id);
    }
    auto normalized = [&](const std::vector<std::string>& sel) {
        std::vector<NormalizedStudy> out;
        for (const auto& id : sel) out.push_back(normalize_study(*by_id.at(id)));
        return out;
    };

    eval::MetricReport report;
    const eval::SlidingWindow sw{cfg.patch, static_cast<std::size_t>(cfg.inference_overlap)};
    for (const auto& plan : plan_folds(ids, cfg)) {
        TrainConfig fc = cfg;
        fc.fold = plan.fold;
        Trainer trainer(fc);
        const auto dir = fold_dir(run_dir, plan.fold);
        const auto fit = train_loop(trainer, normalized(plan.train), normalized(plan.val), dir);
        const auto g = fit.best_checkpoint ? load_generator(*fit.best_checkpoint) : std::move(trainer.generator());
        for (const auto& id : plan.test) eval::evaluate_study(g, *by_id.at(id), plan.fold, sw, cfg.full_fov, report);
    }
    eval::emit_report(report, run_dir / "report");
    eval::emit_plots(report, run_dir / "report");
    return report;
}

}  // namespace ucan::train
