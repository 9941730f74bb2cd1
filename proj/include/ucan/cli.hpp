#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ucan/ucan.hpp"

namespace ucan::cli {

namespace fs = std::filesystem;

inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kRunConfig = "config.txt";

/// Creates `dir`, clearing it first when `force` is set. A non-empty existing
/// directory without `force` is refused.
inline void prepare_output(const fs::path& dir, bool force) {
    std::error_code ec;
    if (fs::exists(dir, ec) && !(fs::is_directory(dir, ec) && fs::is_empty(dir, ec))) {
        if (!force) throw ValidationError(dir.string() + " already exists; pass --force to overwrite");
        fs::remove_all(dir, ec);
        if (ec) throw IoError("cannot clear " + dir.string() + ": " + ec.message());
    }
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const auto probe = dir / ".write_probe";
    {
        std::ofstream p(probe);
        if (!p) throw IoError(dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

inline void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_hash,
                           std::uint64_t seed, const nlohmann::json& args) {
    nlohmann::json m;
    m["schema"] = "ucan-manifest/1";
    m["command"] = command;
    m["code_version"] = UCAN_VERSION;
    m["config_hash"] = config_hash;
    m["seed"] = seed;
    m["args"] = args;
    std::ofstream out(dir / kManifest);
    if (!out) throw IoError("cannot write " + (dir / kManifest).string());
    out << m.dump(2) << "\n";
}

inline std::string text_hash(const std::string& s) { return ucan::detail::hex64(ucan::detail::fnv1a(s)); }

/// Study directories directly under `root` (those holding a sidecar), sorted by name.
inline std::vector<fs::path> list_study_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("data directory not found: " + root.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / layout::sidecar)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<TracerId> parse_targets(const std::vector<std::string>& items) {
    std::vector<TracerId> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) {
                const TracerId t = parse_tracer(tok);
                if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
            }
    }
    return out;
}

/// "32", "32x40x48" or "32,40,48".
inline Shape3 parse_shape_arg(const std::string& flag, std::string text) {
    std::replace(text.begin(), text.end(), 'x', ',');
    if (text.find(',') == std::string::npos) text = text + "," + text + "," + text;
    return ucan::detail::parse_shape(flag, text);
}

inline std::string prediction_file(TranslationTask task) { return "pred_" + task.slug() + ".nii"; }

struct PhantomArgs {
    std::size_t n = 5;
    std::string shape = "32";
    std::uint64_t seed = 0;
    std::string out;
    bool force = false;
};

inline int cmd_phantom(const PhantomArgs& a, std::ostream& log) {
    const Shape3 shape = parse_shape_arg("--shape", a.shape);
    prepare_output(a.out, a.force);
    for (std::size_t i = 0; i < a.n; ++i) {
        const Study s = generate_cohort_member(a.seed, i, shape);
        save_study(s, fs::path(a.out) / s.id);
    }
    const nlohmann::json args{{"n", a.n}, {"shape", shape.str()}, {"seed", a.seed}};
    write_manifest(a.out, "phantom", text_hash(args.dump()), a.seed, args);
    log << "wrote " << a.n << " phantom studies (" << shape.str() << ") to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string preset = "desk";
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    bool resume = false;
    bool cv = false;
    bool force = false;
};

/// Flags set the starting point; keys present in the config file win.
inline TrainConfig resolve_train_config(const TrainArgs& a) {
    TrainConfig base;
    if (a.preset == "desk") base = TrainConfig::desk();
    else if (a.preset != "paper") throw ValidationError("preset: expected 'desk' or 'paper', got '" + a.preset + "'");
    if (!a.data.empty()) base.data_dir = a.data;
    if (!a.out.empty()) base.run_dir = a.out;
    if (a.seed) base.seed = *a.seed;
    if (a.epochs) base.epochs = *a.epochs;
    TrainConfig cfg = a.config.empty() ? base : TrainConfig::load(a.config, base);
    std::vector<std::string> errs = cfg.validate();
    if (cfg.data_dir.empty()) errs.push_back("data_dir: required (--data or config key)");
    else if (!fs::is_directory(cfg.data_dir)) errs.push_back("data_dir: '" + cfg.data_dir + "' is not a directory");
    if (cfg.run_dir.empty()) errs.push_back("run_dir: required (--out or config key)");
    if (!errs.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    return cfg;
}

inline int cmd_train(const TrainArgs& a, std::ostream& log) {
    const TrainConfig cfg = resolve_train_config(a);
    const fs::path run = cfg.run_dir;
    std::vector<Study> studies;
    for (const auto& d : list_study_dirs(cfg.data_dir)) studies.push_back(load_study(d));
    if (studies.empty()) throw ValidationError("data_dir: no study directories under '" + cfg.data_dir + "'");

    const nlohmann::json args{{"data_dir", cfg.data_dir}, {"cv", a.cv}, {"resume", a.resume}};
    if (a.cv) {
        if (a.resume) throw ValidationError("--resume cannot be combined with --cv");
        prepare_output(run, a.force);
        cfg.save((run / kRunConfig).string());
        write_manifest(run, "train --cv", cfg.hash(), cfg.seed, args);
        const auto report = train::run_cross_validation(cfg, studies, run);
        log << "cross-validation finished: " << report.rows.size() << " metric rows, report in "
            << (run / "report").string() << "\n";
        return 0;
    }

    std::vector<NormalizedStudy> train_set, val_set;
    const auto hold = static_cast<std::size_t>(cfg.val_holdout);
    for (std::size_t i = 0; i < studies.size(); ++i) {
        const bool is_val = hold > 0 && studies.size() > hold && i >= studies.size() - hold;
        (is_val ? val_set : train_set).push_back(normalize_study(studies[i]));
    }

    std::optional<train::Trainer> trainer;
    if (a.resume) {
        const auto last = train::layout::last_checkpoint(run);
        if (!fs::exists(last)) throw IoError("nothing to resume: " + last.string() + " not found");
        trainer.emplace(train::Trainer::from_checkpoint(last, cfg));
        log << "resuming at step " << trainer->state().step << ", epoch " << trainer->state().epoch << "\n";
    } else {
        prepare_output(run, a.force);
        trainer.emplace(cfg);
    }
    cfg.save((run / kRunConfig).string());
    write_manifest(run, "train", cfg.hash(), cfg.seed, args);
    const auto fit = train::train_loop(*trainer, train_set, val_set, run);
    log << "trained to step " << trainer->state().step << " (epoch " << trainer->state().epoch << ")";
    if (fit.last_checkpoint) log << ", final checkpoint " << fit.last_checkpoint->string();
    log << "\n";
    return 0;
}

struct InferArgs {
    std::string checkpoint;
    std::string study;
    std::string source;
    std::vector<std::string> targets;
    std::string out;
    std::size_t overlap = 8;
    std::string patch;
    bool force = false;
};

/// Translates the source tracer of one study to each requested target with a
/// single generator. Outputs keep the source volume's shape and voxel size and
/// are denormalized with the target record when the study provides one.
inline int cmd_infer(const InferArgs& a, std::ostream& log) {
    const TracerId source = parse_tracer(a.source);
    auto targets = parse_targets(a.targets);
    if (targets.empty()) {
        for (TracerId t : kAllTracers)
            if (t != source) targets.push_back(t);
    }
    for (TracerId t : targets)
        if (t == source) throw ValidationError("target " + to_string(t) + " equals the source tracer");

    const Study s = load_study(a.study, false);
    const Volume& x = s.tracer(source);
    const auto g = train::load_generator(a.checkpoint);
    const std::size_t m = g.spec().granularity();
    Shape3 patch;
    if (!a.patch.empty()) {
        patch = parse_shape_arg("--patch", a.patch);
    } else {
        auto round_up = [m](std::size_t e) { return (std::min<std::size_t>(e, 64) + m - 1) / m * m; };
        patch = {round_up(x.shape().d), round_up(x.shape().h), round_up(x.shape().w)};
    }
    const eval::SlidingWindow sw{patch, std::min({a.overlap, patch.d / 2, patch.h / 2, patch.w / 2})};

    prepare_output(a.out, a.force);
    nlohmann::json outputs = nlohmann::json::array();
    for (TracerId t : targets) {
        const TranslationTask task{source, t};
        const auto rec = eval::target_record(s, t);
        Volume y = eval::infer_whole_volume(g, x, s.mr, t, sw, rec);
        nifti::write(y, fs::path(a.out) / prediction_file(task), "ucan " + task.name());
        outputs.push_back({{"task", task.name()}, {"file", prediction_file(task)}, {"denormalized", rec.has_value()}});
        log << task.name() << " -> " << (fs::path(a.out) / prediction_file(task)).string() << "\n";
    }
    const nlohmann::json args{{"checkpoint", a.checkpoint}, {"study", a.study}, {"study_id", s.id},
                              {"source", to_string(source)}, {"patch", patch.str()}, {"overlap", sw.overlap},
                              {"outputs", outputs}};
    const auto header = train::read_checkpoint_header(a.checkpoint);
    write_manifest(a.out, "infer", header.value("config_hash", ""), header.value("seed", std::uint64_t{0}), args);
    return 0;
}

struct EvalArgs {
    std::vector<std::string> studies;
    std::vector<std::string> preds;
    std::string out;
    bool full_fov = false;
    bool force = false;
};

/// Scores prediction directories written by `infer` against ground-truth
/// studies (paired by position). Tasks without a prediction file, or whose
/// ground truth is absent, become "n/a" rows. The copy-the-input baseline is
/// scored alongside.
inline int cmd_eval(const EvalArgs& a, std::ostream& log) {
    if (a.studies.size() != a.preds.size())
        throw ValidationError("--study and --pred must be given the same number of times");
    eval::MetricReport report;
    for (std::size_t i = 0; i < a.studies.size(); ++i) {
        const Study s = load_study(a.studies[i], false);
        if (!fs::is_directory(a.preds[i])) throw IoError("prediction directory not found: " + a.preds[i]);
        for (const auto& task : all_tasks()) {
            std::optional<Volume> pred;
            const auto file = fs::path(a.preds[i]) / prediction_file(task);
            if (fs::exists(file)) {
                const VoxelSize vox = s.mr.voxel_size();
                pred = nifti::read(file, &vox);
            }
            eval::append_metrics(report, eval::kModelMethod, task, s, 0, pred, a.full_fov);
            eval::append_metrics(report, eval::kCopyMethod, task, s, 0, eval::copy_baseline(s, task), a.full_fov);
        }
    }
    prepare_output(a.out, a.force);
    eval::emit_report(report, a.out);
    eval::emit_plots(report, a.out);
    const nlohmann::json args{{"studies", a.studies}, {"preds", a.preds}, {"full_fov", a.full_fov}};
    write_manifest(a.out, "eval", text_hash(args.dump()), 0, args);
    log << "evaluated " << a.studies.size() << " studies into " << a.out << "\n";
    return 0;
}

struct ReportArgs {
    std::string from;
    std::string out;
    bool force = false;
};

/// Re-emits tables and plots from a saved report.json.
inline int cmd_report(const ReportArgs& a, std::ostream& log) {
    const auto report = eval::load_report(a.from);
    prepare_output(a.out, a.force);
    eval::emit_report(report, a.out);
    eval::emit_plots(report, a.out);
    const nlohmann::json args{{"from", a.from}};
    write_manifest(a.out, "report", text_hash(args.dump()), 0, args);
    log << "report written to " << a.out << "\n";
    return 0;
}

/// Parses argv and dispatches. Returns the process exit code:
/// 0 success, 1 validation, 2 runtime, 3 IO.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Multi-domain 3D PET translation: phantom data, training, inference, evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(UCAN_VERSION));

    PhantomArgs pa;
    auto* ph = app.add_subcommand("phantom", "Generate synthetic multi-tracer phantom studies");
    ph->add_option("--n", pa.n, "Number of studies")->capture_default_str();
    ph->add_option("--shape", pa.shape, "Volume shape, 'S' or 'DxHxW' (each >= 16)")->capture_default_str();
    ph->add_option("--seed", pa.seed, "Cohort seed")->capture_default_str();
    ph->add_option("--out", pa.out, "Output directory")->required();
    ph->add_flag("--force", pa.force, "Overwrite an existing output directory");

    TrainArgs ta;
    std::uint64_t seed_flag = 0;
    int epochs_flag = 0;
    auto* tr = app.add_subcommand("train", "Train a generator (or run k-fold cross-validation with --cv)");
    tr->add_option("--config", ta.config, "Config file of 'key = value' lines; its keys override flags");
    tr->add_option("--preset", ta.preset, "Base settings before flags and config: desk or paper")->capture_default_str();
    tr->add_option("--data", ta.data, "Directory of study directories (config key data_dir)");
    tr->add_option("--out", ta.out, "Run directory (config key run_dir)");
    auto* seed_opt = tr->add_option("--seed", seed_flag, "Random seed (config key seed)");
    auto* epochs_opt = tr->add_option("--epochs", epochs_flag, "Epoch count (config key epochs)");
    tr->add_flag("--resume", ta.resume, "Continue from <run>/checkpoints/last.ckpt");
    tr->add_flag("--cv", ta.cv, "k-fold cross-validation with evaluation and report");
    tr->add_flag("--force", ta.force, "Overwrite an existing run directory");

    InferArgs ia;
    auto* in = app.add_subcommand("infer", "Translate one study's source tracer into other tracers");
    in->add_option("--checkpoint", ia.checkpoint, "Checkpoint file")->required();
    in->add_option("--study", ia.study, "Study directory holding the source tracer and MR")->required();
    in->add_option("--source", ia.source, "Source tracer: A, B or C")->required();
    in->add_option("--targets", ia.targets, "Target tracers, e.g. B,C (default: both others)");
    in->add_option("--out", ia.out, "Output directory")->required();
    in->add_option("--patch", ia.patch, "Window shape (default: volume extent rounded up, at most 64)");
    in->add_option("--overlap", ia.overlap, "Window overlap in voxels")->capture_default_str();
    in->add_flag("--force", ia.force, "Overwrite an existing output directory");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score prediction directories against ground-truth studies");
    ev->add_option("--study", ea.studies, "Ground-truth study directory (repeatable)")->required();
    ev->add_option("--pred", ea.preds, "Prediction directory from infer, paired with --study (repeatable)")->required();
    ev->add_option("--out", ea.out, "Report directory")->required();
    ev->add_flag("--full-fov", ea.full_fov, "Score the whole field of view instead of the brain mask");
    ev->add_flag("--force", ea.force, "Overwrite an existing output directory");

    ReportArgs ra;
    auto* rp = app.add_subcommand("report", "Re-emit tables and plots from a report.json");
    rp->add_option("--from", ra.from, "report.json path")->required();
    rp->add_option("--out", ra.out, "Output directory")->required();
    rp->add_flag("--force", ra.force, "Overwrite an existing output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::validation);
    }
    if (seed_opt->count()) ta.seed = seed_flag;
    if (epochs_opt->count()) ta.epochs = epochs_flag;

    try {
        if (ph->parsed()) return cmd_phantom(pa, out);
        if (tr->parsed()) return cmd_train(ta, out);
        if (in->parsed()) return cmd_infer(ia, out);
        if (ev->parsed()) return cmd_eval(ea, out);
        if (rp->parsed()) return cmd_report(ra, out);
    } catch (const DivergenceError& e) {
        err << "error: training diverged (" << e.term() << "): " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::io);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::runtime);
    }
    return static_cast<int>(ErrorKind::runtime);
}

}  // namespace ucan::cli
