#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ucan/data/sampling.hpp"
#include "ucan/eval/inference.hpp"
#include "ucan/eval/metrics.hpp"
#include "ucan/losses.hpp"
#include "ucan/train/adam.hpp"
#include "ucan/train/checkpoint.hpp"

namespace ucan::train {

using Batch = std::vector<TrainingSample>;

/// Counters and random stream of a run; everything needed to resume besides
/// the parameters and optimizer moments.
struct TrainState {
    long step = 0;
    int epoch = 0;
    double best_val_nmse = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng;
};

struct LogRow {
    long step = 0;
    int epoch = 0;
    losses::LossBreakdown loss;
};

inline constexpr const char* kLogHeader = "step,epoch,pair,adv_g,adv_d,clsf_real,clsf_fake,rec,total_g,total_d";

inline std::string log_line(const LogRow& r) {
    using ucan::detail::fmt_double;
    const auto& l = r.loss;
    return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt_double(l.pair) + "," + fmt_double(l.adv_g) +
           "," + fmt_double(l.adv_d) + "," + fmt_double(l.clsf_real) + "," + fmt_double(l.clsf_fake) + "," +
           fmt_double(l.rec) + "," + fmt_double(l.total_g) + "," + fmt_double(l.total_d);
}

/// Owns both networks, their optimizers and the run state, and performs the
/// alternating updates: D with G frozen, then G with D frozen.
class Trainer {
public:
    using Net = float;

    explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate_or_throw();
        std::mt19937_64 init(cfg_.seed);
        g_ = std::make_unique<nets::Generator<Net>>(nets::GeneratorSpec::from_config(cfg_), init);
        d_ = std::make_unique<nets::Discriminator<Net>>(nets::DiscriminatorSpec::from_config(cfg_), init);
        opt_g_ = std::make_unique<Adam<Net>>(g_->params(), cfg_.lr_g, cfg_.beta1, cfg_.beta2);
        opt_d_ = std::make_unique<Adam<Net>>(d_->params(), cfg_.lr_d, cfg_.beta1, cfg_.beta2);
        state_.rng.seed(cfg_.seed ^ 0x9E3779B97F4A7C15ull);
    }

    const TrainConfig& config() const noexcept { return cfg_; }
    nets::Generator<Net>& generator() noexcept { return *g_; }
    const nets::Generator<Net>& generator() const noexcept { return *g_; }
    nets::Discriminator<Net>& discriminator() noexcept { return *d_; }
    TrainState& state() noexcept { return state_; }
    const TrainState& state() const noexcept { return state_; }
    /// One character per optimizer update, 'D' or 'G', in order.
    const std::string& update_history() const noexcept { return history_; }

    /// Draws `batch_size` patches, each from a uniformly chosen study.
    Batch sample_batch(const std::vector<NormalizedStudy>& studies) {
        if (studies.empty()) throw ValidationError("no training studies");
        std::uniform_int_distribution<std::size_t> pick(0, studies.size() - 1);
        Batch b;
        for (int i = 0; i < cfg_.batch_size; ++i) b.push_back(sample_training_patch(studies[pick(state_.rng)], cfg_.patch, state_.rng));
        return b;
    }

    /// L_D = a_adv * adv_d + a_clsf * clsf_real, one optimizer step on D.
    losses::LossBreakdown train_step_d(const Batch& batch) { return step_d(batch, true); }

    /// L_G = pair + a_rec * rec + a_adv * adv_g + a_clsf * clsf_fake, one optimizer step on G.
    losses::LossBreakdown train_step_g(const Batch& batch) { return step_g(batch, true); }

    /// Objectives on a batch without touching any parameter.
    losses::LossBreakdown measure_d(const Batch& batch) { return step_d(batch, false); }
    losses::LossBreakdown measure_g(const Batch& batch) { return step_g(batch, false); }

    /// Gradient of L_G w.r.t. every generator parameter, flattened, no update.
    std::vector<Net> generator_gradient(const Batch& batch) {
        step_g(batch, false, true);
        std::vector<Net> out;
        for (const auto& [_, v] : g_->params().entries()) {
            if (v.grad().empty()) out.insert(out.end(), v.value().numel(), Net(0));
            else out.insert(out.end(), v.grad().vec().begin(), v.grad().vec().end());
        }
        g_->params().zero_grad();
        return out;
    }

    void save_checkpoint(const std::filesystem::path& path) const {
        nlohmann::json h;
        h["config"] = cfg_.serialize();
        h["config_hash"] = cfg_.hash();
        h["seed"] = cfg_.seed;
        h["code_version"] = UCAN_VERSION;
        h["generator_spec"] = to_json(g_->spec());
        h["discriminator_spec"] = to_json(d_->spec());
        h["generator_params"] = param_manifest(g_->params());
        h["discriminator_params"] = param_manifest(d_->params());
        h["step"] = state_.step;
        h["epoch"] = state_.epoch;
        h["best_val_nmse"] = std::isfinite(state_.best_val_nmse) ? nlohmann::json(state_.best_val_nmse) : nlohmann::json(nullptr);
        std::ostringstream rs;
        rs << state_.rng;
        h["rng_state"] = rs.str();
        h["adam_g_steps"] = opt_g_->steps();
        h["adam_d_steps"] = opt_d_->steps();
        h["update_history_length"] = history_.size();
        auto flat = [](const std::vector<std::vector<Net>>& vs) {
            std::vector<float> out;
            for (const auto& v : vs) out.insert(out.end(), v.begin(), v.end());
            return out;
        };
        write_checkpoint(path, h,
                         {{"generator", g_->params().flatten()},
                          {"discriminator", d_->params().flatten()},
                          {"adam_g_m", flat(opt_g_->first_moments())},
                          {"adam_g_v", flat(opt_g_->second_moments())},
                          {"adam_d_m", flat(opt_d_->first_moments())},
                          {"adam_d_v", flat(opt_d_->second_moments())}});
    }

    /// Rebuilds a trainer from a checkpoint. `override_cfg`, when given, must
    /// describe the same networks; it may change schedule fields such as epochs.
    static Trainer from_checkpoint(const std::filesystem::path& path, const std::optional<TrainConfig>& override_cfg = {}) {
        auto f = read_checkpoint(path);
        TrainConfig cfg = TrainConfig::parse(f.header.at("config").get<std::string>());
        if (override_cfg) {
            if (nets::GeneratorSpec::from_config(*override_cfg) != nets::GeneratorSpec::from_config(cfg) ||
                nets::DiscriminatorSpec::from_config(*override_cfg) != nets::DiscriminatorSpec::from_config(cfg))
                throw ValidationError("resume config describes different networks than the checkpoint");
            cfg = *override_cfg;
        }
        Trainer t(cfg);
        check_manifest(t.g_->params(), f.header.at("generator_params"), "generator");
        check_manifest(t.d_->params(), f.header.at("discriminator_params"), "discriminator");
        t.g_->params().assign(f.sections.at("generator"));
        t.d_->params().assign(f.sections.at("discriminator"));
        auto unflat = [](const std::vector<float>& flat, std::vector<std::vector<Net>>& dst) {
            std::size_t off = 0;
            for (auto& v : dst) {
                if (off + v.size() > flat.size()) throw IoError("checkpoint optimizer state too short");
                std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.begin());
                off += v.size();
            }
        };
        unflat(f.sections.at("adam_g_m"), t.opt_g_->first_moments());
        unflat(f.sections.at("adam_g_v"), t.opt_g_->second_moments());
        unflat(f.sections.at("adam_d_m"), t.opt_d_->first_moments());
        unflat(f.sections.at("adam_d_v"), t.opt_d_->second_moments());
        t.opt_g_->set_steps(f.header.at("adam_g_steps"));
        t.opt_d_->set_steps(f.header.at("adam_d_steps"));
        t.state_.step = f.header.at("step");
        t.state_.epoch = f.header.at("epoch");
        const auto& best = f.header.at("best_val_nmse");
        t.state_.best_val_nmse = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
        std::istringstream rs(f.header.at("rng_state").get<std::string>());
        rs >> t.state_.rng;
        if (!rs) throw IoError(path.string() + ": corrupt RNG state");
        return t;
    }

    /// Mean NMSE over the six tasks and the given studies, inside the brain mask.
    double validation_nmse(const std::vector<NormalizedStudy>& studies) const {
        double acc = 0.0;
        std::size_t n = 0;
        const eval::SlidingWindow sw{cfg_.patch, static_cast<std::size_t>(cfg_.inference_overlap)};
        for (const auto& ns : studies)
            for (const auto& task : all_tasks()) {
                const Volume pred_n = eval::infer_normalized(*g_, ns.tracer(task.source), ns.mr, task.target, sw);
                const auto& rec = ns.record(task.target);
                const Volume pred = denormalize(pred_n, rec);
                const Volume gt = denormalize(ns.tracer(task.target), rec);
                acc += eval::nmse(pred, gt, cfg_.full_fov ? nullptr : &ns.brain);
                ++n;
            }
        return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    }

private:
    struct BatchVars {
        ag::Var<Net> pet, mr, gt, label_t, label_s;
        std::vector<TracerId> sources, targets;
        std::size_t n = 0;
    };

    static BatchVars to_vars(const Batch& batch) {
        if (batch.empty()) throw ValidationError("empty batch");
        BatchVars b;
        b.n = batch.size();
        std::vector<const Volume*> pet, mr, gt;
        for (const auto& s : batch) {
            pet.push_back(&s.x_pet);
            mr.push_back(&s.x_mr);
            gt.push_back(&s.y_gt);
            b.sources.push_back(s.m_source.tracer());
            b.targets.push_back(s.m_target.tracer());
            if (s.m_source.tracer() == s.m_target.tracer()) throw ValidationError("training sample with source == target");
        }
        const Shape3 shape = batch[0].x_pet.shape();
        b.pet = ag::Var<Net>::leaf(ag::volume_tensor<Net>(pet));
        b.mr = ag::Var<Net>::leaf(ag::volume_tensor<Net>(mr));
        b.gt = ag::Var<Net>::leaf(ag::volume_tensor<Net>(gt));
        b.label_t = ag::Var<Net>::leaf(ag::label_tensor<Net>(b.targets, shape));
        b.label_s = ag::Var<Net>::leaf(ag::label_tensor<Net>(b.sources, shape));
        return b;
    }

    ag::Var<Net> d_input(const ag::Var<Net>& vol, const ag::Var<Net>& mr) const {
        return cfg_.d_sees_mr ? ag::concat<Net>({vol, mr}, 1) : vol;
    }

    losses::LossBreakdown step_d(const Batch& batch, bool update) {
        std::optional<ag::NoGradGuard> frozen;
        if (!update) frozen.emplace();
        const BatchVars b = to_vars(batch);
        ag::Var<Net> fake;
        {
            ag::NoGradGuard ng;
            fake = g_->forward(b.pet, b.mr, b.label_t);
        }
        const auto mr3 = ag::concat<Net>({b.mr, b.mr, b.mr}, 0);
        const auto out = d_->forward(d_input(ag::concat<Net>({b.pet, b.gt, fake}, 0), mr3));
        const auto real_scores = ag::slice_batch(out.scores, 0, 2 * b.n);
        const auto fake_scores = ag::slice_batch(out.scores, 2 * b.n, 3 * b.n);
        const auto adv_d = losses::adversarial_d(real_scores, fake_scores);
        const auto clsf_real = losses::classification_loss(ag::slice_batch(out.logits, 0, b.n), b.sources);

        losses::LossBreakdown parts;
        parts.adv_d = adv_d.value()[0];
        parts.clsf_real = clsf_real.value()[0];
        parts = losses::combine(parts, cfg_);
        if (update) {
            const auto total = ag::weighted_sum<Net>({adv_d, clsf_real}, {Net(cfg_.alpha_adv), Net(cfg_.alpha_clsf)});
            d_->params().zero_grad();
            total.backward();
            opt_d_->step();
            d_->params().zero_grad();
            history_ += 'D';
        }
        return parts;
    }

    losses::LossBreakdown step_g(const Batch& batch, bool update, bool keep_grad = false) {
        std::optional<ag::NoGradGuard> frozen;
        if (!update && !keep_grad) frozen.emplace();
        const BatchVars b = to_vars(batch);
        d_->params().set_requires_grad(false);
        struct Restore {
            nets::ParamStore<Net>& ps;
            ~Restore() { ps.set_requires_grad(true); }
        } restore{d_->params()};

        const auto fake = g_->forward(b.pet, b.mr, b.label_t);
        const auto cyc = g_->forward(fake, b.mr, b.label_s);
        const auto out = d_->forward(d_input(fake, b.mr));
        const auto pair = losses::pair_loss(fake, b.gt);
        const auto rec = losses::cyclic_reconstruction_loss(b.pet, cyc);
        const auto adv_g = losses::adversarial_g(out.scores, cfg_.adv_mode);
        const auto clsf_fake = losses::classification_loss(out.logits, b.targets);

        losses::LossBreakdown parts;
        parts.pair = pair.value()[0];
        parts.rec = rec.value()[0];
        parts.adv_g = adv_g.value()[0];
        parts.clsf_fake = clsf_fake.value()[0];
        parts = losses::combine(parts, cfg_);
        if (update || keep_grad) {
            const auto total = ag::weighted_sum<Net>(
                {pair, rec, adv_g, clsf_fake}, {Net(1), Net(cfg_.alpha_rec), Net(cfg_.alpha_adv), Net(cfg_.alpha_clsf)});
            g_->params().zero_grad();
            total.backward();
            if (update) {
                opt_g_->step();
                g_->params().zero_grad();
                history_ += 'G';
            }
        }
        return parts;
    }

    TrainConfig cfg_;
    std::unique_ptr<nets::Generator<Net>> g_;
    std::unique_ptr<nets::Discriminator<Net>> d_;
    std::unique_ptr<Adam<Net>> opt_g_, opt_d_;
    TrainState state_;
    std::string history_;
};

struct FitResult {
    std::vector<LogRow> log;
    std::optional<std::filesystem::path> best_checkpoint;
    std::optional<std::filesystem::path> last_checkpoint;
};

namespace layout {
inline std::filesystem::path checkpoint_dir(const std::filesystem::path& run) { return run / "checkpoints"; }
inline std::filesystem::path epoch_checkpoint(const std::filesystem::path& run, int epoch) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
    return checkpoint_dir(run) / name;
}
inline std::filesystem::path best_checkpoint(const std::filesystem::path& run) { return checkpoint_dir(run) / "best.ckpt"; }
inline std::filesystem::path last_checkpoint(const std::filesystem::path& run) { return checkpoint_dir(run) / "last.ckpt"; }
inline std::filesystem::path train_log(const std::filesystem::path& run) { return run / "train_log.csv"; }
inline std::filesystem::path val_log(const std::filesystem::path& run) { return run / "val_log.csv"; }
}  // namespace layout

/// Runs epochs state.epoch+1 .. cfg.epochs. Each step is one D update then one
/// G update on the same batch. With a non-empty `run_dir`, appends the per-step
/// CSV log and writes periodic, best-validation and final checkpoints there.
/// A non-finite loss aborts with DivergenceError; checkpoints already on disk
/// are left untouched.
inline FitResult train_loop(Trainer& trainer, const std::vector<NormalizedStudy>& train,
                            const std::vector<NormalizedStudy>& val, const std::filesystem::path& run_dir = {}) {
    if (train.empty()) throw ValidationError("train_loop: no training studies");
    const TrainConfig& cfg = trainer.config();
    auto& st = trainer.state();
    FitResult result;
    const bool persist = !run_dir.empty();
    std::ofstream log, vlog;
    if (persist) {
        std::filesystem::create_directories(layout::checkpoint_dir(run_dir));
        const bool fresh = !std::filesystem::exists(layout::train_log(run_dir));
        log.open(layout::train_log(run_dir), std::ios::app);
        if (!log) throw IoError("cannot write " + layout::train_log(run_dir).string());
        if (fresh) log << kLogHeader << "\n";
        const bool vfresh = !std::filesystem::exists(layout::val_log(run_dir));
        vlog.open(layout::val_log(run_dir), std::ios::app);
        if (vfresh) vlog << "epoch,step,val_nmse_percent\n";
    }
    const long steps_per_epoch = std::max<long>(
        1, (static_cast<long>(train.size()) * cfg.patches_per_study + cfg.batch_size - 1) / cfg.batch_size);

    while (st.epoch < cfg.epochs) {
        const int epoch = st.epoch + 1;
        for (long i = 0; i < steps_per_epoch; ++i) {
            const Batch batch = trainer.sample_batch(train);
            LogRow row{st.step + 1, epoch, {}};
            try {
                const auto d = trainer.train_step_d(batch);
                const auto g = trainer.train_step_g(batch);
                row.loss = g;
                row.loss.adv_d = d.adv_d;
                row.loss.clsf_real = d.clsf_real;
                row.loss.total_d = d.total_d;
            } catch (const DivergenceError& e) {
                throw DivergenceError(e.term(), std::string(e.what()) + " at step " + std::to_string(row.step));
            }
            st.step = row.step;
            result.log.push_back(row);
            if (persist) log << log_line(row) << "\n";
        }
        st.epoch = epoch;
        if (persist) log.flush();

        if (!val.empty()) {
            const double v = trainer.validation_nmse(val);
            if (persist) vlog << epoch << "," << st.step << "," << ucan::detail::fmt_double(v) << "\n" << std::flush;
            if (v < st.best_val_nmse) {
                st.best_val_nmse = v;
                if (persist) {
                    trainer.save_checkpoint(layout::best_checkpoint(run_dir));
                    result.best_checkpoint = layout::best_checkpoint(run_dir);
                }
            }
        }
        if (persist && epoch % cfg.checkpoint_every == 0) trainer.save_checkpoint(layout::epoch_checkpoint(run_dir, epoch));
    }
    if (persist && !result.log.empty()) {
        trainer.save_checkpoint(layout::last_checkpoint(run_dir));
        result.last_checkpoint = layout::last_checkpoint(run_dir);
        if (val.empty() || !std::filesystem::exists(layout::best_checkpoint(run_dir))) {
            trainer.save_checkpoint(layout::best_checkpoint(run_dir));
            result.best_checkpoint = layout::best_checkpoint(run_dir);
        } else {
            result.best_checkpoint = layout::best_checkpoint(run_dir);
        }
    }
    return result;
}

}  // namespace ucan::train
