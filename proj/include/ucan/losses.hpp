#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ucan/autograd/ops.hpp"
#include "ucan/core/config.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/core/volume.hpp"

namespace ucan::losses {

/// Score clamp applied before every log.
inline constexpr double kScoreEps = 1e-7;

/// The four loss components and the two combined objectives.
struct LossBreakdown {
    double pair = 0;
    double adv_g = 0;
    double adv_d = 0;
    double clsf_real = 0;
    double clsf_fake = 0;
    double rec = 0;
    double total_g = 0;
    double total_d = 0;

    friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// Fills total_g / total_d from the parts:
///   total_g = pair + a_rec * rec + a_adv * adv_g + a_clsf * clsf_fake
///   total_d = a_adv * adv_d + a_clsf * clsf_real
inline LossBreakdown combine(LossBreakdown parts, const TrainConfig& cfg) {
    const std::pair<const char*, double> named[] = {{"pair", parts.pair},           {"adv_g", parts.adv_g},
                                                    {"adv_d", parts.adv_d},         {"clsf_real", parts.clsf_real},
                                                    {"clsf_fake", parts.clsf_fake}, {"rec", parts.rec}};
    for (const auto& [name, v] : named)
        if (!std::isfinite(v)) throw DivergenceError(name, "loss term is " + std::to_string(v));
    parts.total_g = (parts.pair + cfg.alpha_rec * parts.rec) + (cfg.alpha_adv * parts.adv_g + cfg.alpha_clsf * parts.clsf_fake);
    parts.total_d = cfg.alpha_adv * parts.adv_d + cfg.alpha_clsf * parts.clsf_real;
    return parts;
}

// ---- differentiable forms ---------------------------------------------------

/// Mean |pred - gt|.
template <class T>
ag::Var<T> pair_loss(const ag::Var<T>& pred, const ag::Var<T>& gt) {
    return ag::l1_loss(pred, gt);
}

/// Mean |x - x_cyc|, where x_cyc is the generator applied there and back.
template <class T>
ag::Var<T> cyclic_reconstruction_loss(const ag::Var<T>& x, const ag::Var<T>& x_cyc) {
    return ag::l1_loss(x_cyc, x);
}

/// Discriminator side: -mean(log D(real)) - mean(log(1 - D(fake))).
template <class T>
ag::Var<T> adversarial_d(const ag::Var<T>& d_real, const ag::Var<T>& d_fake) {
    return ag::weighted_sum<T>({ag::neg_mean_log(d_real, false, kScoreEps), ag::neg_mean_log(d_fake, true, kScoreEps)},
                               {T(1), T(1)});
}

/// Generator side. Non-saturating: -mean(log D(fake)); saturating: mean(log(1 - D(fake))).
template <class T>
ag::Var<T> adversarial_g(const ag::Var<T>& d_fake, AdvMode mode = AdvMode::nonsaturating) {
    if (mode == AdvMode::nonsaturating) return ag::neg_mean_log(d_fake, false, kScoreEps);
    return ag::weighted_sum<T>({ag::neg_mean_log(d_fake, true, kScoreEps)}, {T(-1)});
}

/// Mean negative log-softmax probability of each row's tracer.
template <class T>
ag::Var<T> classification_loss(const ag::Var<T>& logits, const std::vector<TracerId>& targets) {
    std::vector<int> idx;
    idx.reserve(targets.size());
    for (TracerId t : targets) idx.push_back(ordinal(t));
    return ag::cross_entropy(logits, idx);
}

// ---- plain evaluation on volumes / score arrays ------------------------------

namespace detail {
inline ag::Var<double> as_var(std::span<const double> v) {
    return ag::Var<double>::leaf(ag::Tensor<double>({v.size()}, std::vector<double>(v.begin(), v.end())));
}
}  // namespace detail

inline double pair_loss(const Volume& pred, const Volume& gt) {
    require_same_shape(pred, gt, "pair_loss");
    ag::NoGradGuard ng;
    return pair_loss(detail::as_var(pred.data()), detail::as_var(gt.data())).value()[0];
}

inline double cyclic_reconstruction_loss(const Volume& x, const Volume& x_cyc) {
    require_same_shape(x, x_cyc, "cyclic_reconstruction_loss");
    ag::NoGradGuard ng;
    return cyclic_reconstruction_loss(detail::as_var(x.data()), detail::as_var(x_cyc.data())).value()[0];
}

struct AdversarialLosses {
    double adv_d;
    double adv_g;
};

inline AdversarialLosses adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake,
                                            AdvMode mode = AdvMode::nonsaturating) {
    if (d_real.empty() || d_fake.empty()) throw ValidationError("adversarial_losses: empty score map");
    ag::NoGradGuard ng;
    auto r = detail::as_var(d_real), f = detail::as_var(d_fake);
    return {adversarial_d(r, f).value()[0], adversarial_g(f, mode).value()[0]};
}

inline double classification_loss(std::span<const double> logits, TracerId target) {
    if (logits.size() != static_cast<std::size_t>(kNumDomains)) throw ShapeMismatch("classification_loss expects 3 logits");
    ag::NoGradGuard ng;
    auto l = ag::Var<double>::leaf(ag::Tensor<double>({1, logits.size()}, std::vector<double>(logits.begin(), logits.end())));
    return classification_loss(l, {target}).value()[0];
}

}  // namespace ucan::losses
