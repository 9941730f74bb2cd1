#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ucan/core/error.hpp"
#include "ucan/core/volume.hpp"

namespace ucan {

enum class SeFusion { max, add };
enum class AdvMode { nonsaturating, saturating };

/// Every knob of a training run. Written verbatim as `key = value` lines into
/// each run directory so a run can be replayed from its config alone.
struct TrainConfig {
    // Loss weights (paper defaults).
    double alpha_clsf = 0.1;
    double alpha_adv = 0.1;
    double alpha_rec = 0.5;

    // Optimizer.
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;

    // Schedule.
    int batch_size = 2;
    Shape3 patch{64, 64, 64};
    int epochs = 200;
    int patches_per_study = 1;
    int checkpoint_every = 10;
    std::uint64_t seed = 0;
    int fold = 0;
    int num_folds = 5;
    int val_holdout = 1;

    // Generator.
    int g_depth = 4;
    int g_base_width = 16;
    int g_res_blocks = 3;
    int g_se_reduction = 8;
    SeFusion se_fusion = SeFusion::max;

    // Discriminator.
    int d_base_width = 16;
    bool d_sees_mr = false;
    AdvMode adv_mode = AdvMode::nonsaturating;

    // Inference / evaluation.
    int inference_overlap = 16;
    bool full_fov = false;

    std::string data_dir;
    std::string run_dir;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

    /// One message per offending field; empty when valid.
    std::vector<std::string> validate() const;

    void validate_or_throw() const {
        auto errs = validate();
        if (errs.empty()) return;
        std::string msg = "invalid config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ValidationError(msg);
    }

    std::string serialize() const;
    /// Keys present in `text` replace the corresponding fields of `base`.
    static TrainConfig parse(std::string_view text, TrainConfig base);
    static TrainConfig parse(std::string_view text) { return parse(text, TrainConfig()); }
    static TrainConfig load(const std::string& path, TrainConfig base);
    static TrainConfig load(const std::string& path) { return load(path, TrainConfig()); }
    void save(const std::string& path) const;

    /// FNV-1a over the serialized text, as 16 hex digits.
    std::string hash() const;

    /// Desk-scale preset used by the phantom pipeline and the tests.
    static TrainConfig desk() {
        TrainConfig c;
        c.batch_size = 1;
        c.patch = {32, 32, 32};
        c.epochs = 20;
        c.g_depth = 3;
        c.g_base_width = 4;
        c.g_se_reduction = 2;
        c.d_base_width = 4;
        c.inference_overlap = 8;
        c.checkpoint_every = 5;
        return c;
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ValidationError("config field '" + key + "': cannot parse '" + s + "'");
    return v;
}

inline Shape3 parse_shape(const std::string& key, const std::string& s) {
    std::vector<std::size_t> parts;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        parts.push_back(parse_number<std::size_t>(key, trim(tok)));
    if (parts.size() != 3) throw ValidationError("config field '" + key + "': expected d,h,w");
    return {parts[0], parts[1], parts[2]};
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ValidationError("config field '" + key + "': expected true/false, got '" + s + "'");
}

/// Field table: serializer and parser per key, in file order.
struct Field {
    const char* key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

template <class T, class M>
Field num(const char* key, M TrainConfig::*member) {
    return {key,
            [member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*member);
                else return std::to_string(c.*member);
            },
            [member, key](TrainConfig& c, const std::string& s) { c.*member = parse_number<T>(key, s); }};
}

inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(num<double>("alpha_clsf", &TrainConfig::alpha_clsf));
        f.push_back(num<double>("alpha_adv", &TrainConfig::alpha_adv));
        f.push_back(num<double>("alpha_rec", &TrainConfig::alpha_rec));
        f.push_back(num<double>("lr_g", &TrainConfig::lr_g));
        f.push_back(num<double>("lr_d", &TrainConfig::lr_d));
        f.push_back(num<double>("beta1", &TrainConfig::beta1));
        f.push_back(num<double>("beta2", &TrainConfig::beta2));
        f.push_back(num<int>("batch_size", &TrainConfig::batch_size));
        f.push_back({"patch_shape",
                     [](const TrainConfig& c) {
                         return std::to_string(c.patch.d) + "," + std::to_string(c.patch.h) + "," +
                                std::to_string(c.patch.w);
                     },
                     [](TrainConfig& c, const std::string& s) { c.patch = parse_shape("patch_shape", s); }});
        f.push_back(num<int>("epochs", &TrainConfig::epochs));
        f.push_back(num<int>("patches_per_study", &TrainConfig::patches_per_study));
        f.push_back(num<int>("checkpoint_every", &TrainConfig::checkpoint_every));
        f.push_back(num<std::uint64_t>("seed", &TrainConfig::seed));
        f.push_back(num<int>("fold", &TrainConfig::fold));
        f.push_back(num<int>("num_folds", &TrainConfig::num_folds));
        f.push_back(num<int>("val_holdout", &TrainConfig::val_holdout));
        f.push_back(num<int>("g_depth", &TrainConfig::g_depth));
        f.push_back(num<int>("g_base_width", &TrainConfig::g_base_width));
        f.push_back(num<int>("g_res_blocks", &TrainConfig::g_res_blocks));
        f.push_back(num<int>("g_se_reduction", &TrainConfig::g_se_reduction));
        f.push_back({"se_fusion",
                     [](const TrainConfig& c) { return std::string(c.se_fusion == SeFusion::max ? "max" : "add"); },
                     [](TrainConfig& c, const std::string& s) {
                         if (s == "max") c.se_fusion = SeFusion::max;
                         else if (s == "add") c.se_fusion = SeFusion::add;
                         else throw ValidationError("config field 'se_fusion': expected max or add, got '" + s + "'");
                     }});
        f.push_back(num<int>("d_base_width", &TrainConfig::d_base_width));
        f.push_back({"d_sees_mr", [](const TrainConfig& c) { return std::string(c.d_sees_mr ? "true" : "false"); },
                     [](TrainConfig& c, const std::string& s) { c.d_sees_mr = parse_bool("d_sees_mr", s); }});
        f.push_back({"adv_mode",
                     [](const TrainConfig& c) {
                         return std::string(c.adv_mode == AdvMode::nonsaturating ? "nonsaturating" : "saturating");
                     },
                     [](TrainConfig& c, const std::string& s) {
                         if (s == "nonsaturating") c.adv_mode = AdvMode::nonsaturating;
                         else if (s == "saturating") c.adv_mode = AdvMode::saturating;
                         else throw ValidationError("config field 'adv_mode': unknown mode '" + s + "'");
                     }});
        f.push_back(num<int>("inference_overlap", &TrainConfig::inference_overlap));
        f.push_back({"full_fov", [](const TrainConfig& c) { return std::string(c.full_fov ? "true" : "false"); },
                     [](TrainConfig& c, const std::string& s) { c.full_fov = parse_bool("full_fov", s); }});
        f.push_back({"data_dir", [](const TrainConfig& c) { return c.data_dir; },
                     [](TrainConfig& c, const std::string& s) { c.data_dir = s; }});
        f.push_back({"run_dir", [](const TrainConfig& c) { return c.run_dir; },
                     [](TrainConfig& c, const std::string& s) { c.run_dir = s; }});
        return f;
    }();
    return table;
}

}  // namespace detail

inline std::vector<std::string> TrainConfig::validate() const {
    std::vector<std::string> e;
    auto nonneg = [&](const char* k, double v) {
        if (!(v >= 0.0)) e.push_back(std::string(k) + ": must be >= 0");
    };
    auto positive = [&](const char* k, double v) {
        if (!(v > 0.0)) e.push_back(std::string(k) + ": must be > 0");
    };
    nonneg("alpha_clsf", alpha_clsf);
    nonneg("alpha_adv", alpha_adv);
    nonneg("alpha_rec", alpha_rec);
    positive("lr_g", lr_g);
    positive("lr_d", lr_d);
    if (!(beta1 >= 0.0 && beta1 < 1.0)) e.push_back("beta1: must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) e.push_back("beta2: must lie in [0, 1)");
    positive("batch_size", batch_size);
    nonneg("epochs", epochs);
    positive("patches_per_study", patches_per_study);
    positive("checkpoint_every", checkpoint_every);
    if (num_folds < 2) e.push_back("num_folds: must be >= 2");
    if (fold < 0 || fold >= num_folds) e.push_back("fold: must lie in [0, num_folds)");
    nonneg("val_holdout", val_holdout);
    if (g_depth < 1 || g_depth > 6) e.push_back("g_depth: must lie in [1, 6]");
    positive("g_base_width", g_base_width);
    nonneg("g_res_blocks", g_res_blocks);
    positive("g_se_reduction", g_se_reduction);
    positive("d_base_width", d_base_width);
    nonneg("inference_overlap", inference_overlap);
    if (g_depth >= 1 && g_depth <= 6) {
        const std::size_t m = std::size_t{1} << g_depth;
        if (patch.d == 0 || patch.h == 0 || patch.w == 0 || patch.d % m || patch.h % m || patch.w % m)
            e.push_back("patch_shape: every extent must be a positive multiple of 2^g_depth = " + std::to_string(m));
        if (patch.d < 16 || patch.h < 16 || patch.w < 16)
            e.push_back("patch_shape: every extent must be >= 16 for the 4-layer stride-2 discriminator");
        if (static_cast<std::size_t>(inference_overlap) * 2 > std::min({patch.d, patch.h, patch.w}))
            e.push_back("inference_overlap: must be at most half the smallest patch extent");
    }
    return e;
}

inline std::string TrainConfig::serialize() const {
    std::string out = "# ucan training config\n";
    for (const auto& f : detail::fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
    return out;
}

inline TrainConfig TrainConfig::parse(std::string_view text, TrainConfig base) {
    TrainConfig c = std::move(base);
    std::map<std::string, const detail::Field*> by_key;
    for (const auto& f : detail::fields()) by_key[f.key] = &f;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        auto key = detail::trim(std::string_view(t).substr(0, eq));
        auto val = detail::trim(std::string_view(t).substr(eq + 1));
        auto it = by_key.find(key);
        if (it == by_key.end()) throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second->set(c, val);
    }
    return c;
}

inline TrainConfig TrainConfig::load(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), std::move(base));
}

inline void TrainConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path);
    out << serialize();
    if (!out) throw IoError("failed writing config " + path);
}

inline std::string TrainConfig::hash() const { return detail::hex64(detail::fnv1a(serialize())); }

}  // namespace ucan
