#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucan/core/config.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/eval/stats.hpp"

namespace ucan::eval {

inline constexpr const char* kModelMethod = "ucan";
inline constexpr const char* kCopyMethod = "copy_input";

/// One (method, task, study) evaluation.
struct MetricRow {
    std::string method;
    std::string task;  // "A->B"
    std::string study_id;
    int fold = 0;
    std::optional<double> nmse_percent;
    std::optional<double> ssim;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct BiasRow {
    std::string method;
    std::string task;
    std::string study_id;
    int fold = 0;
    std::string roi;
    std::optional<double> bias;

    friend bool operator==(const BiasRow&, const BiasRow&) = default;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    std::vector<BiasRow> bias_rows;

    std::vector<std::string> methods() const {
        std::vector<std::string> out;
        for (const auto& r : rows)
            if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
        return out;
    }

    std::vector<std::string> rois() const {
        std::vector<std::string> out;
        for (const auto& r : bias_rows)
            if (std::find(out.begin(), out.end(), r.roi) == out.end()) out.push_back(r.roi);
        return out;
    }

    std::optional<Summary> nmse(const std::string& method, const std::string& task) const {
        return summarize(collect(method, task, &MetricRow::nmse_percent));
    }
    std::optional<Summary> ssim(const std::string& method, const std::string& task) const {
        return summarize(collect(method, task, &MetricRow::ssim));
    }
    std::optional<Summary> bias(const std::string& method, const std::string& task, const std::string& roi) const {
        std::vector<double> xs;
        for (const auto& r : bias_rows)
            if (r.method == method && r.task == task && r.roi == roi && r.bias) xs.push_back(*r.bias);
        return summarize(xs);
    }
    /// |bias| pooled over tasks for one ROI.
    std::optional<Summary> abs_bias(const std::string& method, const std::string& roi) const {
        std::vector<double> xs;
        for (const auto& r : bias_rows)
            if (r.method == method && r.roi == roi && r.bias) xs.push_back(std::abs(*r.bias));
        return summarize(xs);
    }

    /// Paired t-test on NMSE between two methods over the studies both evaluated.
    std::optional<double> nmse_p_value(const std::string& a, const std::string& b, const std::string& task) const {
        std::map<std::string, double> va, vb;
        for (const auto& r : rows) {
            if (r.task != task || !r.nmse_percent) continue;
            if (r.method == a) va[r.study_id] = *r.nmse_percent;
            if (r.method == b) vb[r.study_id] = *r.nmse_percent;
        }
        std::vector<double> xa, xb;
        for (const auto& [id, v] : va)
            if (auto it = vb.find(id); it != vb.end()) {
                xa.push_back(v);
                xb.push_back(it->second);
            }
        return paired_t_test(xa, xb);
    }

private:
    std::vector<double> collect(const std::string& method, const std::string& task,
                                std::optional<double> MetricRow::*field) const {
        std::vector<double> xs;
        for (const auto& r : rows)
            if (r.method == method && r.task == task && r.*field) xs.push_back(*(r.*field));
        return xs;
    }
};

inline std::vector<std::string> task_columns() {
    std::vector<std::string> out;
    for (const auto& t : all_tasks()) out.push_back(t.name());
    return out;
}

namespace detail {

inline std::string opt_str(const std::optional<double>& v) { return v ? ucan::detail::fmt_double(*v) : "n/a"; }

inline std::optional<double> parse_opt(const std::string& s) {
    if (s == "n/a" || s.empty()) return std::nullopt;
    return ucan::detail::parse_number<double>("csv", s);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::optional<double> json_opt(const nlohmann::json& j) {
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

}  // namespace detail

inline constexpr const char* kMetricsHeader = "method,task,study_id,fold,nmse_percent,ssim";
inline constexpr const char* kBiasHeader = "method,task,study_id,fold,roi,bias";

inline void write_metrics_csv(const MetricReport& r, const std::filesystem::path& p) {
    auto out = detail::open_out(p);
    out << kMetricsHeader << "\n";
    for (const auto& row : r.rows)
        out << row.method << "," << row.task << "," << row.study_id << "," << row.fold << ","
            << detail::opt_str(row.nmse_percent) << "," << detail::opt_str(row.ssim) << "\n";
    if (!out) throw IoError("failed writing " + p.string());
}

inline void write_bias_csv(const MetricReport& r, const std::filesystem::path& p) {
    auto out = detail::open_out(p);
    out << kBiasHeader << "\n";
    for (const auto& row : r.bias_rows)
        out << row.method << "," << row.task << "," << row.study_id << "," << row.fold << "," << row.roi << ","
            << detail::opt_str(row.bias) << "\n";
    if (!out) throw IoError("failed writing " + p.string());
}

inline std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::string line;
    std::getline(in, line);
    if (detail::split_csv(line) != detail::split_csv(kMetricsHeader)) throw IoError(p.string() + ": unexpected header");
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 6) throw IoError(p.string() + ": malformed row '" + line + "'");
        rows.push_back({f[0], f[1], f[2], ucan::detail::parse_number<int>("fold", f[3]), detail::parse_opt(f[4]),
                        detail::parse_opt(f[5])});
    }
    return rows;
}

inline std::vector<BiasRow> read_bias_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::string line;
    std::getline(in, line);
    if (detail::split_csv(line) != detail::split_csv(kBiasHeader)) throw IoError(p.string() + ": unexpected header");
    std::vector<BiasRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 6) throw IoError(p.string() + ": malformed row '" + line + "'");
        rows.push_back({f[0], f[1], f[2], ucan::detail::parse_number<int>("fold", f[3]), f[4], detail::parse_opt(f[5])});
    }
    return rows;
}

/// Table-1 shaped summary: one row per method, one column per task, cells
/// "SSIM mean±std / NMSE(%) mean±std". A trailing row holds paired t-test
/// p-values of the model against the copy-input baseline.
inline void write_table_csv(const MetricReport& r, const std::filesystem::path& p) {
    auto out = detail::open_out(p);
    out << "method";
    for (const auto& t : task_columns()) out << "," << t;
    out << "\n";
    for (const auto& m : r.methods()) {
        out << m;
        for (const auto& t : task_columns()) {
            auto s = r.ssim(m, t);
            auto n = r.nmse(m, t);
            out << ",";
            if (s && n)
                out << detail::fixed(s->mean, 4) << "±" << detail::fixed(s->std, 4) << "/" << detail::fixed(n->mean, 2)
                    << "±" << detail::fixed(n->std, 2);
            else
                out << "n/a";
        }
        out << "\n";
    }
    out << "p_nmse(" << kModelMethod << " vs " << kCopyMethod << ")";
    for (const auto& t : task_columns()) {
        auto pv = r.nmse_p_value(kModelMethod, kCopyMethod, t);
        out << "," << (pv ? detail::fixed(*pv, 4) : std::string("n/a"));
    }
    out << "\n";
    if (!out) throw IoError("failed writing " + p.string());
}

inline nlohmann::json to_json(const MetricReport& r) {
    using nlohmann::json;
    json j;
    j["format"] = "ucan-report";
    j["version"] = 1;
    j["tasks"] = task_columns();
    j["rows"] = json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"method", row.method}, {"task", row.task}, {"study_id", row.study_id}, {"fold", row.fold},
                             {"nmse_percent", detail::opt_json(row.nmse_percent)}, {"ssim", detail::opt_json(row.ssim)}});
    j["bias_rows"] = json::array();
    for (const auto& row : r.bias_rows)
        j["bias_rows"].push_back({{"method", row.method}, {"task", row.task}, {"study_id", row.study_id},
                                  {"fold", row.fold}, {"roi", row.roi}, {"bias", detail::opt_json(row.bias)}});
    auto sj = [](const std::optional<Summary>& s) {
        return s ? json{{"mean", s->mean}, {"std", s->std}, {"n", s->n}} : json(nullptr);
    };
    json table = json::object();
    for (const auto& m : r.methods())
        for (const auto& t : task_columns()) table[m][t] = {{"ssim", sj(r.ssim(m, t))}, {"nmse_percent", sj(r.nmse(m, t))}};
    j["table"] = table;
    json rois = json::object();
    for (const auto& m : r.methods())
        for (const auto& roi : r.rois())
            for (const auto& t : task_columns()) rois[m][roi][t] = sj(r.bias(m, t, roi));
    j["roi_bias"] = rois;
    json pv = json::object();
    for (const auto& t : task_columns()) pv[t] = detail::opt_json(r.nmse_p_value(kModelMethod, kCopyMethod, t));
    j["p_nmse_model_vs_copy"] = pv;
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "ucan-report") throw IoError("not a ucan report");
    MetricReport r;
    for (const auto& row : j.at("rows"))
        r.rows.push_back({row.at("method"), row.at("task"), row.at("study_id"), row.at("fold"),
                          detail::json_opt(row.at("nmse_percent")), detail::json_opt(row.at("ssim"))});
    for (const auto& row : j.at("bias_rows"))
        r.bias_rows.push_back({row.at("method"), row.at("task"), row.at("study_id"), row.at("fold"), row.at("roi"),
                               detail::json_opt(row.at("bias"))});
    return r;
}

inline MetricReport load_report(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
        return report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed report " + p.string() + ": " + e.what());
    }
}

/// Writes metrics.csv, roi_bias.csv, table.csv and report.json into `dir`.
inline void emit_report(const MetricReport& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_metrics_csv(r, dir / "metrics.csv");
    write_bias_csv(r, dir / "roi_bias.csv");
    write_table_csv(r, dir / "table.csv");
    auto out = detail::open_out(dir / "report.json");
    out << to_json(r).dump(2) << "\n";
    if (!out) throw IoError("failed writing report.json");
}

}  // namespace ucan::eval
