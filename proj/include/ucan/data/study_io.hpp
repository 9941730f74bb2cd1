#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ucan/data/nifti.hpp"
#include "ucan/data/study.hpp"

namespace ucan {

/// Study directory layout:
///
///   <dir>/study.json     sidecar: id, voxel size, norm records, ROI names
///   <dir>/pet_A.nii      tracer volumes (float64 NIfTI-1)
///   <dir>/pet_B.nii
///   <dir>/pet_C.nii
///   <dir>/mr.nii
///   <dir>/roi_<name>.nii binary masks, one per ROI listed in the sidecar
namespace layout {
inline constexpr const char* sidecar = "study.json";
inline constexpr const char* mr = "mr.nii";
inline std::string pet(TracerId t) { return "pet_" + to_string(t) + ".nii"; }
inline std::string roi(const std::string& name) { return "roi_" + name + ".nii"; }
inline constexpr int version = 1;
}  // namespace layout

inline void save_study(const Study& s, const std::filesystem::path& dir) {
    s.validate(false);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    nlohmann::json j;
    j["format"] = "ucan-study";
    j["version"] = layout::version;
    j["id"] = s.id;
    j["shape"] = {s.shape().d, s.shape().h, s.shape().w};
    j["voxel_size_mm"] = s.mr.voxel_size();
    j["norm_records"] = nlohmann::json::object();
    for (const auto& [t, r] : s.norm_records) j["norm_records"][to_string(t)] = r.max_value;
    j["tracers"] = nlohmann::json::array();
    for (const auto& [t, v] : s.pet) j["tracers"].push_back(to_string(t));
    j["rois"] = nlohmann::json::array();
    for (const auto& [name, m] : s.roi_masks) j["rois"].push_back(name);

    for (const auto& [t, v] : s.pet) nifti::write(v, dir / layout::pet(t), "ucan tracer " + to_string(t));
    nifti::write(s.mr, dir / layout::mr, "ucan MR");
    for (const auto& [name, m] : s.roi_masks) nifti::write(m, dir / layout::roi(name), "ucan ROI " + name);

    std::ofstream out(dir / layout::sidecar);
    if (!out) throw IoError("cannot write " + (dir / layout::sidecar).string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing sidecar in " + dir.string());
}

/// Reads a study directory. Without `require_all_tracers`, absent tracer
/// files are tolerated (inference inputs, partial ground truth).
inline Study load_study(const std::filesystem::path& dir, bool require_all_tracers = true) {
    if (!std::filesystem::is_directory(dir)) throw IoError("study directory not found: " + dir.string());
    const auto sidecar = dir / layout::sidecar;
    if (!std::filesystem::exists(sidecar)) throw IoError("missing sidecar " + sidecar.string());
    nlohmann::json j;
    try {
        std::ifstream in(sidecar);
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed sidecar " + sidecar.string() + ": " + e.what());
    }
    if (j.value("format", "") != "ucan-study") throw IoError(sidecar.string() + ": not a ucan study sidecar");
    if (j.value("version", 0) != layout::version) throw IoError(sidecar.string() + ": unsupported version");

    Study s;
    s.id = j.value("id", dir.filename().string());
    VoxelSize vox{1.0, 1.0, 1.0};
    if (j.contains("voxel_size_mm")) vox = j["voxel_size_mm"].get<VoxelSize>();

    if (!std::filesystem::exists(dir / layout::mr)) throw MissingModality("study '" + s.id + "' has no " + std::string(layout::mr));
    s.mr = nifti::read(dir / layout::mr, &vox);
    for (TracerId t : kAllTracers) {
        const auto p = dir / layout::pet(t);
        if (std::filesystem::exists(p)) s.pet.emplace(t, nifti::read(p, &vox));
        else if (require_all_tracers) throw MissingModality("study '" + s.id + "' has no " + layout::pet(t));
    }
    for (const auto& name : j.value("rois", std::vector<std::string>{})) {
        const auto p = dir / layout::roi(name);
        if (!std::filesystem::exists(p)) throw IoError("study '" + s.id + "': missing ROI file " + p.string());
        s.roi_masks.emplace(name, nifti::read(p, &vox));
    }
    if (j.contains("norm_records"))
        for (const auto& [k, v] : j["norm_records"].items()) s.norm_records[parse_tracer(k)] = NormRecord{v.get<double>()};
    s.validate(require_all_tracers);
    return s;
}

}  // namespace ucan
