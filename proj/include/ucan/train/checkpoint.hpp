#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucan/nets/discriminator.hpp"
#include "ucan/nets/generator.hpp"

namespace ucan::train {

/// Checkpoint file layout (little-endian):
///
///   offset 0   8 bytes   magic "UCANCKPT"
///   offset 8   u32       format version (kCheckpointVersion)
///   offset 12  u64       header length H
///   offset 20  H bytes   UTF-8 JSON header
///   then       float32   one contiguous block per entry of header["sections"],
///                        in listed order, each of header["sections"][i]["count"] values
///
/// The header carries both network specs, the full config text and its hash,
/// the training counters, the RNG state, and the name/shape of every parameter.
inline constexpr char kCheckpointMagic[8] = {'U', 'C', 'A', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const nets::GeneratorSpec& s) {
    return {{"in_channels", s.in_channels},   {"out_channels", s.out_channels},
            {"depth", s.depth},               {"base_width", s.base_width},
            {"latent_res_blocks", s.latent_res_blocks}, {"se_reduction", s.se_reduction},
            {"fusion", s.fusion == SeFusion::max ? "max" : "add"}};
}

inline nets::GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    nets::GeneratorSpec s;
    s.in_channels = j.at("in_channels");
    s.out_channels = j.at("out_channels");
    s.depth = j.at("depth");
    s.base_width = j.at("base_width");
    s.latent_res_blocks = j.at("latent_res_blocks");
    s.se_reduction = j.at("se_reduction");
    s.fusion = j.at("fusion") == "add" ? SeFusion::add : SeFusion::max;
    return s;
}

inline nlohmann::json to_json(const nets::DiscriminatorSpec& s) {
    return {{"in_channels", s.in_channels}, {"base_width", s.base_width}, {"trunk_kernel", s.trunk_kernel},
            {"head_kernel", s.head_kernel}, {"num_layers", nets::DiscriminatorSpec::num_layers}};
}

inline nets::DiscriminatorSpec discriminator_spec_from_json(const nlohmann::json& j) {
    nets::DiscriminatorSpec s;
    s.in_channels = j.at("in_channels");
    s.base_width = j.at("base_width");
    s.trunk_kernel = j.at("trunk_kernel");
    s.head_kernel = j.at("head_kernel");
    return s;
}

template <class T>
nlohmann::json param_manifest(const nets::ParamStore<T>& ps) {
    auto arr = nlohmann::json::array();
    for (const auto& [name, v] : ps.entries()) arr.push_back({{"name", name}, {"shape", v.shape()}});
    return arr;
}

template <class T>
void check_manifest(const nets::ParamStore<T>& ps, const nlohmann::json& manifest, const std::string& what) {
    const auto& e = ps.entries();
    if (manifest.size() != e.size()) throw IoError("checkpoint " + what + ": parameter count mismatch");
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (manifest[i].at("name") != e[i].first || manifest[i].at("shape").get<ag::Shape>() != e[i].second.shape())
            throw IoError("checkpoint " + what + ": parameter " + e[i].first + " does not match");
    }
}

struct CheckpointFile {
    nlohmann::json header;
    std::map<std::string, std::vector<float>> sections;
};

inline void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                             const std::vector<std::pair<std::string, std::vector<float>>>& sections) {
    nlohmann::json h = header;
    h["sections"] = nlohmann::json::array();
    for (const auto& [name, data] : sections) h["sections"].push_back({{"name", name}, {"count", data.size()}});
    const std::string text = h.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint " + tmp);
        const std::uint32_t version = kCheckpointVersion;
        const std::uint64_t len = text.size();
        out.write(kCheckpointMagic, 8);
        out.write(reinterpret_cast<const char*>(&version), 4);
        out.write(reinterpret_cast<const char*>(&len), 8);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [_, data] : sections)
            out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!out) throw IoError("failed writing checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

inline nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& path) {
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError(path.string() + ": not a ucan checkpoint");
    if (version != kCheckpointVersion) throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(path.string() + ": truncated header");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": malformed header: " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return detail::read_header(in, path);
}

/// Reads the header and the named sections (all sections when `wanted` is empty).
inline CheckpointFile read_checkpoint(const std::filesystem::path& path, const std::vector<std::string>& wanted = {}) {
    std::ifstream in(path, std::ios::binary);
    CheckpointFile f;
    f.header = detail::read_header(in, path);
    for (const auto& s : f.header.at("sections")) {
        const std::string name = s.at("name");
        const std::size_t count = s.at("count");
        const bool keep = wanted.empty() || std::find(wanted.begin(), wanted.end(), name) != wanted.end();
        if (keep) {
            std::vector<float> data(count);
            in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
            if (!in) throw IoError(path.string() + ": truncated section " + name);
            f.sections.emplace(name, std::move(data));
        } else {
            in.seekg(static_cast<std::streamoff>(count * sizeof(float)), std::ios::cur);
        }
    }
    return f;
}

/// Generator alone, for inference.
inline nets::Generator<float> load_generator(const std::filesystem::path& path) {
    auto f = read_checkpoint(path, {"generator"});
    const auto spec = generator_spec_from_json(f.header.at("generator_spec"));
    std::mt19937_64 rng(0);
    nets::Generator<float> g(spec, rng);
    check_manifest(g.params(), f.header.at("generator_params"), "generator");
    auto it = f.sections.find("generator");
    if (it == f.sections.end()) throw IoError(path.string() + ": no generator section");
    g.params().assign(it->second);
    return g;
}

}  // namespace ucan::train
