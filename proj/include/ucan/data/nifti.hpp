#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ucan/core/volume.hpp"

namespace ucan::nifti {

/// NIfTI-1 single-file header (348 bytes).
#pragma pack(push, 1)
struct Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope, scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Header) == 348);

enum DataType : std::int16_t {
    dt_uint8 = 2,
    dt_int16 = 4,
    dt_int32 = 8,
    dt_float32 = 16,
    dt_float64 = 64,
    dt_int8 = 256,
    dt_uint16 = 512,
    dt_uint32 = 768,
};

/// Writes float64 voxels so that reading back is bit-exact. NIfTI's i/j/k
/// axes map to our width/height/depth.
inline void write(const Volume& v, const std::filesystem::path& path, const std::string& description = "") {
    Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(v.shape().w);
    h.dim[2] = static_cast<std::int16_t>(v.shape().h);
    h.dim[3] = static_cast<std::int16_t>(v.shape().d);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    if (v.shape().w > 32767 || v.shape().h > 32767 || v.shape().d > 32767) throw ValidationError("volume too large for NIfTI-1");
    h.datatype = dt_float64;
    h.bitpix = 64;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(v.voxel_size()[2]);
    h.pixdim[2] = static_cast<float>(v.voxel_size()[1]);
    h.pixdim[3] = static_cast<float>(v.voxel_size()[0]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.xyzt_units = 2;  // mm
    std::strncpy(h.descrip, description.c_str(), sizeof h.descrip - 1);
    h.sform_code = 1;
    h.srow_x[0] = h.pixdim[1];
    h.srow_y[1] = h.pixdim[2];
    h.srow_z[2] = h.pixdim[3];
    std::memcpy(h.magic, "n+1\0", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(&h), sizeof h);
    const char ext[4] = {0, 0, 0, 0};
    out.write(ext, 4);
    out.write(reinterpret_cast<const char*>(v.data().data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!out) throw IoError("failed writing " + path.string());
}

/// Voxel size is recovered from the float header fields; pass `voxel_hint`
/// to keep full double precision when the float value round-trips to it.
inline Volume read(const std::filesystem::path& path, const VoxelSize* voxel_hint = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Header h{};
    in.read(reinterpret_cast<char*>(&h), sizeof h);
    if (!in) throw IoError(path.string() + ": truncated header");
    if (h.sizeof_hdr != 348) throw IoError(path.string() + ": not a little-endian NIfTI-1 file");
    if (std::memcmp(h.magic, "n+1", 3) != 0) throw IoError(path.string() + ": only single-file .nii is supported");
    const int ndim = h.dim[0];
    if (ndim < 3 || ndim > 7) throw IoError(path.string() + ": expected a 3D volume");
    for (int i = 4; i <= ndim; ++i)
        if (h.dim[i] > 1) throw IoError(path.string() + ": multi-volume files are not supported");
    for (int i = 1; i <= 3; ++i)
        if (h.dim[i] < 1) throw IoError(path.string() + ": non-positive dimension");
    const Shape3 shape{static_cast<std::size_t>(h.dim[3]), static_cast<std::size_t>(h.dim[2]), static_cast<std::size_t>(h.dim[1])};
    VoxelSize vox{std::abs(h.pixdim[3]), std::abs(h.pixdim[2]), std::abs(h.pixdim[1])};
    for (double& s : vox)
        if (s <= 0.0) s = 1.0;
    if (voxel_hint) {
        bool same = true;
        for (int i = 0; i < 3; ++i) same = same && static_cast<float>((*voxel_hint)[i]) == static_cast<float>(vox[i]);
        if (same) vox = *voxel_hint;
    }

    std::size_t bytes = 0;
    switch (h.datatype) {
        case dt_uint8: case dt_int8: bytes = 1; break;
        case dt_int16: case dt_uint16: bytes = 2; break;
        case dt_int32: case dt_uint32: case dt_float32: bytes = 4; break;
        case dt_float64: bytes = 8; break;
        default: throw IoError(path.string() + ": unsupported datatype " + std::to_string(h.datatype));
    }
    const std::size_t n = shape.voxels();
    std::vector<char> raw(n * bytes);
    in.seekg(static_cast<std::streamoff>(h.vox_offset));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError(path.string() + ": truncated voxel data");

    std::vector<double> data(n);
    auto convert = [&](auto tag) {
        using S = decltype(tag);
        for (std::size_t i = 0; i < n; ++i) {
            S s;
            std::memcpy(&s, raw.data() + i * sizeof(S), sizeof(S));
            data[i] = static_cast<double>(s);
        }
    };
    switch (h.datatype) {
        case dt_uint8: convert(std::uint8_t{}); break;
        case dt_int8: convert(std::int8_t{}); break;
        case dt_int16: convert(std::int16_t{}); break;
        case dt_uint16: convert(std::uint16_t{}); break;
        case dt_int32: convert(std::int32_t{}); break;
        case dt_uint32: convert(std::uint32_t{}); break;
        case dt_float32: convert(float{}); break;
        case dt_float64: convert(double{}); break;
    }
    const bool scaled = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
    if (scaled)
        for (double& d : data) d = d * h.scl_slope + h.scl_inter;
    return Volume(shape, vox, std::move(data));
}

}  // namespace ucan::nifti
