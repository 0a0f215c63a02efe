#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include <zlib.h>

#include "anat9/volume.hpp"

namespace anat9 {
namespace detail {

namespace {

// NIfTI-1 header, 348 bytes, little-endian on disk.
#pragma pack(push, 1)
struct Nifti1Header {
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
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must pack to 348 bytes");

// datatype codes from the NIfTI-1 standard
constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtUint16 = 512;

// gzread handles plain files transparently, so one path covers .nii and .nii.gz.
std::vector<char> read_possibly_gz(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    require(f != nullptr, "cannot open " + path.string());
    std::vector<char> out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    bool ok = (n == 0);
    gzclose(f);
    require(ok, "decompression failure reading " + path.string());
    return out;
}

std::string dtype_name(std::int16_t code) {
    switch (code) {
        case kDtUint8: return "u8";
        case kDtUint16: return "u16";
        case kDtInt16: return "i16";
        case kDtInt32: return "i32";
        case kDtFloat32: return "f32";
        default: throw Error("unsupported data type: NIfTI datatype code " + std::to_string(code));
    }
}

std::size_t dtype_size(std::int16_t code) {
    switch (code) {
        case kDtUint8: return 1;
        case kDtUint16: case kDtInt16: return 2;
        default: return 4;
    }
}

Mat3 quaternion_to_matrix(double b, double c, double d, double qfac) {
    double t = 1.0 - b * b - c * c - d * d;
    double a = t > 0.0 ? std::sqrt(t) : 0.0;
    Mat3 r;
    r << a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c,
        2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b,
        2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b;
    r.col(2) *= qfac;
    return r;
}

VolumeMeta meta_from_header(const Nifti1Header& h) {
    VolumeMeta meta;
    require(h.dim[0] >= 3 && h.dim[0] <= 7, "malformed header: spatial rank");
    for (int k = 0; k < 3; ++k) {
        meta.dims[k] = h.dim[k + 1];
        require(meta.dims[k] >= 1, "malformed header: dims must be >= 1");
    }
    for (int k = 4; k <= h.dim[0]; ++k)
        require(h.dim[k] <= 1, "unsupported data type: more than three non-trivial dimensions");

    if (h.sform_code > 0) {
        Mat3 a;
        Vec3 t;
        const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) a(r, c) = rows[r][c];
            t[r] = rows[r][3];
        }
        for (int c = 0; c < 3; ++c) {
            double len = a.col(c).norm();
            require(len > 0.0, "malformed header: degenerate sform column");
            meta.spacing[c] = len;
            meta.direction.col(c) = a.col(c) / len;
        }
        meta.origin = t;
    } else if (h.qform_code > 0) {
        double qfac = (h.pixdim[0] < 0.0f) ? -1.0 : 1.0;
        meta.direction = quaternion_to_matrix(h.quatern_b, h.quatern_c, h.quatern_d, qfac);
        for (int k = 0; k < 3; ++k) {
            require(h.pixdim[k + 1] > 0.0f, "malformed header: spacing must be positive");
            meta.spacing[k] = h.pixdim[k + 1];
        }
        meta.origin = Vec3(h.qoffset_x, h.qoffset_y, h.qoffset_z);
    } else {
        for (int k = 0; k < 3; ++k) {
            require(h.pixdim[k + 1] > 0.0f, "malformed header: spacing must be positive");
            meta.spacing[k] = h.pixdim[k + 1];
        }
    }
    if (meta.direction.determinant() < 0.0)
        throw Error("malformed header: direction has negative determinant (flipped axes are rejected)");
    meta.validate();
    return meta;
}

}  // namespace

AnyVolume load_nifti(const std::filesystem::path& path, VolumeKind kind) {
    std::vector<char> bytes = read_possibly_gz(path);
    require(bytes.size() >= sizeof(Nifti1Header), "malformed header: file too small");
    Nifti1Header h;
    std::memcpy(&h, bytes.data(), sizeof(h));
    if (h.sizeof_hdr != 348) {
        std::int32_t swapped = __builtin_bswap32(h.sizeof_hdr);
        if (swapped == 348) throw Error("malformed header: big-endian NIfTI is not supported");
        throw Error("malformed header: not a NIfTI-1 file");
    }
    bool single_file = std::memcmp(h.magic, "n+1", 4) == 0;
    require(single_file, "unsupported data type: only single-file NIfTI-1 (.nii) is supported");

    VolumeMeta meta = meta_from_header(h);
    std::string dtype = dtype_name(h.datatype);
    std::size_t elem = dtype_size(h.datatype);
    require(h.vox_offset >= 348.0f, "malformed header: vox_offset before end of header");
    std::size_t offset = static_cast<std::size_t>(h.vox_offset);
    std::size_t need = meta.voxel_count() * elem;
    require(bytes.size() >= offset + need, "dims/affine inconsistency: data shorter than dims imply");

    // Reuse the container converters by viewing the payload directly.
    std::vector<char> raw(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                          bytes.begin() + static_cast<std::ptrdiff_t>(offset + need));

    if (kind == VolumeKind::label) {
        LabelVolume v;
        v.meta = meta;
        v.voxels.resize(meta.voxel_count());
        if (dtype == "u8") {
            for (std::size_t i = 0; i < v.voxels.size(); ++i)
                v.voxels[i] = static_cast<std::uint8_t>(raw[i]);
        } else if (dtype == "u16") {
            std::memcpy(v.voxels.data(), raw.data(), need);
        } else if (dtype == "i16") {
            for (std::size_t i = 0; i < v.voxels.size(); ++i) {
                std::int16_t x;
                std::memcpy(&x, raw.data() + 2 * i, 2);
                require(x >= 0, "negative label value");
                v.voxels[i] = static_cast<std::uint16_t>(x);
            }
        } else if (dtype == "i32") {
            for (std::size_t i = 0; i < v.voxels.size(); ++i) {
                std::int32_t x;
                std::memcpy(&x, raw.data() + 4 * i, 4);
                require(x >= 0 && x <= 65535, "label value does not fit in 16 bits");
                v.voxels[i] = static_cast<std::uint16_t>(x);
            }
        } else {
            throw Error("unsupported data type for label volume: " + dtype);
        }
        return v;
    }

    ScalarVolume v;
    v.meta = meta;
    v.voxels.resize(meta.voxel_count());
    if (dtype == "f32") {
        std::memcpy(v.voxels.data(), raw.data(), need);
    } else if (dtype == "u8") {
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            v.voxels[i] = static_cast<float>(static_cast<std::uint8_t>(raw[i]));
    } else if (dtype == "u16") {
        for (std::size_t i = 0; i < v.voxels.size(); ++i) {
            std::uint16_t x;
            std::memcpy(&x, raw.data() + 2 * i, 2);
            v.voxels[i] = static_cast<float>(x);
        }
    } else if (dtype == "i16") {
        for (std::size_t i = 0; i < v.voxels.size(); ++i) {
            std::int16_t x;
            std::memcpy(&x, raw.data() + 2 * i, 2);
            v.voxels[i] = static_cast<float>(x);
        }
    } else {
        for (std::size_t i = 0; i < v.voxels.size(); ++i) {
            std::int32_t x;
            std::memcpy(&x, raw.data() + 4 * i, 4);
            v.voxels[i] = static_cast<float>(x);
        }
    }
    return v;
}

}  // namespace detail
}  // namespace anat9
