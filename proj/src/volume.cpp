#include "anat9/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace anat9 {

namespace {

constexpr double kDirectionTol = 1e-6;

bool is_proper_rotation(const Mat3& m, double tol) {
    Mat3 should_be_identity = m.transpose() * m;
    if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(m.determinant() - 1.0) <= tol;
}

}  // namespace

void VolumeMeta::validate() const {
    for (int k = 0; k < 3; ++k) {
        require(dims[k] >= 1, "malformed header: dims must be >= 1");
        require(spacing[k] > 0.0 && std::isfinite(spacing[k]),
                "malformed header: spacing must be positive");
        require(std::isfinite(origin[k]), "malformed header: non-finite origin");
    }
    require(direction.allFinite(), "malformed header: non-finite direction");
    require(is_proper_rotation(direction, kDirectionTol),
            "malformed header: direction must be orthonormal with determinant +1");
}

bool VolumeMeta::same_grid(const VolumeMeta& other, double tol) const {
    if (dims != other.dims) return false;
    return (spacing - other.spacing).cwiseAbs().maxCoeff() <= tol &&
           (origin - other.origin).cwiseAbs().maxCoeff() <= tol &&
           (direction - other.direction).cwiseAbs().maxCoeff() <= tol;
}

Vec3 voxel_to_world(const VolumeMeta& meta, const Vec3& index) {
    return meta.origin + meta.direction * index.cwiseProduct(meta.spacing);
}

Vec3 voxel_to_world(const VolumeMeta& meta, int i, int j, int k) {
    require(i >= 0 && i < meta.dims[0] && j >= 0 && j < meta.dims[1] && k >= 0 && k < meta.dims[2],
            "voxel index out of range");
    return voxel_to_world(meta, Vec3(i, j, k));
}

Vec3 world_to_voxel(const VolumeMeta& meta, const Vec3& point) {
    // direction is orthonormal, so transpose inverts it.
    Vec3 local = meta.direction.transpose() * (point - meta.origin);
    return local.cwiseQuotient(meta.spacing);
}

void LabelVolume::validate() const {
    meta.validate();
    require(voxels.size() == meta.voxel_count(), "voxel count does not match dims");
}

std::vector<std::uint16_t> LabelVolume::labels_present() const {
    std::vector<bool> seen(65536, false);
    for (std::uint16_t v : voxels) seen[v] = true;
    std::vector<std::uint16_t> out;
    for (std::size_t l = 1; l < seen.size(); ++l)
        if (seen[l]) out.push_back(static_cast<std::uint16_t>(l));
    return out;
}

void ScalarVolume::validate() const {
    meta.validate();
    require(voxels.size() == meta.voxel_count(), "voxel count does not match dims");
}

namespace {

using nlohmann::json;

struct Dtype {
    std::string name;
    std::size_t size;
};

const Dtype kDtypes[] = {
    {"u8", 1}, {"u16", 2}, {"i16", 2}, {"i32", 4}, {"f32", 4},
};

const Dtype& dtype_by_name(const std::string& name) {
    for (const auto& d : kDtypes)
        if (d.name == name) return d;
    throw Error("unsupported data type: " + name);
}

std::vector<char> read_raw_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    std::streamoff size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(static_cast<std::size_t>(size));
    in.read(buf.data(), size);
    require(static_cast<bool>(in), "short read on " + path.string());
    return buf;
}

template <typename T>
T scalar_at(const char* data, std::size_t i) {
    T v;
    std::memcpy(&v, data + i * sizeof(T), sizeof(T));
    return v;
}

// Converts raw little-endian voxel data into a label array with range checks.
std::vector<std::uint16_t> to_labels(const std::string& dtype, const std::vector<char>& raw,
                                     std::size_t count) {
    std::vector<std::uint16_t> out(count);
    auto fail_range = [] { throw Error("label value does not fit in 16 bits"); };
    if (dtype == "u8") {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<std::uint8_t>(raw[i]);
    } else if (dtype == "u16") {
        for (std::size_t i = 0; i < count; ++i) out[i] = scalar_at<std::uint16_t>(raw.data(), i);
    } else if (dtype == "i16") {
        for (std::size_t i = 0; i < count; ++i) {
            std::int16_t v = scalar_at<std::int16_t>(raw.data(), i);
            if (v < 0) throw Error("negative label value");
            out[i] = static_cast<std::uint16_t>(v);
        }
    } else if (dtype == "i32") {
        for (std::size_t i = 0; i < count; ++i) {
            std::int32_t v = scalar_at<std::int32_t>(raw.data(), i);
            if (v < 0) throw Error("negative label value");
            if (v > 65535) fail_range();
            out[i] = static_cast<std::uint16_t>(v);
        }
    } else if (dtype == "f32") {
        throw Error("unsupported data type for label volume: f32");
    } else {
        throw Error("unsupported data type: " + dtype);
    }
    return out;
}

std::vector<float> to_scalars(const std::string& dtype, const std::vector<char>& raw,
                              std::size_t count) {
    std::vector<float> out(count);
    if (dtype == "u8") {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<float>(static_cast<std::uint8_t>(raw[i]));
    } else if (dtype == "u16") {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<float>(scalar_at<std::uint16_t>(raw.data(), i));
    } else if (dtype == "i16") {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<float>(scalar_at<std::int16_t>(raw.data(), i));
    } else if (dtype == "i32") {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<float>(scalar_at<std::int32_t>(raw.data(), i));
    } else if (dtype == "f32") {
        for (std::size_t i = 0; i < count; ++i) out[i] = scalar_at<float>(raw.data(), i);
    } else {
        throw Error("unsupported data type: " + dtype);
    }
    return out;
}

VolumeMeta meta_from_json(const json& j) {
    static const char* kKeys[] = {"dims", "spacing_mm", "origin_mm", "direction", "dtype", "data"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : kKeys) known |= (it.key() == k);
        require(known, "malformed header: unknown key '" + it.key() + "'");
    }
    for (const char* k : kKeys) require(j.contains(k), std::string("malformed header: missing key '") + k + "'");

    VolumeMeta meta;
    auto dims = j.at("dims");
    auto spacing = j.at("spacing_mm");
    auto origin = j.at("origin_mm");
    auto dir = j.at("direction");
    require(dims.is_array() && dims.size() == 3, "malformed header: dims");
    require(spacing.is_array() && spacing.size() == 3, "malformed header: spacing_mm");
    require(origin.is_array() && origin.size() == 3, "malformed header: origin_mm");
    require(dir.is_array() && dir.size() == 9, "malformed header: direction");
    for (int k = 0; k < 3; ++k) {
        require(dims[k].is_number_integer(), "malformed header: dims must be integers");
        meta.dims[k] = dims[k].get<int>();
        meta.spacing[k] = spacing[k].get<double>();
        meta.origin[k] = origin[k].get<double>();
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) meta.direction(r, c) = dir[3 * r + c].get<double>();
    meta.validate();
    return meta;
}

}  // namespace

namespace detail {

AnyVolume load_container(const std::filesystem::path& path, VolumeKind kind) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("malformed header: " + std::string(e.what()));
    }
    VolumeMeta meta = meta_from_json(j);
    std::string dtype = j.at("dtype").get<std::string>();
    const Dtype& dt = dtype_by_name(dtype);
    std::filesystem::path raw_path = path.parent_path() / j.at("data").get<std::string>();
    std::vector<char> raw = read_raw_file(raw_path);
    require(raw.size() == meta.voxel_count() * dt.size,
            "dims/affine inconsistency: raw size does not match dims");

    if (kind == VolumeKind::label) {
        LabelVolume v;
        v.meta = meta;
        v.voxels = to_labels(dtype, raw, meta.voxel_count());
        return v;
    }
    ScalarVolume v;
    v.meta = meta;
    v.voxels = to_scalars(dtype, raw, meta.voxel_count());
    return v;
}

}  // namespace detail

AnyVolume load_volume(const std::filesystem::path& path, VolumeKind kind) {
    std::string name = path.filename().string();
    auto ends_with = [&](const char* suf) {
        std::string s(suf);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".json")) return detail::load_container(path, kind);
    if (ends_with(".nii") || ends_with(".nii.gz") || ends_with(".gz"))
        return detail::load_nifti(path, kind);
    throw Error("unrecognized volume file extension: " + name);
}

LabelVolume load_label_volume(const std::filesystem::path& path) {
    return std::get<LabelVolume>(load_volume(path, VolumeKind::label));
}

ScalarVolume load_scalar_volume(const std::filesystem::path& path) {
    return std::get<ScalarVolume>(load_volume(path, VolumeKind::scalar));
}

namespace {

json meta_to_json(const VolumeMeta& meta, const std::string& dtype, const std::string& raw_name) {
    json j;
    j["dims"] = {meta.dims[0], meta.dims[1], meta.dims[2]};
    j["spacing_mm"] = {meta.spacing[0], meta.spacing[1], meta.spacing[2]};
    j["origin_mm"] = {meta.origin[0], meta.origin[1], meta.origin[2]};
    std::vector<double> dir(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) dir[3 * r + c] = meta.direction(r, c);
    j["direction"] = dir;
    j["dtype"] = dtype;
    j["data"] = raw_name;
    return j;
}

void write_pair(const std::filesystem::path& json_path, const json& header, const char* data,
                std::size_t bytes) {
    std::filesystem::path raw_path = json_path;
    raw_path.replace_extension(".raw");
    {
        std::ofstream out(json_path);
        require(static_cast<bool>(out), "cannot write " + json_path.string());
        out << header.dump(2) << "\n";
        require(static_cast<bool>(out), "I/O failure writing " + json_path.string());
    }
    {
        std::ofstream out(raw_path, std::ios::binary);
        require(static_cast<bool>(out), "cannot write " + raw_path.string());
        out.write(data, static_cast<std::streamsize>(bytes));
        require(static_cast<bool>(out), "I/O failure writing " + raw_path.string());
    }
}

std::string raw_name_for(const std::filesystem::path& json_path) {
    std::filesystem::path p = json_path.filename();
    p.replace_extension(".raw");
    return p.string();
}

}  // namespace

void save_volume(const LabelVolume& volume, const std::filesystem::path& json_path) {
    volume.validate();
    json header = meta_to_json(volume.meta, "u16", raw_name_for(json_path));
    static_assert(std::endian::native == std::endian::little,
                  "raw container writer assumes a little-endian host");
    write_pair(json_path, header, reinterpret_cast<const char*>(volume.voxels.data()),
               volume.voxels.size() * sizeof(std::uint16_t));
}

void save_volume(const ScalarVolume& volume, const std::filesystem::path& json_path) {
    volume.validate();
    json header = meta_to_json(volume.meta, "f32", raw_name_for(json_path));
    write_pair(json_path, header, reinterpret_cast<const char*>(volume.voxels.data()),
               volume.voxels.size() * sizeof(float));
}

}  // namespace anat9
