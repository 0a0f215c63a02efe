#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "anat9/error.hpp"

namespace anat9 {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Voxel grid geometry: world = origin + direction * (index .* spacing).
// Voxel coordinates refer to voxel centers; direction must be a proper
// rotation (orthonormal, det +1, tolerance 1e-6).
struct VolumeMeta {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel
    Vec3 origin{0.0, 0.0, 0.0};   // mm, world position of voxel (0,0,0) center
    Mat3 direction = Mat3::Identity();

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    Vec3 extent_mm() const {
        return Vec3(dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]);
    }

    // Center of the image cell span; also the midpoint of the voxel-center range.
    Vec3 center_world() const {
        Vec3 c((dims[0] - 1) * 0.5 * spacing[0], (dims[1] - 1) * 0.5 * spacing[1],
               (dims[2] - 1) * 0.5 * spacing[2]);
        return origin + direction * c;
    }

    void validate() const;
    bool same_grid(const VolumeMeta& other, double tol = 1e-9) const;
};

Vec3 voxel_to_world(const VolumeMeta& meta, const Vec3& index);
Vec3 voxel_to_world(const VolumeMeta& meta, int i, int j, int k);
// Continuous inverse of voxel_to_world; does not range-check.
Vec3 world_to_voxel(const VolumeMeta& meta, const Vec3& point);

// Instance label grid. 0 is background; labels fit in 16 bits.
struct LabelVolume {
    VolumeMeta meta;
    std::vector<std::uint16_t> voxels;

    std::uint16_t at(int i, int j, int k) const {
        return voxels[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(meta.dims[0]) *
                          (static_cast<std::size_t>(j) +
                           static_cast<std::size_t>(meta.dims[1]) * static_cast<std::size_t>(k))];
    }
    std::uint16_t& at(int i, int j, int k) {
        return voxels[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(meta.dims[0]) *
                          (static_cast<std::size_t>(j) +
                           static_cast<std::size_t>(meta.dims[1]) * static_cast<std::size_t>(k))];
    }

    void validate() const;
    // Sorted distinct nonzero labels present in the volume.
    std::vector<std::uint16_t> labels_present() const;
};

struct ScalarVolume {
    VolumeMeta meta;
    std::vector<float> voxels;

    float at(int i, int j, int k) const {
        return voxels[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(meta.dims[0]) *
                          (static_cast<std::size_t>(j) +
                           static_cast<std::size_t>(meta.dims[1]) * static_cast<std::size_t>(k))];
    }
    float& at(int i, int j, int k) {
        return voxels[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(meta.dims[0]) *
                          (static_cast<std::size_t>(j) +
                           static_cast<std::size_t>(meta.dims[1]) * static_cast<std::size_t>(k))];
    }

    void validate() const;
};

enum class VolumeKind { label, scalar };

using AnyVolume = std::variant<LabelVolume, ScalarVolume>;

// Reads NIfTI-1 (.nii / .nii.gz) or the raw+JSON container (.json).
// Voxel order is x-fastest in both formats.
AnyVolume load_volume(const std::filesystem::path& path, VolumeKind kind);
LabelVolume load_label_volume(const std::filesystem::path& path);
ScalarVolume load_scalar_volume(const std::filesystem::path& path);

// Writes the raw+JSON container: <stem>.json next to <stem>.raw.
// Labels are stored as u16, scalars as f32; both round-trip bit-exactly.
void save_volume(const LabelVolume& volume, const std::filesystem::path& json_path);
void save_volume(const ScalarVolume& volume, const std::filesystem::path& json_path);

namespace detail {
// NIfTI-1 single-file reader (plain or gzip). dtype limited to
// u8/u16/i16/i32/f32; sform preferred over qform when both valid.
AnyVolume load_nifti(const std::filesystem::path& path, VolumeKind kind);
AnyVolume load_container(const std::filesystem::path& path, VolumeKind kind);
}  // namespace detail

}  // namespace anat9
