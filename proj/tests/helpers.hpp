#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "anat9/geometry.hpp"
#include "anat9/volume.hpp"

namespace anat9::testing {

inline VolumeMeta make_meta(std::array<int, 3> dims, Vec3 spacing = Vec3(1, 1, 1),
                            Vec3 origin = Vec3(0, 0, 0), Mat3 direction = Mat3::Identity()) {
    VolumeMeta meta;
    meta.dims = dims;
    meta.spacing = spacing;
    meta.origin = origin;
    meta.direction = direction;
    return meta;
}

inline LabelVolume make_label_volume(const VolumeMeta& meta) {
    LabelVolume v;
    v.meta = meta;
    v.voxels.assign(meta.voxel_count(), 0);
    return v;
}

// Axis-aligned cuboid of `label` spanning [lo, hi] inclusive voxel indices.
inline void fill_cuboid(LabelVolume& v, std::array<int, 3> lo, std::array<int, 3> hi,
                        std::uint16_t label) {
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) v.at(i, j, k) = label;
}

// Scratch directory under the build tree, fresh per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / ("anat9_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace anat9::testing
