#pragma once

#include <optional>
#include <vector>

#include "anat9/geometry.hpp"
#include "anat9/rng.hpp"

namespace anat9 {

struct AugmentConfig {
    double max_translation_mm = 20.0;
    std::array<double, 2> scale_range = {0.9, 1.1};
    std::array<double, 2> rotation_range_deg = {-15.0, 15.0};
    double erase_probability = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        require(max_translation_mm >= 0, "max translation must be >= 0");
        require(scale_range[0] <= scale_range[1] && scale_range[0] > 0, "empty scale range");
        require(rotation_range_deg[0] <= rotation_range_deg[1], "empty rotation range");
        require(erase_probability >= 0 && erase_probability <= 1,
                "erase probability must be in [0,1]");
    }
};

// One sampled rigid+scale transform: p' = pivot + s * R * (p - pivot) + t,
// pivot fixed at the image center.
struct RigidDraw {
    Vec3 translation_mm = Vec3::Zero();
    double scale = 1.0;
    Vec3 rotation_deg = Vec3::Zero();  // Euler, same convention as poses
};

RigidDraw draw_rigid(const AugmentConfig& config, std::uint64_t case_id);

struct AugmentedScene {
    LabelVolume volume;
    std::vector<Pose9DoF> poses;
    std::string warning;  // non-fatal condition worth surfacing, else empty
};

// Resamples the volume under the transform (nearest for labels) and updates
// every pose analytically: center mapped, scale multiplied, frame rotated.
// No PCA recomputation. The draw must respect the config ranges.
AugmentedScene rigid_augment(const LabelVolume& volume, const std::vector<Pose9DoF>& poses,
                             const AugmentConfig& config, const RigidDraw& draw);

// Keeps slices z0 <= k < z1. Instances fully inside keep their pose (world
// coordinates unchanged); truncated instances are re-parameterized from the
// surviving mask; removed instances are dropped. An empty result is valid.
AugmentedScene crop_z(const LabelVolume& volume, const std::vector<Pose9DoF>& poses, int z0,
                      int z1);

struct CropDraw {
    int z0 = 0;
    int z1 = 0;
};

// Draws a slab retaining between min_fraction and max_fraction of z.
CropDraw draw_crop_z(int dim_z, double min_fraction, double max_fraction, std::uint64_t seed,
                     std::uint64_t case_id);

// With the drawn probability removes the two largest labels present (voxels
// and poses). Identity when fewer than two instances remain.
AugmentedScene random_erase_bottom_pair(const LabelVolume& volume,
                                        const std::vector<Pose9DoF>& poses, double probability,
                                        std::uint64_t seed, std::uint64_t case_id);

}  // namespace anat9
