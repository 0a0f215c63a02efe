#pragma once

#include <set>
#include <vector>

#include "anat9/matching.hpp"

namespace anat9 {

enum class SceneLayout { ladder, stack };

// Deterministic synthetic scene generator parameters. "ladder" lays out
// alternating right/left oblique cuboids descending in z (rib-like label
// order: top to bottom, right before left); "stack" is an axis-aligned
// column with pitch jitter.
struct SceneConfig {
    int instance_count = 24;
    SceneLayout layout = SceneLayout::ladder;
    std::array<int, 3> dims = {160, 160, 256};
    Vec3 spacing = Vec3(1.0, 1.0, 1.0);
    double translation_jitter_mm = 3.0;
    double scale_jitter_fraction = 0.05;
    double rotation_jitter_deg = 5.0;
    // Optional bend of the ladder cuboids along their long axis (1/mm).
    double curvature = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Scene {
    std::vector<Pose9DoF> gt_poses;  // labels 1..C, each exactly once
    LabelVolume labels;
};

// Rasterizes the configured layout; a voxel is labeled iff its center lies
// inside the instance shape, in ascending label order. Bit-identical for a
// given config. Throws if a drawn box leaves the volume bounds.
Scene gen_scene(const SceneConfig& config);

struct PredictionNoise {
    double sigma_pos_mm = 0.0;
    double sigma_scale_mm = 0.0;
    double sigma_angle_deg = 0.0;
};

// One prediction per non-dropped ground truth: pose Gaussian-perturbed in
// world units, class probability 1 on the true label, target normalized to
// the scene grid (components clamped into [0,1]).
std::vector<Prediction> perturb_predictions(const std::vector<Pose9DoF>& gt_poses,
                                            const VolumeMeta& meta, const PredictionNoise& noise,
                                            const std::set<int>& drop, std::uint64_t seed);

// Ground-truth list for matching: (label, normalized target), label order.
std::vector<GroundTruth> scene_ground_truths(const Scene& scene);

}  // namespace anat9
