#include "anat9/synth.hpp"

#include <algorithm>
#include <cmath>

#include "anat9/rng.hpp"

namespace anat9 {

void SceneConfig::validate() const {
    require(instance_count >= 1 && instance_count <= 65535,
            "instance count must be in [1, 65535]");
    require(translation_jitter_mm >= 0 && scale_jitter_fraction >= 0 && rotation_jitter_deg >= 0,
            "jitter magnitudes must be >= 0");
    require(scale_jitter_fraction < 1.0, "scale jitter fraction must stay below 1");
    require(curvature >= 0.0, "curvature must be >= 0");
    VolumeMeta meta;
    meta.dims = dims;
    meta.spacing = spacing;
    meta.validate();
}

namespace {

// Canonical ladder geometry (mm, relative to the image center).
constexpr double kLadderXOffset = 40.0;
constexpr double kLadderZStep = 20.0;
constexpr double kLadderAlphaDeg = 25.0;
constexpr double kLadderBetaDeg = 5.0;
const Vec3 kLadderScale(60.0, 14.0, 8.0);

// Canonical stack geometry.
constexpr double kStackZStep = 24.0;
const Vec3 kStackScale(36.0, 28.0, 16.0);

Pose9DoF canonical_pose(const SceneConfig& config, int label, const Vec3& image_center) {
    Pose9DoF pose;
    pose.label = label;
    if (config.layout == SceneLayout::ladder) {
        int row = (label - 1) / 2;
        double side = (label % 2 == 1) ? +1.0 : -1.0;  // odd labels on the right
        int rows = (config.instance_count + 1) / 2;
        double z_top = (rows - 1) * kLadderZStep * 0.5;
        pose.center = image_center + Vec3(side * kLadderXOffset, 0.0, z_top - row * kLadderZStep);
        pose.scale = kLadderScale;
        pose.angles = Vec3(side * kLadderAlphaDeg, side * kLadderBetaDeg, 0.0);
    } else {
        int row = label - 1;
        double z_top = (config.instance_count - 1) * kStackZStep * 0.5;
        pose.center = image_center + Vec3(0.0, 0.0, z_top - row * kStackZStep);
        pose.scale = kStackScale;
        pose.angles = Vec3::Zero();
    }
    return pose;
}

Pose9DoF jittered_pose(const SceneConfig& config, int label, const Vec3& image_center) {
    Pose9DoF pose = canonical_pose(config, label, image_center);
    DetRng rng(config.seed, static_cast<std::uint64_t>(label), RngOp::scene_pose);
    for (int k = 0; k < 3; ++k)
        pose.center[k] += rng.uniform(-config.translation_jitter_mm, config.translation_jitter_mm);
    for (int k = 0; k < 3; ++k)
        pose.scale[k] *= rng.uniform(1.0 - config.scale_jitter_fraction,
                                     1.0 + config.scale_jitter_fraction);
    if (config.layout == SceneLayout::ladder) {
        for (int k = 0; k < 3; ++k)
            pose.angles[k] = wrap_angle_deg(
                pose.angles[k] + rng.uniform(-config.rotation_jitter_deg, config.rotation_jitter_deg));
    } else {
        // Vertebra-like stacks jitter only the pitch.
        pose.angles[2] =
            wrap_angle_deg(rng.uniform(-config.rotation_jitter_deg, config.rotation_jitter_deg));
    }
    return pose;
}

// Shape test in box-local coordinates. With curvature c the ladder cuboid
// bends along its long axis: the cross-section rides on the parabola
// b(x) = c*(x^2 - w^2/8), which keeps the realized y-extent symmetric and
// equal to the pose scale.
bool inside_shape(const Pose9DoF& pose, double curvature, const Vec3& local) {
    double w = pose.scale[0], h = pose.scale[1], d = pose.scale[2];
    if (std::abs(local[0]) > w * 0.5 || std::abs(local[2]) > d * 0.5) return false;
    if (curvature <= 0.0) return std::abs(local[1]) <= h * 0.5;
    double bend = curvature * (local[0] * local[0] - w * w / 8.0);
    double h_core = h - curvature * w * w / 4.0;
    require(h_core > 0.0, "curvature too large for the instance height");
    return std::abs(local[1] - bend) <= h_core * 0.5;
}

void rasterize_instance(const Pose9DoF& pose, double curvature, LabelVolume& volume) {
    const VolumeMeta& meta = volume.meta;
    Mat3 frame = pose_frame(pose);

    // Voxel-space AABB of the box corners, padded by one voxel.
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& corner : box_corners(pose)) {
        Vec3 v = world_to_voxel(meta, corner);
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    std::array<int, 3> begin{}, end{};
    for (int k = 0; k < 3; ++k) {
        begin[k] = std::max(0, static_cast<int>(std::floor(lo[k])) - 1);
        end[k] = std::min(meta.dims[k] - 1, static_cast<int>(std::ceil(hi[k])) + 1);
        require(lo[k] >= -0.5 && hi[k] <= meta.dims[k] - 0.5,
                "instance box exceeds volume bounds at the requested jitter");
    }

    for (int k = begin[2]; k <= end[2]; ++k)
        for (int j = begin[1]; j <= end[1]; ++j)
            for (int i = begin[0]; i <= end[0]; ++i) {
                Vec3 world = voxel_to_world(meta, Vec3(i, j, k));
                Vec3 local = frame.transpose() * (world - pose.center);
                if (!inside_shape(pose, curvature, local)) continue;
                std::uint16_t& cell = volume.at(i, j, k);
                if (cell == 0) cell = static_cast<std::uint16_t>(pose.label);
            }
}

}  // namespace

Scene gen_scene(const SceneConfig& config) {
    config.validate();
    Scene scene;
    scene.labels.meta.dims = config.dims;
    scene.labels.meta.spacing = config.spacing;
    scene.labels.meta.origin = Vec3::Zero();
    scene.labels.meta.direction = Mat3::Identity();
    scene.labels.voxels.assign(scene.labels.meta.voxel_count(), 0);

    Vec3 image_center = scene.labels.meta.center_world();
    for (int label = 1; label <= config.instance_count; ++label)
        scene.gt_poses.push_back(jittered_pose(config, label, image_center));
    for (const Pose9DoF& pose : scene.gt_poses)
        rasterize_instance(pose, config.layout == SceneLayout::ladder ? config.curvature : 0.0,
                           scene.labels);
    return scene;
}

std::vector<Prediction> perturb_predictions(const std::vector<Pose9DoF>& gt_poses,
                                            const VolumeMeta& meta, const PredictionNoise& noise,
                                            const std::set<int>& drop, std::uint64_t seed) {
    require(noise.sigma_pos_mm >= 0 && noise.sigma_scale_mm >= 0 && noise.sigma_angle_deg >= 0,
            "noise sigmas must be >= 0");
    int max_label = 0;
    for (const Pose9DoF& gt : gt_poses) max_label = std::max(max_label, gt.label);

    std::vector<Prediction> out;
    for (const Pose9DoF& gt : gt_poses) {
        if (drop.count(gt.label)) continue;
        // Per-label stream, so draws are independent of the drop set.
        DetRng rng(seed, static_cast<std::uint64_t>(gt.label), RngOp::perturb);
        Pose9DoF noisy = gt;
        for (int k = 0; k < 3; ++k) noisy.center[k] += rng.normal(0.0, noise.sigma_pos_mm);
        for (int k = 0; k < 3; ++k)
            noisy.scale[k] = std::max(1e-6, noisy.scale[k] + rng.normal(0.0, noise.sigma_scale_mm));
        for (int k = 0; k < 3; ++k)
            noisy.angles[k] = wrap_angle_deg(noisy.angles[k] + rng.normal(0.0, noise.sigma_angle_deg));

        Prediction pred;
        pred.query_index = gt.label;
        pred.class_probs.assign(static_cast<std::size_t>(max_label) + 1, 0.0);
        pred.class_probs[static_cast<std::size_t>(gt.label)] = 1.0;

        // Sigmoid-range outputs: clamp what noise pushed outside the image.
        Vec3 vox = world_to_voxel(meta, noisy.center);
        Vec3 extent = meta.extent_mm();
        NormalizedTarget t;
        for (int k = 0; k < 3; ++k) {
            t.position[k] = std::clamp((vox[k] + 0.5) / meta.dims[k], 0.0, 1.0);
            t.scale[k] = std::clamp(noisy.scale[k] / extent[k], 0.0, 1.0);
            t.angles[k] = std::clamp((noisy.angles[k] + 180.0) / 360.0, 0.0, 1.0);
        }
        pred.target = t;
        out.push_back(pred);
    }
    return out;
}

std::vector<GroundTruth> scene_ground_truths(const Scene& scene) {
    std::vector<GroundTruth> out;
    for (const Pose9DoF& pose : scene.gt_poses) {
        GroundTruth gt;
        gt.label = pose.label;
        gt.target = normalize_target(pose, scene.labels.meta);
        out.push_back(gt);
    }
    return out;
}

}  // namespace anat9
