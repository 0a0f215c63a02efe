#include "anat9/augment.hpp"

#include <algorithm>
#include <cmath>

namespace anat9 {

RigidDraw draw_rigid(const AugmentConfig& config, std::uint64_t case_id) {
    config.validate();
    DetRng rng(config.seed, case_id, RngOp::aug_rigid);
    RigidDraw draw;
    for (int k = 0; k < 3; ++k)
        draw.translation_mm[k] = rng.uniform(-config.max_translation_mm, config.max_translation_mm);
    draw.scale = rng.uniform(config.scale_range[0], config.scale_range[1]);
    for (int k = 0; k < 3; ++k)
        draw.rotation_deg[k] = rng.uniform(config.rotation_range_deg[0], config.rotation_range_deg[1]);
    return draw;
}

AugmentedScene rigid_augment(const LabelVolume& volume, const std::vector<Pose9DoF>& poses,
                             const AugmentConfig& config, const RigidDraw& draw) {
    config.validate();
    volume.validate();
    for (int k = 0; k < 3; ++k) {
        require(std::abs(draw.translation_mm[k]) <= config.max_translation_mm + 1e-12,
                "translation outside the configured range");
        require(draw.rotation_deg[k] >= config.rotation_range_deg[0] - 1e-12 &&
                    draw.rotation_deg[k] <= config.rotation_range_deg[1] + 1e-12,
                "rotation outside the configured range");
    }
    require(draw.scale >= config.scale_range[0] - 1e-12 &&
                draw.scale <= config.scale_range[1] + 1e-12,
            "scale outside the configured range");

    Vec3 pivot = volume.meta.center_world();
    Mat3 rot = euler_to_matrix(draw.rotation_deg);
    auto forward = [&](const Vec3& p) { return pivot + draw.scale * (rot * (p - pivot)) + draw.translation_mm; };
    // Inverse map for the resampling gather.
    Mat3 rot_inv = rot.transpose();
    auto backward = [&](const Vec3& p) {
        return pivot + rot_inv * ((p - pivot - draw.translation_mm) / draw.scale);
    };

    AugmentedScene out;
    out.volume.meta = volume.meta;
    out.volume.voxels.assign(volume.meta.voxel_count(), 0);
    const auto& d = volume.meta.dims;
    std::size_t idx = 0;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i, ++idx) {
                Vec3 src = world_to_voxel(volume.meta, backward(voxel_to_world(volume.meta, Vec3(i, j, k))));
                long si = std::lround(src[0]), sj = std::lround(src[1]), sk = std::lround(src[2]);
                if (si < 0 || sj < 0 || sk < 0 || si >= d[0] || sj >= d[1] || sk >= d[2]) continue;
                out.volume.voxels[idx] =
                    volume.at(static_cast<int>(si), static_cast<int>(sj), static_cast<int>(sk));
            }

    for (const Pose9DoF& pose : poses) {
        Pose9DoF updated = pose;
        updated.center = forward(pose.center);
        updated.scale = pose.scale * draw.scale;
        updated.angles = matrix_to_euler(rot * pose_frame(pose));
        out.poses.push_back(updated);
    }
    return out;
}

AugmentedScene crop_z(const LabelVolume& volume, const std::vector<Pose9DoF>& poses, int z0,
                      int z1) {
    volume.validate();
    require(z0 >= 0 && z1 <= volume.meta.dims[2] && z0 < z1, "empty or invalid crop interval");

    AugmentedScene out;
    out.volume.meta = volume.meta;
    out.volume.meta.dims[2] = z1 - z0;
    // World coordinates of retained voxels are unchanged.
    out.volume.meta.origin =
        voxel_to_world(volume.meta, Vec3(0, 0, z0));
    out.volume.voxels.resize(out.volume.meta.voxel_count());

    const auto& d = volume.meta.dims;
    std::size_t plane = static_cast<std::size_t>(d[0]) * d[1];
    std::copy(volume.voxels.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z0)),
              volume.voxels.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z1)),
              out.volume.voxels.begin());

    // Per-label voxel counts before and after decide kept/truncated/removed.
    std::vector<std::size_t> before(65536, 0), after(65536, 0);
    for (std::uint16_t v : volume.voxels) ++before[v];
    for (std::uint16_t v : out.volume.voxels) ++after[v];

    for (const Pose9DoF& pose : poses) {
        require(pose.label >= 1 && pose.label <= 65535, "pose label out of range");
        std::size_t kept = after[static_cast<std::size_t>(pose.label)];
        std::size_t total = before[static_cast<std::size_t>(pose.label)];
        if (kept == 0) continue;  // fully removed
        if (kept == total) {
            out.poses.push_back(pose);
        } else {
            out.poses.push_back(pca_parameterize(out.volume, pose.label));
        }
    }
    return out;
}

CropDraw draw_crop_z(int dim_z, double min_fraction, double max_fraction, std::uint64_t seed,
                     std::uint64_t case_id) {
    require(dim_z >= 1, "dim_z must be >= 1");
    require(min_fraction > 0 && min_fraction <= max_fraction && max_fraction <= 1.0,
            "invalid crop fraction range");
    DetRng rng(seed, case_id, RngOp::aug_crop);
    int keep = std::clamp(static_cast<int>(std::lround(rng.uniform(min_fraction, max_fraction) * dim_z)),
                          1, dim_z);
    CropDraw draw;
    draw.z0 = static_cast<int>(rng.uniform_int(0, dim_z - keep));
    draw.z1 = draw.z0 + keep;
    return draw;
}

AugmentedScene random_erase_bottom_pair(const LabelVolume& volume,
                                        const std::vector<Pose9DoF>& poses, double probability,
                                        std::uint64_t seed, std::uint64_t case_id) {
    volume.validate();
    require(probability >= 0 && probability <= 1, "probability must be in [0,1]");

    AugmentedScene out;
    out.volume = volume;
    out.poses = poses;

    DetRng rng(seed, case_id, RngOp::aug_erase);
    if (!rng.bernoulli(probability)) return out;
    if (poses.size() < 2) {
        out.warning = "random_erase_bottom_pair: fewer than 2 instances, leaving scene unchanged";
        return out;
    }

    std::vector<int> labels;
    for (const Pose9DoF& p : poses) labels.push_back(p.label);
    std::sort(labels.begin(), labels.end());
    int second_largest = labels[labels.size() - 2];

    for (std::uint16_t& v : out.volume.voxels)
        if (v >= second_largest) v = 0;
    out.poses.erase(std::remove_if(out.poses.begin(), out.poses.end(),
                                   [&](const Pose9DoF& p) { return p.label >= second_largest; }),
                    out.poses.end());
    return out;
}

}  // namespace anat9
