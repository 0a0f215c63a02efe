#include <doctest.h>

#include "anat9/augment.hpp"
#include "anat9/metrics.hpp"
#include "anat9/synth.hpp"

using namespace anat9;

namespace {

Scene test_scene(std::uint64_t seed, int count = 8) {
    SceneConfig cfg;
    cfg.instance_count = count;
    cfg.dims = {160, 160, 120};
    cfg.translation_jitter_mm = 2.0;
    cfg.rotation_jitter_deg = 3.0;
    cfg.seed = seed;
    return gen_scene(cfg);
}

}  // namespace

TEST_SUITE_BEGIN("augment");

TEST_CASE("pure translation shifts centers only") {
    Scene scene = test_scene(1);
    AugmentConfig cfg;
    RigidDraw draw;
    draw.translation_mm = Vec3(4.5, -3.25, 2.0);
    AugmentedScene out = rigid_augment(scene.labels, scene.gt_poses, cfg, draw);
    for (std::size_t i = 0; i < scene.gt_poses.size(); ++i) {
        CHECK((out.poses[i].center - scene.gt_poses[i].center - draw.translation_mm)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((out.poses[i].scale - scene.gt_poses[i].scale).norm() == 0.0);
        CHECK((out.poses[i].angles - scene.gt_poses[i].angles).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("pure scale multiplies scales and distances from the pivot") {
    Scene scene = test_scene(2);
    AugmentConfig cfg;
    RigidDraw draw;
    draw.scale = 1.1;
    Vec3 pivot = scene.labels.meta.center_world();
    AugmentedScene out = rigid_augment(scene.labels, scene.gt_poses, cfg, draw);
    for (std::size_t i = 0; i < scene.gt_poses.size(); ++i) {
        Vec3 expected = pivot + 1.1 * (scene.gt_poses[i].center - pivot);
        CHECK((out.poses[i].center - expected).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((out.poses[i].scale - 1.1 * scene.gt_poses[i].scale).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((out.poses[i].angles - scene.gt_poses[i].angles).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("rotation about Z adds to alpha for an upright box") {
    VolumeMeta meta;
    meta.dims = {64, 64, 64};
    LabelVolume vol;
    vol.meta = meta;
    vol.voxels.assign(meta.voxel_count(), 0);
    Pose9DoF pose;
    pose.label = 1;
    pose.center = meta.center_world();
    pose.scale = Vec3(10, 6, 4);
    pose.angles = Vec3(10, 0, 0);

    AugmentConfig cfg;
    RigidDraw draw;
    draw.rotation_deg = Vec3(15, 0, 0);
    AugmentedScene out = rigid_augment(vol, {pose}, cfg, draw);
    CHECK(out.poses[0].angles[0] == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(std::abs(out.poses[0].angles[1]) < 1e-12);
    CHECK(std::abs(out.poses[0].angles[2]) < 1e-12);
}

TEST_CASE("draw_rigid respects the configured ranges and the seed") {
    AugmentConfig cfg;
    cfg.seed = 77;
    RigidDraw a = draw_rigid(cfg, 3);
    RigidDraw b = draw_rigid(cfg, 3);
    CHECK((a.translation_mm - b.translation_mm).norm() == 0.0);
    CHECK(a.scale == b.scale);
    RigidDraw c = draw_rigid(cfg, 4);
    CHECK((a.translation_mm - c.translation_mm).norm() != 0.0);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(a.translation_mm[k]) <= cfg.max_translation_mm);
        CHECK(a.rotation_deg[k] >= cfg.rotation_range_deg[0]);
        CHECK(a.rotation_deg[k] <= cfg.rotation_range_deg[1]);
    }
    CHECK(a.scale >= cfg.scale_range[0]);
    CHECK(a.scale <= cfg.scale_range[1]);

    RigidDraw outside;
    outside.translation_mm = Vec3(999, 0, 0);
    Scene scene = test_scene(5, 4);
    CHECK_THROWS_AS(rigid_augment(scene.labels, scene.gt_poses, cfg, outside), Error);
}

TEST_CASE("analytic pose update agrees with re-running PCA on the warped volume") {
    Scene scene = test_scene(9);
    // The pipeline augments PCA-fitted boxes, so the shortcut is judged
    // against fitted inputs.
    std::vector<Pose9DoF> fitted;
    for (const Pose9DoF& gt : scene.gt_poses)
        fitted.push_back(pca_parameterize(scene.labels, gt.label));

    AugmentConfig cfg;
    cfg.seed = 4;
    RigidDraw draw = draw_rigid(cfg, 0);
    // Keep translation small enough that nothing leaves the volume.
    draw.translation_mm *= 0.25;
    AugmentedScene out = rigid_augment(scene.labels, fitted, cfg, draw);

    double vox = scene.labels.meta.spacing.maxCoeff();
    for (const Pose9DoF& updated : out.poses) {
        Pose9DoF refit = pca_parameterize(out.volume, updated.label);
        CHECK((refit.center - updated.center).norm() <= 2.0 * vox);
        CHECK((refit.scale - updated.scale).cwiseAbs().maxCoeff() <= 2.0 * vox);
        for (int k = 0; k < 3; ++k)
            CHECK(angle_deviation(refit.angles[k], updated.angles[k]) <= 2.0);
    }
}

TEST_CASE("label set never grows under augmentation") {
    Scene scene = test_scene(11);
    AugmentConfig cfg;
    RigidDraw draw = draw_rigid(cfg, 1);
    AugmentedScene out = rigid_augment(scene.labels, scene.gt_poses, cfg, draw);
    auto before = scene.labels.labels_present();
    auto after = out.volume.labels_present();
    for (std::uint16_t l : after)
        CHECK(std::find(before.begin(), before.end(), l) != before.end());
}

TEST_CASE("crop retaining everything re-expresses poses unchanged") {
    Scene scene = test_scene(13);
    AugmentedScene out = crop_z(scene.labels, scene.gt_poses, 0, scene.labels.meta.dims[2]);
    REQUIRE(out.poses.size() == scene.gt_poses.size());
    for (std::size_t i = 0; i < out.poses.size(); ++i) {
        CHECK((out.poses[i].center - scene.gt_poses[i].center).norm() == 0.0);
        CHECK((out.poses[i].scale - scene.gt_poses[i].scale).norm() == 0.0);
    }
}

TEST_CASE("crop keeping a world slab preserves retained world coordinates") {
    Scene scene = test_scene(15);
    AugmentedScene out = crop_z(scene.labels, scene.gt_poses, 10, 100);
    CHECK(out.volume.meta.dims[2] == 90);
    // Voxel (i, j, 0) of the crop is voxel (i, j, 10) of the source.
    Vec3 a = voxel_to_world(out.volume.meta, Vec3(3, 4, 0));
    Vec3 b = voxel_to_world(scene.labels.meta, Vec3(3, 4, 10));
    CHECK((a - b).norm() < 1e-12);
    for (int j = 0; j < 10; ++j)
        for (int i = 0; i < 10; ++i) CHECK(out.volume.at(i, j, 5) == scene.labels.at(i, j, 15));
}

TEST_CASE("bisecting crop recomputes the surviving half by PCA") {
    Scene scene = test_scene(17);
    // Find a z that cuts through instance 1.
    const Pose9DoF& target = scene.gt_poses[0];
    Vec3 vox = world_to_voxel(scene.labels.meta, target.center);
    int zcut = static_cast<int>(std::lround(vox[2]));
    AugmentedScene out = crop_z(scene.labels, scene.gt_poses, 0, zcut);

    bool found = false;
    for (const Pose9DoF& pose : out.poses) {
        if (pose.label != 1) continue;
        found = true;
        Pose9DoF oracle = pca_parameterize(out.volume, 1);
        CHECK((pose.center - oracle.center).norm() < 1e-12);
        CHECK((pose.scale - oracle.scale).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((pose.angles - oracle.angles).cwiseAbs().maxCoeff() < 1e-12);
        // Truly truncated: smaller than the original along some axis.
        CHECK(pose.scale.minCoeff() < target.scale.minCoeff());
    }
    CHECK(found);
}

TEST_CASE("crop below all instances drops every pose") {
    Scene scene = test_scene(19);
    AugmentedScene out = crop_z(scene.labels, scene.gt_poses, 0, 2);
    CHECK(out.poses.empty());
    CHECK(out.volume.labels_present().empty());
}

TEST_CASE("draw_crop_z produces valid seeded slabs") {
    CropDraw a = draw_crop_z(100, 0.5, 0.9, 7, 0);
    CropDraw b = draw_crop_z(100, 0.5, 0.9, 7, 0);
    CHECK(a.z0 == b.z0);
    CHECK(a.z1 == b.z1);
    CHECK(a.z0 >= 0);
    CHECK(a.z1 <= 100);
    int keep = a.z1 - a.z0;
    CHECK(keep >= 50);
    CHECK(keep <= 90);
}

TEST_CASE("erase removes exactly the two largest labels") {
    Scene scene = test_scene(23);  // labels 1..8
    AugmentedScene erased = random_erase_bottom_pair(scene.labels, scene.gt_poses, 1.0, 3, 0);
    CHECK(erased.poses.size() == 6);
    auto labels = erased.volume.labels_present();
    CHECK(labels.size() == 6);
    for (std::uint16_t l : labels) CHECK(l <= 6);

    AugmentedScene kept = random_erase_bottom_pair(scene.labels, scene.gt_poses, 0.0, 3, 0);
    CHECK(kept.poses.size() == 8);
    CHECK(kept.volume.voxels == scene.labels.voxels);

    // Seeded decision is reproducible.
    AugmentedScene c1 = random_erase_bottom_pair(scene.labels, scene.gt_poses, 0.5, 11, 2);
    AugmentedScene c2 = random_erase_bottom_pair(scene.labels, scene.gt_poses, 0.5, 11, 2);
    CHECK(c1.poses.size() == c2.poses.size());
}

TEST_CASE("erase with fewer than two instances warns and keeps the scene") {
    Scene scene = test_scene(29, 1);
    AugmentedScene out =
        random_erase_bottom_pair(scene.labels, scene.gt_poses, 1.0, 3, 0);
    CHECK(out.poses.size() == 1);
    CHECK_FALSE(out.warning.empty());
}

TEST_SUITE_END();
