#pragma once

#include <cstdint>
#include <vector>

#include "anat9/volume.hpp"

namespace anat9 {

// Oriented box for one anatomy instance: label, center (mm, world),
// scale (mm, full extents along the local x/y/z axes), Euler angles
// (degrees, each in (-180, 180], about the world Z, Y, X axes).
struct Pose9DoF {
    int label = 0;
    Vec3 center = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Vec3 angles = Vec3::Zero();  // alpha (Z), beta (Y), gamma (X)
};

// All nine components mapped into [0,1]: position = image-relative center,
// scale = extents over image size, angle = (deg + 180) / 360.
struct NormalizedTarget {
    Vec3 position = Vec3::Zero();
    Vec3 scale = Vec3::Zero();
    Vec3 angles = Vec3::Zero();

    std::array<double, 9> as_array() const {
        return {position[0], position[1], position[2], scale[0], scale[1],
                scale[2],    angles[0],   angles[1],   angles[2]};
    }
    static NormalizedTarget from_array(const std::array<double, 9>& a) {
        NormalizedTarget t;
        t.position = Vec3(a[0], a[1], a[2]);
        t.scale = Vec3(a[3], a[4], a[5]);
        t.angles = Vec3(a[6], a[7], a[8]);
        return t;
    }
};

// Axis-aligned region of interest in world coordinates.
struct AxisAlignedRoi {
    Vec3 center_mm = Vec3::Zero();
    Vec3 extent_mm = Vec3::Zero();
};

bool is_rotation(const Mat3& m, double tol = 1e-9);

// Wraps a degree value into (-180, 180].
double wrap_angle_deg(double deg);

// R = Rx(gamma) * Ry(beta) * Rz(alpha): extrinsic world-axis rotations
// applied Z first, then Y, then X.
Mat3 euler_to_matrix(const Vec3& angles_deg);

// Inverse of euler_to_matrix. beta lands in [-90, 90]; at gimbal lock
// (|beta| = 90 within 1e-7 deg) gamma is set to 0 and the free angle is
// folded into alpha. Throws on non-rotation input.
Vec3 matrix_to_euler(const Mat3& r);

// Local box frame of a pose (columns = local axes in world coordinates).
inline Mat3 pose_frame(const Pose9DoF& pose) { return euler_to_matrix(pose.angles); }

// Fits the 9-DoF box of one labeled instance: covariance eigenvectors give
// the local axes (sorted by descending eigenvalue, signs canonicalized),
// extents are min/max projections of voxel centers plus a one-voxel margin.
// Degenerate instances (< 4 voxels or rank-deficient covariance) fall back
// to the identity frame. Throws if the label is absent.
Pose9DoF pca_parameterize(const LabelVolume& volume, int label);

// The 8 corners center + R * (+-w/2, +-h/2, +-d/2); corner k uses bit 0..2
// of k for the local x/y/z sign.
std::array<Vec3, 8> box_corners(const Pose9DoF& pose);

// True iff |R^T (point - center)|_k <= scale_k / 2 + expansion for all k.
bool contains(const Pose9DoF& pose, const Vec3& point_mm, double expansion_mm = 0.0);

enum class SampleMode { nearest, trilinear };

// Resamples the box interior (expanded by `expansion_mm` per face) onto an
// out_dims grid aligned with the box axes. Output voxel centers span the
// expanded box cell-centered, so a grid-aligned box reproduces the input
// exactly. Out-of-bounds samples read 0.
LabelVolume crop_resample(const LabelVolume& volume, const Pose9DoF& pose, double expansion_mm,
                          const std::array<int, 3>& out_dims,
                          SampleMode mode = SampleMode::nearest);
ScalarVolume crop_resample(const ScalarVolume& volume, const Pose9DoF& pose, double expansion_mm,
                           const std::array<int, 3>& out_dims, SampleMode mode);

struct SubMask {
    LabelVolume mask;  // nonzero = foreground; grid encodes the crop geometry
    std::uint16_t label = 0;
};

// Paints every foreground subvoxel into its nearest target voxel, in
// ascending label order; existing foreground is never overwritten.
LabelVolume merge_back(const std::vector<SubMask>& parts, const VolumeMeta& target);

// Maps a pose into the 9 sigmoid-range components used by the detector.
// Throws if any component leaves [0,1].
NormalizedTarget normalize_target(const Pose9DoF& pose, const VolumeMeta& meta);
Pose9DoF denormalize_target(const NormalizedTarget& target, const VolumeMeta& meta, int label);

// Foreground mean position and per-world-axis extent (max-min plus one
// voxel margin). Throws on empty foreground.
AxisAlignedRoi roi_from_foreground(const LabelVolume& mask);

}  // namespace anat9
