#include "anat9/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace anat9 {

namespace {

constexpr double kPi = 3.141592653589793238462643;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;
// |beta| this close to 90 deg switches the decomposition to the
// gimbal-lock branch.
constexpr double kGimbalTolDeg = 1e-7;

Mat3 rot_z(double deg) {
    double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

Mat3 rot_y(double deg) {
    double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
    Mat3 r;
    r << c, 0, s, 0, 1, 0, -s, 0, c;
    return r;
}

Mat3 rot_x(double deg) {
    double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
    Mat3 r;
    r << 1, 0, 0, 0, c, -s, 0, s, c;
    return r;
}

// Extent of one voxel cell projected onto a unit axis.
double voxel_margin_along(const Mat3& direction, const Vec3& spacing, const Vec3& axis) {
    double m = 0.0;
    for (int j = 0; j < 3; ++j) m += std::abs(axis.dot(direction.col(j))) * spacing[j];
    return m;
}

}  // namespace

bool is_rotation(const Mat3& m, double tol) {
    if (!m.allFinite()) return false;
    if (((m.transpose() * m) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(m.determinant() - 1.0) <= tol;
}

double wrap_angle_deg(double deg) {
    double a = std::fmod(deg, 360.0);
    if (a <= -180.0) a += 360.0;
    if (a > 180.0) a -= 360.0;
    return a;
}

Mat3 euler_to_matrix(const Vec3& angles_deg) {
    require(angles_deg.allFinite(), "non-finite Euler angles");
    return rot_x(angles_deg[2]) * rot_y(angles_deg[1]) * rot_z(angles_deg[0]);
}

Vec3 matrix_to_euler(const Mat3& r) {
    require(is_rotation(r, 1e-9), "matrix_to_euler: input is not a rotation");
    double sb = std::clamp(r(0, 2), -1.0, 1.0);
    double beta = std::asin(sb) * kRadToDeg;
    double alpha, gamma;
    if (90.0 - std::abs(beta) < kGimbalTolDeg) {
        // r(1,0) = sin(alpha -+ gamma), r(1,1) = cos(alpha -+ gamma); with
        // gamma pinned to 0 the remaining rotation lands entirely in alpha.
        beta = sb > 0 ? 90.0 : -90.0;
        alpha = std::atan2(r(1, 0), r(1, 1)) * kRadToDeg;
        gamma = 0.0;
    } else {
        alpha = std::atan2(-r(0, 1), r(0, 0)) * kRadToDeg;
        gamma = std::atan2(-r(1, 2), r(2, 2)) * kRadToDeg;
    }
    return Vec3(wrap_angle_deg(alpha), beta, wrap_angle_deg(gamma));
}

namespace {

// Deterministic eigenframe: columns sorted by descending eigenvalue, each
// flipped so its largest-magnitude component is positive, det forced to +1
// by negating the third axis. Near-equal eigenvalues (gap < 1e-9 * trace)
// are re-based onto world axes in Z, Y, X preference order.
Mat3 canonical_frame(const Mat3& covariance) {
    Eigen::SelfAdjointEigenSolver<Mat3> solver(covariance);
    require(solver.info() == Eigen::Success, "eigendecomposition failed");
    // Eigen returns ascending order; we want descending.
    Vec3 evals;
    Mat3 axes;
    for (int k = 0; k < 3; ++k) {
        evals[k] = solver.eigenvalues()[2 - k];
        axes.col(k) = solver.eigenvectors().col(2 - k);
    }

    double tie_tol = 1e-9 * std::max(covariance.trace(), 1e-300);
    // Group indices whose eigenvalues are pairwise within the tolerance and
    // rebuild the group's basis from world axes (Z first, then Y, then X).
    int g = 0;
    while (g < 3) {
        int end = g + 1;
        while (end < 3 && evals[g] - evals[end] < tie_tol) ++end;
        if (end - g >= 2) {
            std::vector<Vec3> group;
            for (int k = g; k < end; ++k) group.push_back(axes.col(k));
            std::vector<Vec3> chosen;
            const Vec3 world_axes[3] = {Vec3::UnitZ(), Vec3::UnitY(), Vec3::UnitX()};
            for (const Vec3& w : world_axes) {
                if (static_cast<int>(chosen.size()) == end - g) break;
                // Project the world axis onto the eigen-subspace, then
                // orthogonalize against already-chosen vectors.
                Vec3 p = Vec3::Zero();
                for (const Vec3& v : group) p += v.dot(w) * v;
                for (const Vec3& v : chosen) p -= v.dot(p) * v;
                if (p.norm() > 1e-6) chosen.push_back(p.normalized());
            }
            // Complete the basis from the original eigenvectors if needed.
            for (const Vec3& v : group) {
                if (static_cast<int>(chosen.size()) == end - g) break;
                Vec3 p = v;
                for (const Vec3& u : chosen) p -= u.dot(p) * u;
                if (p.norm() > 1e-6) chosen.push_back(p.normalized());
            }
            for (int k = g; k < end; ++k) axes.col(k) = chosen[static_cast<std::size_t>(k - g)];
        }
        g = end;
    }

    for (int k = 0; k < 3; ++k) {
        int imax = 0;
        for (int i = 1; i < 3; ++i)
            if (std::abs(axes(i, k)) > std::abs(axes(imax, k))) imax = i;
        if (axes(imax, k) < 0) axes.col(k) = -axes.col(k);
    }
    if (axes.determinant() < 0) axes.col(2) = -axes.col(2);
    return axes;
}

std::vector<Vec3> labeled_world_points(const LabelVolume& volume, int label) {
    std::vector<Vec3> pts;
    const auto& d = volume.meta.dims;
    std::size_t idx = 0;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i, ++idx)
                if (volume.voxels[idx] == label)
                    pts.push_back(voxel_to_world(volume.meta, Vec3(i, j, k)));
    return pts;
}

}  // namespace

Pose9DoF pca_parameterize(const LabelVolume& volume, int label) {
    require(label >= 1 && label <= 65535, "label out of range");
    std::vector<Vec3> pts = labeled_world_points(volume, label);
    require(!pts.empty(), "label " + std::to_string(label) + " absent from volume");

    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());

    Mat3 axes = Mat3::Identity();
    bool degenerate = pts.size() < 4;
    if (!degenerate) {
        Mat3 cov = Mat3::Zero();
        for (const Vec3& p : pts) {
            Vec3 q = p - mean;
            cov += q * q.transpose();
        }
        cov /= static_cast<double>(pts.size());
        Eigen::SelfAdjointEigenSolver<Mat3> probe(cov);
        if (probe.eigenvalues().minCoeff() < 1e-12 * std::max(cov.trace(), 1e-300))
            degenerate = true;
        else
            axes = canonical_frame(cov);
    }

    Vec3 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& p : pts) {
        Vec3 proj = axes.transpose() * (p - mean);
        lo = lo.cwiseMin(proj);
        hi = hi.cwiseMax(proj);
    }

    Pose9DoF pose;
    pose.label = label;
    // Box center sits at the midpoint of the projection intervals so every
    // voxel center is enclosed; this equals the mass mean for symmetric
    // instances.
    pose.center = mean + axes * ((lo + hi) * 0.5);
    for (int k = 0; k < 3; ++k) {
        double margin = voxel_margin_along(volume.meta.direction, volume.meta.spacing, axes.col(k));
        pose.scale[k] = (hi[k] - lo[k]) + margin;
        if (degenerate) pose.scale[k] = std::max(pose.scale[k], volume.meta.spacing[k]);
    }
    pose.angles = matrix_to_euler(axes);
    return pose;
}

std::array<Vec3, 8> box_corners(const Pose9DoF& pose) {
    Mat3 r = pose_frame(pose);
    std::array<Vec3, 8> out;
    for (int k = 0; k < 8; ++k) {
        Vec3 local(((k & 1) ? 0.5 : -0.5) * pose.scale[0], ((k & 2) ? 0.5 : -0.5) * pose.scale[1],
                   ((k & 4) ? 0.5 : -0.5) * pose.scale[2]);
        out[static_cast<std::size_t>(k)] = pose.center + r * local;
    }
    return out;
}

bool contains(const Pose9DoF& pose, const Vec3& point_mm, double expansion_mm) {
    Vec3 local = pose_frame(pose).transpose() * (point_mm - pose.center);
    for (int k = 0; k < 3; ++k)
        if (std::abs(local[k]) > pose.scale[k] * 0.5 + expansion_mm) return false;
    return true;
}

namespace {

// Grid of the resampled crop: voxel centers tile the expanded box.
VolumeMeta crop_meta(const Pose9DoF& pose, double expansion_mm,
                     const std::array<int, 3>& out_dims) {
    for (int k = 0; k < 3; ++k) require(out_dims[k] >= 1, "crop output dims must be >= 1");
    require(expansion_mm >= 0.0, "crop expansion must be >= 0");
    require(pose.scale.minCoeff() > 0.0, "pose scale must be positive");
    Mat3 r = pose_frame(pose);
    Vec3 ext = pose.scale + Vec3::Constant(2.0 * expansion_mm);
    VolumeMeta meta;
    meta.dims = out_dims;
    for (int k = 0; k < 3; ++k) meta.spacing[k] = ext[k] / out_dims[k];
    meta.direction = r;
    Vec3 first_center_local = -0.5 * ext + 0.5 * meta.spacing;
    meta.origin = pose.center + r * first_center_local;
    meta.validate();
    return meta;
}

template <typename Volume>
typename Volume::value_type sample_nearest(const Volume& vol, const Vec3& vox) {
    long i = std::lround(vox[0]), j = std::lround(vox[1]), k = std::lround(vox[2]);
    if (i < 0 || j < 0 || k < 0 || i >= vol.meta.dims[0] || j >= vol.meta.dims[1] ||
        k >= vol.meta.dims[2])
        return 0;
    return vol.at(static_cast<int>(i), static_cast<int>(j), static_cast<int>(k));
}

}  // namespace

LabelVolume crop_resample(const LabelVolume& volume, const Pose9DoF& pose, double expansion_mm,
                          const std::array<int, 3>& out_dims, SampleMode mode) {
    require(mode == SampleMode::nearest, "trilinear sampling is not valid on a label volume");
    volume.validate();
    VolumeMeta meta = crop_meta(pose, expansion_mm, out_dims);
    LabelVolume out;
    out.meta = meta;
    out.voxels.resize(meta.voxel_count());
    struct View {
        const LabelVolume& v;
        const VolumeMeta& meta;
        using value_type = std::uint16_t;
        std::uint16_t at(int i, int j, int k) const { return v.at(i, j, k); }
    };
    std::size_t idx = 0;
    for (int k = 0; k < meta.dims[2]; ++k)
        for (int j = 0; j < meta.dims[1]; ++j)
            for (int i = 0; i < meta.dims[0]; ++i, ++idx) {
                Vec3 world = voxel_to_world(meta, Vec3(i, j, k));
                Vec3 vox = world_to_voxel(volume.meta, world);
                out.voxels[idx] = sample_nearest(View{volume, volume.meta}, vox);
            }
    return out;
}

ScalarVolume crop_resample(const ScalarVolume& volume, const Pose9DoF& pose, double expansion_mm,
                           const std::array<int, 3>& out_dims, SampleMode mode) {
    volume.validate();
    VolumeMeta meta = crop_meta(pose, expansion_mm, out_dims);
    ScalarVolume out;
    out.meta = meta;
    out.voxels.resize(meta.voxel_count());

    auto sample_trilinear = [&](const Vec3& vox) -> float {
        double fx = std::floor(vox[0]), fy = std::floor(vox[1]), fz = std::floor(vox[2]);
        double tx = vox[0] - fx, ty = vox[1] - fy, tz = vox[2] - fz;
        double acc = 0.0;
        for (int dk = 0; dk < 2; ++dk)
            for (int dj = 0; dj < 2; ++dj)
                for (int di = 0; di < 2; ++di) {
                    long i = static_cast<long>(fx) + di;
                    long j = static_cast<long>(fy) + dj;
                    long k = static_cast<long>(fz) + dk;
                    double w = (di ? tx : 1.0 - tx) * (dj ? ty : 1.0 - ty) * (dk ? tz : 1.0 - tz);
                    double v = 0.0;  // zero padding outside the volume
                    if (i >= 0 && j >= 0 && k >= 0 && i < volume.meta.dims[0] &&
                        j < volume.meta.dims[1] && k < volume.meta.dims[2])
                        v = volume.at(static_cast<int>(i), static_cast<int>(j),
                                      static_cast<int>(k));
                    acc += w * v;
                }
        return static_cast<float>(acc);
    };

    struct View {
        const ScalarVolume& v;
        const VolumeMeta& meta;
        using value_type = float;
        float at(int i, int j, int k) const { return v.at(i, j, k); }
    };

    std::size_t idx = 0;
    for (int k = 0; k < meta.dims[2]; ++k)
        for (int j = 0; j < meta.dims[1]; ++j)
            for (int i = 0; i < meta.dims[0]; ++i, ++idx) {
                Vec3 world = voxel_to_world(meta, Vec3(i, j, k));
                Vec3 vox = world_to_voxel(volume.meta, world);
                out.voxels[idx] = (mode == SampleMode::nearest)
                                      ? sample_nearest(View{volume, volume.meta}, vox)
                                      : sample_trilinear(vox);
            }
    return out;
}

LabelVolume merge_back(const std::vector<SubMask>& parts, const VolumeMeta& target) {
    target.validate();
    LabelVolume out;
    out.meta = target;
    out.voxels.assign(target.voxel_count(), 0);

    std::vector<const SubMask*> order;
    for (const SubMask& p : parts) {
        require(p.label >= 1, "merge_back requires positive instance labels");
        p.mask.validate();
        order.push_back(&p);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const SubMask* a, const SubMask* b) { return a->label < b->label; });

    for (const SubMask* part : order) {
        const VolumeMeta& m = part->mask.meta;
        std::size_t idx = 0;
        for (int k = 0; k < m.dims[2]; ++k)
            for (int j = 0; j < m.dims[1]; ++j)
                for (int i = 0; i < m.dims[0]; ++i, ++idx) {
                    if (part->mask.voxels[idx] == 0) continue;
                    Vec3 world = voxel_to_world(m, Vec3(i, j, k));
                    Vec3 vox = world_to_voxel(target, world);
                    long ti = std::lround(vox[0]), tj = std::lround(vox[1]),
                         tk = std::lround(vox[2]);
                    if (ti < 0 || tj < 0 || tk < 0 || ti >= target.dims[0] ||
                        tj >= target.dims[1] || tk >= target.dims[2])
                        continue;
                    std::uint16_t& cell = out.at(static_cast<int>(ti), static_cast<int>(tj),
                                                 static_cast<int>(tk));
                    if (cell == 0) cell = part->label;  // first writer wins
                }
    }
    return out;
}

NormalizedTarget normalize_target(const Pose9DoF& pose, const VolumeMeta& meta) {
    meta.validate();
    NormalizedTarget t;
    Vec3 vox = world_to_voxel(meta, pose.center);
    Vec3 extent = meta.extent_mm();
    for (int k = 0; k < 3; ++k) {
        t.position[k] = (vox[k] + 0.5) / meta.dims[k];
        t.scale[k] = pose.scale[k] / extent[k];
        t.angles[k] = (wrap_angle_deg(pose.angles[k]) + 180.0) / 360.0;
    }
    for (double c : t.as_array())
        require(c >= 0.0 && c <= 1.0, "normalized component outside [0,1]");
    return t;
}

Pose9DoF denormalize_target(const NormalizedTarget& target, const VolumeMeta& meta, int label) {
    meta.validate();
    Pose9DoF pose;
    pose.label = label;
    Vec3 vox;
    Vec3 extent = meta.extent_mm();
    for (int k = 0; k < 3; ++k) {
        vox[k] = target.position[k] * meta.dims[k] - 0.5;
        pose.scale[k] = target.scale[k] * extent[k];
        pose.angles[k] = target.angles[k] * 360.0 - 180.0;
    }
    pose.center = voxel_to_world(meta, vox);
    return pose;
}

AxisAlignedRoi roi_from_foreground(const LabelVolume& mask) {
    mask.validate();
    const auto& d = mask.meta.dims;
    Vec3 sum = Vec3::Zero();
    Vec3 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    std::size_t count = 0;
    std::size_t idx = 0;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i, ++idx) {
                if (mask.voxels[idx] == 0) continue;
                Vec3 w = voxel_to_world(mask.meta, Vec3(i, j, k));
                sum += w;
                lo = lo.cwiseMin(w);
                hi = hi.cwiseMax(w);
                ++count;
            }
    require(count > 0, "empty foreground");

    AxisAlignedRoi roi;
    roi.center_mm = sum / static_cast<double>(count);
    for (int k = 0; k < 3; ++k) {
        double margin =
            voxel_margin_along(mask.meta.direction, mask.meta.spacing, Vec3::Unit(k));
        roi.extent_mm[k] = (hi[k] - lo[k]) + margin;
    }
    return roi;
}

}  // namespace anat9
