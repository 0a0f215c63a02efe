#pragma once

#include <optional>
#include <vector>

#include "anat9/geometry.hpp"

namespace anat9 {

struct IdThresholds {
    double position_mm = 20.0;
    double scale_mm = 20.0;
    double angle_deg = 10.0;

    void validate() const {
        require(position_mm > 0 && scale_mm > 0 && angle_deg > 0,
                "identification thresholds must be positive");
    }
};

struct DetectionReport {
    struct PerGt {
        int label = 0;
        bool identified = false;
        bool has_prediction = false;
        double position_dev_mm = 0.0;  // ||dp||_2
        double scale_dev_mm = 0.0;     // mean per-axis |ds|
        double angle_dev_deg = 0.0;    // mean per-axis wrapped |da|
    };

    std::vector<PerGt> per_gt;
    int n_gt = 0;
    int n_pred = 0;
    int n_identified = 0;
    double id_rate = 0.0;
    // Means over identified anatomies only; 0 when none identified.
    double p_mean_mm = 0.0;
    double s_mean_mm = 0.0;
    double a_mean_deg = 0.0;
};

// Smallest wrapped per-axis angular difference, in degrees.
double angle_deviation(double a_deg, double b_deg);

// VerSe-style identification: the prediction carrying the GT's label must
// be the closest prediction to that GT by center L2 distance, and satisfy
// all three strict threshold conditions.
DetectionReport identify(const std::vector<Pose9DoF>& preds, const std::vector<Pose9DoF>& gts,
                         const IdThresholds& thresholds = {});

// 2|A and B| / (|A| + |B|); 1 when both masks are empty.
double dice(const std::vector<char>& a, const std::vector<char>& b);

struct SurfaceMetrics {
    double hd95_mm = 0.0;
    double hd_mm = 0.0;  // full Hausdorff, for protocols that use it
    double assd_mm = 0.0;
};

// Border voxels are foreground voxels with a 6-neighbor background or
// volume-edge face. Distances are Euclidean between border voxel centers
// scaled by spacing. Returns nullopt when either mask is empty (HD/ASSD
// undefined for missing anatomies).
std::optional<SurfaceMetrics> surface_metrics(const std::vector<char>& a,
                                              const std::vector<char>& b,
                                              const std::array<int, 3>& dims, const Vec3& spacing);

struct SegReport {
    struct PerInstance {
        int label = 0;
        double dsc = 0.0;
        std::optional<double> hd95_mm;
        std::optional<double> hd_mm;
        std::optional<double> assd_mm;
        std::size_t gt_voxels = 0;
        std::size_t pred_voxels = 0;
    };

    std::vector<PerInstance> per_instance;
    std::vector<int> missing_labels;  // GT labels with no predicted voxels
    double dsc_mean = 0.0;            // over all GT labels, missing included
    // Surface means skip undefined (missing) instances.
    double hd95_mean_mm = 0.0;
    double hd_mean_mm = 0.0;
    double assd_mean_mm = 0.0;
};

// Per-instance DSC/HD95/ASSD between two label volumes on the same grid;
// rows cover the union of labels, missing anatomies are excluded from the
// surface-distance averages. `jobs` bounds worker threads.
SegReport evaluate_segmentation(const LabelVolume& gt, const LabelVolume& pred, int jobs = 1);

}  // namespace anat9
