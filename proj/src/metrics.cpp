#include "anat9/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace anat9 {

double angle_deviation(double a_deg, double b_deg) {
    double d = std::abs(std::fmod(a_deg - b_deg, 360.0));
    return std::min(d, 360.0 - d);
}

DetectionReport identify(const std::vector<Pose9DoF>& preds, const std::vector<Pose9DoF>& gts,
                         const IdThresholds& thresholds) {
    thresholds.validate();
    require(!gts.empty(), "empty ground-truth set");

    DetectionReport report;
    report.n_gt = static_cast<int>(gts.size());
    report.n_pred = static_cast<int>(preds.size());

    for (const Pose9DoF& gt : gts) {
        DetectionReport::PerGt row;
        row.label = gt.label;

        // The prediction carrying this label; closest one if duplicated.
        const Pose9DoF* labeled = nullptr;
        double labeled_dist = std::numeric_limits<double>::infinity();
        double closest_dist = std::numeric_limits<double>::infinity();
        for (const Pose9DoF& p : preds) {
            double d = (p.center - gt.center).norm();
            closest_dist = std::min(closest_dist, d);
            if (p.label == gt.label && d < labeled_dist) {
                labeled = &p;
                labeled_dist = d;
            }
        }

        if (labeled != nullptr) {
            row.has_prediction = true;
            row.position_dev_mm = labeled_dist;
            double ds = 0.0, da = 0.0;
            for (int k = 0; k < 3; ++k) {
                ds += std::abs(labeled->scale[k] - gt.scale[k]);
                da += angle_deviation(labeled->angles[k], gt.angles[k]);
            }
            row.scale_dev_mm = ds / 3.0;
            row.angle_dev_deg = da / 3.0;
            row.identified = labeled_dist <= closest_dist &&
                             row.position_dev_mm < thresholds.position_mm &&
                             row.scale_dev_mm < thresholds.scale_mm &&
                             row.angle_dev_deg < thresholds.angle_deg;
        }
        report.per_gt.push_back(row);
    }

    double p_sum = 0.0, s_sum = 0.0, a_sum = 0.0;
    for (const auto& row : report.per_gt) {
        if (!row.identified) continue;
        ++report.n_identified;
        p_sum += row.position_dev_mm;
        s_sum += row.scale_dev_mm;
        a_sum += row.angle_dev_deg;
    }
    report.id_rate = static_cast<double>(report.n_identified) / report.n_gt;
    if (report.n_identified > 0) {
        report.p_mean_mm = p_sum / report.n_identified;
        report.s_mean_mm = s_sum / report.n_identified;
        report.a_mean_deg = a_sum / report.n_identified;
    }
    return report;
}

double dice(const std::vector<char>& a, const std::vector<char>& b) {
    require(a.size() == b.size(), "mask grid mismatch");
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        bool fa = a[i] != 0, fb = b[i] != 0;
        na += fa;
        nb += fb;
        ni += fa && fb;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

namespace {

std::size_t flat(int i, int j, int k, const std::array<int, 3>& d) {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(d[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(d[1]) * static_cast<std::size_t>(k));
}

// Border under 6-connectivity; the volume edge counts as background.
std::vector<std::array<int, 3>> border_voxels(const std::vector<char>& mask,
                                              const std::array<int, 3>& d) {
    std::vector<std::array<int, 3>> out;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                if (!mask[flat(i, j, k, d)]) continue;
                bool border = i == 0 || j == 0 || k == 0 || i == d[0] - 1 || j == d[1] - 1 ||
                              k == d[2] - 1;
                if (!border) {
                    border = !mask[flat(i - 1, j, k, d)] || !mask[flat(i + 1, j, k, d)] ||
                             !mask[flat(i, j - 1, k, d)] || !mask[flat(i, j + 1, k, d)] ||
                             !mask[flat(i, j, k - 1, d)] || !mask[flat(i, j, k + 1, d)];
                }
                if (border) out.push_back({i, j, k});
            }
    return out;
}

// One pass of the Felzenszwalb-Huttenlocher lower envelope over a line of
// squared distances sampled at positions x_i = i * step.
void edt_1d(std::vector<double>& f, double step, std::vector<double>& scratch_d,
            std::vector<int>& scratch_v, std::vector<double>& scratch_z) {
    int n = static_cast<int>(f.size());
    std::vector<double>& d = scratch_d;
    std::vector<int>& v = scratch_v;
    std::vector<double>& z = scratch_z;
    d.assign(static_cast<std::size_t>(n), 0.0);
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, 0.0);

    const double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    auto x = [step](int i) { return i * step; };
    for (int q = 1; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == inf) continue;
        while (true) {
            int p = v[static_cast<std::size_t>(k)];
            if (f[static_cast<std::size_t>(p)] == inf) {
                // Only possible before any finite parabola was kept.
                v[static_cast<std::size_t>(k)] = q;
                break;
            }
            double s = ((f[static_cast<std::size_t>(q)] + x(q) * x(q)) -
                        (f[static_cast<std::size_t>(p)] + x(p) * x(p))) /
                       (2.0 * x(q) - 2.0 * x(p));
            if (s <= z[static_cast<std::size_t>(k)]) {
                --k;
                continue;
            }
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = s;
            z[static_cast<std::size_t>(k) + 1] = inf;
            break;
        }
    }
    // Handle the case where f[0] itself was infinite and never replaced.
    if (f[static_cast<std::size_t>(v[0])] == inf) {
        f.assign(static_cast<std::size_t>(n), inf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < x(q)) ++k;
        int p = v[static_cast<std::size_t>(k)];
        d[static_cast<std::size_t>(q)] =
            (x(q) - x(p)) * (x(q) - x(p)) + f[static_cast<std::size_t>(p)];
    }
    f = d;
}

// Exact Euclidean distance (mm) from every voxel center to the nearest
// site voxel center, via the separable squared-distance transform.
std::vector<double> distance_field(const std::vector<std::array<int, 3>>& sites,
                                   const std::array<int, 3>& dims, const Vec3& spacing) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> f(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], inf);
    for (const auto& s : sites) f[flat(s[0], s[1], s[2], dims)] = 0.0;

    int nmax = std::max({dims[0], dims[1], dims[2]});
    std::vector<double> line(static_cast<std::size_t>(nmax));
    std::vector<double> sd, sz;
    std::vector<int> sv;

    // x lines
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j) {
            line.assign(static_cast<std::size_t>(dims[0]), inf);
            for (int i = 0; i < dims[0]; ++i) line[static_cast<std::size_t>(i)] = f[flat(i, j, k, dims)];
            edt_1d(line, spacing[0], sd, sv, sz);
            for (int i = 0; i < dims[0]; ++i) f[flat(i, j, k, dims)] = line[static_cast<std::size_t>(i)];
        }
    // y lines
    for (int k = 0; k < dims[2]; ++k)
        for (int i = 0; i < dims[0]; ++i) {
            line.assign(static_cast<std::size_t>(dims[1]), inf);
            for (int j = 0; j < dims[1]; ++j) line[static_cast<std::size_t>(j)] = f[flat(i, j, k, dims)];
            edt_1d(line, spacing[1], sd, sv, sz);
            for (int j = 0; j < dims[1]; ++j) f[flat(i, j, k, dims)] = line[static_cast<std::size_t>(j)];
        }
    // z lines
    for (int j = 0; j < dims[1]; ++j)
        for (int i = 0; i < dims[0]; ++i) {
            line.assign(static_cast<std::size_t>(dims[2]), inf);
            for (int k = 0; k < dims[2]; ++k) line[static_cast<std::size_t>(k)] = f[flat(i, j, k, dims)];
            edt_1d(line, spacing[2], sd, sv, sz);
            for (int k = 0; k < dims[2]; ++k) f[flat(i, j, k, dims)] = line[static_cast<std::size_t>(k)];
        }

    for (double& v : f) v = std::sqrt(v);
    return f;
}

// Linear-interpolation percentile between order statistics, q in [0,100].
double percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(rank);
    double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace

std::optional<SurfaceMetrics> surface_metrics(const std::vector<char>& a,
                                              const std::vector<char>& b,
                                              const std::array<int, 3>& dims,
                                              const Vec3& spacing) {
    std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    require(a.size() == count && b.size() == count, "mask grid mismatch");

    auto ba = border_voxels(a, dims);
    auto bb = border_voxels(b, dims);
    if (ba.empty() || bb.empty()) return std::nullopt;

    std::vector<double> dist_to_b = distance_field(bb, dims, spacing);
    std::vector<double> dist_to_a = distance_field(ba, dims, spacing);

    std::vector<double> d_ab, d_ba;
    d_ab.reserve(ba.size());
    d_ba.reserve(bb.size());
    for (const auto& v : ba) d_ab.push_back(dist_to_b[flat(v[0], v[1], v[2], dims)]);
    for (const auto& v : bb) d_ba.push_back(dist_to_a[flat(v[0], v[1], v[2], dims)]);

    SurfaceMetrics out;
    out.hd95_mm = std::max(percentile(d_ab, 95.0), percentile(d_ba, 95.0));
    out.hd_mm = std::max(*std::max_element(d_ab.begin(), d_ab.end()),
                         *std::max_element(d_ba.begin(), d_ba.end()));
    double sum = 0.0;
    for (double d : d_ab) sum += d;
    for (double d : d_ba) sum += d;
    out.assd_mm = sum / static_cast<double>(d_ab.size() + d_ba.size());
    return out;
}

SegReport evaluate_segmentation(const LabelVolume& gt, const LabelVolume& pred, int jobs) {
    gt.validate();
    pred.validate();
    require(gt.meta.same_grid(pred.meta, 1e-6), "mask grid mismatch");
    require(jobs >= 1, "jobs must be >= 1");

    std::vector<std::uint16_t> labels = gt.labels_present();
    {
        auto pl = pred.labels_present();
        for (std::uint16_t l : pl)
            if (!std::binary_search(labels.begin(), labels.end(), l)) labels.push_back(l);
        std::sort(labels.begin(), labels.end());
    }

    SegReport report;
    report.per_instance.resize(labels.size());

    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<char> ma(gt.voxels.size()), mb(gt.voxels.size());
        for (std::size_t li = begin; li < end; ++li) {
            std::uint16_t label = labels[li];
            std::size_t na = 0, nb = 0;
            for (std::size_t i = 0; i < gt.voxels.size(); ++i) {
                ma[i] = gt.voxels[i] == label;
                mb[i] = pred.voxels[i] == label;
                na += ma[i];
                nb += mb[i];
            }
            SegReport::PerInstance row;
            row.label = label;
            row.gt_voxels = na;
            row.pred_voxels = nb;
            row.dsc = dice(ma, mb);
            if (auto sm = surface_metrics(ma, mb, gt.meta.dims, gt.meta.spacing)) {
                row.hd95_mm = sm->hd95_mm;
                row.hd_mm = sm->hd_mm;
                row.assd_mm = sm->assd_mm;
            }
            report.per_instance[li] = row;
        }
    };

    if (jobs == 1 || labels.size() <= 1) {
        work(0, labels.size());
    } else {
        std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), labels.size());
        std::vector<std::thread> threads;
        std::size_t chunk = (labels.size() + n_workers - 1) / n_workers;
        for (std::size_t w = 0; w < n_workers; ++w) {
            std::size_t begin = w * chunk;
            std::size_t end = std::min(labels.size(), begin + chunk);
            if (begin < end) threads.emplace_back(work, begin, end);
        }
        for (auto& t : threads) t.join();
    }

    double dsc_sum = 0.0, hd95_sum = 0.0, hd_sum = 0.0, assd_sum = 0.0;
    std::size_t n_gt_rows = 0, n_defined = 0;
    for (const auto& row : report.per_instance) {
        if (row.gt_voxels > 0) {
            dsc_sum += row.dsc;
            ++n_gt_rows;
            if (row.pred_voxels == 0) report.missing_labels.push_back(row.label);
        }
        if (row.hd95_mm) {
            hd95_sum += *row.hd95_mm;
            hd_sum += *row.hd_mm;
            assd_sum += *row.assd_mm;
            ++n_defined;
        }
    }
    if (n_gt_rows > 0) report.dsc_mean = dsc_sum / static_cast<double>(n_gt_rows);
    if (n_defined > 0) {
        report.hd95_mean_mm = hd95_sum / static_cast<double>(n_defined);
        report.hd_mean_mm = hd_sum / static_cast<double>(n_defined);
        report.assd_mean_mm = assd_sum / static_cast<double>(n_defined);
    }
    return report;
}

}  // namespace anat9
