#include "anat9/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace anat9 {

IndexCostMatrix::IndexCostMatrix(int query_count) : q_(query_count) {
    require(q_ >= 1, "query count must be >= 1");
    entries_.resize(static_cast<std::size_t>(q_ + 1) * (q_ + 1));
    for (int q = 0; q <= q_; ++q)
        for (int c = 0; c <= q_; ++c)
            entries_[static_cast<std::size_t>(q) * (q_ + 1) + c] =
                static_cast<double>(std::abs(q - c)) / q_;
}

std::string IndexCostMatrix::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    for (int q = 0; q <= q_; ++q) {
        for (int c = 0; c <= q_; ++c) {
            if (c) out << ',';
            out << (*this)(q, c);
        }
        out << '\n';
    }
    return out.str();
}

void Prediction::validate() const {
    require(query_index >= 1, "query index must be >= 1");
    require(class_probs.size() >= 2, "class probabilities need a background channel");
    double sum = 0.0;
    for (double p : class_probs) {
        require(p >= 0.0 && std::isfinite(p), "class probabilities must be non-negative");
        sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "class probabilities must sum to 1");
}

double pair_cost(const Prediction& pred, const GroundTruth& gt, const CostCoeffs& coeffs,
                 const IndexCostMatrix& m) {
    coeffs.validate();
    require(gt.label >= 1 && gt.label < static_cast<int>(pred.class_probs.size()),
            "ground-truth label outside the class range");
    require(pred.query_index <= m.query_count() && gt.label <= m.query_count(),
            "index cost matrix too small for query/label");

    auto p = pred.target.as_array();
    auto g = gt.target.as_array();
    double dp = 0.0, ds = 0.0, da = 0.0;
    for (int k = 0; k < 3; ++k) {
        dp += std::abs(p[k] - g[k]);
        ds += std::abs(p[k + 3] - g[k + 3]);
        da += std::abs(p[k + 6] - g[k + 6]);
    }
    return -coeffs.lambda_c * pred.class_probs[static_cast<std::size_t>(gt.label)] +
           coeffs.lambda_p * dp + coeffs.lambda_s * ds + coeffs.lambda_a * da +
           coeffs.lambda_m * m(pred.query_index, gt.label);
}

AssignmentResult hungarian(const std::vector<double>& cost, int n_rows, int n_cols) {
    require(n_rows >= 0 && n_cols >= 1, "invalid cost matrix shape");
    require(n_rows <= n_cols, "more rows than columns: assignment infeasible");
    require(cost.size() == static_cast<std::size_t>(n_rows) * n_cols, "cost matrix size mismatch");
    for (double v : cost) require(std::isfinite(v), "cost entries must be finite");

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based shortest-augmenting-path formulation; column 0 is virtual.
    std::vector<double> u(static_cast<std::size_t>(n_rows) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n_cols) + 1, 0.0);
    std::vector<int> col_to_row(static_cast<std::size_t>(n_cols) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n_cols) + 1, 0);

    for (int i = 1; i <= n_rows; ++i) {
        col_to_row[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n_cols) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n_cols) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            int i0 = col_to_row[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n_cols; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost[static_cast<std::size_t>(i0 - 1) * n_cols + (j - 1)] -
                             u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n_cols; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(col_to_row[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (col_to_row[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            col_to_row[static_cast<std::size_t>(j0)] = col_to_row[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    AssignmentResult result;
    result.row_to_col.assign(static_cast<std::size_t>(n_rows), -1);
    for (int j = 1; j <= n_cols; ++j) {
        int i = col_to_row[static_cast<std::size_t>(j)];
        if (i > 0) result.row_to_col[static_cast<std::size_t>(i - 1)] = j - 1;
    }
    for (int i = 0; i < n_rows; ++i) {
        require(result.row_to_col[static_cast<std::size_t>(i)] >= 0, "assignment incomplete");
        result.total_cost +=
            cost[static_cast<std::size_t>(i) * n_cols + result.row_to_col[static_cast<std::size_t>(i)]];
    }
    return result;
}

MatchAssignment match(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                      const CostCoeffs& coeffs, const IndexCostMatrix& m) {
    require(gts.size() <= preds.size(), "more ground truths than predictions");
    for (const Prediction& p : preds) p.validate();

    int n = static_cast<int>(gts.size());
    int q = static_cast<int>(preds.size());
    std::vector<double> cost(static_cast<std::size_t>(n) * q);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j)
            cost[static_cast<std::size_t>(i) * q + j] =
                pair_cost(preds[static_cast<std::size_t>(j)], gts[static_cast<std::size_t>(i)],
                          coeffs, m);

    AssignmentResult solved = hungarian(cost, n, q);
    MatchAssignment out;
    out.gt_to_pred = solved.row_to_col;
    out.total_cost = solved.total_cost;
    out.gt_to_query.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.gt_to_query[static_cast<std::size_t>(i)] =
            preds[static_cast<std::size_t>(out.gt_to_pred[static_cast<std::size_t>(i)])].query_index;
    return out;
}

std::vector<Prediction> steer(const std::vector<Prediction>& preds,
                              const std::set<int>& requested_labels) {
    std::vector<Prediction> out;
    out.reserve(requested_labels.size());
    for (int label : requested_labels) {
        const Prediction* found = nullptr;
        int max_class = 0;
        for (const Prediction& p : preds) {
            max_class = std::max(max_class, static_cast<int>(p.class_probs.size()) - 1);
            if (p.query_index == label) {
                found = &p;
                break;
            }
        }
        require(label >= 1, "requested label must be >= 1");
        require(found != nullptr, "unknown label " + std::to_string(label) +
                                      " (no query with that index; classes run 1.." +
                                      std::to_string(max_class) + ")");
        out.push_back(*found);
    }
    return out;
}

}  // namespace anat9
