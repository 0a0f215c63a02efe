#pragma once

#include <set>
#include <vector>

#include "anat9/geometry.hpp"

namespace anat9 {

// Cost coefficients shared by the matching cost and the set loss; lambda_m
// weights the index-cost matrix and acts at the matching stage only.
struct CostCoeffs {
    double lambda_c = 1.0;
    double lambda_p = 10.0;
    double lambda_s = 10.0;
    double lambda_a = 10.0;
    double lambda_m = 4.0;

    void validate() const {
        require(lambda_c >= 0 && lambda_p >= 0 && lambda_s >= 0 && lambda_a >= 0 && lambda_m >= 0,
                "cost coefficients must be non-negative");
    }
};

// (Q+1) x (Q+1) index-cost matrix M[q,c] = |q - c| / Q. Row 0 / column 0
// belong to the background channel and are unused by matching.
class IndexCostMatrix {
public:
    explicit IndexCostMatrix(int query_count);

    int query_count() const { return q_; }
    double operator()(int query, int cls) const {
        return entries_[static_cast<std::size_t>(query) * (q_ + 1) + cls];
    }
    std::string to_csv() const;

private:
    int q_ = 0;
    std::vector<double> entries_;
};

inline IndexCostMatrix build_index_cost(int query_count) { return IndexCostMatrix(query_count); }

// One query's decoded output: class probabilities (channel 0 = background)
// and the normalized 9-vector target.
struct Prediction {
    int query_index = 0;  // in [1..Q]
    std::vector<double> class_probs;
    NormalizedTarget target;

    void validate() const;
};

struct GroundTruth {
    int label = 0;  // in [1..C]
    NormalizedTarget target;
};

// Injective map GT index -> matched prediction; query indices are the
// predictions' own query ids.
struct MatchAssignment {
    std::vector<int> gt_to_pred;   // index into the prediction list
    std::vector<int> gt_to_query;  // Prediction::query_index of the match
    double total_cost = 0.0;
};

// Matching cost of one (prediction, ground truth) pair:
//   -lambda_c * p(c) + lambda_p |dp|_1 + lambda_s |ds|_1 + lambda_a |da|_1
//   + lambda_m * M[query, c]
double pair_cost(const Prediction& pred, const GroundTruth& gt, const CostCoeffs& coeffs,
                 const IndexCostMatrix& m);

// Minimum-cost injective assignment of rows to columns, rows <= columns.
// Shortest augmenting path (Jonker-Volgenant style), deterministic
// lowest-index tie-breaking. cost is row-major n_rows x n_cols.
struct AssignmentResult {
    std::vector<int> row_to_col;
    double total_cost = 0.0;
};
AssignmentResult hungarian(const std::vector<double>& cost, int n_rows, int n_cols);

MatchAssignment match(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                      const CostCoeffs& coeffs, const IndexCostMatrix& m);

// Selects exactly the predictions whose query index is in `requested`;
// output sorted by query index. Throws on an unknown label.
std::vector<Prediction> steer(const std::vector<Prediction>& preds,
                              const std::set<int>& requested_labels);

}  // namespace anat9
