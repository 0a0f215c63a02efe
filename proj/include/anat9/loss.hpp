#pragma once

#include <array>
#include <vector>

#include "anat9/matching.hpp"

namespace anat9 {

// How background classification terms are normalized; the matched terms are
// always averaged over N.
enum class BackgroundNorm { per_gt, per_query };

struct LossOptions {
    BackgroundNorm background_norm = BackgroundNorm::per_gt;
};

// Loss parts are stored unweighted; total applies the coefficients.
struct LossBreakdown {
    double total = 0.0;
    double classification = 0.0;  // includes background terms
    double position = 0.0;
    double scale = 0.0;
    double angle = 0.0;
    bool clamped = false;  // a probability hit the 1e-12 floor before log

    struct PerGt {
        int gt_index = 0;
        int gt_label = 0;
        int query_index = 0;
        double classification = 0.0;
        double position = 0.0;
        double scale = 0.0;
        double angle = 0.0;
    };
    std::vector<PerGt> per_gt;
};

// Set-prediction loss under a fixed assignment:
//   (1/N) sum_matched [ lc (-log p(c)) + lp |dp|1 + ls |ds|1 + la |da|1 ]
// + (1/N) sum_background lc (-log p(0))
// lambda_m never enters.
LossBreakdown set_loss(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                       const MatchAssignment& assignment, const CostCoeffs& coeffs,
                       const LossOptions& options = {});

// Raw learnable parameters of one query: class logits (length C+1) and the
// 9 box pre-activations squashed by a logistic into [0,1].
struct QueryParams {
    int query_index = 0;
    std::vector<double> logits;
    std::array<double, 9> box = {};
};

struct QueryGradients {
    std::vector<double> logits;
    std::array<double, 9> box = {};
};

std::vector<double> softmax(const std::vector<double>& logits);
double sigmoid(double x);

Prediction decode_query(const QueryParams& params);

// Analytic gradients of set_loss w.r.t. logits and box pre-activations; the
// assignment is held constant. The L1 subgradient is 0 inside a +-1e-3 band
// around each kink.
std::vector<QueryGradients> loss_gradients(const std::vector<QueryParams>& params,
                                           const std::vector<GroundTruth>& gts,
                                           const MatchAssignment& assignment,
                                           const CostCoeffs& coeffs,
                                           const LossOptions& options = {});

// Width of the flat zone of the L1 subgradient around each kink.
inline constexpr double kL1KinkBand = 1e-3;

}  // namespace anat9
