#include "anat9/loss.hpp"

#include <algorithm>
#include <cmath>

namespace anat9 {

namespace {

constexpr double kProbFloor = 1e-12;

double safe_neg_log(double p, bool& clamped) {
    if (p < kProbFloor) {
        clamped = true;
        p = kProbFloor;
    }
    double v = -std::log(p);
    return v == 0.0 ? 0.0 : v;  // avoid -0.0 in reports
}

double l1_sign(double x) {
    if (x > kL1KinkBand) return 1.0;
    if (x < -kL1KinkBand) return -1.0;
    return 0.0;
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - m);
        sum += out[k];
    }
    for (double& p : out) p /= sum;
    return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Prediction decode_query(const QueryParams& params) {
    require(params.logits.size() >= 2, "query needs a background channel plus classes");
    Prediction p;
    p.query_index = params.query_index;
    p.class_probs = softmax(params.logits);
    std::array<double, 9> t;
    for (int k = 0; k < 9; ++k) t[static_cast<std::size_t>(k)] = sigmoid(params.box[static_cast<std::size_t>(k)]);
    p.target = NormalizedTarget::from_array(t);
    return p;
}

LossBreakdown set_loss(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                       const MatchAssignment& assignment, const CostCoeffs& coeffs,
                       const LossOptions& options) {
    coeffs.validate();
    std::size_t n = gts.size();
    require(assignment.gt_to_pred.size() == n, "assignment does not cover the ground truths");

    std::vector<char> matched(preds.size(), 0);
    LossBreakdown out;
    double norm = static_cast<double>(std::max<std::size_t>(n, 1));

    for (std::size_t i = 0; i < n; ++i) {
        int pi = assignment.gt_to_pred[i];
        require(pi >= 0 && pi < static_cast<int>(preds.size()), "assignment index out of range");
        require(!matched[static_cast<std::size_t>(pi)], "assignment is not injective");
        matched[static_cast<std::size_t>(pi)] = 1;
        const Prediction& pred = preds[static_cast<std::size_t>(pi)];
        const GroundTruth& gt = gts[i];
        require(gt.label >= 1 && gt.label < static_cast<int>(pred.class_probs.size()),
                "ground-truth label outside the class range");

        LossBreakdown::PerGt term;
        term.gt_index = static_cast<int>(i);
        term.gt_label = gt.label;
        term.query_index = pred.query_index;
        term.classification =
            safe_neg_log(pred.class_probs[static_cast<std::size_t>(gt.label)], out.clamped);
        auto p = pred.target.as_array();
        auto g = gt.target.as_array();
        for (int k = 0; k < 3; ++k) {
            term.position += std::abs(p[k] - g[k]);
            term.scale += std::abs(p[k + 3] - g[k + 3]);
            term.angle += std::abs(p[k + 6] - g[k + 6]);
        }
        out.per_gt.push_back(term);

        out.classification += term.classification / norm;
        out.position += term.position / norm;
        out.scale += term.scale / norm;
        out.angle += term.angle / norm;
    }

    double bg_norm = (options.background_norm == BackgroundNorm::per_gt)
                         ? norm
                         : static_cast<double>(std::max<std::size_t>(preds.size(), 1));
    for (std::size_t j = 0; j < preds.size(); ++j) {
        if (matched[j]) continue;
        out.classification += safe_neg_log(preds[j].class_probs[0], out.clamped) / bg_norm;
    }

    out.total = coeffs.lambda_c * out.classification + coeffs.lambda_p * out.position +
                coeffs.lambda_s * out.scale + coeffs.lambda_a * out.angle;
    return out;
}

std::vector<QueryGradients> loss_gradients(const std::vector<QueryParams>& params,
                                           const std::vector<GroundTruth>& gts,
                                           const MatchAssignment& assignment,
                                           const CostCoeffs& coeffs, const LossOptions& options) {
    coeffs.validate();
    std::size_t n = gts.size();
    require(assignment.gt_to_pred.size() == n, "assignment does not cover the ground truths");

    std::vector<QueryGradients> grads(params.size());
    for (std::size_t j = 0; j < params.size(); ++j)
        grads[j].logits.assign(params[j].logits.size(), 0.0);

    double norm = static_cast<double>(std::max<std::size_t>(n, 1));
    double bg_norm = (options.background_norm == BackgroundNorm::per_gt)
                         ? norm
                         : static_cast<double>(std::max<std::size_t>(params.size(), 1));

    std::vector<int> matched_gt(params.size(), -1);
    for (std::size_t i = 0; i < n; ++i) {
        int pi = assignment.gt_to_pred[i];
        require(pi >= 0 && pi < static_cast<int>(params.size()), "assignment index out of range");
        require(matched_gt[static_cast<std::size_t>(pi)] < 0, "assignment is not injective");
        matched_gt[static_cast<std::size_t>(pi)] = static_cast<int>(i);
    }

    for (std::size_t j = 0; j < params.size(); ++j) {
        const QueryParams& q = params[j];
        std::vector<double> probs = softmax(q.logits);
        int target_class = (matched_gt[j] >= 0) ? gts[static_cast<std::size_t>(matched_gt[j])].label : 0;
        require(target_class < static_cast<int>(q.logits.size()), "label outside the class range");
        double weight = coeffs.lambda_c / (matched_gt[j] >= 0 ? norm : bg_norm);
        // d/dz_k of -log softmax(z)_c = p_k - [k == c]
        for (std::size_t k = 0; k < probs.size(); ++k)
            grads[j].logits[k] = weight * (probs[k] - (static_cast<int>(k) == target_class ? 1.0 : 0.0));

        if (matched_gt[j] < 0) continue;
        auto g = gts[static_cast<std::size_t>(matched_gt[j])].target.as_array();
        const double lambdas[3] = {coeffs.lambda_p, coeffs.lambda_s, coeffs.lambda_a};
        for (int k = 0; k < 9; ++k) {
            double t = sigmoid(q.box[static_cast<std::size_t>(k)]);
            double dsig = t * (1.0 - t);
            grads[j].box[static_cast<std::size_t>(k)] =
                (lambdas[k / 3] / norm) * l1_sign(t - g[static_cast<std::size_t>(k)]) * dsig;
        }
    }
    return grads;
}

}  // namespace anat9
