#include "anat9/toydetect.hpp"

#include <algorithm>
#include <cmath>

#include "anat9/rng.hpp"

namespace anat9 {

bool QueryBank::identity_bound() const {
    if (final_binding.size() != queries.size()) return false;
    for (std::size_t q = 0; q < final_binding.size(); ++q)
        if (final_binding[q] != static_cast<int>(q) + 1) return false;
    return true;
}

void TrainConfig::validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(learning_rate > 0, "learning rate must be positive");
    require(init_sigma >= 0, "init sigma must be >= 0");
    require(!dataset.empty(), "training dataset is empty");
    coeffs.validate();
    std::size_t c = dataset.front().gt_poses.size();
    for (const Scene& s : dataset)
        require(s.gt_poses.size() == c, "all scenes must share the same instance count");
}

namespace {

std::vector<Prediction> decode_bank(const QueryBank& bank) {
    std::vector<Prediction> preds;
    preds.reserve(bank.queries.size());
    for (const QueryParams& q : bank.queries) preds.push_back(decode_query(q));
    return preds;
}

std::vector<int> binding_from_assignment(const MatchAssignment& assignment,
                                         const std::vector<GroundTruth>& gts, int query_count) {
    std::vector<int> binding(static_cast<std::size_t>(query_count), 0);
    for (std::size_t i = 0; i < gts.size(); ++i) {
        int q = assignment.gt_to_query[i];
        binding[static_cast<std::size_t>(q - 1)] = gts[i].label;
    }
    return binding;
}

}  // namespace

TrainResult train_toy(const TrainConfig& config) {
    config.validate();
    int class_count = static_cast<int>(config.dataset.front().gt_poses.size());

    TrainResult result;
    result.bank.class_count = class_count;
    DetRng rng(config.seed, 0, RngOp::toy_init);
    for (int q = 1; q <= class_count; ++q) {
        QueryParams params;
        params.query_index = q;
        params.logits.resize(static_cast<std::size_t>(class_count) + 1);
        for (double& z : params.logits) z = rng.normal(0.0, config.init_sigma);
        for (double& b : params.box) b = rng.normal(0.0, config.init_sigma);
        result.bank.queries.push_back(params);
    }

    std::vector<std::vector<GroundTruth>> gts;
    gts.reserve(config.dataset.size());
    for (const Scene& scene : config.dataset) gts.push_back(scene_ground_truths(scene));

    IndexCostMatrix m = build_index_cost(class_count);
    double scene_norm = static_cast<double>(config.dataset.size());

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<Prediction> preds = decode_bank(result.bank);

        EpochRecord record;
        record.epoch = epoch;
        std::vector<QueryGradients> accum(result.bank.queries.size());
        for (std::size_t j = 0; j < accum.size(); ++j)
            accum[j].logits.assign(result.bank.queries[j].logits.size(), 0.0);

        for (std::size_t s = 0; s < gts.size(); ++s) {
            MatchAssignment assignment = match(preds, gts[s], config.coeffs, m);
            LossBreakdown loss =
                set_loss(preds, gts[s], assignment, config.coeffs, config.loss_options);
            record.total += loss.total / scene_norm;
            record.classification += loss.classification / scene_norm;
            record.position += loss.position / scene_norm;
            record.scale += loss.scale / scene_norm;
            record.angle += loss.angle / scene_norm;
            if (s == 0) record.binding = binding_from_assignment(assignment, gts[s], class_count);

            std::vector<QueryGradients> g = loss_gradients(result.bank.queries, gts[s], assignment,
                                                           config.coeffs, config.loss_options);
            for (std::size_t j = 0; j < g.size(); ++j) {
                for (std::size_t k = 0; k < g[j].logits.size(); ++k)
                    accum[j].logits[k] += g[j].logits[k] / scene_norm;
                for (std::size_t k = 0; k < 9; ++k) accum[j].box[k] += g[j].box[k] / scene_norm;
            }
        }

        result.log.epochs.push_back(record);
        if (!std::isfinite(record.total)) {
            result.log.diverged = true;
            return result;
        }

        for (std::size_t j = 0; j < result.bank.queries.size(); ++j) {
            for (std::size_t k = 0; k < accum[j].logits.size(); ++k)
                result.bank.queries[j].logits[k] -= config.learning_rate * accum[j].logits[k];
            for (std::size_t k = 0; k < 9; ++k)
                result.bank.queries[j].box[k] -= config.learning_rate * accum[j].box[k];
        }
    }

    result.bank.final_binding = result.log.epochs.back().binding;
    return result;
}

std::vector<int> binding_permutation(const QueryBank& bank, const Scene& scene,
                                     const CostCoeffs& coeffs) {
    require(!bank.queries.empty(), "empty query bank");
    std::vector<Prediction> preds = decode_bank(bank);
    std::vector<GroundTruth> gts = scene_ground_truths(scene);
    IndexCostMatrix m = build_index_cost(bank.class_count);
    MatchAssignment assignment = match(preds, gts, coeffs, m);
    return binding_from_assignment(assignment, gts, bank.class_count);
}

SteerResult steerable_infer(const QueryBank& bank, const std::set<int>& requested_labels,
                            const VolumeMeta& meta) {
    require(bank.identity_bound(),
            "steerability not established: the bank's final binding is not the identity");
    SteerResult out;
    for (int label : requested_labels) {
        require(label >= 1 && label <= bank.class_count,
                "unknown label " + std::to_string(label) + " (classes run 1.." +
                    std::to_string(bank.class_count) + ")");
        const QueryParams& params = bank.queries[static_cast<std::size_t>(label - 1)];
        require(params.query_index == label, "query bank order is corrupt");
        Prediction pred = decode_query(params);
        ++out.decoded_queries;
        out.boxes.push_back(denormalize_target(pred.target, meta, label));
    }
    return out;
}

}  // namespace anat9
