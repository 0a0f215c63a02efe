#pragma once

#include <set>
#include <vector>

#include "anat9/loss.hpp"
#include "anat9/synth.hpp"

namespace anat9 {

// Learnable per-query parameters of the toy detector. There is no input
// feature path: each query is a constant, which is the smallest model in
// which bipartite binding between queries and labels is observable.
struct QueryBank {
    int class_count = 0;  // C; queries are 1..C, channel 0 is background
    std::vector<QueryParams> queries;
    // Binding permutation recorded at the end of training, queries 1..C ->
    // bound label (0 = unbound). Identity here certifies steerability.
    std::vector<int> final_binding;

    bool identity_bound() const;
};

struct TrainConfig {
    int epochs = 2000;
    double learning_rate = 0.05;
    CostCoeffs coeffs;
    LossOptions loss_options;
    std::vector<Scene> dataset;
    std::uint64_t seed = 0;
    double init_sigma = 0.005;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double total = 0.0;
    double classification = 0.0;
    double position = 0.0;
    double scale = 0.0;
    double angle = 0.0;
    std::vector<int> binding;  // query index q (1..C) -> matched label
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    bool diverged = false;
};

struct TrainResult {
    QueryBank bank;
    TrainLog log;
};

// Full-batch gradient descent on set_loss with per-epoch Hungarian
// re-matching; deterministic for a given config. Divergence (non-finite
// loss) aborts and flags the log.
TrainResult train_toy(const TrainConfig& config);

// Optimal assignment of the scene's labels to the bank's queries, reported
// as query index -> label (0 where a query went unmatched).
std::vector<int> binding_permutation(const QueryBank& bank, const Scene& scene,
                                     const CostCoeffs& coeffs);

struct SteerResult {
    std::vector<Pose9DoF> boxes;
    int decoded_queries = 0;  // work counter: queries actually decoded
};

// Decodes only the requested queries into world-space boxes. Refuses banks
// whose recorded binding is not the identity, since label semantics are
// then not established.
SteerResult steerable_infer(const QueryBank& bank, const std::set<int>& requested_labels,
                            const VolumeMeta& meta);

}  // namespace anat9
