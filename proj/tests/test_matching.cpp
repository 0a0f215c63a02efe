#include <algorithm>
#include <numeric>

#include <doctest.h>

#include "anat9/matching.hpp"
#include "anat9/rng.hpp"

using namespace anat9;

namespace {

// Exhaustive minimum over all injective row->column maps; the independent
// oracle for the solver.
double brute_force_min(const std::vector<double>& cost, int n_rows, int n_cols) {
    std::vector<int> cols(static_cast<std::size_t>(n_cols));
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    // Permute all columns and read the first n_rows as the assignment.
    std::sort(cols.begin(), cols.end());
    do {
        double total = 0.0;
        for (int i = 0; i < n_rows; ++i)
            total += cost[static_cast<std::size_t>(i) * n_cols + cols[static_cast<std::size_t>(i)]];
        best = std::min(best, total);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

Prediction make_pred(int query, int classes, int hot, const std::array<double, 9>& t) {
    Prediction p;
    p.query_index = query;
    p.class_probs.assign(static_cast<std::size_t>(classes) + 1, 0.0);
    p.class_probs[static_cast<std::size_t>(hot)] = 1.0;
    p.target = NormalizedTarget::from_array(t);
    return p;
}

std::array<double, 9> flat9(double v) { return {v, v, v, v, v, v, v, v, v}; }

}  // namespace

TEST_SUITE_BEGIN("matching");

TEST_CASE("index cost matrix follows |q-c|/Q") {
    IndexCostMatrix m = build_index_cost(10);
    CHECK(m(3, 3) == 0.0);
    CHECK(m(0, 9) == doctest::Approx(0.9).epsilon(1e-15));
    for (int q = 0; q <= 10; ++q) {
        CHECK(m(q, q) == 0.0);
        for (int c = 0; c <= 10; ++c) CHECK(m(q, c) == m(c, q));
    }
    // Entries non-decreasing in the index gap.
    for (int q = 0; q <= 10; ++q)
        for (int c = 1; c <= 10; ++c)
            if (std::abs(q - c) >= std::abs(q - (c - 1)))
                CHECK(m(q, c) >= m(q, c - 1));
}

TEST_CASE("pair_cost worked examples") {
    CostCoeffs defaults;
    IndexCostMatrix m = build_index_cost(24);

    std::array<double, 9> t = flat9(0.4);
    GroundTruth gt{5, NormalizedTarget::from_array(t)};

    // Perfect prediction on the right query: only the classification term.
    Prediction exact = make_pred(5, 24, 5, t);
    CHECK(pair_cost(exact, gt, defaults, m) == doctest::Approx(-1.0).epsilon(1e-15));

    // Each position component off by 0.01 adds 10 * 0.03.
    std::array<double, 9> off = t;
    off[0] += 0.01;
    off[1] += 0.01;
    off[2] += 0.01;
    Prediction shifted = make_pred(5, 24, 5, off);
    CHECK(pair_cost(shifted, gt, defaults, m) == doctest::Approx(-0.7).epsilon(1e-12));

    // Query 1 predicting label 5 pays the index gap 4/24 times lambda_m.
    Prediction wrong_slot = make_pred(1, 24, 5, t);
    CHECK(pair_cost(wrong_slot, gt, defaults, m) ==
          doctest::Approx(-1.0 + 4.0 * (4.0 / 24.0)).epsilon(1e-12));
}

TEST_CASE("hungarian on small known matrices") {
    // Diagonal zeros dominate.
    std::vector<double> diag = {0, 5, 5, 5, 0, 5, 5, 5, 0};
    AssignmentResult r = hungarian(diag, 3, 3);
    CHECK(r.row_to_col == std::vector<int>{0, 1, 2});
    CHECK(r.total_cost == 0.0);

    // Worked example: optimum is rows -> columns (0->1, 1->0, 2->2), total 5.
    std::vector<double> m = {4, 1, 3, 2, 0, 5, 3, 2, 2};
    AssignmentResult s = hungarian(m, 3, 3);
    CHECK(s.row_to_col == std::vector<int>{1, 0, 2});
    CHECK(s.total_cost == doctest::Approx(5.0));
    CHECK(s.total_cost == doctest::Approx(brute_force_min(m, 3, 3)));
}

TEST_CASE("hungarian equals the enumeration oracle on random matrices") {
    DetRng rng(2024, 0, RngOp::scene_pose);
    for (int trial = 0; trial < 300; ++trial) {
        int n = static_cast<int>(rng.uniform_int(1, 6));
        int q = static_cast<int>(rng.uniform_int(n, 7));
        std::vector<double> cost(static_cast<std::size_t>(n) * q);
        for (double& v : cost) v = rng.uniform(-5.0, 5.0);
        AssignmentResult r = hungarian(cost, n, q);
        // Injectivity.
        std::vector<int> seen;
        for (int c : r.row_to_col) {
            CHECK(std::find(seen.begin(), seen.end(), c) == seen.end());
            seen.push_back(c);
        }
        CHECK(r.total_cost == doctest::Approx(brute_force_min(cost, n, q)).epsilon(1e-12));
    }
}

TEST_CASE("hungarian rejects infeasible shapes") {
    std::vector<double> cost = {1, 2, 3, 4, 5, 6};
    CHECK_THROWS_AS(hungarian(cost, 3, 2), Error);
}

TEST_CASE("match binds identical predictions by index cost") {
    CostCoeffs coeffs;
    IndexCostMatrix m = build_index_cost(24);
    std::array<double, 9> t = flat9(0.5);
    // Two identical predictions at queries 3 and 4 competing for labels 3, 4.
    std::vector<Prediction> preds = {make_pred(3, 24, 3, t), make_pred(4, 24, 3, t)};
    preds[0].class_probs.assign(25, 1.0 / 25.0);
    preds[1].class_probs = preds[0].class_probs;
    std::vector<GroundTruth> gts = {{3, NormalizedTarget::from_array(t)},
                                    {4, NormalizedTarget::from_array(t)}};
    MatchAssignment a = match(preds, gts, coeffs, m);
    CHECK(a.gt_to_query == std::vector<int>{3, 4});

    // With lambda_m = 0 both assignments tie; the solver must still return
    // an injective optimum (the identity costs 0 index gap, the swap 2/24,
    // so the totals differ exactly by that once lambda_m returns).
    CostCoeffs no_m = coeffs;
    no_m.lambda_m = 0.0;
    MatchAssignment b = match(preds, gts, no_m, m);
    CHECK(b.gt_to_pred[0] != b.gt_to_pred[1]);
    CHECK(a.total_cost - b.total_cost == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("zero-noise predictions in identity order match identically") {
    CostCoeffs coeffs;
    IndexCostMatrix m = build_index_cost(8);
    std::vector<Prediction> preds;
    std::vector<GroundTruth> gts;
    DetRng rng(77, 0, RngOp::scene_pose);
    for (int c = 1; c <= 8; ++c) {
        std::array<double, 9> t{};
        for (double& x : t) x = rng.uniform(0.05, 0.95);
        preds.push_back(make_pred(c, 8, c, t));
        gts.push_back({c, NormalizedTarget::from_array(t)});
    }
    MatchAssignment a = match(preds, gts, coeffs, m);
    for (int i = 0; i < 8; ++i) CHECK(a.gt_to_query[static_cast<std::size_t>(i)] == i + 1);
    CHECK(a.total_cost == doctest::Approx(-8.0).epsilon(1e-12));
}

TEST_CASE("monotone steering: index displacement never grows with lambda_m") {
    IndexCostMatrix m = build_index_cost(6);
    DetRng rng(31, 0, RngOp::scene_pose);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Prediction> preds;
        std::vector<GroundTruth> gts;
        for (int c = 1; c <= 6; ++c) {
            std::array<double, 9> t{};
            for (double& x : t) x = rng.uniform(0.0, 1.0);
            Prediction p = make_pred(c, 6, c, t);
            // Noisy class probabilities.
            double rest = rng.uniform(0.0, 1.0);
            p.class_probs.assign(7, rest / 6.0);
            p.class_probs[static_cast<std::size_t>(c)] = 1.0 - rest;
            // Renormalize exactly.
            double sum = 0;
            for (double v : p.class_probs) sum += v;
            for (double& v : p.class_probs) v /= sum;
            preds.push_back(p);
            std::array<double, 9> g{};
            for (double& x : g) x = rng.uniform(0.0, 1.0);
            gts.push_back({c, NormalizedTarget::from_array(g)});
        }
        double prev = std::numeric_limits<double>::infinity();
        for (double lm : {0.0, 1.0, 2.0, 4.0, 8.0}) {
            CostCoeffs coeffs;
            coeffs.lambda_m = lm;
            MatchAssignment a = match(preds, gts, coeffs, m);
            double displacement = 0.0;
            for (std::size_t i = 0; i < gts.size(); ++i)
                displacement += std::abs(a.gt_to_query[i] - gts[i].label);
            CHECK(displacement <= prev);
            prev = displacement;
        }
    }
}

TEST_CASE("scaling the whole coefficient vector preserves the argmin") {
    IndexCostMatrix m = build_index_cost(5);
    DetRng rng(99, 0, RngOp::scene_pose);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Prediction> preds;
        std::vector<GroundTruth> gts;
        for (int c = 1; c <= 5; ++c) {
            std::array<double, 9> t{}, g{};
            for (double& x : t) x = rng.uniform(0.0, 1.0);
            for (double& x : g) x = rng.uniform(0.0, 1.0);
            preds.push_back(make_pred(c, 5, static_cast<int>(rng.uniform_int(1, 5)), t));
            gts.push_back({c, NormalizedTarget::from_array(g)});
        }
        CostCoeffs base;
        MatchAssignment ref = match(preds, gts, base, m);
        for (double f : {0.5, 2.0, 4.0}) {
            CostCoeffs scaled;
            scaled.lambda_c = base.lambda_c * f;
            scaled.lambda_p = base.lambda_p * f;
            scaled.lambda_s = base.lambda_s * f;
            scaled.lambda_a = base.lambda_a * f;
            scaled.lambda_m = base.lambda_m * f;
            MatchAssignment got = match(preds, gts, scaled, m);
            CHECK(got.gt_to_pred == ref.gt_to_pred);
        }
        // With the classification term off, scaling only the box terms and
        // lambda_m together is also argmin-preserving.
        CostCoeffs no_class;
        no_class.lambda_c = 0.0;
        MatchAssignment ref2 = match(preds, gts, no_class, m);
        for (double f : {0.5, 2.0, 4.0}) {
            CostCoeffs scaled = no_class;
            scaled.lambda_p *= f;
            scaled.lambda_s *= f;
            scaled.lambda_a *= f;
            scaled.lambda_m *= f;
            MatchAssignment got = match(preds, gts, scaled, m);
            CHECK(got.gt_to_pred == ref2.gt_to_pred);
        }
    }
}

TEST_CASE("steer returns exactly the requested query indices") {
    std::vector<Prediction> bank;
    for (int c = 1; c <= 24; ++c) bank.push_back(make_pred(c, 24, c, flat9(0.5)));

    auto three = steer(bank, {1, 5, 9});
    REQUIRE(three.size() == 3);
    CHECK(three[0].query_index == 1);
    CHECK(three[1].query_index == 5);
    CHECK(three[2].query_index == 9);

    std::set<int> all;
    for (int c = 1; c <= 24; ++c) all.insert(c);
    auto everything = steer(bank, all);
    CHECK(everything.size() == 24);
    for (int c = 1; c <= 24; ++c) CHECK(everything[static_cast<std::size_t>(c - 1)].query_index == c);

    CHECK_THROWS_WITH_AS(steer(bank, {25}), doctest::Contains("unknown label"), Error);
}

TEST_SUITE_END();
