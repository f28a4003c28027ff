#include "absorbkit/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "absorbkit/metrics.hpp"
#include "absorbkit/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace absorbkit;

namespace {

Matrix blob_data(Index n, Index d, IntVector& y, std::uint64_t seed, double sep = 3.0) {
    Rng rng(seed);
    Matrix x(n, d);
    y.resize(n);
    for (Index i = 0; i < n; ++i) {
        y(i) = static_cast<int>(i % 2);
        for (Index c = 0; c < d; ++c) x(i, c) = rng.normal();
        x(i, 0) += (y(i) == 1 ? sep : -sep) * 0.5;
    }
    return x;
}

CandidateScore cand(ModelFamily f, double kappa, double auc = 0.5) {
    CandidateScore s;
    s.family = f;
    s.kappa = kappa;
    s.auc = auc;
    s.accuracy = 0.5 + kappa / 2.0;
    return s;
}

// constant-probability model: logistic with zero weights and a chosen bias
TrainedModel flat_model(double prob, Index d) {
    Matrix x(4, d);
    x.setRandom();
    IntVector y(4);
    y << 0, 1, 0, 1;
    ModelSpec spec;
    spec.family = ModelFamily::LR;
    auto j = fit(spec, x, y).to_json();
    for (auto& w : j["params"]["w"]) w = 0.0;
    j["params"]["b"] = std::log(prob / (1.0 - prob));
    j.erase("standardizer");
    return TrainedModel::from_json(j);
}

}  // namespace

TEST_CASE("candidate ranking follows kappa, then auc, then family order") {
    const std::vector<CandidateScore> scores = {
        cand(ModelFamily::LR, 0.3),  cand(ModelFamily::DT, 0.1),
        cand(ModelFamily::RF, 0.2),  cand(ModelFamily::SVM_LINEAR, 0.25),
        cand(ModelFamily::KNN, 0.28), cand(ModelFamily::MLP, 0.05)};

    const auto order = rank_candidates(scores, SelectionMetric::Kappa);
    REQUIRE(order.size() == 6);
    CHECK(scores[order[0]].family == ModelFamily::LR);
    CHECK(scores[order[1]].family == ModelFamily::KNN);
    CHECK(scores[order[2]].family == ModelFamily::SVM_LINEAR);
    CHECK(scores[order[3]].family == ModelFamily::RF);
    CHECK(scores[order[4]].family == ModelFamily::DT);
    CHECK(scores[order[5]].family == ModelFamily::MLP);
}

TEST_CASE("ranking ties break by auc and then the fixed family order") {
    std::vector<CandidateScore> scores = {cand(ModelFamily::KNN, 0.4, 0.7),
                                          cand(ModelFamily::DT, 0.4, 0.9),
                                          cand(ModelFamily::MLP, 0.4, 0.7)};
    auto order = rank_candidates(scores, SelectionMetric::Kappa);
    CHECK(scores[order[0]].family == ModelFamily::DT);   // higher auc
    CHECK(scores[order[1]].family == ModelFamily::KNN);  // auc tie: KNN precedes MLP
    CHECK(scores[order[2]].family == ModelFamily::MLP);

    // a missing primary metric ranks below any defined value
    scores[1].kappa.reset();
    order = rank_candidates(scores, SelectionMetric::Kappa);
    CHECK(scores[order[2]].family == ModelFamily::DT);

    // accuracy mode uses the accuracy field
    std::vector<CandidateScore> acc = {cand(ModelFamily::LR, 0.1), cand(ModelFamily::RF, 0.3)};
    order = rank_candidates(acc, SelectionMetric::Accuracy);
    CHECK(acc[order[0]].family == ModelFamily::RF);
}

TEST_CASE("select_top returns the best L real models by validation kappa") {
    IntVector y_train, y_val;
    const Matrix x_train = blob_data(40, 3, y_train, 301, 3.0);
    const Matrix x_val = blob_data(20, 3, y_val, 302, 3.0);

    std::vector<TrainedModel> candidates;
    for (ModelFamily f : kAllFamilies) {
        ModelSpec spec;
        spec.family = f;
        spec.rf.n_trees = 10;
        spec.mlp.hidden1 = 8;
        spec.mlp.hidden2 = 4;
        spec.mlp.max_epochs = 10;
        candidates.push_back(fit(spec, x_train, y_train));
    }

    const auto top = select_top(candidates, x_val, y_val, 3);
    REQUIRE(top.members.size() == 3);
    REQUIRE(top.ranking.size() == 6);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(top.members[i].family() == top.ranking[i].family);
    }
    const double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < top.ranking.size(); ++i) {
        CHECK(top.ranking[i - 1].kappa.value_or(worst) >= top.ranking[i].kappa.value_or(worst));
    }

    CHECK_THROWS_AS(select_top({candidates[0], candidates[1]}, x_val, y_val, 3), DataError);
    CHECK_THROWS_AS(select_top(candidates, x_val, y_val, 0), ConfigError);
}

TEST_CASE("ensemble averages member probabilities with an inclusive threshold") {
    const auto e = make_ensemble({flat_model(0.6, 2), flat_model(0.7, 2), flat_model(0.8, 2)});
    Matrix q(2, 2);
    q.setZero();
    const auto pred = ensemble_predict(e, q);
    CHECK(pred.probs(0) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(pred.labels(0) == 1);

    const auto boundary =
        make_ensemble({flat_model(0.4, 2), flat_model(0.5, 2), flat_model(0.6, 2)});
    const auto bp = ensemble_predict(boundary, q);
    CHECK(bp.probs(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(bp.labels(0) == 1);  // 0.5 goes to the positive class

    // a single member passes through untouched
    const auto solo = make_ensemble({flat_model(0.3, 2)});
    const auto sp = ensemble_predict(solo, q);
    CHECK(sp.probs(0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(sp.labels(0) == 0);
}

TEST_CASE("ensemble prediction is exactly invariant to member order") {
    IntVector y;
    const Matrix x = blob_data(30, 3, y, 401, 2.0);
    std::vector<TrainedModel> members;
    for (ModelFamily f : {ModelFamily::LR, ModelFamily::RF, ModelFamily::MLP}) {
        ModelSpec spec;
        spec.family = f;
        spec.rf.n_trees = 9;
        spec.mlp.hidden1 = 8;
        spec.mlp.hidden2 = 4;
        spec.mlp.max_epochs = 8;
        members.push_back(fit(spec, x, y));
    }

    IntVector yq;
    const Matrix q = blob_data(11, 3, yq, 402, 2.0);
    const auto p0 = ensemble_predict(make_ensemble({members[0], members[1], members[2]}), q);
    const auto p1 = ensemble_predict(make_ensemble({members[2], members[0], members[1]}), q);
    const auto p2 = ensemble_predict(make_ensemble({members[1], members[2], members[0]}), q);
    CHECK((p0.probs - p1.probs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((p0.probs - p2.probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ensembles demand identical feature columns") {
    Matrix x(6, 2);
    x.setRandom();
    IntVector y(6);
    y << 0, 1, 0, 1, 0, 1;
    ModelSpec spec;
    const auto a = fit(spec, x, y, {1, 2});
    const auto b = fit(spec, x, y, {3, 4});
    CHECK_THROWS_AS(make_ensemble({a, b}), DataError);
    CHECK_THROWS_AS(make_ensemble({}), DataError);
}

TEST_CASE("within-subject permutation preserves each subject's label counts") {
    const std::vector<std::string> subjects = {"s1", "s1", "s1", "s2", "s2",
                                               "s3", "s3", "s3", "s3", "s4"};
    IntVector labels(10);
    labels << 1, 0, 1, 0, 0, 1, 1, 0, 0, 1;

    for (std::uint64_t it = 0; it < 50; ++it) {
        const IntVector p = permute_labels_within_subjects(labels, subjects, 99, "t", it);
        std::map<std::string, std::pair<int, int>> counts, orig;
        for (Index i = 0; i < 10; ++i) {
            const auto& s = subjects[static_cast<std::size_t>(i)];
            (p(i) == 1 ? counts[s].first : counts[s].second)++;
            (labels(i) == 1 ? orig[s].first : orig[s].second)++;
        }
        CHECK(counts == orig);
    }

    // single-row subject s4 can never change
    const IntVector p0 = permute_labels_within_subjects(labels, subjects, 99, "t", 0);
    CHECK(p0(9) == labels(9));

    // deterministic per iteration, varies across iterations
    const IntVector again = permute_labels_within_subjects(labels, subjects, 99, "t", 0);
    CHECK((p0 - again).cwiseAbs().maxCoeff() == 0);
    bool any_diff = false;
    for (std::uint64_t it = 1; it < 20 && !any_diff; ++it) {
        const IntVector q = permute_labels_within_subjects(labels, subjects, 99, "t", it);
        any_diff = (q - p0).cwiseAbs().maxCoeff() > 0;
    }
    CHECK(any_diff);

    CHECK_THROWS_AS(permute_labels_within_subjects(labels, {"a", "b"}, 1, "t", 0), DataError);
}

TEST_CASE("block-granular permutation moves whole blocks together") {
    const std::vector<std::string> subjects = {"s1", "s1", "s1", "s1", "s2", "s2", "s2", "s2"};
    const std::vector<std::string> blocks = {"s1|a", "s1|a", "s1|b", "s1|b",
                                             "s2|a", "s2|a", "s2|b", "s2|b"};
    IntVector labels(8);
    labels << 1, 1, 0, 0, 1, 1, 0, 0;

    bool any_swap = false;
    for (std::uint64_t it = 0; it < 40; ++it) {
        const IntVector p = permute_labels_within_subjects(labels, subjects, blocks, 7, "t", it);
        // rows of one block always share a label
        CHECK(p(0) == p(1));
        CHECK(p(2) == p(3));
        CHECK(p(4) == p(5));
        CHECK(p(6) == p(7));
        // per-subject label counts survive
        CHECK(p(0) + p(2) == 1);
        CHECK(p(4) + p(6) == 1);
        any_swap = any_swap || p(0) == 0;
    }
    CHECK(any_swap);

    const IntVector a = permute_labels_within_subjects(labels, subjects, blocks, 7, "t", 5);
    const IntVector b = permute_labels_within_subjects(labels, subjects, blocks, 7, "t", 5);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0);

    IntVector impure = labels;
    impure(1) = 0;  // block s1|a now carries both labels
    CHECK_THROWS_AS(permute_labels_within_subjects(impure, subjects, blocks, 7, "t", 0),
                    DataError);
    CHECK_THROWS_AS(permute_labels_within_subjects(labels, subjects, {"x"}, 7, "t", 0),
                    DataError);
}

TEST_CASE("permutation p-value hits the estimator boundaries") {
    IntVector labels(8);
    labels << 1, 0, 1, 0, 1, 0, 1, 0;
    const std::vector<std::string> subjects = {"a", "a", "b", "b", "c", "c", "d", "d"};

    auto zero_stat = [](const IntVector&, std::uint64_t) { return 0.0; };
    const auto beat_all = permutation_test(1.0, labels, subjects, 1000, 5, zero_stat);
    CHECK(beat_all.p_value == doctest::Approx(1.0 / 1001.0).epsilon(1e-12));
    CHECK(beat_all.nulls.size() == 1000);

    auto equal_stat = [](const IntVector&, std::uint64_t) { return 1.0; };
    const auto tie_all = permutation_test(1.0, labels, subjects, 250, 5, equal_stat);
    CHECK(tie_all.p_value == 1.0);

    CHECK(beat_all.p_value > 0.0);
    CHECK_THROWS_AS(permutation_test(1.0, labels, subjects, 0, 5, zero_stat), ConfigError);
}

TEST_CASE("null iterations arrive in order with the iteration index") {
    IntVector labels(4);
    labels << 1, 0, 1, 0;
    const std::vector<std::string> subjects = {"a", "a", "b", "b"};
    std::vector<std::uint64_t> seen;
    auto stat = [&](const IntVector&, std::uint64_t it) {
        seen.push_back(it);
        return static_cast<double>(it);
    };
    const auto result = permutation_test(2.0, labels, subjects, 6, 9, stat);
    CHECK(seen == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5});
    CHECK(result.nulls == std::vector<double>{0, 1, 2, 3, 4, 5});
    // nulls >= 2.0 are {2,3,4,5}: p = (1+4)/(1+6)
    CHECK(result.p_value == doctest::Approx(5.0 / 7.0));
}

TEST_CASE("permutation p-values are uniform under the null") {
    const Index n_subjects = 12, per_subject = 4;
    const Index n = n_subjects * per_subject;
    std::vector<std::string> subjects;
    for (Index s = 0; s < n_subjects; ++s) {
        for (Index r = 0; r < per_subject; ++r) subjects.push_back("s" + std::to_string(s));
    }

    Rng data_rng(20260815);
    const int reps = 200, iters = 199;
    std::vector<double> ps;
    for (int rep = 0; rep < reps; ++rep) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = data_rng.normal();
        // balanced labels inside each subject, arrangement drawn uniformly
        IntVector y(n);
        for (Index s = 0; s < n_subjects; ++s) {
            std::vector<int> block = {0, 0, 1, 1};
            data_rng.shuffle(block);
            for (Index r = 0; r < per_subject; ++r) y(s * per_subject + r) = block[static_cast<std::size_t>(r)];
        }
        auto stat = [&](const IntVector& lab, std::uint64_t) {
            double t = 0.0;
            for (Index i = 0; i < n; ++i) t += v(i) * (lab(i) == 1 ? 1.0 : -1.0);
            return t;
        };
        const double observed = stat(y, 0);
        const auto res = permutation_test(observed, y, subjects, iters,
                                          1000 + static_cast<std::uint64_t>(rep), stat);
        ps.push_back(res.p_value);
    }

    std::sort(ps.begin(), ps.end());
    double d_stat = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double lo = static_cast<double>(i) / static_cast<double>(reps);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(reps);
        d_stat = std::max({d_stat, ps[i] - lo, hi - ps[i]});
    }
    // Kolmogorov-Smirnov acceptance at alpha = 0.01 for n = 200: 1.628/sqrt(200)
    CHECK(d_stat < 0.115);
}

TEST_CASE("selection metric names round-trip") {
    CHECK(parse_selection_metric("kappa") == SelectionMetric::Kappa);
    CHECK(parse_selection_metric("accuracy") == SelectionMetric::Accuracy);
    CHECK(selection_metric_name(SelectionMetric::Kappa) == "kappa");
    CHECK_THROWS_AS(parse_selection_metric("f1"), ConfigError);
}
