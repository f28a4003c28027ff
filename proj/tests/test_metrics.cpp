#include "doctest.h"

#include <cmath>

#include "absorbkit/metrics.hpp"
#include "absorbkit/rng.hpp"
#include "oracles.hpp"

using namespace absorbkit;

namespace {

IntVector iv(std::initializer_list<int> xs) {
    IntVector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (int x : xs) v(i++) = x;
    return v;
}

Vector dv(std::initializer_list<double> xs) {
    Vector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

}  // namespace

TEST_CASE("balanced 40/10/10/40 confusion gives the textbook numbers") {
    IntVector y_true(100), y_pred(100);
    Index i = 0;
    for (int k = 0; k < 40; ++k) { y_true(i) = 1; y_pred(i) = 1; ++i; }  // tp
    for (int k = 0; k < 10; ++k) { y_true(i) = 0; y_pred(i) = 1; ++i; }  // fp
    for (int k = 0; k < 10; ++k) { y_true(i) = 1; y_pred(i) = 0; ++i; }  // fn
    for (int k = 0; k < 40; ++k) { y_true(i) = 0; y_pred(i) = 0; ++i; }  // tn
    Vector probs(100);
    for (Index j = 0; j < 100; ++j) probs(j) = y_pred(j) ? 0.9 : 0.1;

    const auto r = compute_metrics(y_true, probs, y_pred);
    CHECK(r.confusion.tp == 40);
    CHECK(r.confusion.fp == 10);
    CHECK(r.confusion.fn == 10);
    CHECK(r.confusion.tn == 40);
    CHECK(*r.accuracy == 0.8);
    CHECK(*r.kappa == 0.6);  // exact, not approximate
    CHECK(*r.precision == 0.8);
    CHECK(*r.recall == 0.8);
    CHECK(*r.f1 == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(*r.specificity == 0.8);
}

TEST_CASE("perfect separation scores 1.0 everywhere") {
    const auto y = iv({1, 1, 0, 0});
    const auto p = dv({0.9, 0.8, 0.3, 0.2});
    const auto r = compute_metrics(y, p, iv({1, 1, 0, 0}));
    CHECK(*r.auc == 1.0);
    CHECK(*r.kappa == 1.0);
    CHECK(*r.accuracy == 1.0);
}

TEST_CASE("AUC counts discordant pairs with half credit for ties") {
    const auto y = iv({1, 1, 0, 0});
    const auto p = dv({0.9, 0.3, 0.8, 0.2});
    CHECK(*auc_score(y, p) == 0.75);  // 3 wins of 4 pairs

    // tie between a positive and a negative scores half
    const auto yt = iv({1, 0});
    const auto pt = dv({0.5, 0.5});
    CHECK(*auc_score(yt, pt) == 0.5);

    CHECK(!auc_score(iv({1, 1}), dv({0.2, 0.9})).has_value());
}

TEST_CASE("kappa matches the chance-agreement oracle on random confusions") {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        oracle::Confusion oc;
        oc.tp = static_cast<int>(rng.uniform_int(30));
        oc.fp = static_cast<int>(rng.uniform_int(30));
        oc.fn = static_cast<int>(rng.uniform_int(30));
        oc.tn = static_cast<int>(rng.uniform_int(30));
        if (oc.tp + oc.fp + oc.fn + oc.tn == 0) continue;
        Confusion c;
        c.tp = oc.tp;
        c.fp = oc.fp;
        c.fn = oc.fn;
        c.tn = oc.tn;
        const auto ours = kappa_score(c);
        const auto ref = oracle::kappa(oc);
        REQUIRE(ours.has_value() == ref.has_value());
        if (ours) {
            CHECK(*ours == doctest::Approx(*ref).epsilon(1e-12));
            CHECK(*ours >= -1.0 - 1e-12);
            CHECK(*ours <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("AUC matches the exhaustive pair oracle on random scores") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.uniform_int(40));
        IntVector y(n);
        Vector p(n);
        std::vector<int> ty(static_cast<std::size_t>(n));
        std::vector<double> tp(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            y(i) = static_cast<int>(rng.uniform_int(2));
            // coarse grid forces ties
            p(i) = std::round(rng.uniform() * 8.0) / 8.0;
            ty[static_cast<std::size_t>(i)] = y(i);
            tp[static_cast<std::size_t>(i)] = p(i);
        }
        const auto ours = auc_score(y, p);
        const auto ref = oracle::auc(ty, tp);
        REQUIRE(ours.has_value() == ref.has_value());
        if (ours) CHECK(*ours == doctest::Approx(*ref).epsilon(1e-12));
    }
}

TEST_CASE("AUC is invariant under strictly increasing score transforms") {
    Rng rng(17);
    const Index n = 30;
    IntVector y(n);
    Vector p(n), q(n);
    for (Index i = 0; i < n; ++i) {
        y(i) = static_cast<int>(rng.uniform_int(2));
        p(i) = rng.uniform();
        q(i) = std::exp(4.0 * p(i)) - 2.0;
    }
    y(0) = 1;
    y(1) = 0;
    CHECK(*auc_score(y, p) == doctest::Approx(*auc_score(y, q)).epsilon(1e-12));
}

TEST_CASE("undefined metrics are absent, never zero") {
    // everything predicted negative: precision undefined
    const auto r = compute_metrics(iv({1, 1, 0}), dv({0.2, 0.3, 0.1}), iv({0, 0, 0}));
    CHECK(!r.precision.has_value());
    CHECK(r.recall.has_value());
    CHECK(*r.recall == 0.0);
    CHECK(!r.f1.has_value());
    CHECK(r.specificity.has_value());

    // single-class truth: AUC and specificity undefined, kappa undefined
    const auto r2 = compute_metrics(iv({1, 1}), dv({0.9, 0.8}), iv({1, 1}));
    CHECK(!r2.auc.has_value());
    CHECK(!r2.specificity.has_value());
    CHECK(!r2.kappa.has_value());
    CHECK(*r2.accuracy == 1.0);

    CHECK_THROWS_AS((void)compute_metrics(IntVector(0), Vector(0), IntVector(0)), DataError);
}

TEST_CASE("metrics serialize with the reporting keys and drop absent ones") {
    const auto r = compute_metrics(iv({1, 1, 0, 0}), dv({0.9, 0.8, 0.3, 0.2}), iv({1, 1, 0, 0}));
    const auto j = metrics_to_json(r);
    CHECK(j["Acc"] == 1.0);
    CHECK(j["CK"] == 1.0);
    CHECK(j["AUC"] == 1.0);
    CHECK(j["Precision"] == 1.0);
    CHECK(j["Recall"] == 1.0);
    CHECK(j["F1"] == 1.0);
    CHECK(j["Specificity"] == 1.0);
    CHECK(!j.contains("p-Value"));
    CHECK(j["confusion"]["tp"] == 2);
    CHECK(j["n"] == 4);

    MetricsReport withp = r;
    withp.p_value = 0.003;
    CHECK(metrics_to_json(withp)["p-Value"] == 0.003);

    const auto r2 = compute_metrics(iv({1, 1, 0}), dv({0.2, 0.3, 0.1}), iv({0, 0, 0}));
    const auto j2 = metrics_to_json(r2);
    CHECK(!j2.contains("Precision"));
    CHECK(!j2.contains("F1"));
}

TEST_CASE("summarize_metric skips absent folds and counts them") {
    std::vector<std::optional<double>> vals = {0.6, 0.8, std::nullopt, 0.7};
    const auto s = summarize_metric(vals);
    CHECK(s.defined == 3);
    CHECK(s.missing == 1);
    CHECK(*s.mean == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(*s.sd == doctest::Approx(std::sqrt(2.0 / 300.0)).epsilon(1e-9));

    const auto empty = summarize_metric({std::nullopt, std::nullopt});
    CHECK(!empty.mean.has_value());
    CHECK(empty.missing == 2);
}

TEST_CASE("confusion_from validates labels") {
    CHECK_THROWS_AS((void)confusion_from(iv({1, 2}), iv({0, 1})), DataError);
    CHECK_THROWS_AS((void)confusion_from(iv({1}), iv({0, 1})), DataError);
}
