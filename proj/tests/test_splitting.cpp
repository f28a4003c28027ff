#include "doctest.h"

#include <algorithm>
#include <set>

#include "absorbkit/rng.hpp"
#include "absorbkit/splitting.hpp"

using namespace absorbkit;

namespace {

std::vector<SampleMeta> make_meta(const std::vector<std::string>& subjects) {
    std::vector<SampleMeta> meta(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        meta[i].sample_id = "s" + std::to_string(i);
        meta[i].subject_id = subjects[i];
        meta[i].condition = Condition::J1;
        meta[i].run_id = static_cast<int>(i) + 1;
    }
    return meta;
}

std::set<std::string> subjects_of(const std::vector<SampleMeta>& meta,
                                  const std::vector<Index>& idx) {
    std::set<std::string> out;
    for (Index i : idx) out.insert(meta[static_cast<std::size_t>(i)].subject_id);
    return out;
}

void check_plan_structure(const FoldPlan& plan, const std::vector<SampleMeta>& meta) {
    std::vector<int> val_seen(meta.size(), 0);
    for (const auto& fold : plan.folds) {
        const auto train_subj = subjects_of(meta, fold.train_idx);
        const auto val_subj = subjects_of(meta, fold.val_idx);
        for (const auto& s : val_subj) CHECK(train_subj.count(s) == 0);

        std::set<Index> train(fold.train_idx.begin(), fold.train_idx.end());
        std::set<Index> val(fold.val_idx.begin(), fold.val_idx.end());
        CHECK(train.size() + val.size() == meta.size());
        for (Index i : fold.val_idx) val_seen[static_cast<std::size_t>(i)]++;
    }
    for (int c : val_seen) CHECK(c == 1);
}

}  // namespace

TEST_CASE("make_folds with 10 one-sample subjects gives 1+1 per val fold") {
    std::vector<std::string> subjects;
    IntVector labels(10);
    for (int i = 0; i < 10; ++i) {
        subjects.push_back("sub" + std::to_string(i));
        labels(i) = i < 5 ? 1 : 0;
    }
    const auto meta = make_meta(subjects);
    const auto plan = make_folds(meta, labels, 5, 42);
    REQUIRE(plan.folds.size() == 5);
    CHECK(plan.warnings.empty());
    check_plan_structure(plan, meta);
    for (const auto& fold : plan.folds) {
        REQUIRE(fold.val_idx.size() == 2);
        int pos = 0;
        for (Index i : fold.val_idx) pos += labels(i);
        CHECK(pos == 1);
    }
}

TEST_CASE("make_folds never splits a subject, over random metas") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_subjects = 6 + static_cast<int>(rng.uniform_int(8));
        std::vector<std::string> subjects;
        std::vector<int> raw_labels;
        for (int s = 0; s < n_subjects; ++s) {
            const int n_samples = 1 + static_cast<int>(rng.uniform_int(6));
            for (int j = 0; j < n_samples; ++j) {
                subjects.push_back("sub" + std::to_string(s));
                raw_labels.push_back(static_cast<int>(rng.uniform_int(2)));
            }
        }
        // both classes guaranteed
        raw_labels[0] = 1;
        raw_labels[1] = 0;
        IntVector labels(static_cast<Index>(raw_labels.size()));
        for (std::size_t i = 0; i < raw_labels.size(); ++i) {
            labels(static_cast<Index>(i)) = raw_labels[i];
        }
        const auto meta = make_meta(subjects);
        const auto plan = make_folds(meta, labels, 5, 1000 + static_cast<std::uint64_t>(trial));
        check_plan_structure(plan, meta);
    }
}

TEST_CASE("make_folds is deterministic for a fixed seed") {
    std::vector<std::string> subjects;
    IntVector labels(24);
    for (int i = 0; i < 24; ++i) {
        subjects.push_back("sub" + std::to_string(i / 2));
        labels(i) = (i / 2) % 2;
    }
    const auto meta = make_meta(subjects);
    const auto a = make_folds(meta, labels, 5, 42);
    const auto b = make_folds(meta, labels, 5, 42);
    REQUIRE(a.folds.size() == b.folds.size());
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        CHECK(a.folds[f].train_idx == b.folds[f].train_idx);
        CHECK(a.folds[f].val_idx == b.folds[f].val_idx);
    }

    const auto c = make_folds(meta, labels, 5, 43);
    bool any_diff = false;
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        any_diff = any_diff || a.folds[f].val_idx != c.folds[f].val_idx;
    }
    CHECK(any_diff);
}

TEST_CASE("make_folds keeps subject disjointness across many seeds") {
    std::vector<std::string> subjects;
    std::vector<int> raw;
    Rng rng(5);
    for (int s = 0; s < 11; ++s) {
        const int n = 1 + static_cast<int>(rng.uniform_int(4));
        for (int j = 0; j < n; ++j) {
            subjects.push_back("sub" + std::to_string(s));
            raw.push_back(s % 2);
        }
    }
    IntVector labels(static_cast<Index>(raw.size()));
    for (std::size_t i = 0; i < raw.size(); ++i) labels(static_cast<Index>(i)) = raw[i];
    const auto meta = make_meta(subjects);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto plan = make_folds(meta, labels, 4, seed);
        for (const auto& fold : plan.folds) {
            const auto train_subj = subjects_of(meta, fold.train_idx);
            for (const auto& s : subjects_of(meta, fold.val_idx)) {
                REQUIRE(train_subj.count(s) == 0);
            }
        }
    }
}

TEST_CASE("make_folds validates input") {
    auto meta = make_meta({"a", "b", "c", "d"});
    IntVector labels(4);
    labels << 1, 0, 1, 0;
    CHECK_THROWS_WITH_AS((void)make_folds(meta, labels, 5, 1),
                         doctest::Contains("TooFewSubjects"), DataError);

    IntVector ones = IntVector::Ones(4);
    CHECK_THROWS_WITH_AS((void)make_folds(meta, ones, 2, 1), doctest::Contains("SingleClass"),
                         DataError);

    IntVector bad(4);
    bad << 0, 1, 2, 0;
    CHECK_THROWS_AS((void)make_folds(meta, bad, 2, 1), DataError);
    CHECK_THROWS_AS((void)make_folds(meta, labels, 1, 1), ConfigError);
}

TEST_CASE("make_folds warns when minority subjects cannot fill folds") {
    // 5 subjects, only one majority-positive
    std::vector<std::string> subjects = {"a", "b", "c", "d", "e"};
    IntVector labels(5);
    labels << 1, 0, 0, 0, 0;
    const auto meta = make_meta(subjects);
    const auto plan = make_folds(meta, labels, 4, 7);
    CHECK(!plan.warnings.empty());
    check_plan_structure(plan, meta);
}

TEST_CASE("fold class proportions stay near global at subject granularity") {
    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> subjects;
        std::vector<int> raw;
        std::size_t largest_subject = 0;
        const int n_subjects = 10 + static_cast<int>(rng.uniform_int(6));
        for (int s = 0; s < n_subjects; ++s) {
            const std::size_t n = 1 + rng.uniform_int(5);
            largest_subject = std::max(largest_subject, n);
            const int label = static_cast<int>(rng.uniform_int(2));
            for (std::size_t j = 0; j < n; ++j) {
                subjects.push_back("sub" + std::to_string(s));
                raw.push_back(label);
            }
        }
        raw[0] = 1;
        raw[raw.size() - 1] = 0;
        IntVector labels(static_cast<Index>(raw.size()));
        for (std::size_t i = 0; i < raw.size(); ++i) labels(static_cast<Index>(i)) = raw[i];
        const auto meta = make_meta(subjects);
        const auto plan = make_folds(meta, labels, 5, static_cast<std::uint64_t>(trial));

        double global_pos = 0;
        for (Index i = 0; i < labels.size(); ++i) global_pos += labels(i);
        const double global_prop = global_pos / static_cast<double>(labels.size());
        for (const auto& fold : plan.folds) {
            if (fold.val_idx.empty()) continue;
            double pos = 0;
            for (Index i : fold.val_idx) pos += labels(i);
            const double prop = pos / static_cast<double>(fold.val_idx.size());
            const double slack =
                static_cast<double>(largest_subject + 1) / static_cast<double>(fold.val_idx.size());
            CHECK(std::abs(prop - global_prop) <= slack + 0.25);
        }
    }
}

TEST_CASE("fold plan serializes to json") {
    std::vector<std::string> subjects = {"a", "a", "b", "c", "d", "e"};
    IntVector labels(6);
    labels << 1, 1, 0, 1, 0, 0;
    const auto meta = make_meta(subjects);
    const auto plan = make_folds(meta, labels, 2, 42);
    const auto j = fold_plan_to_json(plan);
    CHECK(j["k"] == 2);
    CHECK(j["seed"] == 42);
    REQUIRE(j["folds"].size() == 2);
    std::size_t total = 0;
    for (const auto& f : j["folds"]) total += f["val_idx"].size();
    CHECK(total == 6);
}
