#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "absorbkit/pipeline.hpp"
#include "absorbkit/synth.hpp"

#include "json.hpp"

using namespace absorbkit;

namespace {

PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.seed = 42;
    cfg.k = 3;
    cfg.permutation_iterations = 0;
    cfg.importance_repeats = 3;
    cfg.threads = 1;
    cfg.models.rf.n_trees = 25;
    cfg.models.rf.max_depth = 8;
    cfg.models.mlp.hidden1 = 8;
    cfg.models.mlp.hidden2 = 4;
    cfg.models.mlp.max_epochs = 15;
    cfg.models.lr.max_iter = 200;
    cfg.models.svm.max_iter = 120;
    return cfg;
}

Contrast contrast_by_name(const std::string& name) {
    for (const Contrast& c : default_contrasts()) {
        if (c.name() == name) return c;
    }
    FAIL("unknown contrast ", name);
    return default_contrasts().front();
}

PipelineInputs inputs_from(SyntheticCohort cohort) {
    PipelineInputs in;
    in.group = std::move(cohort.group);
    in.case_study = std::move(cohort.case_study);
    in.group_covariates = std::move(cohort.group_covariates);
    in.case_covariates = std::move(cohort.case_covariates);
    return in;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file ", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json parse_file(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

std::string fresh_dir(const std::string& leaf) {
    const std::string dir = "/tmp/absorbkit_pipeline_" + leaf;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Shared planted fixture: strong signal on four of 24 rois, computed once.
struct PlantedFixture {
    PipelineConfig cfg;
    ContrastJob job;
    CvArtifacts cv;
    FinalArtifacts fin;
};

const PlantedFixture& planted() {
    static const PlantedFixture fixture = [] {
        GeneratorSpec spec;
        spec.n_subjects = 10;
        spec.n_rois = 24;
        spec.informative_rois = {3, 7, 11, 15};
        spec.effect_size = 2.0;
        spec.seed = 99;
        const PipelineInputs in = inputs_from(generate_synthetic(spec));

        PlantedFixture f;
        f.cfg = tiny_config();
        f.job = make_contrast_job(contrast_by_name("ACAM-J vs Counting"), in, false);
        f.cv = run_group_cv(f.cfg, f.job);
        f.fin = finalize_and_test(f.cfg, f.job, f.cv);
        return f;
    }();
    return fixture;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("make_contrast_job slices both cohorts") {
    GeneratorSpec spec;
    spec.n_subjects = 4;
    spec.n_rois = 12;
    spec.seed = 5;
    const PipelineInputs in = inputs_from(generate_synthetic(spec));

    const ContrastJob job = make_contrast_job(contrast_by_name("ACAM-J vs Counting"), in, false);
    // 4 subjects x (6 J conditions + counting) x 2 runs
    CHECK(job.group.data.n_samples() == 4 * 7 * 2);
    CHECK(job.group.labels.sum() == 4 * 6 * 2);
    // case: 27 meditation runs + 16 counting runs
    CHECK(job.case_study.data.n_samples() == 27 + 16);
    CHECK(job.case_study.labels.sum() == 27);
    CHECK(job.dir_name() == "ACAM-J_vs_Counting");
    CHECK_FALSE(job.group_covariates.has_value());

    const ContrastJob resid = make_contrast_job(contrast_by_name("ACAM-J1 vs ACAM-J2"), in, true);
    CHECK(resid.dir_name() == "ACAM-J1_vs_ACAM-J2__resid");
    REQUIRE(resid.group_covariates.has_value());
    CHECK(resid.group_covariates->values.rows() == resid.group.data.n_samples());
    REQUIRE(resid.case_covariates.has_value());
    CHECK(resid.case_covariates->values.rows() == resid.case_study.data.n_samples());

    PipelineInputs no_cov = inputs_from(generate_synthetic(spec));
    no_cov.group_covariates.reset();
    CHECK_THROWS_AS(make_contrast_job(contrast_by_name("ACAM-J1 vs ACAM-J2"), no_cov, true), ConfigError);
}

TEST_CASE("zero-signal cohorts keep family validation accuracy near chance") {
    PipelineConfig cfg = tiny_config();
    const Contrast contrast = contrast_by_name("ACAM-J1 vs Counting");

    double sum = 0.0;
    int n = 0;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        GeneratorSpec spec;
        spec.n_subjects = 8;
        spec.n_rois = 24;
        spec.seed = seed;
        spec.include_case = false;
        const SyntheticCohort cohort = generate_synthetic(spec);

        ContrastJob job;
        job.contrast = contrast;
        job.group = select_contrast(cohort.group, contrast);
        cfg.seed = 100 + seed;
        const CvArtifacts cv = run_group_cv(cfg, job);
        REQUIRE(cv.folds.size() == 3);
        for (const FoldArtifacts& fa : cv.folds) {
            REQUIRE(fa.family_val.size() == kAllFamilies.size());
            for (const MetricsReport& r : fa.family_val) {
                REQUIRE(r.accuracy.has_value());
                sum += *r.accuracy;
                ++n;
            }
        }
    }
    const double mean = sum / n;
    CHECK(mean > 0.35);
    CHECK(mean < 0.65);
}

TEST_CASE("planted signal is recovered end to end") {
    const PlantedFixture& f = planted();

    REQUIRE(f.cv.folds.size() == 3);
    for (const FoldArtifacts& fa : f.cv.folds) {
        CHECK(fa.ranking.size() == kAllFamilies.size());
        CHECK(fa.top_families.size() == 3);
        CHECK_FALSE(fa.selected_roi_ids.empty());
        CHECK(std::is_sorted(fa.selected_roi_ids.begin(), fa.selected_roi_ids.end()));
    }

    const std::set<int> informative = {3, 7, 11, 15};
    int recovered = 0;
    for (int id : f.fin.global_roi_ids) recovered += informative.count(id) > 0 ? 1 : 0;
    CHECK(recovered >= 3);

    CHECK(f.fin.final_families.size() == 3);
    CHECK(f.fin.case_test.n == 27 + 16);
    REQUIRE(f.fin.case_test.accuracy.has_value());
    CHECK(*f.fin.case_test.accuracy >= 0.8);
    CHECK(f.fin.x_case.rows() == 27 + 16);
    CHECK(f.fin.x_case.cols() == static_cast<Index>(f.fin.global_roi_ids.size()));
    CHECK(f.fin.x_bal.rows() == static_cast<Index>(f.fin.bal_base_row.size()));
    CHECK(f.fin.y_bal.size() == f.fin.x_bal.rows());
    CHECK(f.fin.neutral_values.size() == f.fin.x_bal.cols());
}

TEST_CASE("importance views rank the planted rois first") {
    const PlantedFixture& f = planted();
    const ImportanceMap imp = compute_contrast_importance(f.cfg, f.job, f.fin);

    const Index d = static_cast<Index>(f.fin.global_roi_ids.size());
    for (const char* view : {"forest", "linear", "permutation"}) {
        REQUIRE(imp.per_view.count(view) == 1);
        const Vector& v = imp.per_view.at(view);
        REQUIRE(v.size() == d);
        CHECK(v.minCoeff() >= 0.0);
        CHECK(v.maxCoeff() <= 1.0);
    }
    REQUIRE(imp.aggregated.size() == d);
    REQUIRE(imp.loro_drop_counts.size() == static_cast<std::size_t>(d));
    for (int c : imp.loro_drop_counts) {
        CHECK(c >= 0);
        CHECK(c <= static_cast<int>(kAllFamilies.size()));
    }

    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return imp.aggregated(a) > imp.aggregated(b); });
    const std::set<int> informative = {3, 7, 11, 15};
    int hits = 0;
    for (std::size_t i = 0; i < 4 && i < order.size(); ++i) {
        hits += informative.count(f.fin.global_roi_ids[static_cast<std::size_t>(order[i])]) > 0
                    ? 1
                    : 0;
    }
    CHECK(hits >= 3);

    const std::string dir = fresh_dir("importance_csv");
    const std::string path = dir + "/importance.csv";
    write_importance_csv(path, imp, f.fin.global_roi_ids, f.job.group.data.feature_ids,
                         make_default_registry());
    const std::string csv = slurp(path);
    CHECK(csv.rfind("roi_id,roi_name,atlas,view_forest,view_linear,view_permutation,"
                    "aggregated,loro_drop_count\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 24 + 1);
}

TEST_CASE("flipping case labels mirrors the final accuracy") {
    const PlantedFixture& f = planted();
    ContrastJob flipped = f.job;
    for (Index i = 0; i < flipped.case_study.labels.size(); ++i) {
        flipped.case_study.labels(i) = 1 - flipped.case_study.labels(i);
    }
    const FinalArtifacts fin2 = finalize_and_test(f.cfg, flipped, f.cv);
    REQUIRE(fin2.case_test.accuracy.has_value());
    CHECK(*fin2.case_test.accuracy ==
          doctest::Approx(1.0 - *f.fin.case_test.accuracy).epsilon(1e-12));
}

TEST_CASE("replaying the same job reproduces every reported number") {
    const PlantedFixture& f = planted();
    const CvArtifacts cv2 = run_group_cv(f.cfg, f.job);
    const FinalArtifacts fin2 = finalize_and_test(f.cfg, f.job, cv2);
    const nlohmann::json a = contrast_metrics_json(f.job, f.cv, f.fin, std::nullopt);
    const nlohmann::json b = contrast_metrics_json(f.job, cv2, fin2, std::nullopt);
    CHECK(a.dump(2) == b.dump(2));
}

TEST_CASE("finalize rejects a case table missing a selected feature") {
    const PlantedFixture& f = planted();
    REQUIRE_FALSE(f.cv.global.selected.empty());
    const int needed = f.cv.global.selected.front();

    ContrastJob crippled = f.job;
    const Dataset& full = f.job.case_study.data;
    Dataset& cut = crippled.case_study.data;
    cut.feature_ids.clear();
    std::vector<Index> keep;
    for (Index c = 0; c < full.n_features(); ++c) {
        if (full.feature_ids[static_cast<std::size_t>(c)] == needed) continue;
        keep.push_back(c);
        cut.feature_ids.push_back(full.feature_ids[static_cast<std::size_t>(c)]);
    }
    cut.features.resize(full.n_samples(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        cut.features.col(static_cast<Index>(c)) = full.features.col(keep[c]);
    }

    try {
        finalize_and_test(f.cfg, crippled, f.cv);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(e.code() == "CaseMissingFeatures");
    }
}

TEST_CASE("permutation nulls are deterministic and sensitive to real signal") {
    const PlantedFixture& f = planted();
    PipelineConfig cfg = f.cfg;
    cfg.permutation_iterations = 5;

    const PermutationTest a = run_permutation(cfg, f.job, f.fin);
    const PermutationTest b = run_permutation(cfg, f.job, f.fin);
    REQUIRE(a.nulls.size() == 5);
    CHECK(a.observed == *f.fin.case_test.accuracy);
    for (std::size_t i = 0; i < 5; ++i) CHECK(a.nulls[i] == b.nulls[i]);
    CHECK(a.p_value == b.p_value);
    // planted effect: permuted-label refits should fall well short of observed
    CHECK(a.p_value <= 2.0 / 6.0);
    for (double v : a.nulls) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // the full-null variant reruns folds + selection; still deterministic
    PipelineConfig deep = cfg;
    deep.full_null = true;
    std::vector<std::string> subjects, segments;
    for (const SampleMeta& m : f.job.group.data.meta) {
        subjects.push_back(m.subject_id);
        segments.push_back(m.segment_key);
    }
    const IntVector permuted = permute_labels_within_subjects(
        f.job.group.labels, subjects, segments, cfg.seed, f.job.contrast.name(), 3);
    const double d1 = permutation_null_stat(deep, f.job, f.fin, permuted, 3);
    const double d2 = permutation_null_stat(deep, f.job, f.fin, permuted, 3);
    CHECK(d1 == d2);
    CHECK(d1 >= 0.0);
    CHECK(d1 <= 1.0);
}

TEST_CASE("run_all writes byte-identical artifacts across thread counts") {
    const std::string base = fresh_dir("repro");
    GeneratorSpec spec;
    spec.n_subjects = 8;
    spec.n_rois = 20;
    spec.informative_rois = {2, 9};
    spec.effect_size = 1.2;
    spec.seed = 7;
    const SyntheticCohort cohort = generate_synthetic(spec);
    save_feature_table(base + "/group.csv", cohort.group);
    save_feature_table(base + "/case.csv", cohort.case_study);
    save_cohort_covariates(base + "/covariates.csv", cohort);

    PipelineConfig cfg = tiny_config();
    cfg.contrasts = {"ACAM-J1 vs Counting", "ACAM-J2 vs Memory"};
    cfg.permutation_iterations = 6;
    cfg.permutation_contrasts = {"ACAM-J1 vs Counting"};
    cfg.paths.group_csv = base + "/group.csv";
    cfg.paths.case_csv = base + "/case.csv";
    cfg.paths.covariates_csv = base + "/covariates.csv";

    cfg.paths.out_dir = base + "/run_a";
    cfg.threads = 1;
    const RunManifest a = run_all(cfg);
    CHECK(a.all_ok);
    CHECK(a.failed.empty());
    CHECK(a.manifest["ok"].get<bool>());

    cfg.paths.out_dir = base + "/run_b";
    cfg.threads = 4;
    const RunManifest b = run_all(cfg);
    CHECK(b.all_ok);

    // manifest carries timings and is the one artifact allowed to differ
    auto files_of = [](const std::string& root) {
        std::vector<std::string> rel;
        for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
            if (!e.is_regular_file()) continue;
            const std::string r = std::filesystem::relative(e.path(), root).string();
            if (r != "manifest.json") rel.push_back(r);
        }
        std::sort(rel.begin(), rel.end());
        return rel;
    };
    const std::vector<std::string> fa = files_of(base + "/run_a");
    const std::vector<std::string> fb = files_of(base + "/run_b");
    REQUIRE(fa == fb);
    REQUIRE_FALSE(fa.empty());
    for (const std::string& r : fa) {
        CAPTURE(r);
        CHECK(slurp(base + "/run_a/" + r) == slurp(base + "/run_b/" + r));
    }

    // expected artifact set for one contrast directory
    const std::string cdir = base + "/run_a/ACAM-J1_vs_Counting";
    CHECK(std::filesystem::exists(cdir + "/folds.json"));
    for (int f = 0; f < 3; ++f) {
        CHECK(std::filesystem::exists(cdir + "/selection_fold" + std::to_string(f) + ".json"));
        CHECK(std::filesystem::exists(cdir + "/augmented_fold" + std::to_string(f) + ".csv"));
    }
    CHECK(std::filesystem::exists(cdir + "/augmented_final.csv"));

    const nlohmann::json summary = parse_file(base + "/run_a/summary.json");
    CHECK(summary["contrasts"].size() == 2);
    CHECK(summary["failed"].empty());
    CHECK(summary["overall"]["Acc"]["defined"].get<int>() == 2);
    CHECK(summary["overall"]["p-Value"]["defined"].get<int>() == 1);
    // overall means are recomputable from the per-contrast case tests
    double acc_sum = 0.0;
    for (const auto& block : summary["contrasts"]) {
        acc_sum += block["case_test"]["Acc"].get<double>();
    }
    CHECK(summary["overall"]["Acc"]["mean"].get<double>() == acc_sum / 2.0);

    const nlohmann::json mj = parse_file(cdir + "/metrics_ACAM-J1_vs_Counting.json");
    CHECK(mj["contrast"].get<std::string>() == "ACAM-J1 vs Counting");
    CHECK(mj["folds"].size() == 3);
    REQUIRE(mj.contains("permutation"));
    CHECK(mj["permutation"]["iterations"].get<int>() == 6);
    const double p_json = mj["permutation"]["p_value"].get<double>();
    CHECK(p_json > 0.0);
    CHECK(p_json <= 1.0);
    CHECK(mj["case_test"]["p-Value"].get<double>() == p_json);
    const int n_final = static_cast<int>(mj["final_families"].size());
    for (const auto& fam : mj["final_families"]) {
        CHECK(std::filesystem::exists(cdir + "/model_" + fam.get<std::string>() +
                                      "_final.json"));
    }
    CHECK(n_final == 3);
    CHECK(std::filesystem::exists(cdir + "/importance_ACAM-J1_vs_Counting.csv"));

    const nlohmann::json mj2 =
        parse_file(base + "/run_a/ACAM-J2_vs_Memory/metrics_ACAM-J2_vs_Memory.json");
    CHECK_FALSE(mj2.contains("permutation"));
    CHECK_FALSE(mj2["case_test"].contains("p-Value"));

    // the standalone permutation entry point reproduces the run_all p-value
    const PipelineInputs inputs = load_pipeline_inputs(cfg, make_default_registry());
    const ContrastJob job = make_contrast_job(contrast_by_name("ACAM-J1 vs Counting"), inputs, false);
    const CvArtifacts cv = run_group_cv(cfg, job);
    const FinalArtifacts fin = finalize_and_test(cfg, job, cv);
    const PermutationTest pt = run_permutation(cfg, job, fin);
    CHECK(pt.p_value == p_json);
    const auto nulls_json = mj["permutation"]["nulls"].get<std::vector<double>>();
    REQUIRE(nulls_json.size() == pt.nulls.size());
    for (std::size_t i = 0; i < pt.nulls.size(); ++i) CHECK(pt.nulls[i] == nulls_json[i]);
}

TEST_CASE("sentinel rows never cross the fold boundary") {
    const std::string base = fresh_dir("sentinel");
    GeneratorSpec spec;
    spec.n_subjects = 8;
    spec.n_rois = 16;
    spec.seed = 11;
    SyntheticCohort cohort = generate_synthetic(spec);

    // exact binary fractions so the CSV/JSON writers round-trip them verbatim
    const std::string case_sentinel = "31337.125";
    const std::string val_sentinel = "31337.25";
    cohort.case_study.features.setConstant(31337.125);
    const std::string victim = "sub03";
    for (Index i = 0; i < cohort.group.n_samples(); ++i) {
        if (cohort.group.meta[static_cast<std::size_t>(i)].subject_id == victim) {
            cohort.group.features.row(i).setConstant(31337.25);
        }
    }
    save_feature_table(base + "/group.csv", cohort.group);
    save_feature_table(base + "/case.csv", cohort.case_study);

    PipelineConfig cfg = tiny_config();
    cfg.contrasts = {"ACAM-J1 vs Counting"};
    cfg.persist_fold_models = true;
    cfg.threads = 2;
    cfg.paths.group_csv = base + "/group.csv";
    cfg.paths.case_csv = base + "/case.csv";
    cfg.paths.out_dir = base + "/run";
    const RunManifest res = run_all(cfg);
    REQUIRE(res.all_ok);

    // locate the victim's validation fold
    const std::string cdir = base + "/run/ACAM-J1_vs_Counting";
    const ContrastSelection sel = select_contrast(cohort.group, contrast_by_name("ACAM-J1 vs Counting"));
    const nlohmann::json folds = parse_file(cdir + "/folds.json");
    int victim_fold = -1;
    for (int f = 0; f < 3; ++f) {
        for (const auto& idx : folds["folds"][f]["val_idx"]) {
            if (sel.data.meta[idx.get<std::size_t>()].subject_id == victim) {
                REQUIRE((victim_fold == -1 || victim_fold == f));
                victim_fold = f;
            }
        }
    }
    REQUIRE(victim_fold >= 0);

    for (int f = 0; f < 3; ++f) {
        const std::string tag = "_fold" + std::to_string(f);
        const std::string aug = slurp(cdir + "/augmented" + tag + ".csv");
        CAPTURE(f);
        if (f == victim_fold) {
            // held out: the subject's values may not reach this fold's training set
            CHECK(aug.find(val_sentinel) == std::string::npos);
            for (const auto& e : std::filesystem::directory_iterator(cdir)) {
                const std::string name = e.path().filename().string();
                if (name.rfind("model_", 0) == 0 &&
                    name.find(tag + ".json") != std::string::npos) {
                    CHECK(slurp(e.path().string()).find(val_sentinel) == std::string::npos);
                }
            }
        } else {
            // elsewhere the subject legitimately trains; the scan must see it
            CHECK(aug.find(val_sentinel) != std::string::npos);
        }
    }
    CHECK(slurp(cdir + "/augmented_final.csv").find(val_sentinel) != std::string::npos);

    // case rows feed exactly one prediction call; no artifact may hold them
    for (const auto& e : std::filesystem::recursive_directory_iterator(base + "/run")) {
        if (!e.is_regular_file()) continue;
        CAPTURE(e.path().string());
        CHECK(slurp(e.path().string()).find(case_sentinel) == std::string::npos);
    }
}

TEST_CASE("residualized twin mirrors fold plans and reports deltas") {
    const std::string base = fresh_dir("resid");
    GeneratorSpec spec;
    spec.n_subjects = 8;
    spec.n_rois = 16;
    spec.informative_rois = {4, 10};
    spec.effect_size = 1.5;
    spec.seed = 13;
    const SyntheticCohort cohort = generate_synthetic(spec);
    save_feature_table(base + "/group.csv", cohort.group);
    save_feature_table(base + "/case.csv", cohort.case_study);
    save_cohort_covariates(base + "/covariates.csv", cohort);

    PipelineConfig cfg = tiny_config();
    cfg.contrasts = {"ACAM-J1 vs Counting"};
    cfg.residualize = true;
    cfg.threads = 2;
    cfg.paths.group_csv = base + "/group.csv";
    cfg.paths.case_csv = base + "/case.csv";
    cfg.paths.covariates_csv = base + "/covariates.csv";
    cfg.paths.out_dir = base + "/run";
    const RunManifest res = run_all(cfg);
    REQUIRE(res.all_ok);

    const std::string raw_dir = base + "/run/ACAM-J1_vs_Counting";
    const std::string resid_dir = base + "/run/ACAM-J1_vs_Counting__resid";
    REQUIRE(std::filesystem::is_directory(raw_dir));
    REQUIRE(std::filesystem::is_directory(resid_dir));
    CHECK(slurp(raw_dir + "/folds.json") == slurp(resid_dir + "/folds.json"));

    const nlohmann::json rm = parse_file(resid_dir + "/metrics_ACAM-J1_vs_Counting__resid.json");
    CHECK(rm["residualized"].get<bool>());

    const nlohmann::json cmp = parse_file(base + "/run/residual_vs_raw.json");
    REQUIRE(cmp["contrasts"].size() == 1);
    const nlohmann::json& row = cmp["contrasts"][0];
    CHECK(row["contrast"].get<std::string>() == "ACAM-J1 vs Counting");
    REQUIRE(row["Acc"]["raw"].is_number());
    REQUIRE(row["Acc"]["residual"].is_number());
    CHECK(row["Acc"]["delta"].get<double>() ==
          doctest::Approx(row["Acc"]["residual"].get<double>() -
                          row["Acc"]["raw"].get<double>())
              .epsilon(1e-12));
    CHECK(cmp["overall"]["Acc"]["defined"].get<int>() == 1);

    const nlohmann::json summary = parse_file(base + "/run/summary.json");
    CHECK(summary.contains("overall_residualized"));
    CHECK(summary["contrasts"].size() == 2);
}

TEST_CASE("a failing contrast is reported without stopping the rest") {
    const std::string base = fresh_dir("partial");
    GeneratorSpec spec;
    spec.n_subjects = 6;
    spec.n_rois = 12;
    spec.seed = 21;
    SyntheticCohort cohort = generate_synthetic(spec);
    // strip J2 rows from the case cohort so "ACAM-J1 vs ACAM-J2" has no case side
    Dataset& cs = cohort.case_study;
    std::vector<Index> keep;
    for (Index i = 0; i < cs.n_samples(); ++i) {
        if (cs.meta[static_cast<std::size_t>(i)].condition != Condition::J2) keep.push_back(i);
    }
    Dataset cut;
    cut.feature_ids = cs.feature_ids;
    cut.features.resize(static_cast<Index>(keep.size()), cs.n_features());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        cut.features.row(static_cast<Index>(i)) = cs.features.row(keep[i]);
        cut.meta.push_back(cs.meta[static_cast<std::size_t>(keep[i])]);
    }
    cs = std::move(cut);
    save_feature_table(base + "/group.csv", cohort.group);
    save_feature_table(base + "/case.csv", cohort.case_study);

    PipelineConfig cfg = tiny_config();
    cfg.contrasts = {"ACAM-J1 vs ACAM-J2", "ACAM-J1 vs Counting"};
    cfg.paths.group_csv = base + "/group.csv";
    cfg.paths.case_csv = base + "/case.csv";
    cfg.paths.out_dir = base + "/run";
    const RunManifest res = run_all(cfg);

    CHECK_FALSE(res.all_ok);
    REQUIRE(res.failed.size() == 1);
    CHECK(res.failed[0].rfind("ACAM-J1_vs_ACAM-J2:", 0) == 0);
    CHECK(std::filesystem::exists(base +
                                  "/run/ACAM-J1_vs_Counting/metrics_ACAM-J1_vs_Counting.json"));
    CHECK(std::filesystem::exists(base + "/run/manifest.json"));
    const nlohmann::json manifest = parse_file(base + "/run/manifest.json");
    CHECK_FALSE(manifest["ok"].get<bool>());
    const nlohmann::json summary = parse_file(base + "/run/summary.json");
    CHECK(summary["failed"].size() == 1);
    CHECK(summary["contrasts"].size() == 1);
}

}  // TEST_SUITE
