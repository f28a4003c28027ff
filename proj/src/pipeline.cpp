#include "absorbkit/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <thread>
#include <unordered_map>
#include <utility>

#include "absorbkit/augmentation.hpp"
#include "absorbkit/residualization.hpp"
#include "absorbkit/rng.hpp"

namespace absorbkit {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, const std::string& context, std::uint64_t a = 0,
                          std::uint64_t b = 0) {
    std::uint64_t h = mix64(seed);
    h = hash_combine(h, hash_string(context));
    h = hash_combine(h, a);
    return hash_combine(h, b);
}

Matrix take_rows(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
    return out;
}

Matrix take_cols(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& cols) {
    Matrix out(x.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = x.col(cols[c]);
    return out;
}

IntVector take_labels(const IntVector& y, const std::vector<Index>& rows) {
    IntVector out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = y(rows[i]);
    return out;
}

std::vector<SampleMeta> take_meta(const std::vector<SampleMeta>& meta,
                                  const std::vector<Index>& rows) {
    std::vector<SampleMeta> out;
    out.reserve(rows.size());
    for (Index r : rows) out.push_back(meta[static_cast<std::size_t>(r)]);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("WriteFailed", "cannot open '" + path + "'");
    out << text;
    if (!out.good()) throw DataError("WriteFailed", "short write to '" + path + "'");
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::size_t family_index(ModelFamily f) {
    for (std::size_t i = 0; i < kAllFamilies.size(); ++i) {
        if (kAllFamilies[i] == f) return i;
    }
    throw DataError("UnknownFamily", "family not in the fixed roster");
}

// Per-column OLS plan for one training slice: covariate columns that are
// constant across the fit rows carry no information and would make the
// design rank-deficient, so they are dropped before the fit.
struct ResidualPlan {
    ResidualModel model;
    std::vector<Index> kept;  // covariate columns used
    std::vector<std::string> names;
};

ResidualPlan fit_residual_plan(const Eigen::Ref<const Matrix>& x_fit,
                               const Eigen::Ref<const Matrix>& c_fit,
                               const std::vector<std::string>& names,
                               std::vector<std::string>* warnings, const std::string& where) {
    ResidualPlan plan;
    std::string dropped;
    for (Index j = 0; j < c_fit.cols(); ++j) {
        if (c_fit.col(j).maxCoeff() > c_fit.col(j).minCoeff()) {
            plan.kept.push_back(j);
            plan.names.push_back(names[static_cast<std::size_t>(j)]);
        } else {
            if (!dropped.empty()) dropped += ", ";
            dropped += names[static_cast<std::size_t>(j)];
        }
    }
    if (!dropped.empty() && warnings != nullptr) {
        warnings->push_back(where + ": dropped constant covariate(s) " + dropped);
    }
    plan.model = fit_residualizer(x_fit, take_cols(c_fit, plan.kept), plan.names);
    return plan;
}

Matrix apply_residual_plan(const ResidualPlan& plan, const Eigen::Ref<const Matrix>& x,
                           const Eigen::Ref<const Matrix>& c,
                           std::vector<std::string>* warnings, const std::string& where) {
    ResidualApply res = apply_residualizer(plan.model, x, take_cols(c, plan.kept), plan.names);
    if (warnings != nullptr) {
        for (const std::string& w : res.warnings) warnings->push_back(where + ": " + w);
    }
    return std::move(res.residuals);
}

/// Map roi ids to column positions of a feature table.
std::vector<Index> columns_for(const std::vector<int>& feature_ids, const std::vector<int>& wanted,
                               const std::string& error_code, const std::string& table_name) {
    std::unordered_map<int, Index> pos;
    pos.reserve(feature_ids.size());
    for (std::size_t c = 0; c < feature_ids.size(); ++c) {
        pos.emplace(feature_ids[c], static_cast<Index>(c));
    }
    std::vector<Index> cols;
    cols.reserve(wanted.size());
    std::string missing;
    for (int id : wanted) {
        const auto it = pos.find(id);
        if (it == pos.end()) {
            if (!missing.empty()) missing += ", ";
            missing += std::to_string(id);
        } else {
            cols.push_back(it->second);
        }
    }
    if (!missing.empty()) {
        throw DataError(error_code, table_name + " table lacks roi column(s) " + missing);
    }
    return cols;
}

std::vector<std::string> subjects_of(const std::vector<SampleMeta>& meta) {
    std::vector<std::string> out;
    out.reserve(meta.size());
    for (const SampleMeta& m : meta) out.push_back(m.subject_id);
    return out;
}

// permutation blocks: a segment's rows always carry one label, so the null
// shuffles segment labels rather than row labels
std::vector<std::string> segments_of(const std::vector<SampleMeta>& meta) {
    std::vector<std::string> out;
    out.reserve(meta.size());
    for (const SampleMeta& m : meta) out.push_back(m.segment_key);
    return out;
}

double accuracy_against(const IntVector& y_true, const IntVector& y_pred) {
    if (y_true.size() == 0) return 0.0;
    Index hits = 0;
    for (Index i = 0; i < y_true.size(); ++i) hits += y_true(i) == y_pred(i) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

/// Family order for the final ensemble: mean validation metric across folds
/// descending, ties by mean AUC descending, then the fixed family order.
/// Families whose metric is defined in no fold rank last (counted out).
std::vector<std::size_t> rank_families_by_cv_summary(const CvArtifacts& cv,
                                                     SelectionMetric metric, int* excluded,
                                                     std::vector<MetricSummary>* summaries) {
    const std::size_t n = kAllFamilies.size();
    std::vector<MetricSummary> primary(n), auc(n);
    for (std::size_t m = 0; m < n; ++m) {
        std::vector<std::optional<double>> pv, av;
        for (const FoldArtifacts& fa : cv.folds) {
            const MetricsReport& r = fa.family_val[m];
            pv.push_back(metric == SelectionMetric::Kappa ? r.kappa : r.accuracy);
            av.push_back(r.auc);
        }
        primary[m] = summarize_metric(pv);
        auc[m] = summarize_metric(av);
    }
    if (excluded != nullptr) {
        *excluded = 0;
        for (const MetricSummary& s : primary) {
            if (!s.mean.has_value()) ++*excluded;
        }
    }
    if (summaries != nullptr) *summaries = primary;

    constexpr double kMissing = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double pa = primary[a].mean.value_or(kMissing);
        const double pb = primary[b].mean.value_or(kMissing);
        if (pa != pb) return pa > pb;
        const double aa = auc[a].mean.value_or(kMissing);
        const double ab = auc[b].mean.value_or(kMissing);
        if (aa != ab) return aa > ab;
        return a < b;
    });
    return order;
}

void run_pool(std::size_t workers, std::size_t n_tasks,
              const std::function<void(std::size_t)>& task) {
    if (n_tasks == 0) return;
    workers = std::min(workers, n_tasks);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_tasks) return;
                task(i);
            }
        });
    }
    for (std::thread& t : pool) t.join();
}

std::size_t resolve_workers(int threads) {
    if (threads > 0) return static_cast<std::size_t>(threads);
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<std::size_t>(hw);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    const auto dt = std::chrono::steady_clock::now() - t0;
    return std::chrono::duration<double>(dt).count();
}

}  // namespace

std::string ContrastJob::dir_name() const {
    return contrast.dir_name() + (residualized ? "__resid" : "");
}

PipelineInputs load_pipeline_inputs(const PipelineConfig& cfg, const RoiRegistry& registry) {
    PipelineInputs in;
    in.group = load_feature_table(cfg.paths.group_csv, registry);
    in.case_study = load_feature_table(cfg.paths.case_csv, registry);
    if (!cfg.paths.covariates_csv.empty()) {
        in.group_covariates = load_covariates(cfg.paths.covariates_csv, in.group);
        in.case_covariates = load_covariates(cfg.paths.covariates_csv, in.case_study);
    }
    return in;
}

namespace {

CovariateTable slice_covariates(const CovariateTable& cov, const Dataset& full,
                                const Dataset& subset) {
    std::unordered_map<std::string, Index> pos;
    pos.reserve(full.meta.size());
    for (std::size_t i = 0; i < full.meta.size(); ++i) {
        pos.emplace(full.meta[i].sample_id, static_cast<Index>(i));
    }
    CovariateTable out;
    out.names = cov.names;
    out.values.resize(subset.n_samples(), cov.values.cols());
    for (Index i = 0; i < subset.n_samples(); ++i) {
        out.values.row(i) =
            cov.values.row(pos.at(subset.meta[static_cast<std::size_t>(i)].sample_id));
    }
    return out;
}

}  // namespace

ContrastJob make_contrast_job(const Contrast& contrast, const PipelineInputs& inputs,
                              bool residualized) {
    ContrastJob job;
    job.contrast = contrast;
    job.group = select_contrast(inputs.group, contrast);
    job.case_study = select_contrast(inputs.case_study, contrast);
    job.residualized = residualized;
    if (job.group.data.n_samples() == 0) {
        throw DataError("EmptyContrast", "no group rows for '" + contrast.name() + "'");
    }
    if (job.case_study.data.n_samples() == 0) {
        throw DataError("EmptyCase", "no case rows for '" + contrast.name() + "'");
    }
    if (residualized) {
        if (!inputs.group_covariates || !inputs.case_covariates) {
            throw ConfigError("MissingCovariates",
                              "residualized variant requires a covariate table");
        }
        job.group_covariates = slice_covariates(*inputs.group_covariates, inputs.group,
                                                job.group.data);
        job.case_covariates = slice_covariates(*inputs.case_covariates, inputs.case_study,
                                               job.case_study.data);
    }
    return job;
}

CvArtifacts run_group_cv(const PipelineConfig& cfg, const ContrastJob& job,
                         const std::string& artifact_dir) {
    const Dataset& ds = job.group.data;
    const IntVector& y = job.group.labels;
    const std::string& name = job.contrast.name();
    if (job.residualized && !job.group_covariates) {
        throw ConfigError("MissingCovariates", "residualized CV without covariates");
    }

    CvArtifacts cv;
    cv.plan = make_folds(ds.meta, y, cfg.k, derive_seed(cfg.seed, "folds/" + name));
    if (!artifact_dir.empty()) {
        std::filesystem::create_directories(artifact_dir);
        write_json_file(artifact_dir + "/folds.json", fold_plan_to_json(cv.plan));
    }

    std::vector<std::vector<int>> per_fold_ids;
    per_fold_ids.reserve(static_cast<std::size_t>(cfg.k));
    for (int f = 0; f < cfg.k; ++f) {
        const Fold& fold = cv.plan.folds[static_cast<std::size_t>(f)];
        Matrix x_train = take_rows(ds.features, fold.train_idx);
        Matrix x_val = take_rows(ds.features, fold.val_idx);
        const IntVector y_train = take_labels(y, fold.train_idx);
        const IntVector y_val = take_labels(y, fold.val_idx);
        const std::string fold_tag = "fold " + std::to_string(f);

        if (job.residualized) {
            const Matrix& c = job.group_covariates->values;
            const ResidualPlan plan =
                fit_residual_plan(x_train, take_rows(c, fold.train_idx),
                                  job.group_covariates->names, &cv.warnings, fold_tag);
            x_train = apply_residual_plan(plan, x_train, take_rows(c, fold.train_idx), nullptr,
                                          fold_tag);
            x_val = apply_residual_plan(plan, x_val, take_rows(c, fold.val_idx), &cv.warnings,
                                        fold_tag);
        }

        FoldArtifacts fa;
        ModelSpec sel_spec = cfg.models;
        sel_spec.seed = derive_seed(cfg.seed, "select/" + name, static_cast<std::uint64_t>(f));
        fa.selection =
            select_features(x_train, y_train, x_val, y_val, ds.feature_ids, sel_spec,
                            cfg.selection);
        fa.selected_roi_ids.reserve(fa.selection.selected.size());
        for (Index c : fa.selection.selected) {
            fa.selected_roi_ids.push_back(ds.feature_ids[static_cast<std::size_t>(c)]);
        }
        const Matrix x_train_sel = take_cols(x_train, fa.selection.selected);
        const Matrix x_val_sel = take_cols(x_val, fa.selection.selected);

        const BalancedTrainingSet bal =
            balance_training_set(x_train_sel, take_meta(ds.meta, fold.train_idx), y_train,
                                 cfg.augment, cfg.seed, name, f);

        std::vector<TrainedModel> candidates;
        candidates.reserve(kAllFamilies.size());
        for (std::size_t m = 0; m < kAllFamilies.size(); ++m) {
            ModelSpec spec = cfg.models;
            spec.family = kAllFamilies[m];
            spec.seed = derive_seed(cfg.seed, "fit/" + name, static_cast<std::uint64_t>(f), m);
            candidates.push_back(fit(spec, bal.x, bal.labels, fa.selected_roi_ids));
        }
        for (const TrainedModel& model : candidates) {
            const Vector probs = model.predict_proba(x_val_sel);
            IntVector pred(probs.size());
            for (Index i = 0; i < probs.size(); ++i) pred(i) = probs(i) >= 0.5 ? 1 : 0;
            fa.family_val.push_back(compute_metrics(y_val, probs, pred));
        }

        TopSelection top =
            select_top(candidates, x_val_sel, y_val, cfg.ensemble_top_l, cfg.selection_metric);
        fa.ranking = std::move(top.ranking);
        for (const TrainedModel& m : top.members) fa.top_families.push_back(m.family());
        const Ensemble ens = make_ensemble(std::move(top.members));
        const EnsemblePrediction pred = ensemble_predict(ens, x_val_sel);
        fa.ensemble_val = compute_metrics(y_val, pred.probs, pred.labels);

        if (!artifact_dir.empty()) {
            const std::string tag = "_fold" + std::to_string(f);
            write_json_file(artifact_dir + "/selection" + tag + ".json",
                            selection_to_json(fa.selection, ds.feature_ids));
            Dataset augmented;
            augmented.features = bal.x;
            augmented.meta = bal.meta;
            augmented.feature_ids = fa.selected_roi_ids;
            save_feature_table(artifact_dir + "/augmented" + tag + ".csv", augmented);
            if (cfg.persist_fold_models) {
                for (const TrainedModel& m : ens.members) {
                    write_json_file(artifact_dir + "/model_" + family_name(m.family()) + tag +
                                        ".json",
                                    m.to_json());
                }
            }
        }

        per_fold_ids.push_back(fa.selected_roi_ids);
        cv.folds.push_back(std::move(fa));
    }

    cv.global = consensus_global(per_fold_ids, cfg.selection.consensus_policy);
    if (cv.global.selected.empty()) {
        ConsensusResult fallback = consensus_global(per_fold_ids, ConsensusPolicy::Union);
        cv.global.selected = std::move(fallback.selected);
        cv.global.warnings.push_back(
            "consensus produced an empty set; falling back to the union of per-fold selections");
    }
    return cv;
}

FinalArtifacts finalize_and_test(const PipelineConfig& cfg, const ContrastJob& job,
                                 const CvArtifacts& cv, const std::string& artifact_dir) {
    const Dataset& gds = job.group.data;
    const Dataset& cds = job.case_study.data;
    const std::string& name = job.contrast.name();

    FinalArtifacts fin;
    fin.global_roi_ids = cv.global.selected;
    if (fin.global_roi_ids.empty()) {
        throw DataError("EmptyFeatureSet", "no features survived consensus for '" + name + "'");
    }
    const std::vector<Index> gcols =
        columns_for(gds.feature_ids, fin.global_roi_ids, "GroupMissingFeatures", "group");
    const std::vector<Index> ccols =
        columns_for(cds.feature_ids, fin.global_roi_ids, "CaseMissingFeatures", "case");

    Matrix x_group_sel = take_cols(gds.features, gcols);
    Matrix x_case_sel = take_cols(cds.features, ccols);
    if (job.residualized) {
        if (!job.group_covariates || !job.case_covariates) {
            throw ConfigError("MissingCovariates", "residualized finalization without covariates");
        }
        const ResidualPlan plan =
            fit_residual_plan(x_group_sel, job.group_covariates->values,
                              job.group_covariates->names, &fin.warnings, "final");
        x_group_sel = apply_residual_plan(plan, x_group_sel, job.group_covariates->values,
                                          nullptr, "final");
        x_case_sel = apply_residual_plan(plan, x_case_sel, job.case_covariates->values,
                                         &fin.warnings, "case");
    }

    BalancedTrainingSet bal = balance_training_set(x_group_sel, gds.meta, job.group.labels,
                                                   cfg.augment, cfg.seed, name, cfg.k);
    fin.x_bal = std::move(bal.x);
    fin.y_bal = std::move(bal.labels);
    fin.bal_base_row = std::move(bal.base_row);
    fin.neutral_values = fin.x_bal.colwise().mean().transpose();

    fin.all_models.reserve(kAllFamilies.size());
    for (std::size_t m = 0; m < kAllFamilies.size(); ++m) {
        ModelSpec spec = cfg.models;
        spec.family = kAllFamilies[m];
        spec.seed = derive_seed(cfg.seed, "fit-final/" + name, m);
        fin.all_models.push_back(fit(spec, fin.x_bal, fin.y_bal, fin.global_roi_ids));
    }

    const std::vector<std::size_t> order =
        rank_families_by_cv_summary(cv, cfg.selection_metric, &fin.excluded_family_count,
                                    nullptr);
    const std::size_t l =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.ensemble_top_l), order.size());
    std::vector<TrainedModel> members;
    members.reserve(l);
    for (std::size_t i = 0; i < l; ++i) {
        fin.final_families.push_back(kAllFamilies[order[i]]);
        members.push_back(fin.all_models[order[i]]);
    }
    fin.ensemble = make_ensemble(std::move(members));

    const EnsemblePrediction pred = ensemble_predict(fin.ensemble, x_case_sel);
    fin.case_test = compute_metrics(job.case_study.labels, pred.probs, pred.labels);
    fin.x_case = std::move(x_case_sel);

    if (!artifact_dir.empty()) {
        std::filesystem::create_directories(artifact_dir);
        Dataset augmented;
        augmented.features = fin.x_bal;
        augmented.meta = std::move(bal.meta);
        augmented.feature_ids = fin.global_roi_ids;
        save_feature_table(artifact_dir + "/augmented_final.csv", augmented);
        for (const TrainedModel& m : fin.ensemble.members) {
            write_json_file(artifact_dir + "/model_" + family_name(m.family()) + "_final.json",
                            m.to_json());
        }
    }
    return fin;
}

double permutation_null_stat(const PipelineConfig& cfg, const ContrastJob& job,
                             const FinalArtifacts& fin, const IntVector& permuted,
                             std::uint64_t iteration) {
    if (cfg.full_null) {
        ContrastJob null_job = job;
        null_job.group.labels = permuted;
        const CvArtifacts null_cv = run_group_cv(cfg, null_job, "");
        const FinalArtifacts null_fin = finalize_and_test(cfg, null_job, null_cv, "");
        return null_fin.case_test.accuracy.value_or(0.0);
    }

    IntVector y_bal(static_cast<Index>(fin.bal_base_row.size()));
    for (std::size_t i = 0; i < fin.bal_base_row.size(); ++i) {
        y_bal(static_cast<Index>(i)) = permuted(fin.bal_base_row[i]);
    }
    if (y_bal.minCoeff() == y_bal.maxCoeff()) {
        throw DataError("DegenerateNull",
                        "permuted labels collapse to one class in the balanced set");
    }

    std::vector<TrainedModel> members;
    members.reserve(fin.final_families.size());
    for (ModelFamily family : fin.final_families) {
        ModelSpec spec = cfg.models;
        spec.family = family;
        spec.seed = derive_seed(cfg.seed, "permfit/" + job.contrast.name(), iteration,
                                family_index(family));
        members.push_back(fit(spec, fin.x_bal, y_bal, fin.global_roi_ids));
    }
    const Ensemble ens = make_ensemble(std::move(members));
    const EnsemblePrediction pred = ensemble_predict(ens, fin.x_case);
    return accuracy_against(job.case_study.labels, pred.labels);
}

PermutationTest run_permutation(const PipelineConfig& cfg, const ContrastJob& job,
                                const FinalArtifacts& fin) {
    const std::vector<std::string> subjects = subjects_of(job.group.data.meta);
    const double observed = fin.case_test.accuracy.value_or(0.0);
    return permutation_test(
        observed, job.group.labels, subjects, cfg.permutation_iterations, cfg.seed,
        [&](const IntVector& permuted, std::uint64_t it) {
            return permutation_null_stat(cfg, job, fin, permuted, it);
        },
        job.contrast.name(), segments_of(job.group.data.meta));
}

ImportanceMap compute_contrast_importance(const PipelineConfig& cfg, const ContrastJob& job,
                                          const FinalArtifacts& fin) {
    ImportanceMap imp;
    const TrainedModel& rf = fin.all_models[family_index(ModelFamily::RF)];
    const TrainedModel& lr = fin.all_models[family_index(ModelFamily::LR)];
    imp.per_view["forest"] = normalize01(impurity_importances(rf));
    imp.per_view["linear"] = normalize01(linear_coefficients(lr).cwiseAbs());
    Rng rng = derive_rng(cfg.seed, "imp/perm/" + job.contrast.name());
    imp.per_view["permutation"] = normalize01(
        permutation_importance(fin.ensemble, fin.x_bal, fin.y_bal, cfg.importance_repeats, rng));
    imp.aggregated = aggregate_views(imp.per_view);
    imp.loro_drop_counts = leave_one_region_out(fin.all_models, fin.x_case,
                                                job.case_study.labels, fin.neutral_values);
    return imp;
}

void write_importance_csv(const std::string& path, const ImportanceMap& imp,
                          const std::vector<int>& global_roi_ids,
                          const std::vector<int>& all_roi_ids, const RoiRegistry& registry) {
    std::unordered_map<int, std::size_t> pos;
    pos.reserve(global_roi_ids.size());
    for (std::size_t i = 0; i < global_roi_ids.size(); ++i) pos.emplace(global_roi_ids[i], i);

    const Vector& forest = imp.per_view.at("forest");
    const Vector& linear = imp.per_view.at("linear");
    const Vector& permutation = imp.per_view.at("permutation");

    std::vector<int> ids = all_roi_ids;
    std::sort(ids.begin(), ids.end());

    std::string out =
        "roi_id,roi_name,atlas,view_forest,view_linear,view_permutation,aggregated,"
        "loro_drop_count\n";
    for (int id : ids) {
        const RoiEntry& e = registry.entry(id);
        const auto it = pos.find(id);
        double vf = 0.0, vl = 0.0, vp = 0.0, va = 0.0;
        int drop = 0;
        if (it != pos.end()) {
            const Index c = static_cast<Index>(it->second);
            vf = forest(c);
            vl = linear(c);
            vp = permutation(c);
            va = imp.aggregated(c);
            drop = imp.loro_drop_counts[it->second];
        }
        out += std::to_string(id) + "," + e.name + "," + atlas_name(e.atlas) + "," +
               format_double(vf) + "," + format_double(vl) + "," + format_double(vp) + "," +
               format_double(va) + "," + std::to_string(drop) + "\n";
    }
    write_text(path, out);
}

namespace {

const std::array<std::pair<const char*, std::optional<double> MetricsReport::*>, 7>
    kSummaryMetrics = {{{"Acc", &MetricsReport::accuracy},
                        {"CK", &MetricsReport::kappa},
                        {"AUC", &MetricsReport::auc},
                        {"Precision", &MetricsReport::precision},
                        {"Recall", &MetricsReport::recall},
                        {"F1", &MetricsReport::f1},
                        {"Specificity", &MetricsReport::specificity}}};

nlohmann::json summary_to_json(const MetricSummary& s) {
    nlohmann::json j;
    j["mean"] = s.mean.has_value() ? nlohmann::json(*s.mean) : nlohmann::json();
    j["sd"] = s.sd.has_value() ? nlohmann::json(*s.sd) : nlohmann::json();
    j["defined"] = s.defined;
    j["missing"] = s.missing;
    return j;
}

}  // namespace

nlohmann::json contrast_metrics_json(const ContrastJob& job, const CvArtifacts& cv,
                                     const FinalArtifacts& fin,
                                     const std::optional<PermutationTest>& perm) {
    nlohmann::json j;
    j["contrast"] = job.contrast.name();
    j["residualized"] = job.residualized;
    j["k"] = cv.plan.k;

    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        const FoldArtifacts& fa = cv.folds[f];
        nlohmann::json jf;
        jf["fold"] = f;
        jf["n_selected"] = fa.selected_roi_ids.size();
        jf["selected_roi_ids"] = fa.selected_roi_ids;
        nlohmann::json families;
        for (std::size_t m = 0; m < kAllFamilies.size(); ++m) {
            families[family_name(kAllFamilies[m])] = metrics_to_json(fa.family_val[m]);
        }
        jf["families"] = families;
        nlohmann::json top = nlohmann::json::array();
        for (ModelFamily fam : fa.top_families) top.push_back(family_name(fam));
        jf["top_families"] = top;
        jf["ensemble"] = metrics_to_json(fa.ensemble_val);
        folds.push_back(std::move(jf));
    }
    j["folds"] = std::move(folds);

    nlohmann::json cv_summary;
    for (const auto& [key, member] : kSummaryMetrics) {
        std::vector<std::optional<double>> values;
        values.reserve(cv.folds.size());
        for (const FoldArtifacts& fa : cv.folds) values.push_back(fa.ensemble_val.*member);
        cv_summary[key] = summary_to_json(summarize_metric(values));
    }
    j["cv_summary"] = std::move(cv_summary);

    int excluded = 0;
    std::vector<MetricSummary> family_summaries;
    rank_families_by_cv_summary(cv, SelectionMetric::Kappa, &excluded, &family_summaries);
    nlohmann::json family_cv;
    for (std::size_t m = 0; m < kAllFamilies.size(); ++m) {
        family_cv[family_name(kAllFamilies[m])] = summary_to_json(family_summaries[m]);
    }
    j["cv_family_summary"] = std::move(family_cv);

    j["global_features"] = {{"count", fin.global_roi_ids.size()},
                            {"roi_ids", fin.global_roi_ids}};
    nlohmann::json finals = nlohmann::json::array();
    for (ModelFamily fam : fin.final_families) finals.push_back(family_name(fam));
    j["final_families"] = std::move(finals);
    j["excluded_family_count"] = fin.excluded_family_count;
    j["case_test"] = metrics_to_json(fin.case_test);
    if (perm.has_value()) {
        j["permutation"] = {{"iterations", perm->nulls.size()},
                            {"observed", perm->observed},
                            {"p_value", perm->p_value},
                            {"nulls", perm->nulls}};
    }

    nlohmann::json warnings = nlohmann::json::array();
    for (const std::string& w : cv.plan.warnings) warnings.push_back(w);
    for (const std::string& w : cv.warnings) warnings.push_back(w);
    for (const std::string& w : cv.global.warnings) warnings.push_back(w);
    for (const std::string& w : fin.warnings) warnings.push_back(w);
    j["warnings"] = std::move(warnings);
    return j;
}

namespace {

struct JobState {
    Contrast contrast{"?", {Condition::J1}, {Condition::Counting}};
    bool residualized = false;
    std::string leaf;  // directory name under out_dir
    std::string dir;   // absolute artifact directory
    bool permute = false;

    ContrastJob job;
    CvArtifacts cv;
    std::optional<FinalArtifacts> fin;
    std::optional<PermutationTest> perm;
    std::vector<double> nulls;

    bool ok = true;
    bool case_consumed = false;
    std::string error;
    double t_cv = 0.0, t_final = 0.0, t_importance = 0.0, t_perm = 0.0;
};

nlohmann::json overall_means(const std::vector<const MetricsReport*>& reports) {
    nlohmann::json out;
    auto add = [&](const char* key, std::optional<double> MetricsReport::*member) {
        double sum = 0.0;
        int defined = 0;
        for (const MetricsReport* r : reports) {
            if ((r->*member).has_value()) {
                sum += (r->*member).value();
                ++defined;
            }
        }
        nlohmann::json entry;
        entry["mean"] = defined > 0 ? nlohmann::json(sum / defined) : nlohmann::json();
        entry["defined"] = defined;
        out[key] = std::move(entry);
    };
    for (const auto& [key, member] : kSummaryMetrics) add(key, member);
    add("p-Value", &MetricsReport::p_value);
    return out;
}

}  // namespace

RunManifest run_all(const PipelineConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    cfg.validate();
    std::filesystem::create_directories(cfg.paths.out_dir);

    RunManifest result;
    result.path = cfg.paths.out_dir + "/manifest.json";

    nlohmann::json manifest;
    manifest["toolkit_version"] = kToolkitVersion;
    manifest["config"] = pipeline_config_to_json(cfg);
    nlohmann::json audit = nlohmann::json::array();

    auto write_manifest = [&] {
        manifest["audit"] = audit;
        manifest["ok"] = result.all_ok;
        manifest["failed"] = result.failed;
        manifest["timings_s"]["total"] = seconds_since(t_start);
        write_json_file(result.path, manifest);
        result.manifest = manifest;
    };

    const RoiRegistry registry = make_default_registry();
    PipelineInputs inputs;
    try {
        const auto t_load = std::chrono::steady_clock::now();
        inputs = load_pipeline_inputs(cfg, registry);
        audit.push_back({{"resource", cfg.paths.group_csv}, {"phase", "load"}});
        audit.push_back({{"resource", cfg.paths.case_csv}, {"phase", "load"}});
        if (!cfg.paths.covariates_csv.empty()) {
            audit.push_back({{"resource", cfg.paths.covariates_csv}, {"phase", "load"}});
        }
        manifest["timings_s"]["load"] = seconds_since(t_load);
    } catch (const Error& e) {
        result.all_ok = false;
        result.failed.push_back(std::string("load: ") + e.what());
        manifest["fatal"] = e.what();
        write_manifest();
        throw;
    }

    // contrast roster: the defaults, filtered when the config names a subset
    std::vector<Contrast> chosen;
    {
        const std::vector<Contrast> all = default_contrasts();
        if (cfg.contrasts.empty()) {
            chosen = all;
        } else {
            const std::set<std::string> wanted(cfg.contrasts.begin(), cfg.contrasts.end());
            for (const Contrast& c : all) {
                if (wanted.count(c.name()) > 0) chosen.push_back(c);
            }
        }
    }

    const std::set<std::string> perm_wanted(cfg.permutation_contrasts.begin(),
                                            cfg.permutation_contrasts.end());
    auto permute_this = [&](const std::string& name) {
        if (cfg.permutation_iterations <= 0) return false;
        return perm_wanted.empty() || perm_wanted.count(name) > 0;
    };

    std::vector<JobState> jobs;
    for (int variant = 0; variant < (cfg.residualize ? 2 : 1); ++variant) {
        for (const Contrast& c : chosen) {
            JobState s;
            s.contrast = c;
            s.residualized = variant == 1;
            s.leaf = c.dir_name() + (s.residualized ? "__resid" : "");
            s.dir = cfg.paths.out_dir + "/" + s.leaf;
            s.permute = permute_this(c.name());
            jobs.push_back(std::move(s));
        }
    }

    const std::size_t workers = resolve_workers(cfg.threads);

    // phase 1: CV + finalization + importance, one task per contrast variant
    run_pool(workers, jobs.size(), [&](std::size_t i) {
        JobState& s = jobs[i];
        try {
            s.job = make_contrast_job(s.contrast, inputs, s.residualized);
            auto t0 = std::chrono::steady_clock::now();
            s.cv = run_group_cv(cfg, s.job, s.dir);
            s.t_cv = seconds_since(t0);

            t0 = std::chrono::steady_clock::now();
            s.fin = finalize_and_test(cfg, s.job, s.cv, s.dir);
            s.case_consumed = true;
            s.t_final = seconds_since(t0);

            t0 = std::chrono::steady_clock::now();
            const ImportanceMap imp = compute_contrast_importance(cfg, s.job, *s.fin);
            write_importance_csv(s.dir + "/importance_" + s.leaf + ".csv", imp,
                                 s.fin->global_roi_ids, s.job.group.data.feature_ids, registry);
            s.t_importance = seconds_since(t0);
        } catch (const Error& e) {
            s.ok = false;
            s.error = e.what();
        } catch (const std::exception& e) {
            s.ok = false;
            s.error = std::string("Internal: ") + e.what();
        }
    });

    // phase 2: deferred permutation iterations, one task per (job, iteration)
    struct NullTask {
        std::size_t job;
        int iteration;
    };
    std::vector<NullTask> tasks;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        JobState& s = jobs[i];
        if (!s.ok || !s.permute) continue;
        s.nulls.assign(static_cast<std::size_t>(cfg.permutation_iterations), 0.0);
        for (int it = 0; it < cfg.permutation_iterations; ++it) tasks.push_back({i, it});
    }
    std::vector<std::string> task_errors(tasks.size());
    std::vector<double> task_seconds(tasks.size(), 0.0);
    run_pool(workers, tasks.size(), [&](std::size_t t) {
        const NullTask& task = tasks[t];
        JobState& s = jobs[task.job];
        try {
            const auto t0 = std::chrono::steady_clock::now();
            const IntVector permuted = permute_labels_within_subjects(
                s.job.group.labels, subjects_of(s.job.group.data.meta),
                segments_of(s.job.group.data.meta), cfg.seed, s.job.contrast.name(),
                static_cast<std::uint64_t>(task.iteration));
            s.nulls[static_cast<std::size_t>(task.iteration)] = permutation_null_stat(
                cfg, s.job, *s.fin, permuted, static_cast<std::uint64_t>(task.iteration));
            task_seconds[t] = seconds_since(t0);
        } catch (const Error& e) {
            task_errors[t] = e.what();
        } catch (const std::exception& e) {
            task_errors[t] = std::string("Internal: ") + e.what();
        }
    });
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        JobState& s = jobs[tasks[t].job];
        s.t_perm += task_seconds[t];
        if (!task_errors[t].empty() && s.ok) {
            s.ok = false;
            s.error = task_errors[t];
        }
    }
    for (JobState& s : jobs) {
        if (!s.ok || !s.permute) continue;
        PermutationTest perm;
        perm.observed = s.fin->case_test.accuracy.value_or(0.0);
        perm.nulls = s.nulls;
        long long at_least = 0;
        for (double v : perm.nulls) at_least += v >= perm.observed ? 1 : 0;
        perm.p_value = static_cast<double>(1 + at_least) /
                       static_cast<double>(1 + cfg.permutation_iterations);
        s.fin->case_test.p_value = perm.p_value;
        s.perm = std::move(perm);
        s.nulls.clear();
    }

    // phase 3: serial artifact writes in roster order
    for (JobState& s : jobs) {
        if (!s.ok) continue;
        try {
            const nlohmann::json m = contrast_metrics_json(s.job, s.cv, *s.fin, s.perm);
            write_json_file(s.dir + "/metrics_" + s.leaf + ".json", m);
        } catch (const Error& e) {
            s.ok = false;
            s.error = e.what();
        }
    }

    // summary + residual comparison + manifest
    nlohmann::json summary;
    nlohmann::json contrast_blocks = nlohmann::json::array();
    std::vector<const MetricsReport*> raw_reports, resid_reports;
    for (const JobState& s : jobs) {
        if (!s.ok) continue;
        nlohmann::json block;
        block["contrast"] = s.contrast.name();
        block["dir"] = s.leaf;
        block["residualized"] = s.residualized;
        block["global_feature_count"] = s.fin->global_roi_ids.size();
        nlohmann::json finals = nlohmann::json::array();
        for (ModelFamily fam : s.fin->final_families) finals.push_back(family_name(fam));
        block["final_families"] = std::move(finals);
        block["case_test"] = metrics_to_json(s.fin->case_test);
        contrast_blocks.push_back(std::move(block));
        (s.residualized ? resid_reports : raw_reports).push_back(&s.fin->case_test);
    }
    summary["contrasts"] = std::move(contrast_blocks);
    summary["overall"] = overall_means(raw_reports);
    if (cfg.residualize) summary["overall_residualized"] = overall_means(resid_reports);

    for (const JobState& s : jobs) {
        if (!s.ok) {
            result.all_ok = false;
            result.failed.push_back(s.leaf + ": " + s.error);
        }
    }
    summary["failed"] = result.failed;
    write_json_file(cfg.paths.out_dir + "/summary.json", summary);

    if (cfg.residualize) {
        nlohmann::json cmp;
        nlohmann::json rows = nlohmann::json::array();
        std::vector<std::optional<double>> acc_deltas, kappa_deltas;
        for (const JobState& s : jobs) {
            if (s.residualized || !s.ok) continue;
            const JobState* twin = nullptr;
            for (const JobState& r : jobs) {
                if (r.residualized && r.ok && r.contrast.name() == s.contrast.name()) {
                    twin = &r;
                    break;
                }
            }
            if (twin == nullptr) continue;
            nlohmann::json row;
            row["contrast"] = s.contrast.name();
            auto pair_block = [&](std::optional<double> raw_v, std::optional<double> res_v,
                                  std::vector<std::optional<double>>& deltas) {
                nlohmann::json b;
                b["raw"] = raw_v.has_value() ? nlohmann::json(*raw_v) : nlohmann::json();
                b["residual"] = res_v.has_value() ? nlohmann::json(*res_v) : nlohmann::json();
                if (raw_v.has_value() && res_v.has_value()) {
                    b["delta"] = *res_v - *raw_v;
                    deltas.push_back(*res_v - *raw_v);
                } else {
                    b["delta"] = nlohmann::json();
                    deltas.push_back(std::nullopt);
                }
                return b;
            };
            row["Acc"] = pair_block(s.fin->case_test.accuracy, twin->fin->case_test.accuracy,
                                    acc_deltas);
            row["CK"] = pair_block(s.fin->case_test.kappa, twin->fin->case_test.kappa,
                                   kappa_deltas);
            rows.push_back(std::move(row));
        }
        cmp["contrasts"] = std::move(rows);
        auto mean_delta = [](const std::vector<std::optional<double>>& deltas) {
            double sum = 0.0;
            int n = 0;
            for (const auto& d : deltas) {
                if (d.has_value()) {
                    sum += *d;
                    ++n;
                }
            }
            nlohmann::json b;
            b["mean_delta"] = n > 0 ? nlohmann::json(sum / n) : nlohmann::json();
            b["defined"] = n;
            return b;
        };
        cmp["overall"] = {{"Acc", mean_delta(acc_deltas)}, {"CK", mean_delta(kappa_deltas)}};
        write_json_file(cfg.paths.out_dir + "/residual_vs_raw.json", cmp);
    }

    nlohmann::json contrast_manifest = nlohmann::json::array();
    for (const JobState& s : jobs) {
        nlohmann::json block;
        block["contrast"] = s.contrast.name();
        block["dir"] = s.leaf;
        block["residualized"] = s.residualized;
        block["ok"] = s.ok;
        if (!s.ok) block["error"] = s.error;
        nlohmann::json artifacts = nlohmann::json::array();
        std::vector<std::string> names;
        if (std::filesystem::is_directory(s.dir)) {
            for (const auto& entry : std::filesystem::directory_iterator(s.dir)) {
                names.push_back(entry.path().filename().string());
            }
        }
        std::sort(names.begin(), names.end());
        for (const std::string& n : names) artifacts.push_back(s.leaf + "/" + n);
        block["artifacts"] = std::move(artifacts);
        block["timings_s"] = {{"cv", s.t_cv},
                              {"finalize", s.t_final},
                              {"importance", s.t_importance},
                              {"permutation", s.t_perm}};
        contrast_manifest.push_back(std::move(block));
        if (s.case_consumed) {
            audit.push_back({{"resource", "case_rows/" + s.leaf}, {"phase", "final_test"}});
        }
    }
    manifest["contrasts"] = std::move(contrast_manifest);

    write_manifest();
    return result;
}

}  // namespace absorbkit
