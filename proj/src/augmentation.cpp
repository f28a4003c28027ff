#include "absorbkit/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace absorbkit {

void AugmentConfig::validate() const {
    if (target_runs_per_segment < 1) throw ConfigError("BadAugmentConfig", "target must be >= 1");
    if (k_cap < 1) throw ConfigError("BadAugmentConfig", "k_cap must be >= 1");
    if (noise_level < 0.0) throw ConfigError("BadAugmentConfig", "noise_level must be >= 0");
    if (retention_degree < 0.0 || retention_degree > 1.0) {
        throw ConfigError("BadAugmentConfig", "retention_degree must be in [0,1]");
    }
    if (interpolation_proportion < 0.0 || interpolation_proportion > 1.0) {
        throw ConfigError("BadAugmentConfig", "interpolation_proportion must be in [0,1]");
    }
}

namespace {

Vector column_sd(const Eigen::Ref<const Matrix>& x) {
    const double n = static_cast<double>(x.rows());
    const Vector mean = x.colwise().mean();
    Vector sd(x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
        sd(c) = std::sqrt((x.col(c).array() - mean(c)).square().sum() / n);
    }
    return sd;
}

}  // namespace

Matrix smote_interpolate(const Eigen::Ref<const Matrix>& x_class, Index n_new, int k, Rng& rng) {
    const Index n = x_class.rows();
    if (n < 2) throw DataError("TooFewRows", "SMOTE needs at least 2 rows");
    if (k < 1 || k > static_cast<int>(n) - 1) {
        throw ConfigError("BadNeighborCount",
                          "k must be in [1, rows-1], got " + std::to_string(k));
    }
    Matrix out(n_new, x_class.cols());
    if (n_new == 0) return out;

    // k nearest in-class neighbors per row, ties by lower index
    std::vector<std::vector<Index>> neighbors(static_cast<std::size_t>(n));
    std::vector<std::pair<double, Index>> dist;
    for (Index i = 0; i < n; ++i) {
        dist.clear();
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            dist.emplace_back((x_class.row(i) - x_class.row(j)).squaredNorm(), j);
        }
        std::sort(dist.begin(), dist.end());
        auto& nn = neighbors[static_cast<std::size_t>(i)];
        for (int q = 0; q < k; ++q) nn.push_back(dist[static_cast<std::size_t>(q)].second);
    }

    for (Index s = 0; s < n_new; ++s) {
        const Index base = s % n;
        const auto& nn = neighbors[static_cast<std::size_t>(base)];
        const Index pick = nn[rng.uniform_int(nn.size())];
        const double u = rng.uniform();
        out.row(s) = x_class.row(base) + u * (x_class.row(pick) - x_class.row(base));
    }
    return out;
}

Matrix perturb(const Eigen::Ref<const Matrix>& x, const Vector& col_sd, const AugmentConfig& cfg,
               Rng& rng) {
    cfg.validate();
    if (col_sd.size() != x.cols()) {
        throw DataError("BadColumnSd", "column SD length does not match matrix");
    }
    Matrix out = x;
    const Index d = x.cols();
    const Index n_cols = std::min(d, ceil_fraction(cfg.interpolation_proportion, d));
    if (n_cols == 0) return out;
    for (Index r = 0; r < x.rows(); ++r) {
        const auto cols = rng.sample_without_replacement(static_cast<std::size_t>(d),
                                                         static_cast<std::size_t>(n_cols));
        for (std::size_t ci : cols) {
            const Index c = static_cast<Index>(ci);
            const double eps = rng.normal() * cfg.noise_level * col_sd(c);
            out(r, c) = x(r, c) + (1.0 - cfg.retention_degree) * eps;
        }
    }
    return out;
}

BalancedSegment balance_segment(const Eigen::Ref<const Matrix>& seg, const AugmentConfig& cfg,
                                Rng& rng) {
    cfg.validate();
    const Index n = seg.rows();
    if (n == 0) throw DataError("EmptySegment", "segment has no rows");
    const Index target = cfg.target_runs_per_segment;
    const Index d = seg.cols();

    BalancedSegment out;
    out.rows.resize(target, d);

    if (n >= target) {
        // nothing synthetic to drop; keep the earliest originals
        out.trimmed_originals = static_cast<int>(n - target);
        for (Index i = 0; i < target; ++i) {
            out.rows.row(i) = seg.row(i);
            out.run_ids.push_back(static_cast<int>(i) + 1);
            out.synthetic.push_back(false);
            out.base_row.push_back(i);
        }
        if (cfg.perturb_originals) {
            out.rows = perturb(out.rows, column_sd(seg), cfg, rng);
        }
        return out;
    }

    const Index n_new = target - n;
    const Vector sd = column_sd(seg);
    Matrix synth(n_new, d);
    if (n == 1) {
        // replication fallback; the perturbation below supplies the noise
        for (Index s = 0; s < n_new; ++s) synth.row(s) = seg.row(0);
        out.k_used = 0;
    } else {
        out.k_used = std::min(cfg.k_cap, static_cast<int>(n) - 1);
        synth = smote_interpolate(seg, n_new, out.k_used, rng);
    }
    synth = perturb(synth, sd, cfg, rng);

    Matrix originals = seg;
    if (cfg.perturb_originals) originals = perturb(originals, sd, cfg, rng);

    for (Index i = 0; i < n; ++i) {
        out.rows.row(i) = originals.row(i);
        out.run_ids.push_back(static_cast<int>(i) + 1);
        out.synthetic.push_back(false);
        out.base_row.push_back(i);
    }
    for (Index s = 0; s < n_new; ++s) {
        out.rows.row(n + s) = synth.row(s);
        out.run_ids.push_back(static_cast<int>(n + s) + 1);
        out.synthetic.push_back(true);
        out.base_row.push_back(n == 1 ? 0 : s % n);
    }
    return out;
}

BalancedTrainingSet balance_training_set(const Eigen::Ref<const Matrix>& x,
                                         const std::vector<SampleMeta>& meta,
                                         const IntVector& labels, const AugmentConfig& cfg,
                                         std::uint64_t seed, const std::string& contrast_name,
                                         int fold) {
    cfg.validate();
    if (x.rows() != static_cast<Index>(meta.size()) || x.rows() != labels.size()) {
        throw DataError("RowMetaMismatch", "features, metadata and labels must align");
    }

    // sorted segment map keeps output order independent of input row order
    std::map<std::string, std::vector<Index>> segments;
    for (std::size_t i = 0; i < meta.size(); ++i) {
        segments[meta[i].segment_key].push_back(static_cast<Index>(i));
    }

    BalancedTrainingSet out;
    const Index per_seg = cfg.target_runs_per_segment;
    out.x.resize(static_cast<Index>(segments.size()) * per_seg, x.cols());
    out.labels.resize(out.x.rows());

    Index row = 0;
    for (const auto& [key, rows] : segments) {
        const int label = labels(rows[0]);
        for (Index r : rows) {
            if (labels(r) != label) {
                throw DataError("MixedSegment", "segment '" + key + "' has both labels");
            }
        }
        Matrix seg(static_cast<Index>(rows.size()), x.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            seg.row(static_cast<Index>(i)) = x.row(rows[i]);
        }
        Rng rng = derive_rng(seed, "augment/" + contrast_name, static_cast<std::uint64_t>(fold),
                             hash_string(key));
        const auto balanced = balance_segment(seg, cfg, rng);
        for (Index i = 0; i < per_seg; ++i) {
            out.x.row(row) = balanced.rows.row(i);
            out.labels(row) = label;
            SampleMeta m = meta[static_cast<std::size_t>(rows[0])];
            m.run_id = balanced.run_ids[static_cast<std::size_t>(i)];
            m.sample_id = key + "#run" + std::to_string(m.run_id);
            out.meta.push_back(std::move(m));
            out.synthetic.push_back(balanced.synthetic[static_cast<std::size_t>(i)]);
            const Index seg_base = balanced.base_row[static_cast<std::size_t>(i)];
            out.base_row.push_back(rows[static_cast<std::size_t>(seg_base)]);
            ++row;
        }
    }
    return out;
}

}  // namespace absorbkit
