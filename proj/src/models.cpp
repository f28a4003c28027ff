#include "absorbkit/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absorbkit/rng.hpp"

namespace absorbkit {

std::string family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::LR: return "LR";
        case ModelFamily::DT: return "DT";
        case ModelFamily::RF: return "RF";
        case ModelFamily::SVM_LINEAR: return "SVM";
        case ModelFamily::KNN: return "KNN";
        case ModelFamily::MLP: return "MLP";
    }
    return "unknown";
}

ModelFamily parse_family(const std::string& name) {
    for (ModelFamily f : kAllFamilies) {
        if (family_name(f) == name) return f;
    }
    throw ConfigError("UnknownFamily", "no model family named '" + name + "'");
}

Standardizer Standardizer::fit(const Eigen::Ref<const Matrix>& x) {
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
        const double sd = std::sqrt((x.col(c).array() - s.mean(c)).square().sum() / n);
        s.scale(c) = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

Matrix Standardizer::transform(const Eigen::Ref<const Matrix>& x) const {
    if (x.cols() != mean.size()) {
        throw DataError("DimensionMismatch", "standardizer expects " + std::to_string(mean.size()) +
                                                 " columns, got " + std::to_string(x.cols()));
    }
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

// ---------------------------------------------------------------- logistic

double lr_loss(const Matrix& z, const IntVector& y, const Vector& w, double b, double c_reg) {
    double loss = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
        const double f = z.row(i).dot(w) + b;
        loss += softplus(f) - (y(i) == 1 ? f : 0.0);
    }
    return loss + w.squaredNorm() / (2.0 * c_reg);
}

detail::LinearParams fit_lr(const LrHyper& hyper, const Matrix& z, const IntVector& y) {
    const Index n = z.rows();
    const Index d = z.cols();
    Vector w = Vector::Zero(d);
    double b = 0.0;

    for (int iter = 0; iter < hyper.max_iter; ++iter) {
        Vector p(n), s(n);
        for (Index i = 0; i < n; ++i) {
            p(i) = sigmoid(z.row(i).dot(w) + b);
            s(i) = p(i) * (1.0 - p(i));
        }
        Vector resid = p;
        for (Index i = 0; i < n; ++i) resid(i) -= (y(i) == 1 ? 1.0 : 0.0);

        Vector g(d + 1);
        g.head(d) = z.transpose() * resid + w / hyper.c;
        g(d) = resid.sum();
        if (g.lpNorm<Eigen::Infinity>() < hyper.tol) break;

        Matrix h(d + 1, d + 1);
        h.topLeftCorner(d, d) = z.transpose() * s.asDiagonal() * z;
        h.topLeftCorner(d, d).diagonal().array() += 1.0 / hyper.c;
        const Vector zs = z.transpose() * s;
        h.topRightCorner(d, 1) = zs;
        h.bottomLeftCorner(1, d) = zs.transpose();
        h(d, d) = s.sum();

        Vector step = h.ldlt().solve(g);
        if (!step.allFinite()) step = g;  // singular Hessian: fall back to gradient

        const double base = lr_loss(z, y, w, b, hyper.c);
        double t = 1.0;
        Vector w_new = w - t * step.head(d);
        double b_new = b - t * step(d);
        while (t > 1e-10 && lr_loss(z, y, w_new, b_new, hyper.c) > base) {
            t *= 0.5;
            w_new = w - t * step.head(d);
            b_new = b - t * step(d);
        }
        w = w_new;
        b = b_new;
    }

    detail::LinearParams out;
    out.w = std::move(w);
    out.b = b;
    return out;
}

// ------------------------------------------------------------------- Platt
// Sigmoid calibration (Lin & Weng variant): p = sigmoid(-(a*f + b)) with
// smoothed targets, fit by damped Newton on the calibration cross-entropy.

void fit_platt(const Vector& f, const IntVector& y, double& a_out, double& b_out) {
    const Index n = f.size();
    double n_pos = 0.0;
    for (Index i = 0; i < n; ++i) n_pos += (y(i) == 1) ? 1.0 : 0.0;
    const double n_neg = static_cast<double>(n) - n_pos;
    const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    const double t_neg = 1.0 / (n_neg + 2.0);

    Vector t(n);
    for (Index i = 0; i < n; ++i) t(i) = (y(i) == 1) ? t_pos : t_neg;

    double a = 0.0;
    double b = std::log((n_neg + 1.0) / (n_pos + 1.0));

    auto objective = [&](double aa, double bb) {
        double obj = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double fab = aa * f(i) + bb;
            obj += (fab >= 0.0) ? t(i) * fab + softplus(-fab) : (t(i) - 1.0) * fab + softplus(fab);
        }
        return obj;
    };

    double obj = objective(a, b);
    for (int iter = 0; iter < 100; ++iter) {
        double g_a = 0.0, g_b = 0.0, h_aa = 1e-12, h_ab = 0.0, h_bb = 1e-12;
        for (Index i = 0; i < n; ++i) {
            const double fab = a * f(i) + b;
            const double p = sigmoid(-fab);
            const double d1 = t(i) - p;
            const double d2 = p * (1.0 - p);
            g_a += f(i) * d1;
            g_b += d1;
            h_aa += f(i) * f(i) * d2;
            h_ab += f(i) * d2;
            h_bb += d2;
        }
        if (std::max(std::abs(g_a), std::abs(g_b)) < 1e-10) break;
        const double det = h_aa * h_bb - h_ab * h_ab;
        double da = -(h_bb * g_a - h_ab * g_b) / det;
        double db = -(-h_ab * g_a + h_aa * g_b) / det;
        double step = 1.0;
        while (step > 1e-10) {
            const double cand = objective(a + step * da, b + step * db);
            if (cand < obj + 1e-12) {
                a += step * da;
                b += step * db;
                obj = cand;
                break;
            }
            step *= 0.5;
        }
        if (step <= 1e-10) break;
    }
    a_out = a;
    b_out = b;
}

// --------------------------------------------------------------------- SVM
// L2-regularized L1-loss dual coordinate descent on the bias-augmented
// feature vector; deterministic cyclic sweeps.

detail::LinearParams fit_svm(const SvmHyper& hyper, const Matrix& z, const IntVector& y) {
    const Index n = z.rows();
    const Index d = z.cols();
    Vector y_pm(n);
    for (Index i = 0; i < n; ++i) y_pm(i) = (y(i) == 1) ? 1.0 : -1.0;

    Vector q(n);
    for (Index i = 0; i < n; ++i) q(i) = z.row(i).squaredNorm() + 1.0;  // +1 for the bias column

    Vector alpha = Vector::Zero(n);
    Vector w = Vector::Zero(d);
    double b = 0.0;

    for (int sweep = 0; sweep < hyper.max_iter; ++sweep) {
        double max_change = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double decision = z.row(i).dot(w) + b;
            const double g = y_pm(i) * decision - 1.0;
            const double a_new = std::clamp(alpha(i) - g / q(i), 0.0, hyper.c);
            const double delta = a_new - alpha(i);
            if (delta != 0.0) {
                alpha(i) = a_new;
                w += delta * y_pm(i) * z.row(i).transpose();
                b += delta * y_pm(i);
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < hyper.tol) break;
    }

    detail::LinearParams out;
    out.w = std::move(w);
    out.b = b;
    out.platt = true;
    Vector decisions(n);
    for (Index i = 0; i < n; ++i) decisions(i) = z.row(i).dot(out.w) + out.b;
    fit_platt(decisions, y, out.platt_a, out.platt_b);
    return out;
}

// ------------------------------------------------------------------- trees

// Minimizing the weighted child gini equals maximizing
//   G = (posL^2 + negL^2)/nL + (posR^2 + negR^2)/nR,
// kept as the exact integer fraction num/den so that mathematically tied
// splits compare equal and the (lower feature, lower threshold) tie-break
// is well defined.
struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    long long num = 0;
    long long den = 1;
};

bool fraction_greater(long long num_a, long long den_a, long long num_b, long long den_b) {
    return static_cast<__int128>(num_a) * den_b > static_cast<__int128>(num_b) * den_a;
}

// Best gini split over the given candidate features; features must be in
// ascending order so that the strict '>' keeps the lowest (feature,
// threshold) among exact ties.
SplitChoice best_split(const Eigen::Ref<const Matrix>& x, const IntVector& y,
                       const std::vector<Index>& rows, const std::vector<Index>& features) {
    SplitChoice best;
    const long long n = static_cast<long long>(rows.size());
    std::vector<std::pair<double, int>> vals(rows.size());
    long long total_pos = 0;
    for (Index r : rows) total_pos += (y(r) == 1) ? 1 : 0;

    for (Index f : features) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            vals[i] = {x(rows[i], f), y(rows[i]) == 1 ? 1 : 0};
        }
        std::sort(vals.begin(), vals.end());
        long long left_n = 0, left_pos = 0;
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            left_n++;
            left_pos += vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;
            const long long right_n = n - left_n;
            const long long right_pos = total_pos - left_pos;
            const long long left_neg = left_n - left_pos;
            const long long right_neg = right_n - right_pos;
            const long long num = (left_pos * left_pos + left_neg * left_neg) * right_n +
                                  (right_pos * right_pos + right_neg * right_neg) * left_n;
            const long long den = left_n * right_n;
            if (!best.found || fraction_greater(num, den, best.num, best.den)) {
                best.found = true;
                best.feature = static_cast<int>(f);
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                best.num = num;
                best.den = den;
            }
        }
    }
    return best;
}

double gini_of(long long pos, long long tot) {
    const double p = static_cast<double>(pos) / static_cast<double>(tot);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

// Grow one CART tree. feature_picker selects candidate features per node
// (all features for a plain DT, a fresh random subset for forest trees).
template <typename FeaturePicker>
int grow_tree(detail::TreeParams& tree, const Eigen::Ref<const Matrix>& x, const IntVector& y,
              std::vector<Index> rows, int depth, int max_depth, int min_samples_split,
              double inv_n_root, FeaturePicker&& pick_features) {
    auto& nodes = tree.nodes;
    const int node_id = static_cast<int>(nodes.size());
    nodes.emplace_back();

    long long n_pos = 0;
    for (Index r : rows) n_pos += (y(r) == 1) ? 1 : 0;
    const long long n = static_cast<long long>(rows.size());
    nodes[static_cast<std::size_t>(node_id)].prob =
        static_cast<double>(n_pos) / static_cast<double>(n);

    if (depth >= max_depth || n < min_samples_split || n_pos == 0 || n_pos == n) {
        return node_id;
    }
    const auto features = pick_features();
    const auto split = best_split(x, y, rows, features);
    // weighted child gini strictly below the node's own gini, compared exactly:
    // sum_c n_c*gini_c < n*gini_parent  <=>  num/den > (pos^2 + neg^2)/n
    const long long n_neg = n - n_pos;
    if (!split.found ||
        !fraction_greater(split.num, split.den, n_pos * n_pos + n_neg * n_neg, n)) {
        return node_id;
    }

    std::vector<Index> left_rows, right_rows;
    for (Index r : rows) {
        (x(r, split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    long long left_pos = 0;
    for (Index r : left_rows) left_pos += (y(r) == 1) ? 1 : 0;
    const long long n_l = static_cast<long long>(left_rows.size());
    const long long n_r = static_cast<long long>(right_rows.size());
    tree.importances(split.feature) +=
        (static_cast<double>(n) * gini_of(n_pos, n) -
         static_cast<double>(n_l) * gini_of(left_pos, n_l) -
         static_cast<double>(n_r) * gini_of(n_pos - left_pos, n_r)) *
        inv_n_root;

    const int left = grow_tree(tree, x, y, std::move(left_rows), depth + 1, max_depth,
                               min_samples_split, inv_n_root, pick_features);
    const int right = grow_tree(tree, x, y, std::move(right_rows), depth + 1, max_depth,
                                min_samples_split, inv_n_root, pick_features);
    auto& node = nodes[static_cast<std::size_t>(node_id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return node_id;
}

double tree_prob(const detail::TreeParams& tree, const Eigen::Ref<const Vector>& row) {
    int id = 0;
    while (tree.nodes[static_cast<std::size_t>(id)].feature >= 0) {
        const auto& n = tree.nodes[static_cast<std::size_t>(id)];
        id = (row(n.feature) <= n.threshold) ? n.left : n.right;
    }
    return tree.nodes[static_cast<std::size_t>(id)].prob;
}

detail::TreeParams fit_dt(const DtHyper& hyper, const Eigen::Ref<const Matrix>& x,
                          const IntVector& y) {
    detail::TreeParams tree;
    tree.importances = Vector::Zero(x.cols());
    std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<Index> all_features(static_cast<std::size_t>(x.cols()));
    std::iota(all_features.begin(), all_features.end(), 0);
    grow_tree(tree, x, y, std::move(rows), 0, hyper.max_depth, hyper.min_samples_split,
              1.0 / static_cast<double>(x.rows()), [&]() { return all_features; });
    return tree;
}

detail::ForestParams fit_rf(const RfHyper& hyper, const Eigen::Ref<const Matrix>& x,
                            const IntVector& y, std::uint64_t seed) {
    const Index n = x.rows();
    const Index d = x.cols();
    Index mtry = hyper.mtry == 0
                     ? std::max<Index>(1, static_cast<Index>(std::sqrt(static_cast<double>(d))))
                     : (hyper.mtry < 0 ? d : std::min<Index>(hyper.mtry, d));

    detail::ForestParams forest;
    forest.trees.resize(static_cast<std::size_t>(hyper.n_trees));
    std::vector<Index> all_features(static_cast<std::size_t>(d));
    std::iota(all_features.begin(), all_features.end(), 0);
    for (int t = 0; t < hyper.n_trees; ++t) {
        Rng rng = derive_rng(seed, "rf/tree", static_cast<std::uint64_t>(t));
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (auto& r : rows) r = static_cast<Index>(rng.uniform_int(static_cast<std::size_t>(n)));

        auto pick = [&]() {
            if (mtry >= d) return all_features;
            auto idx = rng.sample_without_replacement(static_cast<std::size_t>(d),
                                                      static_cast<std::size_t>(mtry));
            std::vector<Index> features(idx.begin(), idx.end());
            std::sort(features.begin(), features.end());
            return features;
        };
        auto& tree = forest.trees[static_cast<std::size_t>(t)];
        tree.importances = Vector::Zero(d);
        grow_tree(tree, x, y, std::move(rows), 0, hyper.max_depth, 2,
                  1.0 / static_cast<double>(n), pick);
    }
    return forest;
}

// --------------------------------------------------------------------- MLP

struct MlpViews {
    Eigen::Map<const Matrix> w1, w2;
    Eigen::Map<const Vector> b1, b2, w3;
    double b3;
};

MlpViews mlp_views(const detail::MlpShape& s, const Vector& p) {
    const double* base = p.data();
    const Index o1 = s.h1 * s.d;
    const Index o2 = o1 + s.h1;
    const Index o3 = o2 + s.h2 * s.h1;
    const Index o4 = o3 + s.h2;
    const Index o5 = o4 + s.h2;
    return MlpViews{Eigen::Map<const Matrix>(base, s.h1, s.d),
                    Eigen::Map<const Matrix>(base + o2, s.h2, s.h1),
                    Eigen::Map<const Vector>(base + o1, s.h1),
                    Eigen::Map<const Vector>(base + o3, s.h2),
                    Eigen::Map<const Vector>(base + o4, s.h2),
                    p(o5)};
}

Vector mlp_forward(const detail::MlpShape& s, const Vector& p,
                   const Eigen::Ref<const Matrix>& x) {
    const auto v = mlp_views(s, p);
    Matrix a1 = ((x * v.w1.transpose()).rowwise() + v.b1.transpose()).cwiseMax(0.0);
    Matrix a2 = ((a1 * v.w2.transpose()).rowwise() + v.b2.transpose()).cwiseMax(0.0);
    return (a2 * v.w3).array() + v.b3;
}

}  // namespace

namespace detail {

double mlp_loss_and_grad(const MlpShape& s, const Vector& p, const Eigen::Ref<const Matrix>& x,
                         const IntVector& y, Vector* grad) {
    const Index n = x.rows();
    const auto v = mlp_views(s, p);

    const Matrix z1 = (x * v.w1.transpose()).rowwise() + v.b1.transpose();
    const Matrix a1 = z1.cwiseMax(0.0);
    const Matrix z2 = (a1 * v.w2.transpose()).rowwise() + v.b2.transpose();
    const Matrix a2 = z2.cwiseMax(0.0);
    const Vector z3 = (a2 * v.w3).array() + v.b3;

    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double yi = (y(i) == 1) ? 1.0 : 0.0;
        loss += std::max(z3(i), 0.0) - z3(i) * yi + std::log1p(std::exp(-std::abs(z3(i))));
    }
    loss /= static_cast<double>(n);
    if (grad == nullptr) return loss;

    Vector dz3(n);
    for (Index i = 0; i < n; ++i) {
        dz3(i) = (sigmoid(z3(i)) - ((y(i) == 1) ? 1.0 : 0.0)) / static_cast<double>(n);
    }
    const Matrix da2 = dz3 * v.w3.transpose();
    const Matrix dz2 = da2.array() * (z2.array() > 0.0).cast<double>();
    const Matrix da1 = dz2 * v.w2;
    const Matrix dz1 = da1.array() * (z1.array() > 0.0).cast<double>();

    grad->resize(s.n_params());
    double* g = grad->data();
    const Index o1 = s.h1 * s.d;
    const Index o2 = o1 + s.h1;
    const Index o3 = o2 + s.h2 * s.h1;
    const Index o4 = o3 + s.h2;
    const Index o5 = o4 + s.h2;
    Eigen::Map<Matrix>(g, s.h1, s.d) = dz1.transpose() * x;
    Eigen::Map<Vector>(g + o1, s.h1) = dz1.colwise().sum();
    Eigen::Map<Matrix>(g + o2, s.h2, s.h1) = dz2.transpose() * a1;
    Eigen::Map<Vector>(g + o3, s.h2) = dz2.colwise().sum();
    Eigen::Map<Vector>(g + o4, s.h2) = a2.transpose() * dz3;
    (*grad)(o5) = dz3.sum();
    return loss;
}

}  // namespace detail

namespace {

detail::MlpParams fit_mlp(const MlpHyper& hyper, const Matrix& z, const IntVector& y,
                          std::uint64_t seed) {
    detail::MlpShape shape;
    shape.d = z.cols();
    shape.h1 = hyper.hidden1;
    shape.h2 = hyper.hidden2;

    Vector params(shape.n_params());
    {
        Rng rng = derive_rng(seed, "mlp/init");
        double* p = params.data();
        const Index o1 = shape.h1 * shape.d;
        const Index o2 = o1 + shape.h1;
        const Index o3 = o2 + shape.h2 * shape.h1;
        const Index o4 = o3 + shape.h2;
        const Index o5 = o4 + shape.h2;
        const double s1 = std::sqrt(2.0 / static_cast<double>(shape.d));   // He for ReLU
        const double s2 = std::sqrt(2.0 / static_cast<double>(shape.h1));
        const double s3 = std::sqrt(1.0 / static_cast<double>(shape.h2));  // near-linear output
        for (Index i = 0; i < o1; ++i) p[i] = rng.normal() * s1;
        for (Index i = o1; i < o2; ++i) p[i] = 0.0;
        for (Index i = o2; i < o3; ++i) p[i] = rng.normal() * s2;
        for (Index i = o3; i < o4; ++i) p[i] = 0.0;
        for (Index i = o4; i < o5; ++i) p[i] = rng.normal() * s3;
        p[o5] = 0.0;
    }

    // hold out a monitoring split when early stopping is on
    const Index n = z.rows();
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Index n_val = 0;
    if (hyper.early_stopping && n >= 2) {
        Rng vrng = derive_rng(seed, "mlp/val");
        vrng.shuffle(idx);
        n_val = std::clamp<Index>(static_cast<Index>(std::lround(hyper.val_fraction *
                                                                 static_cast<double>(n))),
                                  1, n - 1);
    }
    const Index n_train = n - n_val;
    Matrix x_train(n_train, z.cols()), x_val(n_val, z.cols());
    IntVector y_train(n_train), y_val(n_val);
    for (Index i = 0; i < n_train; ++i) {
        x_train.row(i) = z.row(idx[static_cast<std::size_t>(n_val + i)]);
        y_train(i) = y(idx[static_cast<std::size_t>(n_val + i)]);
    }
    for (Index i = 0; i < n_val; ++i) {
        x_val.row(i) = z.row(idx[static_cast<std::size_t>(i)]);
        y_val(i) = y(idx[static_cast<std::size_t>(i)]);
    }

    Vector m = Vector::Zero(params.size());
    Vector v = Vector::Zero(params.size());
    long t = 0;
    Rng shuffle_rng = derive_rng(seed, "mlp/shuffle");
    std::vector<Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    detail::MlpParams out;
    out.shape = shape;
    Vector best_params = params;
    double best_loss = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    Vector grad;

    for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (Index start = 0; start < n_train; start += hyper.batch_size) {
            const Index len = std::min<Index>(hyper.batch_size, n_train - start);
            Matrix xb(len, z.cols());
            IntVector yb(len);
            for (Index i = 0; i < len; ++i) {
                xb.row(i) = x_train.row(order[static_cast<std::size_t>(start + i)]);
                yb(i) = y_train(order[static_cast<std::size_t>(start + i)]);
            }
            detail::mlp_loss_and_grad(shape, params, xb, yb, &grad);
            ++t;
            const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
            for (Index i = 0; i < params.size(); ++i) {
                m(i) = hyper.beta1 * m(i) + (1.0 - hyper.beta1) * grad(i);
                v(i) = hyper.beta2 * v(i) + (1.0 - hyper.beta2) * grad(i) * grad(i);
                params(i) -= hyper.learning_rate * (m(i) / bc1) /
                             (std::sqrt(v(i) / bc2) + hyper.eps);
            }
        }

        const double monitored = (n_val > 0)
                                     ? detail::mlp_loss_and_grad(shape, params, x_val, y_val, nullptr)
                                     : detail::mlp_loss_and_grad(shape, params, x_train, y_train,
                                                                 nullptr);
        if (monitored < best_loss) {
            best_loss = monitored;
            best_params = params;
            out.best_losses.push_back(monitored);
            bad_epochs = 0;
        } else if (hyper.early_stopping) {
            if (++bad_epochs > hyper.patience) break;
        }
    }

    out.params = hyper.early_stopping ? best_params : params;
    return out;
}

}  // namespace

TrainedModel fit(const ModelSpec& spec, const Eigen::Ref<const Matrix>& x, const IntVector& y,
                 std::vector<int> feature_ids) {
    const Index n = x.rows();
    const Index d = x.cols();
    if (n != y.size()) throw DataError("DimensionMismatch", "rows and labels differ");
    if (n < 2 || d < 1) throw DataError("EmptyDataset", "need at least 2 rows and 1 feature");
    if (!x.allFinite()) throw DataError("NonFinite", "training matrix has non-finite values");
    int n_pos = 0;
    for (Index i = 0; i < n; ++i) {
        if (y(i) != 0 && y(i) != 1) throw DataError("BadLabel", "labels must be 0 or 1");
        n_pos += y(i);
    }
    if (n_pos == 0 || n_pos == n) throw DataError("SingleClass", "both classes must be present");
    if (feature_ids.empty()) {
        feature_ids.resize(static_cast<std::size_t>(d));
        std::iota(feature_ids.begin(), feature_ids.end(), 1);
    } else if (static_cast<Index>(feature_ids.size()) != d) {
        throw DataError("DimensionMismatch", "feature_ids length must match columns");
    }

    TrainedModel model;
    model.spec_ = spec;
    model.feature_ids_ = std::move(feature_ids);
    model.n_train_ = n;

    switch (spec.family) {
        case ModelFamily::LR: {
            model.standardizer_ = Standardizer::fit(x);
            model.params_ = fit_lr(spec.lr, model.standardizer_->transform(x), y);
            break;
        }
        case ModelFamily::SVM_LINEAR: {
            model.standardizer_ = Standardizer::fit(x);
            model.params_ = fit_svm(spec.svm, model.standardizer_->transform(x), y);
            break;
        }
        case ModelFamily::MLP: {
            model.standardizer_ = Standardizer::fit(x);
            model.params_ = fit_mlp(spec.mlp, model.standardizer_->transform(x), y, spec.seed);
            break;
        }
        case ModelFamily::DT:
            model.params_ = fit_dt(spec.dt, x, y);
            break;
        case ModelFamily::RF:
            model.params_ = fit_rf(spec.rf, x, y, spec.seed);
            break;
        case ModelFamily::KNN: {
            detail::KnnParams knn;
            knn.x = x;
            knn.y = y;
            model.params_ = std::move(knn);
            break;
        }
    }
    return model;
}

Vector impurity_importances(const TrainedModel& model) {
    const Index d = static_cast<Index>(model.feature_ids().size());
    if (const auto* tree = std::get_if<detail::TreeParams>(&model.params())) {
        return tree->importances;
    }
    if (const auto* forest = std::get_if<detail::ForestParams>(&model.params())) {
        Vector total = Vector::Zero(d);
        for (const auto& t : forest->trees) total += t.importances;
        return total;
    }
    return Vector::Zero(d);
}

Vector linear_coefficients(const TrainedModel& model) {
    if (const auto* lin = std::get_if<detail::LinearParams>(&model.params())) {
        return lin->w;
    }
    throw DataError("NotLinear",
                    "coefficients exist only for LR and SVM models, not " +
                        family_name(model.family()));
}

Vector TrainedModel::predict_proba(const Eigen::Ref<const Matrix>& x) const {
    if (static_cast<std::size_t>(x.cols()) != feature_ids_.size()) {
        throw DataError("DimensionMismatch",
                        "model expects " + std::to_string(feature_ids_.size()) +
                            " features, got " + std::to_string(x.cols()));
    }
    const Matrix z = standardizer_ ? standardizer_->transform(x) : Matrix(x);
    Vector probs(z.rows());

    if (const auto* lin = std::get_if<detail::LinearParams>(&params_)) {
        for (Index i = 0; i < z.rows(); ++i) {
            const double f = z.row(i).dot(lin->w) + lin->b;
            probs(i) = lin->platt ? sigmoid(-(lin->platt_a * f + lin->platt_b)) : sigmoid(f);
        }
    } else if (const auto* tree = std::get_if<detail::TreeParams>(&params_)) {
        for (Index i = 0; i < z.rows(); ++i) probs(i) = tree_prob(*tree, z.row(i).transpose());
    } else if (const auto* forest = std::get_if<detail::ForestParams>(&params_)) {
        for (Index i = 0; i < z.rows(); ++i) {
            int votes = 0;
            for (const auto& t : forest->trees) {
                votes += (tree_prob(t, z.row(i).transpose()) >= 0.5) ? 1 : 0;
            }
            probs(i) = static_cast<double>(votes) / static_cast<double>(forest->trees.size());
        }
    } else if (const auto* knn = std::get_if<detail::KnnParams>(&params_)) {
        const Index k = std::min<Index>(spec_.knn.k, knn->x.rows());
        std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(knn->x.rows()));
        for (Index i = 0; i < z.rows(); ++i) {
            for (Index j = 0; j < knn->x.rows(); ++j) {
                dist[static_cast<std::size_t>(j)] = {(knn->x.row(j) - z.row(i)).squaredNorm(), j};
            }
            std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
            double pos = 0.0;
            for (Index q = 0; q < k; ++q) {
                pos += (knn->y(dist[static_cast<std::size_t>(q)].second) == 1) ? 1.0 : 0.0;
            }
            probs(i) = pos / static_cast<double>(k);
        }
    } else if (const auto* mlp = std::get_if<detail::MlpParams>(&params_)) {
        const Vector logits = mlp_forward(mlp->shape, mlp->params, z);
        for (Index i = 0; i < z.rows(); ++i) probs(i) = sigmoid(logits(i));
    }
    return probs;
}

IntVector TrainedModel::predict(const Eigen::Ref<const Matrix>& x) const {
    const Vector probs = predict_proba(x);
    IntVector labels(probs.size());
    for (Index i = 0; i < probs.size(); ++i) labels(i) = probs(i) >= 0.5 ? 1 : 0;
    return labels;
}

namespace {

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vector vector_from_json(const nlohmann::json& a) {
    Vector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
    return v;
}

nlohmann::json tree_to_json(const detail::TreeParams& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.prob});
    }
    return {{"nodes", std::move(nodes)}, {"imp", vector_to_json(tree.importances)}};
}

detail::TreeParams tree_from_json(const nlohmann::json& j) {
    detail::TreeParams tree;
    for (const auto& n : j["nodes"]) {
        detail::TreeNode node;
        node.feature = n[0].get<int>();
        node.threshold = n[1].get<double>();
        node.left = n[2].get<int>();
        node.right = n[3].get<int>();
        node.prob = n[4].get<double>();
        tree.nodes.push_back(node);
    }
    tree.importances = vector_from_json(j["imp"]);
    return tree;
}

}  // namespace

nlohmann::json TrainedModel::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["family"] = family_name(spec_.family);
    j["seed"] = spec_.seed;
    j["n_train"] = n_train_;
    j["feature_ids"] = feature_ids_;
    j["hyper"] = {
        {"lr", {{"c", spec_.lr.c}, {"tol", spec_.lr.tol}, {"max_iter", spec_.lr.max_iter}}},
        {"dt",
         {{"max_depth", spec_.dt.max_depth}, {"min_samples_split", spec_.dt.min_samples_split}}},
        {"rf",
         {{"n_trees", spec_.rf.n_trees},
          {"max_depth", spec_.rf.max_depth},
          {"mtry", spec_.rf.mtry}}},
        {"svm", {{"c", spec_.svm.c}, {"tol", spec_.svm.tol}, {"max_iter", spec_.svm.max_iter}}},
        {"knn", {{"k", spec_.knn.k}}},
        {"mlp",
         {{"hidden1", spec_.mlp.hidden1},
          {"hidden2", spec_.mlp.hidden2},
          {"learning_rate", spec_.mlp.learning_rate},
          {"beta1", spec_.mlp.beta1},
          {"beta2", spec_.mlp.beta2},
          {"eps", spec_.mlp.eps},
          {"max_epochs", spec_.mlp.max_epochs},
          {"batch_size", spec_.mlp.batch_size},
          {"val_fraction", spec_.mlp.val_fraction},
          {"patience", spec_.mlp.patience},
          {"early_stopping", spec_.mlp.early_stopping}}},
    };
    if (standardizer_) {
        j["standardizer"] = {{"mean", vector_to_json(standardizer_->mean)},
                             {"scale", vector_to_json(standardizer_->scale)}};
    }

    nlohmann::json p;
    if (const auto* lin = std::get_if<detail::LinearParams>(&params_)) {
        p["w"] = vector_to_json(lin->w);
        p["b"] = lin->b;
        p["platt"] = lin->platt;
        p["platt_a"] = lin->platt_a;
        p["platt_b"] = lin->platt_b;
    } else if (const auto* tree = std::get_if<detail::TreeParams>(&params_)) {
        p["nodes"] = tree_to_json(*tree);
    } else if (const auto* forest = std::get_if<detail::ForestParams>(&params_)) {
        p["trees"] = nlohmann::json::array();
        for (const auto& t : forest->trees) p["trees"].push_back(tree_to_json(t));
    } else if (const auto* knn = std::get_if<detail::KnnParams>(&params_)) {
        p["x"] = nlohmann::json::array();
        for (Index i = 0; i < knn->x.rows(); ++i) {
            p["x"].push_back(vector_to_json(knn->x.row(i).transpose()));
        }
        nlohmann::json ys = nlohmann::json::array();
        for (Index i = 0; i < knn->y.size(); ++i) ys.push_back(knn->y(i));
        p["y"] = std::move(ys);
    } else if (const auto* mlp = std::get_if<detail::MlpParams>(&params_)) {
        p["d"] = mlp->shape.d;
        p["params"] = vector_to_json(mlp->params);
        p["best_losses"] = mlp->best_losses;
    }
    j["params"] = std::move(p);
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
        throw DataError("BadModelArtifact", "unsupported model format version");
    }
    TrainedModel m;
    m.spec_.family = parse_family(j["family"].get<std::string>());
    m.spec_.seed = j["seed"].get<std::uint64_t>();
    m.n_train_ = j["n_train"].get<Index>();
    m.feature_ids_ = j["feature_ids"].get<std::vector<int>>();

    const auto& h = j["hyper"];
    m.spec_.lr = {h["lr"]["c"].get<double>(), h["lr"]["tol"].get<double>(),
                  h["lr"]["max_iter"].get<int>()};
    m.spec_.dt = {h["dt"]["max_depth"].get<int>(), h["dt"]["min_samples_split"].get<int>()};
    m.spec_.rf = {h["rf"]["n_trees"].get<int>(), h["rf"]["max_depth"].get<int>(),
                  h["rf"]["mtry"].get<int>()};
    m.spec_.svm = {h["svm"]["c"].get<double>(), h["svm"]["tol"].get<double>(),
                   h["svm"]["max_iter"].get<int>()};
    m.spec_.knn = {h["knn"]["k"].get<int>()};
    m.spec_.mlp = {h["mlp"]["hidden1"].get<int>(),
                   h["mlp"]["hidden2"].get<int>(),
                   h["mlp"]["learning_rate"].get<double>(),
                   h["mlp"]["beta1"].get<double>(),
                   h["mlp"]["beta2"].get<double>(),
                   h["mlp"]["eps"].get<double>(),
                   h["mlp"]["max_epochs"].get<int>(),
                   h["mlp"]["batch_size"].get<int>(),
                   h["mlp"]["val_fraction"].get<double>(),
                   h["mlp"]["patience"].get<int>(),
                   h["mlp"]["early_stopping"].get<bool>()};

    if (j.contains("standardizer")) {
        Standardizer s;
        s.mean = vector_from_json(j["standardizer"]["mean"]);
        s.scale = vector_from_json(j["standardizer"]["scale"]);
        m.standardizer_ = std::move(s);
    }

    const auto& p = j["params"];
    switch (m.spec_.family) {
        case ModelFamily::LR:
        case ModelFamily::SVM_LINEAR: {
            detail::LinearParams lin;
            lin.w = vector_from_json(p["w"]);
            lin.b = p["b"].get<double>();
            lin.platt = p["platt"].get<bool>();
            lin.platt_a = p["platt_a"].get<double>();
            lin.platt_b = p["platt_b"].get<double>();
            m.params_ = std::move(lin);
            break;
        }
        case ModelFamily::DT:
            m.params_ = tree_from_json(p["nodes"]);
            break;
        case ModelFamily::RF: {
            detail::ForestParams forest;
            for (const auto& t : p["trees"]) forest.trees.push_back(tree_from_json(t));
            m.params_ = std::move(forest);
            break;
        }
        case ModelFamily::KNN: {
            detail::KnnParams knn;
            const auto& rows = p["x"];
            const Index n = static_cast<Index>(rows.size());
            const Index d = n > 0 ? static_cast<Index>(rows[0].size()) : 0;
            knn.x.resize(n, d);
            for (Index i = 0; i < n; ++i) {
                knn.x.row(i) = vector_from_json(rows[static_cast<std::size_t>(i)]).transpose();
            }
            const auto& ys = p["y"];
            knn.y.resize(static_cast<Index>(ys.size()));
            for (std::size_t i = 0; i < ys.size(); ++i) {
                knn.y(static_cast<Index>(i)) = ys[i].get<int>();
            }
            m.params_ = std::move(knn);
            break;
        }
        case ModelFamily::MLP: {
            detail::MlpParams mlp;
            mlp.shape.d = p["d"].get<Index>();
            mlp.shape.h1 = m.spec_.mlp.hidden1;
            mlp.shape.h2 = m.spec_.mlp.hidden2;
            mlp.params = vector_from_json(p["params"]);
            mlp.best_losses = p["best_losses"].get<std::vector<double>>();
            m.params_ = std::move(mlp);
            break;
        }
    }
    return m;
}

}  // namespace absorbkit
