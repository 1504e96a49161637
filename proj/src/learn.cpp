#include "wbrain/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Dense>

#include "wbrain/errors.hpp"

namespace wbrain {

namespace {

constexpr double kTau = 1e-12;

void check_features(const LabeledDataset& dataset) {
    if (dataset.size() < 2) throw DomainError("dataset needs at least 2 rows");
    if (!dataset.features.allFinite()) throw DomainError("dataset has missing or non-finite features");
}

LabeledDataset select_rows(const LabeledDataset& dataset, const std::vector<Eigen::Index>& rows) {
    LabeledDataset out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.features.resize(n, dataset.features.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.features.row(i) = dataset.features.row(rows[static_cast<std::size_t>(i)]);
    auto pick = [&](const std::vector<std::string>& src, std::vector<std::string>& dst) {
        if (src.empty()) return;
        for (auto r : rows) dst.push_back(src[static_cast<std::size_t>(r)]);
    };
    pick(dataset.labels, out.labels);
    pick(dataset.subject_ids, out.subject_ids);
    pick(dataset.group_ids, out.group_ids);
    if (dataset.targets.size() == dataset.size()) {
        out.targets.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) out.targets(i) = dataset.targets(rows[static_cast<std::size_t>(i)]);
    }
    return out;
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<std::string> class_names(const LabeledDataset& dataset) {
    std::vector<std::string> names;
    for (const auto& l : dataset.labels)
        if (std::find(names.begin(), names.end(), l) == names.end()) names.push_back(l);
    return names;
}

LabeledDataset balance_classes(const LabeledDataset& dataset, std::uint64_t seed) {
    if (static_cast<Eigen::Index>(dataset.labels.size()) != dataset.size())
        throw DomainError("classification dataset needs one label per row");
    const auto names = class_names(dataset);
    if (names.size() != 2) throw DomainError("balancing needs exactly 2 classes, found " + std::to_string(names.size()));

    std::array<std::vector<Eigen::Index>, 2> members;
    for (Eigen::Index i = 0; i < dataset.size(); ++i)
        members[dataset.labels[static_cast<std::size_t>(i)] == names[0] ? 0 : 1].push_back(i);
    if (members[0].size() == members[1].size()) return dataset;

    const std::size_t larger = members[0].size() > members[1].size() ? 0 : 1;
    const std::size_t target = members[1 - larger].size();
    std::mt19937_64 rng(seed);
    auto& big = members[larger];
    std::shuffle(big.begin(), big.end(), rng);
    big.resize(target);

    std::vector<Eigen::Index> rows = members[0];
    rows.insert(rows.end(), members[1].begin(), members[1].end());
    std::sort(rows.begin(), rows.end());
    return select_rows(dataset, rows);
}

std::vector<int> stratified_folds(const std::vector<std::string>& labels, int folds, std::uint64_t seed) {
    if (folds < 2) throw DomainError("cross-validation needs at least 2 folds");
    std::vector<std::string> names;
    for (const auto& l : labels)
        if (std::find(names.begin(), names.end(), l) == names.end()) names.push_back(l);

    std::mt19937_64 rng(seed);
    std::vector<int> fold(labels.size(), -1);
    std::size_t dealt = 0;
    for (const auto& name : names) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name) members.push_back(i);
        if (members.size() < static_cast<std::size_t>(folds))
            throw DomainError("class '" + name + "' has " + std::to_string(members.size()) + " members, fewer than " +
                              std::to_string(folds) + " folds");
        std::shuffle(members.begin(), members.end(), rng);
        for (auto i : members) fold[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
    }
    return fold;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - s.mean;
    const double denom = std::max<double>(1.0, static_cast<double>(x.rows() - 1));
    s.scale = (centered.colwise().squaredNorm() / denom).cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
        if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::VectorXi LinearSvm::predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXi out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = decision(x.row(i)) > 0.0 ? 1 : -1;
    return out;
}

LinearSvm train_linear_svm(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const SvmOptions& options) {
    const Eigen::Index n = x.rows();
    if (y.size() != n) throw DimensionError("label count does not match rows");
    if (!(options.c > 0.0)) throw DomainError("SVM penalty C must be positive");
    if ((y.array() != 1 && y.array() != -1).any()) throw DomainError("SVM labels must be +1 or -1");
    if ((y.array() == 1).all() || (y.array() == -1).all()) throw DomainError("SVM training needs both classes");

    const double c = options.c;
    const Eigen::MatrixXd kernel = x * x.transpose();
    const Eigen::VectorXd yd = y.cast<double>();
    const long max_iter = options.max_iterations > 0 ? options.max_iterations : std::max<long>(10000000L, 100L * n);

    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
    auto upper = [&](Eigen::Index t) { return alpha(t) >= c; };
    auto lower = [&](Eigen::Index t) { return alpha(t) <= 0.0; };

    long iter = 0;
    double violation = std::numeric_limits<double>::infinity();
    for (;; ++iter) {
        // Maximal violating pair with second-order selection of j.
        double gmax = -std::numeric_limits<double>::infinity();
        Eigen::Index i = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (y(t) == 1) {
                if (!upper(t) && -grad(t) >= gmax) { gmax = -grad(t); i = t; }
            } else if (!lower(t) && grad(t) >= gmax) {
                gmax = grad(t);
                i = t;
            }
        }
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index j = -1;
        for (Eigen::Index t = 0; t < n && i >= 0; ++t) {
            double diff = 0.0;
            if (y(t) == 1) {
                if (lower(t)) continue;
                gmax2 = std::max(gmax2, grad(t));
                diff = gmax + grad(t);
            } else {
                if (upper(t)) continue;
                gmax2 = std::max(gmax2, -grad(t));
                diff = gmax - grad(t);
            }
            if (diff > 0.0) {
                const double quad = kernel(i, i) + kernel(t, t) - 2.0 * kernel(i, t);
                const double obj = -(diff * diff) / (quad > 0.0 ? quad : kTau);
                if (obj <= best) { best = obj; j = t; }
            }
        }
        violation = gmax + gmax2;
        if (i < 0 || j < 0 || violation < options.tolerance) break;
        if (iter >= max_iter) throw ConvergenceError("SMO did not reach the KKT tolerance", static_cast<std::size_t>(iter), violation);

        const double qij = yd(i) * yd(j) * kernel(i, j);
        const double old_i = alpha(i);
        const double old_j = alpha(j);
        if (y(i) != y(j)) {
            double quad = kernel(i, i) + kernel(j, j) + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad(i) - grad(j)) / quad;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0.0) {
                if (alpha(j) < 0.0) { alpha(j) = 0.0; alpha(i) = diff; }
            } else if (alpha(i) < 0.0) {
                alpha(i) = 0.0;
                alpha(j) = -diff;
            }
            if (diff > 0.0) {
                if (alpha(i) > c) { alpha(i) = c; alpha(j) = c - diff; }
            } else if (alpha(j) > c) {
                alpha(j) = c;
                alpha(i) = c + diff;
            }
        } else {
            double quad = kernel(i, i) + kernel(j, j) - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad(i) - grad(j)) / quad;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > c) {
                if (alpha(i) > c) { alpha(i) = c; alpha(j) = sum - c; }
            } else if (alpha(j) < 0.0) {
                alpha(j) = 0.0;
                alpha(i) = sum;
            }
            if (sum > c) {
                if (alpha(j) > c) { alpha(j) = c; alpha(i) = sum - c; }
            } else if (alpha(i) < 0.0) {
                alpha(i) = 0.0;
                alpha(j) = sum;
            }
        }
        const double d_i = alpha(i) - old_i;
        const double d_j = alpha(j) - old_j;
        // Q_tk = y_t y_k K_tk
        grad += (yd.cwiseProduct(kernel.col(i)) * (yd(i) * d_i)) + (yd.cwiseProduct(kernel.col(j)) * (yd(j) * d_j));
    }

    // rho from free vectors, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    long free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = yd(t) * grad(t);
        if (upper(t)) {
            if (y(t) == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y(t) == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++free;
            sum_free += yg;
        }
    }

    LinearSvm model;
    model.rho = free > 0 ? sum_free / static_cast<double>(free) : 0.5 * (ub + lb);
    model.weights = x.transpose() * alpha.cwiseProduct(yd);
    model.iterations = iter;
    return model;
}

ClassificationReport cross_validate_svm(const LabeledDataset& dataset, int folds, double c, std::uint64_t seed,
                                        std::vector<std::string> classes) {
    check_features(dataset);
    if (static_cast<Eigen::Index>(dataset.labels.size()) != dataset.size())
        throw DomainError("classification dataset needs one label per row");
    if (classes.empty()) classes = class_names(dataset);
    if (classes.size() != 2) throw DomainError("binary classification needs exactly 2 classes");
    for (const auto& l : dataset.labels)
        if (l != classes[0] && l != classes[1]) throw DomainError("label '" + l + "' is not one of the task classes");

    ClassificationReport report;
    report.classes = classes;
    report.folds = folds;
    report.c = c;
    report.seed = seed;
    report.fold_assignment = stratified_folds(dataset.labels, folds, seed);
    report.predictions.assign(dataset.labels.size(), -1);

    const Eigen::Index n = dataset.size();
    Eigen::VectorXi y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = dataset.labels[static_cast<std::size_t>(i)] == classes[0] ? 1 : -1;

    SvmOptions options;
    options.c = c;
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < n; ++i)
            (report.fold_assignment[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);

        Eigen::MatrixXd x_train(static_cast<Eigen::Index>(train.size()), dataset.features.cols());
        Eigen::VectorXi y_train(static_cast<Eigen::Index>(train.size()));
        for (std::size_t r = 0; r < train.size(); ++r) {
            x_train.row(static_cast<Eigen::Index>(r)) = dataset.features.row(train[r]);
            y_train(static_cast<Eigen::Index>(r)) = y(train[r]);
        }
        const auto scaler = Standardizer::fit(x_train);
        const LinearSvm model = train_linear_svm(scaler.apply(x_train), y_train, options);

        Eigen::MatrixXd x_test(static_cast<Eigen::Index>(test.size()), dataset.features.cols());
        for (std::size_t r = 0; r < test.size(); ++r) x_test.row(static_cast<Eigen::Index>(r)) = dataset.features.row(test[r]);
        const Eigen::VectorXi predicted = model.predict(scaler.apply(x_test));

        long correct = 0;
        for (std::size_t r = 0; r < test.size(); ++r) {
            const int truth = y(test[r]) == 1 ? 0 : 1;
            const int guess = predicted(static_cast<Eigen::Index>(r)) == 1 ? 0 : 1;
            report.predictions[static_cast<std::size_t>(test[r])] = guess;
            ++report.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(guess)];
            if (truth == guess) ++correct;
        }
        report.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
    }

    const auto& acc = report.fold_accuracies;
    report.mean_accuracy = 100.0 * std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    report.std_accuracy = 100.0 * sample_std(acc);
    return report;
}

Eigen::VectorXd PlsModel::predict(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - x_mean) * coefficients).array() + y_mean;
}

PlsModel pls_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int ncomp) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (y.size() != n) throw DimensionError("response length does not match rows");
    if (n < 2) throw DomainError("PLS needs at least 2 rows");
    if (ncomp < 1 || ncomp > std::min<Eigen::Index>(n - 1, d))
        throw DomainError("PLS components " + std::to_string(ncomp) + " must lie in [1, min(n-1, d)] = [1, " +
                          std::to_string(std::min<Eigen::Index>(n - 1, d)) + "]");
    if (!x.allFinite() || !y.allFinite()) throw DomainError("PLS inputs contain non-finite values");

    PlsModel model;
    model.x_mean = x.colwise().mean();
    model.y_mean = y.mean();
    Eigen::MatrixXd xr = x.rowwise() - model.x_mean;
    Eigen::VectorXd yr = y.array() - model.y_mean;
    if (xr.norm() == 0.0) throw RankError("PLS design matrix has zero variance");

    model.weights.resize(d, ncomp);
    model.loadings.resize(d, ncomp);
    model.y_loadings.resize(ncomp);
    double first_norm = 0.0;
    int a = 0;
    for (; a < ncomp; ++a) {
        Eigen::VectorXd w = xr.transpose() * yr;
        const double wn = w.norm();
        if (a == 0) first_norm = wn;
        if (!(wn > 1e-12 * first_norm) || wn == 0.0) break;
        w /= wn;
        const Eigen::VectorXd t = xr * w;
        const double tt = t.squaredNorm();
        if (!(tt > 0.0)) break;
        const Eigen::VectorXd p = xr.transpose() * t / tt;
        const double q = yr.dot(t) / tt;
        xr.noalias() -= t * p.transpose();
        yr -= q * t;
        model.weights.col(a) = w;
        model.loadings.col(a) = p;
        model.y_loadings(a) = q;
    }
    if (a == 0) throw RankError("response has no covariance with the design matrix");
    model.components = a;
    model.weights.conservativeResize(d, a);
    model.loadings.conservativeResize(d, a);
    model.y_loadings.conservativeResize(a);

    // B = W (P^T W)^{-1} q; P^T W is upper triangular with unit diagonal.
    const Eigen::MatrixXd ptw = model.loadings.transpose() * model.weights;
    model.coefficients = model.weights * ptw.triangularView<Eigen::Upper>().solve(model.y_loadings);
    return model;
}

RegressionReport pls_loocv(const LabeledDataset& dataset, int ncomp) {
    check_features(dataset);
    const Eigen::Index n = dataset.size();
    if (dataset.targets.size() != n) throw DomainError("regression dataset needs one real target per row");
    if (n < 3) throw DomainError("leave-one-out PLS needs at least 3 rows");
    if (ncomp < 1) throw DomainError("PLS needs at least 1 component");

    RegressionReport report;
    report.ncomp_requested = ncomp;
    report.ncomp_used = static_cast<int>(std::min<Eigen::Index>({static_cast<Eigen::Index>(ncomp), n - 2, dataset.features.cols()}));
    report.subject_ids = dataset.subject_ids;
    report.truth = dataset.targets;
    report.predictions.resize(n);

    Eigen::MatrixXd x_train(n - 1, dataset.features.cols());
    Eigen::VectorXd y_train(n - 1);
    for (Eigen::Index hold = 0; hold < n; ++hold) {
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == hold) continue;
            x_train.row(r) = dataset.features.row(i);
            y_train(r) = dataset.targets(i);
            ++r;
        }
        const PlsModel model = pls_fit(x_train, y_train, report.ncomp_used);
        report.predictions(hold) = model.predict(dataset.features.row(hold))(0);
    }
    const std::span<const double> truth(report.truth.data(), static_cast<std::size_t>(n));
    const std::span<const double> pred(report.predictions.data(), static_cast<std::size_t>(n));
    report.pearson_r = pearson_r(truth, pred);
    report.mae = mean_absolute_error(truth, pred);
    return report;
}

double pearson_r(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw DimensionError("correlation needs two equal-length series");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mean_absolute_error(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.size() != predicted.size() || truth.empty()) throw DimensionError("MAE needs two equal-length series");
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(truth[i] - predicted[i]);
    return sum / static_cast<double>(truth.size());
}

PairedTestResult paired_comparison(std::span<const double> acc_a, std::span<const double> acc_b) {
    if (acc_a.size() != acc_b.size()) throw DimensionError("paired comparison needs equal-length fold arrays");
    if (acc_a.size() < 2) throw DomainError("paired comparison needs at least 2 folds");

    std::vector<double> diff(acc_a.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = acc_a[i] - acc_b[i];
    const double n = static_cast<double>(diff.size());

    PairedTestResult out;
    out.dof = static_cast<int>(diff.size()) - 1;
    out.mean_difference = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    const double sd = sample_std(diff);
    double scale = 1.0;
    for (double d : diff) scale = std::max(scale, std::abs(d));
    if (!(sd > 1e-12 * scale)) {
        out.degenerate = true;
        out.p_value = 1.0;
        return out;
    }
    out.t_statistic = out.mean_difference / (sd / std::sqrt(n));
    const boost::math::students_t dist(static_cast<double>(out.dof));
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t_statistic))));
    return out;
}

}  // namespace wbrain
