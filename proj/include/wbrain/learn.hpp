// Evaluation harnesses: linear SVM with stratified k-fold cross-validation,
// PLS1 regression with leave-one-out cross-validation, and paired fold tests.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace wbrain {

struct LabeledDataset {
    Eigen::MatrixXd features;           // n x d, one row per subject
    std::vector<std::string> labels;    // class tags, classification only
    Eigen::VectorXd targets;            // real-valued response, regression only
    std::vector<std::string> subject_ids;
    std::vector<std::string> group_ids;  // optional

    Eigen::Index size() const { return features.rows(); }
};

// Distinct labels in first-appearance order.
std::vector<std::string> class_names(const LabeledDataset& dataset);

// Subsamples the larger of two classes (seeded, uniformly) down to the size
// of the smaller one. Retained rows keep their original relative order.
LabeledDataset balance_classes(const LabeledDataset& dataset, std::uint64_t seed);

// Fold index per row; each class is shuffled and dealt round-robin.
std::vector<int> stratified_folds(const std::vector<std::string>& labels, int folds, std::uint64_t seed);

struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct SvmOptions {
    double c = 1.0;
    double tolerance = 1e-6;   // maximal KKT violation at termination
    long max_iterations = 0;   // 0 means max(1e7, 100 n)
};

// Soft-margin linear SVM, decision f(x) = w.x - rho, solved in the dual by SMO
// with second-order working-set selection.
struct LinearSvm {
    Eigen::VectorXd weights;
    double rho = 0.0;
    long iterations = 0;

    double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(weights) - rho; }
    // +1 when decision > 0, else -1.
    Eigen::VectorXi predict(const Eigen::MatrixXd& x) const;
};

LinearSvm train_linear_svm(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const SvmOptions& options = {});

struct ClassificationReport {
    std::vector<std::string> classes;   // classes[0] is the positive class
    std::vector<double> fold_accuracies;  // fractions
    double mean_accuracy = 0.0;           // percent
    std::vector<int> fold_assignment;     // per dataset row
    std::vector<int> predictions;         // per dataset row, index into classes
    std::array<std::array<long, 2>, 2> confusion{};  // [true][predicted]
    double std_accuracy = 0.0;            // percent, sample standard deviation
    int folds = 0;
    double c = 0.0;
    std::uint64_t seed = 0;
};

// Per fold: standardize with training statistics, train, evaluate the held-out rows.
// `classes` fixes the class order; empty means first-appearance order.
ClassificationReport cross_validate_svm(const LabeledDataset& dataset, int folds, double c, std::uint64_t seed,
                                        std::vector<std::string> classes = {});

struct PlsModel {
    Eigen::RowVectorXd x_mean;
    double y_mean = 0.0;
    Eigen::MatrixXd weights;        // d x a
    Eigen::MatrixXd loadings;       // d x a
    Eigen::VectorXd y_loadings;     // a
    Eigen::VectorXd coefficients;   // d, regression vector on centered inputs
    int components = 0;             // extracted; may be fewer than requested if X is exhausted

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

// NIPALS PLS1 on centered X and y.
PlsModel pls_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int ncomp);

struct RegressionReport {
    std::vector<std::string> subject_ids;
    Eigen::VectorXd truth;
    Eigen::VectorXd predictions;
    double pearson_r = 0.0;
    double mae = 0.0;
    int ncomp_requested = 0;
    int ncomp_used = 0;
};

// Leave-one-out predictions; ncomp is capped at min(n - 2, d).
RegressionReport pls_loocv(const LabeledDataset& dataset, int ncomp);

double pearson_r(std::span<const double> a, std::span<const double> b);
double mean_absolute_error(std::span<const double> truth, std::span<const double> predicted);

struct PairedTestResult {
    double p_value = 1.0;
    double t_statistic = 0.0;
    double mean_difference = 0.0;
    int dof = 0;
    bool degenerate = false;  // zero variance of the differences; p reported as 1
};

// Two-sided paired t-test on per-fold accuracy differences.
PairedTestResult paired_comparison(std::span<const double> acc_a, std::span<const double> acc_b);

}  // namespace wbrain
