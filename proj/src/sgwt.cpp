#include "wbrain/sgwt.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "wbrain/errors.hpp"

namespace wbrain {

double kernel_g_max() {
    return 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));
}

double kernel_g(double x) {
    return kernel_g_max() * (1.0 - x * x) * std::exp(-0.5 * x * x);
}

double kernel_h(double x, const KernelConfig& config) {
    const double u = x / (0.3 * config.lambda_min);
    return config.gamma * std::exp(-(u * u) * (u * u));
}

KernelConfig select_scales(double lambda_max, int level) {
    if (!(lambda_max > 0.0) || !std::isfinite(lambda_max))
        throw DomainError("lambda_max must be positive and finite, got " + std::to_string(lambda_max));
    if (level < 1) throw DomainError("resolution level must be at least 1");

    KernelConfig config;
    config.level = level;
    config.lambda_max = lambda_max;
    config.lambda_min = lambda_max / kLambdaRatio;
    config.gamma = kernel_g_max();

    const double t_first = 2.0 / config.lambda_min;
    const double t_last = 2.0 / config.lambda_max;
    config.scales.resize(static_cast<std::size_t>(level));
    config.scales.front() = t_first;
    if (level > 1) {
        const double log_first = std::log(t_first);
        const double step = (std::log(t_last) - log_first) / (level - 1);
        for (int k = 1; k + 1 < level; ++k) config.scales[static_cast<std::size_t>(k)] = std::exp(log_first + k * step);
        config.scales.back() = t_last;
    }
    return config;
}

SgwsMatrix compute_sgws(const EigenSystem& eig, int level, const std::string& label) {
    const Eigen::Index k = eig.num_pairs();
    if (k < 2) throw DimensionError("signatures need at least 2 eigenpairs, got " + std::to_string(k));
    if (eig.eigenvectors.cols() != k) throw DimensionError("eigenvector count does not match eigenvalues");

    const KernelConfig config = select_scales(eig.eigenvalues(k - 1), level);

    // Kernel responses, one row per signature entry, one column per eigenpair.
    Eigen::MatrixXd response(level + 1, k);
    for (Eigen::Index l = 0; l < k; ++l) {
        const double lambda = eig.eigenvalues(l);
        for (int r = 0; r < level; ++r) response(r, l) = kernel_g(config.scales[static_cast<std::size_t>(r)] * lambda);
        response(level, l) = kernel_h(lambda, config);
    }

    SgwsMatrix out;
    out.level = level;
    out.source_label = label;
    out.values = response * eig.eigenvectors.cwiseAbs2().transpose();
    return out;
}

Eigen::VectorXd chi2_distance_map(const SgwsMatrix& sgws, Eigen::Index ref_vertex) {
    const Eigen::Index m = sgws.num_vertices();
    if (ref_vertex < 0 || ref_vertex >= m)
        throw DimensionError("reference vertex " + std::to_string(ref_vertex) + " outside [0, " +
                             std::to_string(m) + ")");

    const Eigen::VectorXd ref = sgws.values.col(ref_vertex);
    Eigen::VectorXd d(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        double sum = 0.0;
        for (Eigen::Index r = 0; r < sgws.dimension(); ++r) {
            const double a = ref(r);
            const double b = sgws.values(r, j);
            // Wavelet rows can be negative; absolute values keep every term >= 0.
            sum += (a - b) * (a - b) / (std::abs(a) + std::abs(b) + kChi2Guard);
        }
        d(j) = 0.5 * sum;
    }
    const double lo = d.minCoeff();
    const double hi = d.maxCoeff();
    if (!(hi > lo)) return Eigen::VectorXd::Zero(m);
    return (d.array() - lo) / (hi - lo);
}

}  // namespace wbrain
