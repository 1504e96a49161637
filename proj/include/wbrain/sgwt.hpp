// Spectral graph wavelet signatures (SGWS).
//
// For vertex j and scale t the wavelet coefficient is
//     W(t, j) = sum_l g(t lambda_l) xi_l(j)^2
// and the scaling coefficient is
//     S(j) = sum_l h(lambda_l) xi_l(j)^2,
// both truncated at the computed eigenpairs. The signature of vertex j stacks
// the L wavelet coefficients (decreasing scale) followed by the scaling one.
#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "wbrain/laplacian.hpp"

namespace wbrain {

struct KernelConfig {
    int level = 0;            // number of wavelet scales L
    double lambda_max = 0.0;  // upper spectral bound
    double lambda_min = 0.0;  // lambda_max / 15
    double gamma = 0.0;       // h(0), equal to max g
    std::vector<double> scales;  // t_1 > t_2 > ... > t_L
};

struct SgwsMatrix {
    Eigen::MatrixXd values;  // (L + 1) x m
    int level = 0;
    std::string source_label;

    Eigen::Index dimension() const { return values.rows(); }
    Eigen::Index num_vertices() const { return values.cols(); }
};

inline constexpr double kLambdaRatio = 15.0;
inline constexpr double kChi2Guard = 1e-12;
inline constexpr int kDefaultLevel = 3;

// Mexican-hat generating kernel g(x) = 2/(sqrt(3) pi^(1/4)) (1 - x^2) exp(-x^2 / 2).
double kernel_g(double x);

// Maximum of g over x >= 0, attained at x = 0.
double kernel_g_max();

// Scaling kernel h(x) = gamma exp(-(x / (0.3 lambda_min))^4).
double kernel_h(double x, const KernelConfig& config);

KernelConfig select_scales(double lambda_max, int level);

SgwsMatrix compute_sgws(const EigenSystem& eig, int level, const std::string& label = {});

// Chi-squared distance of every column to the reference column, min-max
// normalized to [0, 1]. A constant map is returned as all zeros.
Eigen::VectorXd chi2_distance_map(const SgwsMatrix& sgws, Eigen::Index ref_vertex);

}  // namespace wbrain
