// Bag-of-features aggregation: K-means dictionary, Gaussian soft-assignment
// coding, sum pooling, and per-subject descriptor assembly.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wbrain/sgwt.hpp"

namespace wbrain {

struct Dictionary {
    Eigen::MatrixXd atoms;  // p x k
    std::uint64_t seed = 0;
    int iterations = 0;
    double inertia = 0.0;
    // Mean nearest-atom distance over the training signatures; the default
    // soft-assignment bandwidth.
    double mean_nearest_distance = 0.0;

    Eigen::Index dimension() const { return atoms.rows(); }
    Eigen::Index size() const { return atoms.cols(); }
};

struct KMeansOptions {
    int max_iterations = 300;
    double tolerance = 1e-6;  // max center movement relative to the data RMS norm
};

struct SurfaceHistogram {
    Eigen::VectorXd values;
    std::string surface_label;
    bool area_normalized = false;
};

// Fixed block order of a subject descriptor.
inline const std::vector<std::string>& surface_tags() {
    static const std::vector<std::string> tags{"LW", "LG", "RW", "RG"};
    return tags;
}

std::vector<std::string> block_layout(bool with_differences);

struct WaveletBrainMatrix {
    Eigen::MatrixXd columns;  // descriptor length x n
    std::vector<std::string> block_layout;
    std::vector<std::string> subject_ids;

    Eigen::Index num_subjects() const { return columns.cols(); }
};

Dictionary build_dictionary(std::span<const SgwsMatrix> signatures, Eigen::Index k, std::uint64_t seed,
                            const KMeansOptions& options = {});

// Same as above over a pre-concatenated p x N sample matrix.
Dictionary build_dictionary(const Eigen::MatrixXd& samples, Eigen::Index k, std::uint64_t seed,
                            const KMeansOptions& options = {});

// k x m code matrix; column i is the softmax of -||s_i - v_r||^2 / (2 sigma^2) over atoms r.
Eigen::MatrixXd soft_assign(const SgwsMatrix& sgws, const Dictionary& dictionary, double sigma);
Eigen::MatrixXd soft_assign(const Eigen::MatrixXd& samples, const Dictionary& dictionary, double sigma);

// Index of the nearest atom for every column (ties resolve to the lower index).
std::vector<Eigen::Index> nearest_atoms(const Eigen::MatrixXd& samples, const Dictionary& dictionary);

SurfaceHistogram pool_histogram(const Eigen::MatrixXd& codes, double mesh_area, bool normalize,
                                const std::string& label = {});

// concat(LW, LG, RW, RG) and, with differences, (LG - LW, RG - RW).
Eigen::VectorXd assemble_waveletbrain(const std::map<std::string, SurfaceHistogram>& histograms,
                                      bool with_differences);

}  // namespace wbrain
