#include "wbrain/bof.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "wbrain/errors.hpp"

namespace wbrain {

namespace {

double squared_distance(const Eigen::MatrixXd& samples, Eigen::Index i, const Eigen::MatrixXd& centers,
                        Eigen::Index r) {
    return (samples.col(i) - centers.col(r)).squaredNorm();
}

// Nearest center and its squared distance for every sample.
void assign(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& centers, std::vector<Eigen::Index>& label,
            Eigen::VectorXd& dist2) {
    const Eigen::Index n = samples.cols();
    label.resize(static_cast<std::size_t>(n));
    dist2.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        double best_d = squared_distance(samples, i, centers, 0);
        for (Eigen::Index r = 1; r < centers.cols(); ++r) {
            const double d = squared_distance(samples, i, centers, r);
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        label[static_cast<std::size_t>(i)] = best;
        dist2(i) = best_d;
    }
}

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& samples, Eigen::Index k, std::mt19937_64& rng) {
    const Eigen::Index n = samples.cols();
    Eigen::MatrixXd centers(samples.rows(), k);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.col(0) = samples.col(pick(rng));

    Eigen::VectorXd dist2(n);
    for (Eigen::Index i = 0; i < n; ++i) dist2(i) = squared_distance(samples, i, centers, 0);

    for (Eigen::Index r = 1; r < k; ++r) {
        const double total = dist2.sum();
        if (!(total > 0.0))
            throw DegenerateDataError("fewer distinct signatures than the " + std::to_string(k) +
                                      " requested atoms");
        std::uniform_real_distribution<double> uniform(0.0, total);
        const double target = uniform(rng);
        Eigen::Index chosen = -1;
        double cumulative = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (dist2(i) <= 0.0) continue;
            cumulative += dist2(i);
            chosen = i;
            if (cumulative >= target) break;
        }
        centers.col(r) = samples.col(chosen);
        for (Eigen::Index i = 0; i < n; ++i)
            dist2(i) = std::min(dist2(i), squared_distance(samples, i, centers, r));
    }
    return centers;
}

void check_bandwidth(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw DomainError("soft-assignment bandwidth must be positive and finite");
}

}  // namespace

std::vector<std::string> block_layout(bool with_differences) {
    std::vector<std::string> layout = surface_tags();
    if (with_differences) {
        layout.emplace_back("LG-LW");
        layout.emplace_back("RG-RW");
    }
    return layout;
}

Dictionary build_dictionary(std::span<const SgwsMatrix> signatures, Eigen::Index k, std::uint64_t seed,
                            const KMeansOptions& options) {
    if (signatures.empty()) throw DomainError("no signatures to train a dictionary on");
    const Eigen::Index p = signatures.front().dimension();
    Eigen::Index total = 0;
    for (const auto& s : signatures) {
        if (s.dimension() != p)
            throw DimensionError("signature dimensions differ: " + std::to_string(p) + " vs " +
                                 std::to_string(s.dimension()));
        total += s.num_vertices();
    }
    Eigen::MatrixXd samples(p, total);
    Eigen::Index offset = 0;
    for (const auto& s : signatures) {
        samples.middleCols(offset, s.num_vertices()) = s.values;
        offset += s.num_vertices();
    }
    return build_dictionary(samples, k, seed, options);
}

Dictionary build_dictionary(const Eigen::MatrixXd& samples, Eigen::Index k, std::uint64_t seed,
                            const KMeansOptions& options) {
    const Eigen::Index n = samples.cols();
    if (k < 1 || k > n)
        throw DomainError("vocabulary size " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
    if (!samples.allFinite()) throw DegenerateDataError("signatures contain non-finite values");
    if ((samples.colwise() - samples.col(0)).cwiseAbs().maxCoeff() == 0.0)
        throw DegenerateDataError("all signatures are identical");

    std::mt19937_64 rng(seed);
    Eigen::MatrixXd centers = kmeans_plus_plus(samples, k, rng);

    const double rms = std::sqrt(samples.squaredNorm() / static_cast<double>(n));
    const double threshold = options.tolerance * std::max(rms, std::numeric_limits<double>::min());

    std::vector<Eigen::Index> label;
    Eigen::VectorXd dist2;
    int iteration = 0;
    while (iteration < options.max_iterations) {
        ++iteration;
        assign(samples, centers, label, dist2);

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(samples.rows(), k);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.col(label[static_cast<std::size_t>(i)]) += samples.col(i);
            counts(label[static_cast<std::size_t>(i)]) += 1.0;
        }
        Eigen::MatrixXd updated(samples.rows(), k);
        for (Eigen::Index r = 0; r < k; ++r) {
            if (counts(r) > 0.0) {
                updated.col(r) = sums.col(r) / counts(r);
                continue;
            }
            // Empty cluster: reseed at the sample farthest from its center.
            Eigen::Index far = 0;
            dist2.maxCoeff(&far);
            updated.col(r) = samples.col(far);
            dist2(far) = 0.0;
        }
        const double movement = (updated - centers).colwise().norm().maxCoeff();
        centers = std::move(updated);
        if (movement <= threshold) break;
    }

    assign(samples, centers, label, dist2);
    Dictionary out;
    out.atoms = std::move(centers);
    out.seed = seed;
    out.iterations = iteration;
    out.inertia = dist2.sum();
    out.mean_nearest_distance = dist2.cwiseSqrt().mean();
    return out;
}

Eigen::MatrixXd soft_assign(const Eigen::MatrixXd& samples, const Dictionary& dictionary, double sigma) {
    check_bandwidth(sigma);
    if (samples.rows() != dictionary.dimension())
        throw DimensionError("signature dimension " + std::to_string(samples.rows()) +
                             " does not match dictionary dimension " + std::to_string(dictionary.dimension()));

    const Eigen::Index k = dictionary.size();
    const double scale = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd codes(k, samples.cols());
    Eigen::VectorXd logits(k);
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        for (Eigen::Index r = 0; r < k; ++r) logits(r) = -squared_distance(samples, i, dictionary.atoms, r) * scale;
        const double top = logits.maxCoeff();
        codes.col(i) = (logits.array() - top).exp();
        codes.col(i) /= codes.col(i).sum();
    }
    return codes;
}

Eigen::MatrixXd soft_assign(const SgwsMatrix& sgws, const Dictionary& dictionary, double sigma) {
    return soft_assign(sgws.values, dictionary, sigma);
}

std::vector<Eigen::Index> nearest_atoms(const Eigen::MatrixXd& samples, const Dictionary& dictionary) {
    if (samples.rows() != dictionary.dimension()) throw DimensionError("signature/dictionary dimension mismatch");
    std::vector<Eigen::Index> label;
    Eigen::VectorXd dist2;
    assign(samples, dictionary.atoms, label, dist2);
    return label;
}

SurfaceHistogram pool_histogram(const Eigen::MatrixXd& codes, double mesh_area, bool normalize,
                                const std::string& label) {
    SurfaceHistogram out;
    out.values = codes.rowwise().sum();
    out.surface_label = label;
    out.area_normalized = normalize;
    if (normalize) {
        if (!(mesh_area > 0.0)) throw DomainError("mesh area must be positive to normalize a histogram");
        out.values /= mesh_area;
    }
    return out;
}

Eigen::VectorXd assemble_waveletbrain(const std::map<std::string, SurfaceHistogram>& histograms,
                                      bool with_differences) {
    const auto& tags = surface_tags();
    for (const auto& tag : tags)
        if (!histograms.count(tag)) throw MissingSurfaceError("missing surface histogram '" + tag + "'");

    const auto& first = histograms.at(tags.front());
    const Eigen::Index k = first.values.size();
    for (const auto& tag : tags) {
        const auto& h = histograms.at(tag);
        if (h.values.size() != k)
            throw MismatchError("histogram '" + tag + "' has " + std::to_string(h.values.size()) +
                                " bins, expected " + std::to_string(k));
        if (h.area_normalized != first.area_normalized)
            throw MismatchError("histograms mix area-normalized and raw values");
    }

    const Eigen::Index blocks = with_differences ? 6 : 4;
    Eigen::VectorXd z(blocks * k);
    for (std::size_t b = 0; b < tags.size(); ++b)
        z.segment(static_cast<Eigen::Index>(b) * k, k) = histograms.at(tags[b]).values;
    if (with_differences) {
        z.segment(4 * k, k) = histograms.at("LG").values - histograms.at("LW").values;
        z.segment(5 * k, k) = histograms.at("RG").values - histograms.at("RW").values;
    }
    return z;
}

}  // namespace wbrain
