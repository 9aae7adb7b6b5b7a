#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "pmapcut/raster.hpp"

namespace pmapcut {

/// N x 3 color samples in [0, 255] units, one pixel per row.
using ColorSamples = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr double kCovarianceRegularizer = 1e-3;
inline constexpr double kLikelihoodFloor = 1e-30;
inline constexpr int kDefaultGmmComponents = 5;

struct GmmComponent {
    double weight = 1.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

/// Mixture of 3-D Gaussians over RGB. Immutable once built; caches inverse
/// covariances and normalizers.
class ColorGmm {
public:
    explicit ColorGmm(std::vector<GmmComponent> components);

    const std::vector<GmmComponent>& components() const { return components_; }
    int size() const { return static_cast<int>(components_.size()); }

    /// ln N(x; mean_k, cov_k)
    double log_density(int k, const Eigen::Vector3d& x) const;

    /// sum_k w_k N(x; mean_k, cov_k), floored at kLikelihoodFloor.
    double likelihood(const Eigen::Vector3d& x) const;

    /// Per-sample -ln likelihood(x).
    Eigen::VectorXd neg_log_likelihood(const ColorSamples& samples) const;

private:
    std::vector<GmmComponent> components_;
    std::vector<Eigen::Matrix3d> inverse_;
    std::vector<double> log_norm_; // -0.5 ln |2 pi cov|
    std::vector<double> trace_inverse_;

    friend struct GmmFitter;
};

struct GmmFitOptions {
    int max_rounds = 50;
    double regularizer = kCovarianceRegularizer;
    /// Stop once a round lowers the objective by less than this fraction of
    /// its magnitude. With zero, only a round without any decrease stops early.
    double tolerance = 1e-4;
};

/// Objective after each refit. The objective is the negative complete-data
/// log-likelihood plus (delta / 2) tr(cov_k^-1) per assigned sample; with that
/// term the regularized covariance S_k + delta I is the exact minimizer of the
/// refit step, so the sequence is non-increasing.
struct GmmFitReport {
    std::vector<double> objective;
    int rounds = 0;
    bool converged = false;
};

/// k-means++ seeding followed by hard EM until assignments are stable or
/// `options.max_rounds` is reached. Components that lose every sample are dropped.
ColorGmm fit_gmm(const ColorSamples& samples, int components, std::uint64_t seed, const GmmFitOptions& options = {},
                 GmmFitReport* report = nullptr);

inline double likelihood(const ColorGmm& gmm, const Eigen::Vector3d& x) { return gmm.likelihood(x); }

/// Colors of the pixels where `select` is true (or all pixels when `select` is null).
ColorSamples gather_colors(const RgbImage& image, const Raster<bool>* select = nullptr, bool value = true);

} // namespace pmapcut
