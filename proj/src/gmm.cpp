#include "pmapcut/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "pmapcut/error.hpp"
#include "pmapcut/rng.hpp"

namespace pmapcut {

ColorGmm::ColorGmm(std::vector<GmmComponent> components) : components_(std::move(components))
{
    if (components_.empty())
        throw Error(ErrorCode::EmptyInput, "mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
            throw Error(ErrorCode::InvalidArgument, "mixture weights must be finite and >= 0");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidArgument, "mixture weights must sum to 1");

    for (const auto& c : components_) {
        Eigen::LLT<Eigen::Matrix3d> llt(c.covariance);
        if (llt.info() != Eigen::Success || !c.covariance.isApprox(c.covariance.transpose()))
            throw Error(ErrorCode::InvalidArgument, "covariance must be symmetric positive-definite");
        const Eigen::Matrix3d inv = llt.solve(Eigen::Matrix3d::Identity());
        const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        inverse_.push_back(inv);
        log_norm_.push_back(-0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + log_det));
        trace_inverse_.push_back(inv.trace());
    }
}

double ColorGmm::log_density(int k, const Eigen::Vector3d& x) const
{
    const auto ku = static_cast<std::size_t>(k);
    const Eigen::Vector3d d = x - components_[ku].mean;
    return log_norm_[ku] - 0.5 * d.dot(inverse_[ku] * d);
}

double ColorGmm::likelihood(const Eigen::Vector3d& x) const
{
    double sum = 0.0;
    for (int k = 0; k < size(); ++k)
        sum += components_[static_cast<std::size_t>(k)].weight * std::exp(log_density(k, x));
    return std::max(sum, kLikelihoodFloor);
}

Eigen::VectorXd ColorGmm::neg_log_likelihood(const ColorSamples& samples) const
{
    Eigen::VectorXd out(samples.rows());
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
        out(i) = -std::log(likelihood(samples.row(i).transpose()));
    return out;
}

struct GmmFitter {
    const ColorSamples& x;
    double regularizer;

    // Refit every non-empty component from the assignment; empty ones are dropped
    // and the assignment renumbered.
    ColorGmm refit(std::vector<int>& assign, int num) const
    {
        const Eigen::Index n = x.rows();
        std::vector<Eigen::Index> count(static_cast<std::size_t>(num), 0);
        std::vector<Eigen::Vector3d> sum(static_cast<std::size_t>(num), Eigen::Vector3d::Zero());
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
            ++count[k];
            sum[k] += x.row(i).transpose();
        }
        std::vector<int> remap(static_cast<std::size_t>(num), -1);
        std::vector<GmmComponent> comps;
        for (int k = 0; k < num; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            if (count[ku] == 0)
                continue;
            remap[ku] = static_cast<int>(comps.size());
            GmmComponent c;
            c.weight = static_cast<double>(count[ku]) / static_cast<double>(n);
            c.mean = sum[ku] / static_cast<double>(count[ku]);
            c.covariance.setZero();
            comps.push_back(c);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            int& a = assign[static_cast<std::size_t>(i)];
            a = remap[static_cast<std::size_t>(a)];
            const Eigen::Vector3d d = x.row(i).transpose() - comps[static_cast<std::size_t>(a)].mean;
            comps[static_cast<std::size_t>(a)].covariance.noalias() += d * d.transpose();
        }
        double total = 0.0;
        for (auto& c : comps)
            total += c.weight;
        for (auto& c : comps) {
            const double nk = c.weight * static_cast<double>(n);
            c.covariance /= nk;
            c.covariance = 0.5 * (c.covariance + c.covariance.transpose()).eval();
            c.covariance.diagonal().array() += regularizer;
            c.weight /= total;
        }
        return ColorGmm(std::move(comps));
    }

    // Sample-independent part of the cost: -ln pi_k - ln(normalizer_k) + (delta / 2) tr(Sigma_k^-1).
    std::vector<double> offsets(const ColorGmm& g) const
    {
        std::vector<double> out;
        for (std::size_t k = 0; k < g.components_.size(); ++k)
            out.push_back(-std::log(g.components_[k].weight) - g.log_norm_[k] + 0.5 * regularizer * g.trace_inverse_[k]);
        return out;
    }

    static double cost(const ColorGmm& g, const std::vector<double>& offset, int k, const Eigen::Vector3d& v)
    {
        const auto ku = static_cast<std::size_t>(k);
        const Eigen::Vector3d d = v - g.components_[ku].mean;
        return offset[ku] + 0.5 * d.dot(g.inverse_[ku] * d);
    }

    double objective(const ColorGmm& g, const std::vector<int>& assign) const
    {
        const std::vector<double> offset = offsets(g);
        double total = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            total += cost(g, offset, assign[static_cast<std::size_t>(i)], x.row(i).transpose());
        return total;
    }
};

ColorGmm fit_gmm(const ColorSamples& samples, int components, std::uint64_t seed, const GmmFitOptions& options,
                 GmmFitReport* report)
{
    const Eigen::Index n = samples.rows();
    if (n == 0)
        throw Error(ErrorCode::EmptyInput, "cannot fit a mixture to zero samples");
    if (components < 1)
        throw Error(ErrorCode::InvalidArgument, "component count must be >= 1");

    // k-means++ seeding; stops early when every sample coincides with a center.
    Rng rng(seed);
    std::vector<Eigen::Vector3d> centers;
    centers.push_back(samples.row(rng.uniform_int(0, n - 1)).transpose());
    Eigen::VectorXd dist2 = (samples.rowwise() - centers.back().transpose()).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < components) {
        const double total = dist2.sum();
        if (!(total > 0.0))
            break;
        const double target = rng.uniform() * total;
        double acc = 0.0;
        Eigen::Index pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            acc += dist2(i);
            if (acc > target && dist2(i) > 0.0) {
                pick = i;
                break;
            }
        }
        while (dist2(pick) == 0.0)
            --pick;
        centers.push_back(samples.row(pick).transpose());
        dist2 = dist2.cwiseMin((samples.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const double d = (samples.row(i).transpose() - centers[k]).squaredNorm();
            if (d < best) {
                best = d;
                assign[static_cast<std::size_t>(i)] = static_cast<int>(k);
            }
        }
    }

    GmmFitter fitter{samples, options.regularizer};
    ColorGmm gmm = fitter.refit(assign, static_cast<int>(centers.size()));
    GmmFitReport local;
    local.objective.push_back(fitter.objective(gmm, assign));

    for (int round = 1; round <= options.max_rounds; ++round) {
        local.rounds = round;
        bool changed = false;
        const std::vector<double> offset = fitter.offsets(gmm);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Vector3d v = samples.row(i).transpose();
            int best_k = 0;
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k < gmm.size(); ++k) {
                const double c = fitter.cost(gmm, offset, k, v);
                if (c < best) {
                    best = c;
                    best_k = k;
                }
            }
            int& a = assign[static_cast<std::size_t>(i)];
            if (a != best_k) {
                // Keep the current component on exact ties so stability is well defined.
                if (fitter.cost(gmm, offset, a, v) > best) {
                    a = best_k;
                    changed = true;
                }
            }
        }
        if (!changed) {
            local.converged = true;
            break;
        }
        gmm = fitter.refit(assign, gmm.size());
        local.objective.push_back(fitter.objective(gmm, assign));
        const double before = local.objective[local.objective.size() - 2], after = local.objective.back();
        if (before - after <= options.tolerance * std::abs(before)) {
            local.converged = true;
            break;
        }
    }

    if (report)
        *report = std::move(local);
    return gmm;
}

ColorSamples gather_colors(const RgbImage& image, const Raster<bool>* select, bool value)
{
    if (select && (select->rows() != image.height() || select->cols() != image.width()))
        throw Error(ErrorCode::DimensionMismatch, "selection raster does not match image");
    const Eigen::Index count = select ? (value ? select->count() : select->size() - select->count()) : image.size();
    ColorSamples out(count, 3);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < image.size(); ++i)
        if (!select || select->data()[i] == value)
            out.row(row++) = image.pixels().row(i).cast<double>();
    return out;
}

} // namespace pmapcut
