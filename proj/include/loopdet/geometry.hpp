#pragma once

#include "loopdet/frame.hpp"
#include "loopdet/matcher.hpp"
#include "loopdet/rng.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace loopdet {

// Pixel positions of one putative correspondence; the epipolar constraint is
// written b^T F a = 0 with a from the query image and b from the candidate.
struct Correspondence {
    Eigen::Vector2d a = Eigen::Vector2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
};

struct FundamentalMatrix {
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Zero(); // rank 2, unit Frobenius norm
    int inlier_count = 0;
    std::vector<std::uint32_t> inliers; // indices into the verified correspondences
};

struct RansacParams {
    int max_iterations = 500;
    double epipolar_threshold = 1.0; // pixels; inlier iff sampson <= threshold^2
    int min_inliers = 20;
    std::uint64_t rng_seed = 0x9e0ca5acULL;
    bool adaptive_stop = false; // early exit at 99% confidence; off for fixed-cost runs
    double confidence = 0.99;

    void validate() const {
        if (max_iterations < 1)
            throw std::invalid_argument("RansacParams: max_iterations must be >= 1");
        if (!(epipolar_threshold > 0.0))
            throw std::invalid_argument("RansacParams: epipolar_threshold must be positive");
        if (min_inliers < 8)
            throw std::invalid_argument("RansacParams: min_inliers must be >= 8");
        if (!(confidence > 0.0 && confidence < 1.0))
            throw std::invalid_argument("RansacParams: confidence must lie in (0,1)");
    }
};

namespace detail {

struct NormalizeResult {
    Eigen::Matrix3d transform;
    bool ok = false;
};

// Similarity transform taking the points to zero centroid and sqrt(2) mean
// radius. Fails when the points coincide (zero spread).
inline NormalizeResult hartley_normalize(std::span<const Correspondence> pts, bool first) {
    NormalizeResult r;
    const std::size_t n = pts.size();
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& p : pts) c += first ? p.a : p.b;
    c /= static_cast<double>(n);
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += ((first ? p.a : p.b) - c).norm();
    mean_dist /= static_cast<double>(n);
    if (!(mean_dist > 1e-12)) return r;
    const double s = std::sqrt(2.0) / mean_dist;
    r.transform << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    r.ok = true;
    return r;
}

// Linear eight-point estimate. Returns nothing instead of throwing so the
// RANSAC loop can skip degenerate samples cheaply.
inline std::optional<Eigen::Matrix3d> eight_point_impl(std::span<const Correspondence> pts) {
    if (pts.size() < 8) return std::nullopt;
    const auto na = hartley_normalize(pts, true);
    const auto nb = hartley_normalize(pts, false);
    if (!na.ok || !nb.ok) return std::nullopt;

    Eigen::MatrixXd design(pts.size(), 9);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Eigen::Vector3d a = na.transform * pts[i].a.homogeneous();
        const Eigen::Vector3d b = nb.transform * pts[i].b.homogeneous();
        design.row(i) << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(),
            b.y(), a.x(), a.y(), 1.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
    const Eigen::VectorXd f = svd.matrixV().col(8);
    Eigen::Matrix3d F;
    F << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

    Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d sv = fsvd.singularValues();
    sv(2) = 0.0;
    F = fsvd.matrixU() * sv.asDiagonal() * fsvd.matrixV().transpose();
    F = nb.transform.transpose() * F * na.transform;

    const double norm = F.norm();
    if (!(norm > 0.0) || !F.allFinite()) return std::nullopt;
    F /= norm;
    for (int i = 0; i < 9; ++i) {
        const double v = F(i / 3, i % 3);
        if (std::abs(v) > 1e-12) {
            if (v < 0.0) F = -F;
            break;
        }
    }
    return F;
}

} // namespace detail

/// Normalized eight-point solve over all given correspondences. The result
/// has rank 2, unit Frobenius norm, and its first nonzero entry positive.
inline FundamentalMatrix eight_point(std::span<const Correspondence> pts) {
    if (pts.size() < 8)
        throw std::invalid_argument("eight_point: need at least 8 correspondences");
    auto F = detail::eight_point_impl(pts);
    if (!F)
        throw std::invalid_argument("eight_point: degenerate configuration");
    FundamentalMatrix out;
    out.matrix = *F;
    return out;
}

/// First-order epipolar error in squared pixels. Total: garbage in, a large
/// finite value out.
inline double sampson_error(const Eigen::Matrix3d& F, const Correspondence& c) {
    const Eigen::Vector3d a = c.a.homogeneous();
    const Eigen::Vector3d b = c.b.homogeneous();
    const Eigen::Vector3d Fa = F * a;
    const Eigen::Vector3d Ftb = F.transpose() * b;
    const double e = b.dot(Fa);
    const double denom = Fa.x() * Fa.x() + Fa.y() * Fa.y() + Ftb.x() * Ftb.x() + Ftb.y() * Ftb.y();
    return (e * e) / std::max(denom, 1e-300);
}

namespace detail {

// Model plus the exact set of points it explains at the strict threshold.
// These two travel together; never report one without the other.
struct RefinedModel {
    Eigen::Matrix3d model;
    std::vector<std::uint32_t> inliers;
    double err = 0.0;
};

inline std::vector<std::uint32_t> support_within(std::span<const Correspondence> pts,
                                                 const Eigen::Matrix3d& m, double limit,
                                                 double* err_sum) {
    std::vector<std::uint32_t> in;
    double e = 0.0;
    for (std::uint32_t i = 0; i < pts.size(); ++i) {
        const double s = sampson_error(m, pts[i]);
        if (s <= limit) {
            in.push_back(i);
            e += s;
        }
    }
    if (err_sum) *err_sum = e;
    return in;
}

// Local refinement of a promising hypothesis. A model fit to 8 noisy points
// undershoots the least-squares fit on its true support, and one refit often
// lands in a partial basin. So refit over a shrinking acceptance band (4x,
// 2x, then the strict threshold a few times) and keep the best strict-band
// state seen. Closes with a plain refit on that support. No randomness here,
// so callers stay deterministic; cost is bounded by the fixed schedule.
inline RefinedModel polish(std::span<const Correspondence> pts, const Eigen::Matrix3d& seed,
                           double thr2) {
    RefinedModel best;
    best.model = seed;
    best.inliers = support_within(pts, seed, thr2, &best.err);

    auto refit_on = [&](const std::vector<std::uint32_t>& ids) {
        std::vector<Correspondence> sup;
        sup.reserve(ids.size());
        for (std::uint32_t i : ids) sup.push_back(pts[i]);
        return eight_point_impl(sup);
    };
    auto consider = [&](const Eigen::Matrix3d& m) {
        double err = 0.0;
        auto in = support_within(pts, m, thr2, &err);
        if (in.size() > best.inliers.size() ||
            (in.size() == best.inliers.size() && err < best.err)) {
            best.model = m;
            best.inliers = std::move(in);
            best.err = err;
        }
    };

    static constexpr double kBand[] = {4.0, 2.0, 1.0, 1.0, 1.0, 1.0};
    Eigen::Matrix3d cur = seed;
    for (const double band : kBand) {
        const auto wide = support_within(pts, cur, band * thr2, nullptr);
        if (wide.size() < 8) continue;
        const auto refit = refit_on(wide);
        if (!refit) break;
        cur = *refit;
        consider(cur);
    }
    if (best.inliers.size() >= 8) {
        if (const auto refit = refit_on(best.inliers)) consider(*refit);
    }
    return best;
}

} // namespace detail

/// Seeded RANSAC over putative correspondences. Fixed hypothesis budget by
/// default (deterministic cost); optional adaptive early exit. Every sample
/// that improves the raw consensus count gets locally refined (annealed
/// refits, detail::polish), and the best refined state wins: most inliers,
/// ties broken by smaller summed Sampson error. The reported inlier set is
/// always the exact support of the reported matrix at the threshold. Returns
/// nothing when no model reaches min_inliers.
inline std::optional<FundamentalMatrix> ransac_verify(std::span<const Correspondence> pts,
                                                      const RansacParams& params) {
    params.validate();
    const std::size_t n = pts.size();
    if (n < 8) return std::nullopt;

    Rng rng(params.rng_seed);
    const double thr2 = params.epipolar_threshold * params.epipolar_threshold;

    detail::RefinedModel best;
    bool have_model = false;
    int best_raw = 0;

    std::array<Correspondence, 8> sample;
    std::array<std::uint64_t, 8> picked{};
    const int budget = params.max_iterations;
    for (int iter = 0; iter < budget; ++iter) {
        for (int i = 0; i < 8; ++i) {
            std::uint64_t idx;
            bool fresh;
            do {
                idx = rng.uniform_index(n);
                fresh = true;
                for (int j = 0; j < i; ++j)
                    if (picked[j] == idx) { fresh = false; break; }
            } while (!fresh);
            picked[i] = idx;
            sample[i] = pts[idx];
        }
        const auto model = detail::eight_point_impl(std::span<const Correspondence>(sample));
        if (!model) continue;

        int count = 0;
        for (const auto& c : pts)
            if (sampson_error(*model, c) <= thr2) ++count;
        if (count >= 8 && count > best_raw) {
            best_raw = count;
            auto refined = detail::polish(pts, *model, thr2);
            if (!have_model || refined.inliers.size() > best.inliers.size() ||
                (refined.inliers.size() == best.inliers.size() && refined.err < best.err)) {
                best = std::move(refined);
                have_model = true;
            }
        }
        if (params.adaptive_stop && have_model && best.inliers.size() >= 8) {
            const double w =
                static_cast<double>(best.inliers.size()) / static_cast<double>(n);
            const double p_fail = 1.0 - std::pow(w, 8);
            if (p_fail < 1e-12) break;
            const double needed = std::log(1.0 - params.confidence) / std::log(p_fail);
            if (static_cast<double>(iter + 1) >= needed) break;
        }
    }
    if (!have_model || best.inliers.size() < 8) return std::nullopt;

    FundamentalMatrix out;
    out.matrix = best.model;
    out.inliers = std::move(best.inliers);
    out.inlier_count = static_cast<int>(out.inliers.size());
    if (out.inlier_count < params.min_inliers) return std::nullopt;
    return out;
}

/// Pairs up the pixel positions referenced by a match set.
inline std::vector<Correspondence> correspondences_from_matches(const Frame& query,
                                                                const Frame& candidate,
                                                                const MatchSet& ms) {
    std::vector<Correspondence> out;
    out.reserve(ms.matches.size());
    for (const Match& m : ms.matches) {
        const LocalDescriptor& q = query.locals[m.query_idx];
        const LocalDescriptor& c = candidate.locals[m.cand_idx];
        out.push_back(Correspondence{Eigen::Vector2d(q.x, q.y), Eigen::Vector2d(c.x, c.y)});
    }
    return out;
}

} // namespace loopdet
