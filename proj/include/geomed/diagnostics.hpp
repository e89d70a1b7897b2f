#pragma once

// Exact decomposition diagnostics on empirical distributions, where the
// gradient Phi and the Hessian Gamma of G(h) = E|X - h| - |X| are finite sums.
//
//   Z_{n+1} = Z_n - gamma_n Phi(Z_n) + gamma_n xi_{n+1}
//   xi_{n+1} = Phi(Z_n) + (X_{n+1} - Z_n) / |X_{n+1} - Z_n|
//   delta_n  = Phi(Z_n) - Gamma_m (Z_n - m)

#include "errors.hpp"
#include "estimators.hpp"
#include "hilbert.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace geomed {

// Coordinate action of a linear operator on H: (A v)_i = sum_j A(i,j) v_j.
using Operator = Eigen::MatrixXd;

inline HilbertPoint apply(const Operator& op, const HilbertPoint& v) {
    if (static_cast<std::size_t>(op.cols()) != v.size())
        throw ContractViolation("apply: dimension mismatch");
    const Eigen::VectorXd r = op * Eigen::Map<const Eigen::VectorXd>(v.coords().data(), static_cast<Eigen::Index>(v.size()));
    return HilbertPoint(std::vector<double>(r.data(), r.data() + r.size()));
}

struct PhiResult {
    HilbertPoint value;
    std::size_t excluded = 0; // data points coinciding with h
};

inline PhiResult phi_empirical_detailed(const HilbertPoint& h, std::span<const HilbertPoint> points,
                                        const SpaceSpec& space) {
    space.require(h, "phi_empirical");
    if (points.empty()) throw ContractViolation("phi_empirical: no points");
    const auto w = space.weights();
    const std::size_t d = space.dimension();
    std::vector<double> acc(d, 0.0);
    std::size_t excluded = 0;
    for (const auto& x : points) {
        space.require(x, "phi_empirical");
        const double r = kernel::distance(x.coords(), h.coords(), w);
        if (r == 0.0) {
            ++excluded;
            continue;
        }
        for (std::size_t k = 0; k < d; ++k) acc[k] -= (x[k] - h[k]) / r;
    }
    if (excluded == points.size()) throw ContractViolation("phi_empirical: every data point coincides with h");
    const double inv = 1.0 / static_cast<double>(points.size());
    for (double& v : acc) v *= inv;
    return {HilbertPoint(std::move(acc)), excluded};
}

// Phi(h) = -(1/N) sum_i (x_i - h)/|x_i - h|; coincident points contribute nothing.
inline HilbertPoint phi_empirical(const HilbertPoint& h, std::span<const HilbertPoint> points,
                                  const SpaceSpec& space) {
    return phi_empirical_detailed(h, points, space).value;
}

struct HessianResult {
    Operator op;
    double c1_hat = 0.0; // mean of 1/|x_i - h| over non-coincident points
    std::size_t excluded = 0;
};

inline constexpr std::size_t kMaxHessianDimension = 10000;

// Gamma_h v = (1/N) sum_i (1/r_i) (v - <u_i, v> u_i),  u_i = (x_i - h)/r_i.
// In coordinates Gamma(j,k) = (1/N) sum_i (1/r_i)(1{j=k} - u_ij u_ik w_k), which
// is self-adjoint for the weighted inner product (symmetric when unweighted).
inline HessianResult hessian_empirical(const HilbertPoint& h, std::span<const HilbertPoint> points,
                                       const SpaceSpec& space) {
    space.require(h, "hessian_empirical");
    if (points.empty()) throw ContractViolation("hessian_empirical: no points");
    const std::size_t d = space.dimension();
    if (d > kMaxHessianDimension) throw ContractViolation("hessian_empirical: dimension exceeds materialization guard");
    const auto w = space.weights();
    const auto di = static_cast<Eigen::Index>(d);
    HessianResult res;
    res.op = Operator::Zero(di, di);
    Eigen::VectorXd u(di), uw(di);
    double inv_sum = 0.0;
    for (const auto& x : points) {
        space.require(x, "hessian_empirical");
        const double r = kernel::distance(x.coords(), h.coords(), w);
        if (r == 0.0) {
            ++res.excluded;
            continue;
        }
        const double a = 1.0 / r;
        inv_sum += a;
        for (std::size_t k = 0; k < d; ++k) {
            u(static_cast<Eigen::Index>(k)) = (x[k] - h[k]) * a;
            uw(static_cast<Eigen::Index>(k)) = u(static_cast<Eigen::Index>(k)) * space.weight(k);
        }
        res.op.noalias() -= a * u * uw.transpose();
    }
    if (res.excluded == points.size()) throw ContractViolation("hessian_empirical: every data point coincides with h");
    const double inv_n = 1.0 / static_cast<double>(points.size());
    res.op *= inv_n;
    res.op.diagonal().array() += inv_sum * inv_n;
    res.c1_hat = inv_sum / static_cast<double>(points.size() - res.excluded);
    // I - u u* vanishes identically on a line.
    if (d == 1) res.op.setZero();
    return res;
}

// Eigenvalues (ascending) of a weighted-self-adjoint operator, via the
// symmetric similarity transform W^{1/2} A W^{-1/2}.
inline std::vector<double> spectrum(const Operator& op, const SpaceSpec& space) {
    const auto d = op.rows();
    Eigen::MatrixXd s = op;
    if (space.is_weighted()) {
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                s(i, j) = op(i, j) * std::sqrt(space.weight(static_cast<std::size_t>(i)) /
                                               space.weight(static_cast<std::size_t>(j)));
    }
    s = 0.5 * (s + s.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().data(), es.eigenvalues().data() + d};
}

struct DiagnosticsRecord {
    std::uint64_t n = 0;
    HilbertPoint xi;    // xi_{n+1}
    HilbertPoint delta; // delta_n
    double dist = 0.0;  // |Z_n - m|
    double ratio_linear = 0.0;    // |delta_n| / dist
    double ratio_quadratic = 0.0; // |delta_n| / dist^2
    bool degenerate = false;      // X_{n+1} coincided with Z_n; xi then equals Phi(Z_n)
};

namespace detail {

inline void require_every_step(const Trajectory& traj, std::size_t upto) {
    if (traj.snapshots.size() < upto) throw ContractViolation("diagnostics: missing intermediate snapshots");
    for (std::size_t i = 0; i < upto; ++i)
        if (traj.snapshots[i].n != i + 1) throw ContractViolation("diagnostics: missing intermediate snapshots");
}

} // namespace detail

// One record per n = 1 .. N-1 for a trajectory with snapshots at every n and
// recorded samples. Each step is replayed from X_{n+1} to confirm the
// trajectory came from these samples.
inline std::vector<DiagnosticsRecord> xi_delta(const Trajectory& traj, const StepSchedule& schedule,
                                               std::span<const HilbertPoint> points, const SpaceSpec& space,
                                               const HilbertPoint& m, const Operator& gamma_m) {
    const std::size_t total = traj.snapshots.size();
    detail::require_every_step(traj, total);
    if (traj.samples.size() < total) throw ContractViolation("xi_delta: trajectory has no recorded samples");
    space.require(m, "xi_delta");
    const auto w = space.weights();
    const std::size_t d = space.dimension();

    std::vector<DiagnosticsRecord> out;
    out.reserve(total > 0 ? total - 1 : 0);
    std::vector<double> replay(d);
    for (std::size_t i = 0; i + 1 < total; ++i) {
        const auto& cur = traj.snapshots[i];
        const auto& nxt = traj.snapshots[i + 1];
        const auto& x = traj.samples[i + 1];
        space.require(x, "xi_delta");
        DiagnosticsRecord rec;
        rec.n = cur.n;
        const HilbertPoint phi = phi_empirical(cur.z, points, space);
        const double r = kernel::distance(x.coords(), cur.z.coords(), w);
        rec.degenerate = nxt.skipped > cur.skipped;
        std::vector<double> xi(phi.vector());
        const double g = schedule(cur.n);
        double scale = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double u = rec.degenerate ? 0.0 : (x[k] - cur.z[k]) / r;
            xi[k] += u;
            replay[k] = cur.z[k] + g * u;
            scale = std::max(scale, std::abs(nxt.z[k]));
        }
        double mismatch = 0.0;
        for (std::size_t k = 0; k < d; ++k) mismatch = std::max(mismatch, std::abs(replay[k] - nxt.z[k]));
        if (mismatch > 1e-9 * scale)
            throw ContractViolation("xi_delta: trajectory/source mismatch at n=" + std::to_string(cur.n));
        rec.xi = HilbertPoint(std::move(xi));
        const HilbertPoint t = cur.z - m;
        rec.delta = phi - apply(gamma_m, t);
        rec.dist = norm(t, space);
        const double dn = norm(rec.delta, space);
        if (rec.dist > 0.0) {
            rec.ratio_linear = dn / rec.dist;
            rec.ratio_quadratic = dn / (rec.dist * rec.dist);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

// Relative residual of the summation-by-parts identity
//   n Gamma_m (Z̄_n - m) = T_1/gamma_1 - T_{n+1}/gamma_n
//                         + sum_{k=2}^n T_k (1/gamma_k - 1/gamma_{k-1})
//                         - sum_{k=1}^n delta_k + sum_{k=1}^n xi_{k+1},   T_k = Z_k - m,
// normalized by 1 + |n Gamma_m (Z̄_n - m)|. n = 0 selects the longest checkable n.
inline double abel_identity_residual(const Trajectory& traj, std::span<const DiagnosticsRecord> records,
                                     const StepSchedule& schedule, const SpaceSpec& space,
                                     const HilbertPoint& m, const Operator& gamma_m, std::uint64_t n = 0) {
    if (n == 0) n = records.size();
    if (n == 0 || records.size() < n) throw ContractViolation("abel_identity_residual: not enough records");
    detail::require_every_step(traj, static_cast<std::size_t>(n + 1));
    for (std::uint64_t k = 1; k <= n; ++k)
        if (records[k - 1].n != k) throw ContractViolation("abel_identity_residual: records out of order");
    const std::size_t d = space.dimension();
    auto t = [&](std::uint64_t k) { return traj.snapshots[k - 1].z - m; };

    const HilbertPoint lhs = scaled(apply(gamma_m, traj.snapshots[n - 1].z_bar - m), static_cast<double>(n));
    HilbertPoint rhs = combine(scaled(t(1), 1.0 / schedule(1)), -1.0 / schedule(n), t(n + 1));
    for (std::uint64_t k = 2; k <= n; ++k)
        rhs = combine(rhs, 1.0 / schedule(k) - 1.0 / schedule(k - 1), t(k));
    std::vector<double> sum(d, 0.0);
    for (std::uint64_t k = 1; k <= n; ++k) {
        const auto& rec = records[k - 1];
        for (std::size_t i = 0; i < d; ++i) sum[i] += rec.xi[i] - rec.delta[i];
    }
    rhs = rhs + HilbertPoint(std::move(sum));
    return norm(lhs - rhs, space) / (1.0 + norm(lhs, space));
}

struct BoundSummary {
    std::size_t records = 0;
    double xi_norm_max = 0.0;
    double delta_ratio_max = 0.0;        // max |delta|/dist
    double delta_ratio_sq_max = 0.0;     // max |delta|/dist^2: the empirical C_m
    double linear_bound = 0.0;           // 2 * c1_hat
    bool linear_ok = false;
    std::size_t quadratic_spikes = 0;    // ratios above 10x the median |delta|/dist^2
};

// Records with dist <= dist_floor are left out of the ratio maxima.
inline BoundSummary bound_report(std::span<const DiagnosticsRecord> records, const SpaceSpec& space,
                                 double c1_hat, double dist_floor = 0.0) {
    if (records.empty()) throw ContractViolation("bound_report: no records");
    BoundSummary s;
    s.records = records.size();
    s.linear_bound = 2.0 * c1_hat;
    std::vector<double> quad;
    for (const auto& r : records) {
        s.xi_norm_max = std::max(s.xi_norm_max, norm(r.xi, space));
        if (r.dist <= dist_floor) continue;
        s.delta_ratio_max = std::max(s.delta_ratio_max, r.ratio_linear);
        s.delta_ratio_sq_max = std::max(s.delta_ratio_sq_max, r.ratio_quadratic);
        quad.push_back(r.ratio_quadratic);
    }
    s.linear_ok = s.delta_ratio_max <= s.linear_bound;
    if (!quad.empty()) {
        auto mid = quad.begin() + static_cast<std::ptrdiff_t>(quad.size() / 2);
        std::nth_element(quad.begin(), mid, quad.end());
        const double med = *mid;
        for (const auto& r : records)
            if (r.dist > dist_floor && r.ratio_quadratic > 10.0 * med) ++s.quadratic_spikes;
    }
    return s;
}

} // namespace geomed
