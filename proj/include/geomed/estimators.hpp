#pragma once

// Streaming geometric-median estimation: the Robbins-Monro recursion
//     Z_{n+1} = Z_n + gamma_n (X_{n+1} - Z_n) / |X_{n+1} - Z_n|
// with its running average Z̄_n, and the offline Weiszfeld solver used as the
// exact oracle on empirical distributions.

#include "errors.hpp"
#include "hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace geomed {

// gamma_n = c_gamma * n^(-alpha), 1/2 < alpha < 1.
class StepSchedule {
public:
    StepSchedule() = default;

    StepSchedule(double c_gamma, double alpha) : c_gamma_(c_gamma), alpha_(alpha) {
        if (!std::isfinite(c_gamma) || c_gamma <= 0.0)
            throw ValidationError("StepSchedule: c_gamma must be > 0");
        if (!(alpha > 0.5 && alpha < 1.0))
            throw ValidationError("StepSchedule: alpha must lie in (1/2, 1)");
    }

    double c_gamma() const noexcept { return c_gamma_; }
    double alpha() const noexcept { return alpha_; }

    double operator()(std::uint64_t n) const {
        if (n == 0) throw ContractViolation("step_size: n must be >= 1");
        return c_gamma_ * std::pow(static_cast<double>(n), -alpha_);
    }

private:
    double c_gamma_ = 1.0;
    double alpha_ = 2.0 / 3.0;
};

inline double step_size(const StepSchedule& schedule, std::uint64_t n) { return schedule(n); }

struct EstimatorState {
    std::uint64_t n = 0;       // samples consumed
    HilbertPoint z;            // Z_n
    HilbertPoint z_bar;        // running mean of Z_1..Z_n
    std::uint64_t skipped = 0; // updates where X_{n+1} coincided with Z_n

    friend bool operator==(const EstimatorState&, const EstimatorState&) = default;
};

namespace detail {

// One coupled RM/averaging update in place. Returns false when the step was
// degenerate (|x - z| <= eps); n and the schedule still advance in that case.
inline bool advance(std::uint64_t& n, std::span<double> z, std::span<double> z_bar,
                    std::span<const double> x, const StepSchedule& schedule,
                    std::span<const double> weights, double eps) {
    const double r = kernel::distance(x, z, weights);
    const bool moved = r > eps;
    if (moved) {
        const double g = schedule(n) / r;
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += g * (x[i] - z[i]);
    }
    const double inv = 1.0 / static_cast<double>(n + 1);
    for (std::size_t i = 0; i < z.size(); ++i) z_bar[i] -= (z_bar[i] - z[i]) * inv;
    ++n;
    return moved;
}

} // namespace detail

inline EstimatorState initial_state(const HilbertPoint& first) {
    return EstimatorState{1, first, first, 0};
}

inline EstimatorState rm_step(const EstimatorState& state, const HilbertPoint& x,
                              const StepSchedule& schedule, const SpaceSpec& space,
                              double eps_degenerate = 0.0) {
    space.require(x, "rm_step");
    space.require(state.z, "rm_step");
    space.require(state.z_bar, "rm_step");
    if (state.n == 0) throw ContractViolation("rm_step: state has not been initialized");
    EstimatorState next = state;
    if (!detail::advance(next.n, next.z.coords(), next.z_bar.coords(), x.coords(), schedule,
                         space.weights(), eps_degenerate))
        ++next.skipped;
    return next;
}

// A stream of i.i.d. draws written into caller-provided storage.
template <class S>
concept SampleSource = requires(S& s, std::span<double> out) {
    { s.dimension() } -> std::convertible_to<std::size_t>;
    s.next(out);
};

struct InitPolicy {
    // Z_1 = X_1 when |X_1| <= radius, the zero element otherwise.
    double radius = std::numeric_limits<double>::infinity();
};

struct RunOptions {
    InitPolicy init;
    // Degenerate threshold, relative to the running mean of |X_{n+1} - Z_n|.
    double degenerate_rel = 1e-12;
    bool record_samples = false;
};

struct Trajectory {
    std::vector<EstimatorState> snapshots; // one per checkpoint, ascending n
    std::vector<HilbertPoint> samples;     // X_1..X_n when recorded
};

// In-place estimator used by every driver; rm_step is the value-semantic twin.
class StreamingMedian {
public:
    StreamingMedian(StepSchedule schedule, SpaceSpec space, RunOptions options = {})
        : schedule_(schedule), space_(std::move(space)), options_(options) {}

    void start(std::span<const double> first) {
        space_.require(first.size(), "StreamingMedian::start");
        state_.n = 1;
        state_.skipped = 0;
        const bool keep = std::sqrt(kernel::inner(first, first, space_.weights())) <= options_.init.radius;
        std::vector<double> z(first.size(), 0.0);
        if (keep) std::copy(first.begin(), first.end(), z.begin());
        state_.z = HilbertPoint(z);
        state_.z_bar = state_.z;
        dist_sum_ = 0.0;
    }

    void update(std::span<const double> x) {
        if (state_.n == 0) throw ContractViolation("StreamingMedian: update before start");
        const double r = kernel::distance(x, state_.z.coords(), space_.weights());
        dist_sum_ += r;
        const double eps = options_.degenerate_rel * dist_sum_ / static_cast<double>(state_.n);
        if (!detail::advance(state_.n, state_.z.coords(), state_.z_bar.coords(), x, schedule_,
                             space_.weights(), eps))
            ++state_.skipped;
    }

    const EstimatorState& state() const noexcept { return state_; }
    const SpaceSpec& space() const noexcept { return space_; }
    const StepSchedule& schedule() const noexcept { return schedule_; }

private:
    StepSchedule schedule_;
    SpaceSpec space_;
    RunOptions options_;
    EstimatorState state_;
    double dist_sum_ = 0.0;
};

namespace detail {

inline void check_checkpoints(std::span<const std::uint64_t> checkpoints, std::uint64_t n_max) {
    if (n_max < 1) throw ValidationError("run_stream: n_max must be >= 1");
    std::uint64_t prev = 0;
    for (auto c : checkpoints) {
        if (c < 1 || c > n_max) throw ValidationError("run_stream: checkpoint outside [1, n_max]");
        if (c <= prev) throw ValidationError("run_stream: checkpoints must be strictly increasing");
        prev = c;
    }
}

} // namespace detail

// Drives the estimator over n_max draws. `observer(state)` runs after every
// step (n = 1 included); snapshots are kept at the requested checkpoints.
template <SampleSource Source, class Observer>
Trajectory run_stream(Source& source, std::uint64_t n_max, const StepSchedule& schedule,
                      const SpaceSpec& space, std::span<const std::uint64_t> checkpoints,
                      const RunOptions& options, Observer&& observer) {
    detail::check_checkpoints(checkpoints, n_max);
    space.require(source.dimension(), "run_stream");
    Trajectory traj;
    traj.snapshots.reserve(checkpoints.size());
    if (options.record_samples) traj.samples.reserve(n_max);

    std::vector<double> x(space.dimension());
    StreamingMedian est(schedule, space, options);
    std::size_t next_cp = 0;
    for (std::uint64_t n = 1; n <= n_max; ++n) {
        source.next(std::span<double>(x));
        if (options.record_samples) traj.samples.emplace_back(x);
        if (n == 1)
            est.start(x);
        else
            est.update(x);
        observer(est.state());
        if (next_cp < checkpoints.size() && checkpoints[next_cp] == n) {
            traj.snapshots.push_back(est.state());
            ++next_cp;
        }
    }
    return traj;
}

template <SampleSource Source>
Trajectory run_stream(Source& source, std::uint64_t n_max, const StepSchedule& schedule,
                      const SpaceSpec& space, std::span<const std::uint64_t> checkpoints,
                      const RunOptions& options = {}) {
    return run_stream(source, n_max, schedule, space, checkpoints, options,
                      [](const EstimatorState&) {});
}

// Every n in [1, n_max]; what the decomposition diagnostics need.
inline std::vector<std::uint64_t> every_step(std::uint64_t n_max) {
    std::vector<std::uint64_t> cps(n_max);
    for (std::uint64_t i = 0; i < n_max; ++i) cps[i] = i + 1;
    return cps;
}

// ---------------------------------------------------------------------------
// Empirical objective and Weiszfeld oracle

inline double objective_empirical(const HilbertPoint& h, std::span<const HilbertPoint> points,
                                  const SpaceSpec& space) {
    if (points.empty()) throw ContractViolation("objective_empirical: no points");
    space.require(h, "objective_empirical");
    const auto w = space.weights();
    double s = 0.0;
    for (const auto& x : points) {
        space.require(x, "objective_empirical");
        s += kernel::distance(x.coords(), h.coords(), w) -
             std::sqrt(kernel::inner(x.coords(), x.coords(), w));
    }
    return s / static_cast<double>(points.size());
}

struct WeiszfeldResult {
    HilbertPoint point;
    std::size_t iterations = 0;
    double final_step = 0.0;
    bool converged = false;
    double tolerance = 0.0; // absolute threshold both stopping tests used: tol * scale
    double scale = 0.0;     // mean pairwise distance of the data
};

struct WeiszfeldOptions {
    double tol = 1e-10;
    std::size_t max_iter = 10000;
    // Called with every iterate; used to audit monotonicity of the objective.
    std::function<void(const HilbertPoint&)> on_iterate;
};

namespace detail {

// Mean pairwise distance; beyond 2048 points an evenly strided subset is used.
inline double mean_pairwise_distance(std::span<const HilbertPoint> points, std::span<const double> w) {
    const std::size_t n = points.size();
    if (n < 2) return 0.0;
    const std::size_t cap = 2048;
    std::vector<std::size_t> idx;
    if (n <= cap) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
        idx.resize(cap);
        for (std::size_t i = 0; i < cap; ++i) idx[i] = (i * n) / cap;
    }
    double s = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b)
            s += kernel::distance(points[idx[a]].coords(), points[idx[b]].coords(), w);
    const double pairs = 0.5 * static_cast<double>(idx.size()) * static_cast<double>(idx.size() - 1);
    return s / pairs;
}

// |sum_{i: x_i != at} w_i (x_i - at)/|x_i - at||, plus the total weight of points equal to `at`.
inline std::pair<double, double> coincidence_test(std::span<const HilbertPoint> points,
                                                  std::span<const double> weights,
                                                  std::span<const double> at,
                                                  std::span<const double> qw) {
    std::vector<double> g(at.size(), 0.0);
    double eta = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double wi = weights.empty() ? 1.0 : weights[i];
        const double r = kernel::distance(points[i].coords(), at, qw);
        if (r == 0.0) {
            eta += wi;
            continue;
        }
        for (std::size_t k = 0; k < at.size(); ++k) g[k] += wi * (points[i][k] - at[k]) / r;
    }
    return {std::sqrt(kernel::inner(g, g, qw)), eta};
}

} // namespace detail

// argmin_h sum_i w_i |x_i - h|. Iterates that land on (or are nearest to) a data
// point are resolved by the exact optimality test at that point: x_j is the
// median iff |sum_{i != j} w_i u_i| <= w_j.
inline WeiszfeldResult weiszfeld(std::span<const HilbertPoint> points, std::span<const double> weights,
                                 const SpaceSpec& space, const WeiszfeldOptions& options = {}) {
    if (points.empty()) throw ContractViolation("weiszfeld: no points");
    if (!weights.empty() && weights.size() != points.size())
        throw ContractViolation("weiszfeld: weights/points length mismatch");
    for (double w : weights)
        if (!std::isfinite(w) || w <= 0.0) throw ContractViolation("weiszfeld: weights must be > 0");
    if (!(options.tol > 0.0)) throw ContractViolation("weiszfeld: tol must be > 0");
    for (const auto& p : points) space.require(p, "weiszfeld");

    const std::size_t d = space.dimension();
    const auto qw = space.weights();
    auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

    WeiszfeldResult res;
    const bool all_same = std::all_of(points.begin(), points.end(),
                                      [&](const HilbertPoint& p) { return p == points[0]; });
    if (all_same) {
        res.point = points[0];
        res.converged = true;
        return res;
    }
    res.scale = detail::mean_pairwise_distance(points, qw);
    res.tolerance = options.tol * res.scale;
    const double coincide = 1e-14 * res.scale;

    std::vector<double> h(d, 0.0);
    double wsum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        wsum += weight(i);
        for (std::size_t k = 0; k < d; ++k) h[k] += weight(i) * points[i][k];
    }
    for (double& v : h) v /= wsum;

    std::vector<double> num(d), grad(d), next(d);
    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        res.iterations = it;
        std::fill(num.begin(), num.end(), 0.0);
        std::fill(grad.begin(), grad.end(), 0.0);
        double den = 0.0, eta = 0.0, rmin = std::numeric_limits<double>::infinity();
        std::size_t nearest = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double r = kernel::distance(points[i].coords(), h, qw);
            if (r < rmin) {
                rmin = r;
                nearest = i;
            }
            if (r <= coincide) {
                eta += weight(i);
                continue;
            }
            const double a = weight(i) / r;
            den += a;
            for (std::size_t k = 0; k < d; ++k) {
                num[k] += a * points[i][k];
                grad[k] += a * (points[i][k] - h[k]);
            }
        }

        const auto [rg, eta_near] = detail::coincidence_test(points, weights, points[nearest].coords(), qw);
        if (rg <= eta_near) {
            double step = kernel::distance(points[nearest].coords(), h, qw);
            res.point = points[nearest];
            res.final_step = step;
            res.converged = true;
            if (options.on_iterate) options.on_iterate(res.point);
            return res;
        }

        if (eta > 0.0) {
            // Vardi-Zhang modified step away from a non-optimal data point.
            const double rt = std::sqrt(kernel::inner(grad, grad, qw));
            const double lam = std::min(1.0, eta / rt);
            for (std::size_t k = 0; k < d; ++k) next[k] = (1.0 - lam) * (num[k] / den) + lam * h[k];
        } else {
            for (std::size_t k = 0; k < d; ++k) next[k] = num[k] / den;
        }

        const double step = kernel::distance(next, h, qw);
        h.swap(next);
        res.final_step = step;
        if (options.on_iterate) options.on_iterate(HilbertPoint(h));

        if (step <= res.tolerance) {
            // Stationarity of the normalized gradient at the new iterate.
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = 0; i < points.size(); ++i) {
                const double r = kernel::distance(points[i].coords(), h, qw);
                if (r == 0.0) continue;
                for (std::size_t k = 0; k < d; ++k) grad[k] += weight(i) * (points[i][k] - h[k]) / r;
            }
            const double phi = std::sqrt(kernel::inner(grad, grad, qw)) / wsum;
            if (phi <= res.tolerance) {
                res.converged = true;
                break;
            }
        }
    }
    res.point = HilbertPoint(h);
    return res;
}

inline WeiszfeldResult weiszfeld(std::span<const HilbertPoint> points, const SpaceSpec& space,
                                 const WeiszfeldOptions& options = {}) {
    return weiszfeld(points, std::span<const double>{}, space, options);
}

} // namespace geomed
