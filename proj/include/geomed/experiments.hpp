#pragma once

// Monte Carlo checks of the convergence rates: moment curves of |Z_n - m| and
// |Z̄_n - m| over independent replicates, log-log power-law fits, and
// trajectory-envelope trend statistics for the almost-sure rates.

#include "errors.hpp"
#include "estimators.hpp"
#include "hilbert.hpp"
#include "rng.hpp"
#include "sources.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace geomed {

// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// 10^(j/per_decade) rounded, deduplicated, capped by n_max, and n_max itself.
inline std::vector<std::uint64_t> log_checkpoints(std::uint64_t n_max, int per_decade = 20) {
    if (n_max < 1) throw ValidationError("checkpoints: n_max must be >= 1");
    if (per_decade < 1) throw ValidationError("checkpoints: per_decade must be >= 1");
    std::vector<std::uint64_t> out;
    for (int j = 0;; ++j) {
        const double v = std::pow(10.0, static_cast<double>(j) / per_decade);
        const auto n = static_cast<std::uint64_t>(std::llround(v));
        if (n > n_max) break;
        if (out.empty() || out.back() != n) out.push_back(n);
    }
    if (out.back() != n_max) out.push_back(n_max);
    return out;
}

struct Window {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0; // inclusive
    bool contains(std::uint64_t n) const noexcept { return n >= lo && n <= hi; }
};

struct ExperimentConfig {
    SourceSpec source;
    StepSchedule schedule{1.0, 2.0 / 3.0};
    std::uint64_t n_max = 100000;
    std::vector<std::uint64_t> checkpoints; // empty: log_checkpoints(n_max, 20)
    std::size_t replicates = 200;
    std::vector<int> moments{1, 2};
    std::uint64_t master_seed = 0;
    Window fit_window{1000, 100000};
    RunOptions run;
    unsigned threads = 0; // 0: hardware concurrency
    // Test hook: replicate execution order (a permutation of 0..M-1). Results
    // are stored by replicate index, so the order never changes the outcome.
    std::vector<std::size_t> execution_order;
};

inline std::vector<std::uint64_t> effective_checkpoints(const ExperimentConfig& c) {
    return c.checkpoints.empty() ? log_checkpoints(c.n_max, 20) : c.checkpoints;
}

// Known median of the configured law; rejects configurations the rate results
// do not cover.
inline HilbertPoint validate_experiment(const ExperimentConfig& c) {
    validate(c.source);
    const auto cps = effective_checkpoints(c);
    detail::check_checkpoints(cps, c.n_max);
    if (c.replicates < 2) throw ValidationError("experiment: replicates must be >= 2");
    for (int p : c.moments)
        if (p < 1) throw ValidationError("experiment: moments must be >= 1");
    if (c.fit_window.lo > c.fit_window.hi || c.fit_window.lo < cps.front() || c.fit_window.hi > cps.back())
        throw ValidationError("experiment: fit_window outside the checkpoint range");
    if (!c.execution_order.empty()) {
        auto sorted = c.execution_order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i)
            if (sorted.size() != c.replicates || sorted[i] != i)
                throw ValidationError("experiment: execution_order must permute the replicates");
    }
    const SpaceSpec space = space_of(c.source);
    if (space.dimension() < 2) throw ValidationError("experiment: A1 fails (law concentrated on a line)");
    if (const auto* e = std::get_if<Empirical>(&c.source.kind)) {
        if (e->dataset->size() < 2 || !assumption_check(*e->dataset, space, 0).a1_ok)
            throw ValidationError("experiment: A1 fails for the empirical dataset");
    }
    auto m = true_median(c.source);
    if (!m) throw ValidationError("experiment: true median unknown for this source");
    return *m;
}

// Runs fn(r) for every replicate on a worker pool. Exceptions propagate.
template <class Fn>
void for_each_replicate(const ExperimentConfig& c, Fn&& fn) {
    unsigned threads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(c.replicates));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= c.replicates) return;
            const std::size_t r = c.execution_order.empty() ? i : c.execution_order[i];
            try {
                fn(r);
            } catch (...) {
                std::lock_guard lk(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

struct ReplicateTrace {
    std::vector<double> rm_dist;   // |Z_n - m| at checkpoints
    std::vector<double> avg_dist;  // |Z̄_n - m|
    std::vector<double> mean_dist; // |sample mean - m|
    std::uint64_t skipped = 0;
};

inline SourceSpec replicate_source(const ExperimentConfig& c, std::size_t r) {
    SourceSpec s = c.source;
    s.seed = mix_seed(c.master_seed, r);
    return s;
}

inline ReplicateTrace simulate_replicate(const ExperimentConfig& c, const HilbertPoint& m,
                                         std::span<const std::uint64_t> cps, std::size_t r) {
    Sampler sampler(replicate_source(c, r));
    const SpaceSpec space = space_of(c.source);
    const auto w = space.weights();
    const std::size_t d = space.dimension();
    StreamingMedian est(c.schedule, space, c.run);
    ReplicateTrace tr;
    tr.rm_dist.reserve(cps.size());
    tr.avg_dist.reserve(cps.size());
    tr.mean_dist.reserve(cps.size());
    std::vector<double> x(d), mean(d, 0.0);
    std::size_t next_cp = 0;
    for (std::uint64_t n = 1; n <= c.n_max; ++n) {
        sampler.next(x);
        if (n == 1)
            est.start(x);
        else
            est.update(x);
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < d; ++k) mean[k] += (x[k] - mean[k]) * inv;
        const auto& st = est.state();
        if (next_cp < cps.size() && cps[next_cp] == n) {
            tr.rm_dist.push_back(kernel::distance(st.z.coords(), m.coords(), w));
            tr.avg_dist.push_back(kernel::distance(st.z_bar.coords(), m.coords(), w));
            tr.mean_dist.push_back(kernel::distance(mean, m.coords(), w));
            ++next_cp;
        }
    }
    tr.skipped = est.state().skipped;
    return tr;
}

enum class EstimatorKind { rm, averaged };

inline const char* estimator_name(EstimatorKind k) { return k == EstimatorKind::rm ? "rm" : "averaged"; }

struct MomentPoint {
    std::uint64_t n = 0;
    double moment = 0.0; // (1/M) sum_r |.|^(2p)
    double standard_error = 0.0;
};

struct MomentCurve {
    int p = 1;
    EstimatorKind estimator = EstimatorKind::rm;
    std::vector<MomentPoint> points;
};

struct ReplicationResult {
    HilbertPoint median;
    std::vector<std::uint64_t> checkpoints;
    std::vector<ReplicateTrace> traces; // indexed by replicate
    std::vector<MomentCurve> curves;    // per p: rm then averaged
};

inline MomentCurve moment_curve(const ReplicationResult& res, int p, EstimatorKind kind) {
    MomentCurve curve;
    curve.p = p;
    curve.estimator = kind;
    const double m_count = static_cast<double>(res.traces.size());
    for (std::size_t j = 0; j < res.checkpoints.size(); ++j) {
        CompensatedSum s, s2;
        for (const auto& tr : res.traces) {
            const double dist = (kind == EstimatorKind::rm ? tr.rm_dist : tr.avg_dist)[j];
            const double v = std::pow(dist, 2 * p);
            s.add(v);
            s2.add(v * v);
        }
        const double mean = s.value() / m_count;
        const double var = std::max(0.0, (s2.value() - m_count * mean * mean) / (m_count - 1.0));
        curve.points.push_back({res.checkpoints[j], mean, std::sqrt(var / m_count)});
    }
    return curve;
}

inline ReplicationResult run_replications(const ExperimentConfig& c) {
    ReplicationResult res;
    res.median = validate_experiment(c);
    res.checkpoints = effective_checkpoints(c);
    res.traces.resize(c.replicates);
    for_each_replicate(c, [&](std::size_t r) {
        res.traces[r] = simulate_replicate(c, res.median, res.checkpoints, r);
    });
    for (int p : c.moments) {
        res.curves.push_back(moment_curve(res, p, EstimatorKind::rm));
        res.curves.push_back(moment_curve(res, p, EstimatorKind::averaged));
    }
    return res;
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0;
    std::size_t points = 0;
};

// OLS of log(moment) on log(n) over checkpoints inside the window.
inline RateFit fit_rate(const MomentCurve& curve, Window window) {
    std::vector<double> xs, ys;
    for (const auto& pt : curve.points) {
        if (!window.contains(pt.n)) continue;
        if (!(pt.moment > 0.0)) throw ValidationError("fit_rate: non-positive moment in window");
        xs.push_back(std::log(static_cast<double>(pt.n)));
        ys.push_back(std::log(pt.moment));
    }
    if (xs.size() < 5) throw ValidationError("fit_rate: fewer than 5 checkpoints in window");
    const double k = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    RateFit f;
    f.points = xs.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (f.intercept + f.slope * xs[i]);
        sse += e * e;
    }
    f.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
    f.slope_stderr = std::sqrt(sse / (k - 2.0) / sxx);
    return f;
}

struct EnvelopeReport {
    double exponent = 0.0; // beta, or delta for the averaged check
    Window early, late;
    std::vector<double> early_max; // per trajectory
    std::vector<double> late_max;
    double fraction = 0.0; // trajectories with late_max <= early_max
};

namespace detail {

inline void check_windows(Window early, Window late) {
    if (early.lo < 1 || early.lo > early.hi || late.lo > late.hi)
        throw ValidationError("envelope: malformed window");
    if (late.lo <= early.hi) throw ValidationError("envelope: late window must start after the early window");
}

inline double fraction_not_increasing(const std::vector<double>& early, const std::vector<double>& late) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < early.size(); ++i) ok += late[i] <= early[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(early.size());
}

// Per trajectory: max over checkpoints in each window of stat(n, trace, j).
template <class Stat>
EnvelopeReport window_maxima(const ReplicationResult& res, Window early, Window late, Stat&& stat) {
    EnvelopeReport rep;
    rep.early = early;
    rep.late = late;
    for (const auto& tr : res.traces) {
        double e = 0.0, l = 0.0;
        bool any_e = false, any_l = false;
        for (std::size_t j = 0; j < res.checkpoints.size(); ++j) {
            const auto n = res.checkpoints[j];
            if (early.contains(n)) {
                e = std::max(e, stat(n, tr, j));
                any_e = true;
            } else if (late.contains(n)) {
                l = std::max(l, stat(n, tr, j));
                any_l = true;
            }
        }
        if (!any_e || !any_l) throw ValidationError("envelope: a window holds no checkpoint");
        rep.early_max.push_back(e);
        rep.late_max.push_back(l);
    }
    rep.fraction = fraction_not_increasing(rep.early_max, rep.late_max);
    return rep;
}

} // namespace detail

// S(w) = max_{n in w} n^(beta/2) |Z_n - m| over the log-spaced checkpoints
// (the o(n^{-beta/2}) almost-sure rate, as a late-vs-early trend statistic).
inline EnvelopeReport as_envelope(const ReplicationResult& res, double alpha, double beta, Window early, Window late) {
    if (!(beta < alpha)) throw ValidationError("as_envelope: beta must be < alpha");
    detail::check_windows(early, late);
    auto rep = detail::window_maxima(res, early, late, [&](std::uint64_t n, const ReplicateTrace& tr, std::size_t j) {
        return std::pow(static_cast<double>(n), 0.5 * beta) * tr.rm_dist[j];
    });
    rep.exponent = beta;
    return rep;
}

inline EnvelopeReport as_envelope(const ExperimentConfig& c, double beta, Window early, Window late) {
    if (!(beta < c.schedule.alpha())) throw ValidationError("as_envelope: beta must be < alpha");
    detail::check_windows(early, late);
    if (late.hi > c.n_max) throw ValidationError("as_envelope: window beyond n_max");
    ExperimentConfig cc = c;
    cc.moments = {1};
    return as_envelope(run_replications(cc), c.schedule.alpha(), beta, early, late);
}

// R_n = sqrt(n) (ln n)^{-(1+delta)/2} |Z̄_n - m| at the checkpoints of an
// existing replication set.
inline EnvelopeReport averaged_as_check(const ReplicationResult& res, double delta, Window early, Window late) {
    if (!(delta > 0.0)) throw ValidationError("averaged_as_check: delta must be > 0");
    detail::check_windows(early, late);
    if (early.lo < 2) throw ValidationError("averaged_as_check: windows must start at n >= 2 (ln n > 0)");
    auto rep = detail::window_maxima(res, early, late, [&](std::uint64_t n, const ReplicateTrace& tr, std::size_t j) {
        const double nd = static_cast<double>(n);
        return std::sqrt(nd) * std::pow(std::log(nd), -0.5 * (1.0 + delta)) * tr.avg_dist[j];
    });
    rep.exponent = delta;
    return rep;
}

inline EnvelopeReport averaged_as_check(const ExperimentConfig& c, double delta, Window early, Window late) {
    if (!(delta > 0.0)) throw ValidationError("averaged_as_check: delta must be > 0");
    detail::check_windows(early, late);
    ExperimentConfig cc = c;
    cc.moments = {1};
    return averaged_as_check(run_replications(cc), delta, early, late);
}

// Early/late halves of the fit window, split at its geometric midpoint.
inline std::pair<Window, Window> split_window(Window w) {
    const auto mid = static_cast<std::uint64_t>(std::llround(std::sqrt(static_cast<double>(w.lo) * static_cast<double>(w.hi))));
    return {Window{w.lo, mid}, Window{mid + 1, w.hi}};
}

struct OracleDistance {
    std::uint64_t n = 0;
    double distance = 0.0;
};

// |Z̄_n - m_W| at the checkpoints of one resampled run (replicate 0 of the
// configured master seed), m_W the Weiszfeld median of the dataset.
inline std::vector<OracleDistance> compare_to_oracle(std::shared_ptr<const std::vector<HilbertPoint>> dataset,
                                                     const ExperimentConfig& config) {
    if (!dataset || dataset->empty()) throw ValidationError("compare_to_oracle: empty dataset");
    ExperimentConfig c = config;
    c.source.kind = Empirical{dataset, true};
    c.replicates = std::max<std::size_t>(c.replicates, 2);
    const HilbertPoint m = validate_experiment(c);
    const auto cps = effective_checkpoints(c);
    const auto tr = simulate_replicate(c, m, cps, 0);
    std::vector<OracleDistance> out;
    for (std::size_t j = 0; j < cps.size(); ++j) out.push_back({cps[j], tr.avg_dist[j]});
    return out;
}

} // namespace geomed
