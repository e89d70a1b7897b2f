// Acceptance suite: one PASS/FAIL line per criterion.
//
//     acceptance            run every criterion
//     acceptance --only N   run criterion N
//
// Exit status is 0 iff every selected criterion passes.

#include "geomed/config.hpp"
#include "geomed/diagnostics.hpp"
#include "geomed/estimators.hpp"
#include "geomed/experiments.hpp"
#include "geomed/json_io.hpp"
#include "geomed/report.hpp"
#include "geomed/sources.hpp"

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

using namespace geomed;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

RatesConfig load_config(const std::string& name) {
    return build_rates_config(parse_key_values(read_text_file(std::string(GEOMED_CONFIG_DIR) + "/" + name)));
}

// Shared by criteria 1-3.
const ReplicationResult& gaussian_replications() {
    static const ReplicationResult res = run_replications(load_config("gaussian_d10.cfg").experiment);
    return res;
}

const MomentCurve& curve(const ReplicationResult& res, int p, EstimatorKind k) {
    for (const auto& c : res.curves)
        if (c.p == p && c.estimator == k) return c;
    throw std::runtime_error("missing curve");
}

Verdict slope_check(int p, EstimatorKind k, double target, double tol, bool need_r2) {
    const auto rc = load_config("gaussian_d10.cfg");
    const auto fit = fit_rate(curve(gaussian_replications(), p, k), rc.experiment.fit_window);
    const bool ok = std::abs(fit.slope - target) <= tol && (!need_r2 || fit.r_squared >= 0.98);
    return {ok, fmt("slope=%.4f target=%.2f+-%.2f slope_stderr=%.4f r2=%.5f points=%zu", fit.slope, target, tol,
                    fit.slope_stderr, fit.r_squared, fit.points)};
}

Verdict criterion1() {
    const double a = load_config("gaussian_d10.cfg").experiment.schedule.alpha();
    return slope_check(1, EstimatorKind::rm, -a, 0.12, true);
}

Verdict criterion2() { return slope_check(1, EstimatorKind::averaged, -1.0, 0.12, true); }

Verdict criterion3() {
    const double a = load_config("gaussian_d10.cfg").experiment.schedule.alpha();
    return slope_check(2, EstimatorKind::rm, -2.0 * a, 0.20, false);
}

Verdict criterion4() {
    const auto ex = load_config("contaminated_d10.cfg").experiment;
    const auto res = run_replications(ex);
    std::size_t median_ok = 0, mean_miss = 0;
    double mean_rms = 0.0;
    for (const auto& tr : res.traces) {
        median_ok += tr.avg_dist.back() <= 0.1 ? 1 : 0;
        mean_miss += tr.mean_dist.back() > 0.5 ? 1 : 0;
        mean_rms += tr.mean_dist.back() * tr.mean_dist.back();
    }
    const double m = static_cast<double>(res.traces.size());
    mean_rms = std::sqrt(mean_rms / m);
    const bool med_pass = static_cast<double>(median_ok) >= 0.95 * m;
    const bool mean_pass = static_cast<double>(mean_miss) >= 0.95 * m;
    return {med_pass && mean_pass,
            fmt("median_within_0.1=%zu/%zu (%s) sample_mean_miss_gt_0.5=%zu/%zu (%s) sample_mean_rms=%.4f", median_ok,
                res.traces.size(), med_pass ? "ok" : "fail", mean_miss, res.traces.size(), mean_pass ? "ok" : "fail",
                mean_rms)};
}

Verdict criterion5() {
    auto data = std::make_shared<const std::vector<HilbertPoint>>(
        draw(SourceSpec{SphericalGaussian{HilbertPoint::zeros(5), 1.0}, 5}, 10000));
    ExperimentConfig ex;
    ex.schedule = StepSchedule(2.0, 0.66);
    ex.n_max = 1000000;
    ex.checkpoints = {ex.n_max};
    ex.fit_window = {ex.n_max, ex.n_max};
    int ok = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ex.master_seed = seed;
        const double d = compare_to_oracle(data, ex).back().distance;
        ok += d <= 0.01 ? 1 : 0;
        worst = std::max(worst, d);
    }
    return {ok >= 18, fmt("within_0.01=%d/20 worst=%.5f", ok, worst)};
}

Verdict criterion6() {
    auto pts = std::make_shared<const std::vector<HilbertPoint>>(
        draw(SourceSpec{SphericalGaussian{HilbertPoint::zeros(5), 1.0}, 6}, 50));
    const auto space = SpaceSpec::euclidean(5);
    const StepSchedule sched(2.0, 0.66);
    const std::uint64_t n = 1000;
    Sampler s(SourceSpec{Empirical{pts, true}, 66});
    RunOptions opts;
    opts.record_samples = true;
    const auto cps = every_step(n + 1);
    const auto traj = run_stream(s, n + 1, sched, space, cps, opts);
    const auto m = weiszfeld(*pts, space).point;
    const auto hess = hessian_empirical(m, *pts, space);
    const auto recs = xi_delta(traj, sched, *pts, space, m, hess.op);
    const double abel = abel_identity_residual(traj, recs, sched, space, m, hess.op, n);

    double xi_max = 0.0;
    for (const auto& r : recs) xi_max = std::max(xi_max, norm(r.xi, space));

    double step_err = 0.0, mean_err = 0.0;
    std::vector<long double> sum(5, 0.0L);
    for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
        const auto& st = traj.snapshots[i];
        for (std::size_t k = 0; k < 5; ++k) sum[k] += st.z[k];
        double diff = 0.0, scale = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
            const double mk = static_cast<double>(sum[k] / static_cast<long double>(st.n));
            diff += (st.z_bar[k] - mk) * (st.z_bar[k] - mk);
            scale += mk * mk;
        }
        mean_err = std::max(mean_err, std::sqrt(diff) / std::max(std::sqrt(scale), 1e-300));
        if (i + 1 < traj.snapshots.size() && traj.snapshots[i + 1].skipped == st.skipped) {
            const double len = distance(traj.snapshots[i + 1].z, st.z, space);
            step_err = std::max(step_err, std::abs(len - sched(st.n)) / sched(st.n));
        }
    }
    const bool ok = abel <= 1e-8 && xi_max <= 2.0 && step_err <= 1e-12 && mean_err <= 1e-12;
    return {ok, fmt("abel_residual=%.3e xi_norm_max=%.6f step_length_rel_err=%.3e running_mean_rel_err=%.3e", abel,
                    xi_max, step_err, mean_err)};
}

Verdict criterion7() {
    Rng rng(7);
    double worst_fd = 0.0, worst_lo = std::numeric_limits<double>::infinity(), worst_hi = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = 2 + static_cast<std::size_t>(rng.below(19));
        const auto space = SpaceSpec::euclidean(d);
        const auto pts = draw(SourceSpec{SphericalGaussian{HilbertPoint::zeros(d), 1.0}, 700 + static_cast<std::uint64_t>(t)}, 200);
        std::vector<double> hv(d);
        for (double& v : hv) v = 0.3 * rng.normal();
        const HilbertPoint h(hv);
        const auto hess = hessian_empirical(h, pts, space);
        const double step = 1e-5;
        for (std::size_t j = 0; j < d; ++j) {
            auto hp = hv, hm = hv;
            hp[j] += step;
            hm[j] -= step;
            const auto gp = phi_empirical(HilbertPoint(hp), pts, space), gm = phi_empirical(HilbertPoint(hm), pts, space);
            for (std::size_t i = 0; i < d; ++i) {
                const double fd = (gp[i] - gm[i]) / (2 * step);
                worst_fd = std::max(worst_fd, std::abs(fd - hess.op(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
            }
        }
        const auto ev = spectrum(hess.op, space);
        worst_lo = std::min(worst_lo, ev.front());
        worst_hi = std::max(worst_hi, ev.back() - hess.c1_hat);
    }
    const auto h1 = hessian_empirical({0.25}, std::vector<HilbertPoint>{{1}, {-3}, {2}}, SpaceSpec::euclidean(1));
    const bool zero1 = h1.op.rows() == 1 && h1.op(0, 0) == 0.0;
    const bool ok = worst_fd <= 1e-5 && worst_lo >= -1e-10 && worst_hi <= 1e-10 && zero1;
    return {ok, fmt("max_fd_error=%.3e min_eigenvalue=%.3e max_eigenvalue_minus_c1=%.3e d1_zero=%s", worst_fd,
                    worst_lo, worst_hi, zero1 ? "yes" : "no")};
}

Verdict criterion8() {
    auto ex = load_config("gaussian_d10.cfg").experiment;
    ex.replicates = 50;
    ex.moments = {1};
    const auto res = run_replications(ex);
    const auto [early, late] = split_window(ex.fit_window);
    const double beta = ex.schedule.alpha() - 0.1;
    const auto env = as_envelope(res, ex.schedule.alpha(), beta, early, late);
    const auto avg = averaged_as_check(res, 1.0, early, late);
    const bool ok = env.fraction >= 0.8 && avg.fraction >= 0.8;
    return {ok, fmt("beta=%.2f envelope_fraction=%.3f averaged_fraction(delta=1)=%.3f early=[%llu,%llu] late=[%llu,%llu]",
                    beta, env.fraction, avg.fraction, static_cast<unsigned long long>(early.lo),
                    static_cast<unsigned long long>(early.hi), static_cast<unsigned long long>(late.lo),
                    static_cast<unsigned long long>(late.hi))};
}

Verdict criterion9() {
    const auto e2 = SpaceSpec::euclidean(2);
    const auto sq = weiszfeld(std::vector<HilbertPoint>{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}, e2);
    const double sq_err = norm(sq.point, e2);
    const auto line = weiszfeld(std::vector<HilbertPoint>{{0}, {1}, {10}}, SpaceSpec::euclidean(1));
    const bool exact = line.point[0] == 1.0;

    const std::vector<HilbertPoint> tri{{0, 0}, {1, 0}, {0, 1}};
    const auto wt = weiszfeld(tri, e2);
    // Exhaustive 1e-4 grid over the unit square.
    double best = std::numeric_limits<double>::infinity(), bx = 0, by = 0;
    for (int i = 0; i <= 10000; ++i) {
        const double x = 1e-4 * i;
        for (int j = 0; j <= 10000; ++j) {
            const double y = 1e-4 * j;
            const double s = std::hypot(x, y) + std::hypot(x - 1, y) + std::hypot(x, y - 1);
            if (s < best) {
                best = s;
                bx = x;
                by = y;
            }
        }
    }
    const double tri_err = std::hypot(wt.point[0] - bx, wt.point[1] - by);
    const bool ok = sq_err <= 1e-9 && exact && tri_err <= 1e-3;
    return {ok, fmt("square_error=%.3e line_median=%.17g triangle=(%.10f,%.10f) grid=(%.4f,%.4f) triangle_error=%.3e",
                    sq_err, line.point[0], wt.point[0], wt.point[1], bx, by, tri_err)};
}

Verdict criterion10() {
    auto rc = load_config("gaussian_d10.cfg");
    rc.experiment.replicates = 20;
    rc.experiment.n_max = 10000;
    rc.experiment.checkpoints = log_checkpoints(10000, rc.checkpoints_per_decade);
    rc.experiment.fit_window = {100, 10000};
    rc.experiment.threads = 1;
    const auto a = to_json_text(run_rates(rc).document);
    const auto b = to_json_text(run_rates(rc).document);
    rc.experiment.threads = 4;
    const auto c = to_json_text(run_rates(rc).document);
    const bool ok = a == b && a == c;
    return {ok, fmt("bytes=%zu repeat_identical=%s threads4_identical=%s", a.size(), a == b ? "yes" : "no",
                    a == c ? "yes" : "no")};
}

struct Criterion {
    const char* name;
    std::function<Verdict()> run;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"rm quadratic-mean rate", criterion1},
        {"averaged quadratic-mean rate", criterion2},
        {"rm fourth-moment rate", criterion3},
        {"robustness under contamination", criterion4},
        {"agreement with the Weiszfeld oracle", criterion5},
        {"exact identities", criterion6},
        {"gradient/Hessian oracle", criterion7},
        {"almost-sure envelopes", criterion8},
        {"Weiszfeld battery", criterion9},
        {"rates determinism", criterion10},
    };
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: acceptance [--only N]\n");
            return 2;
        }
    }
    if (only < 0 || only > static_cast<int>(all.size())) {
        std::fprintf(stderr, "acceptance: no criterion %d\n", only);
        return 2;
    }
    bool all_pass = true;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (only != 0 && static_cast<int>(i) + 1 != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = all[i].run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %zu %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", i + 1, all[i].name, v.detail.c_str(), secs);
        std::fflush(stdout);
        all_pass = all_pass && v.pass;
    }
    return all_pass ? 0 : 1;
}
