#pragma once

// End-to-end runs behind the CLI, rendered as JSON documents and CSV tables.

#include "config.hpp"
#include "diagnostics.hpp"
#include "estimators.hpp"
#include "experiments.hpp"
#include "json_io.hpp"
#include "sources.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace geomed {

struct Assertion {
    std::string name;
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool pass = false;
};

struct RatesOutcome {
    ReplicationResult replication;
    std::vector<RateFit> fits; // parallel to replication.curves
    EnvelopeReport envelope;
    EnvelopeReport averaged_envelope;
    std::vector<Assertion> assertions;
    bool all_pass = true;
    Json document;
};

inline Json to_json(const Window& w) { return Json::array({w.lo, w.hi}); }

inline Json to_json(const RateFit& f) {
    return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
                {"slope_stderr", f.slope_stderr}, {"points", f.points}};
}

inline Json to_json(const EnvelopeReport& e, const char* exponent_name) {
    return Json{{exponent_name, e.exponent}, {"early", to_json(e.early)}, {"late", to_json(e.late)},
                {"fraction", e.fraction}};
}

// Slope targets: rm p -> -p*alpha, averaged p -> -p; p = 1 uses slope_tol,
// higher moments slope_tol_higher. Every fit must reach min_r2 and both
// envelope fractions envelope_min_fraction.
inline RatesOutcome run_rates(const RatesConfig& rc) {
    RatesOutcome out;
    const auto& ex = rc.experiment;
    out.replication = run_replications(ex);
    const auto [early, late] = split_window(ex.fit_window);
    out.envelope = as_envelope(out.replication, ex.schedule.alpha(), rc.beta, early, late);
    out.averaged_envelope = averaged_as_check(out.replication, rc.delta, early, late);

    auto check = [&](std::string name, double v, double lo, double hi) {
        const bool ok = v >= lo && v <= hi;
        out.assertions.push_back({std::move(name), v, lo, hi, ok});
        out.all_pass = out.all_pass && ok;
    };
    Json curves = Json::array(), fits = Json::array();
    for (const auto& c : out.replication.curves) {
        const auto fit = fit_rate(c, ex.fit_window);
        out.fits.push_back(fit);
        Json pts = Json::array();
        for (const auto& p : c.points) pts.push_back(Json::array({p.n, p.moment, p.standard_error}));
        curves.push_back(Json{{"estimator", estimator_name(c.estimator)}, {"p", c.p}, {"points", pts}});
        Json jf = to_json(fit);
        jf["estimator"] = estimator_name(c.estimator);
        jf["p"] = c.p;
        fits.push_back(jf);

        const double target = (c.estimator == EstimatorKind::rm ? ex.schedule.alpha() : 1.0) * -c.p;
        const double tol = c.p == 1 ? rc.slope_tol : rc.slope_tol_higher;
        const std::string tag = std::string(estimator_name(c.estimator)) + "_p" + std::to_string(c.p);
        check(tag + "_slope", fit.slope, target - tol, target + tol);
        check(tag + "_r_squared", fit.r_squared, rc.min_r2, 1.0);
    }
    check("envelope_fraction", out.envelope.fraction, rc.envelope_min_fraction, 1.0);
    check("averaged_envelope_fraction", out.averaged_envelope.fraction, rc.envelope_min_fraction, 1.0);

    std::uint64_t skipped = 0;
    for (const auto& t : out.replication.traces) skipped += t.skipped;

    Json echo = Json::object();
    for (const auto& [k, v] : rc.raw)
        if (k != "threads") echo[k] = v;
    Json asserts = Json::array();
    for (const auto& a : out.assertions)
        asserts.push_back(Json{{"name", a.name}, {"value", a.value}, {"lo", a.lo}, {"hi", a.hi}, {"pass", a.pass}});

    out.document = Json{{"config", echo},
                        {"effective",
                         Json{{"source", kind_name(ex.source.kind)},
                              {"c_gamma", ex.schedule.c_gamma()},
                              {"alpha", ex.schedule.alpha()},
                              {"n_max", ex.n_max},
                              {"replicates", ex.replicates},
                              {"master_seed", ex.master_seed},
                              {"fit_window", to_json(ex.fit_window)}}},
                        {"median", to_json(out.replication.median)},
                        {"curves", curves},
                        {"fits", fits},
                        {"envelope", to_json(out.envelope, "beta")},
                        {"averaged_envelope", to_json(out.averaged_envelope, "delta")},
                        {"skipped_updates", skipped},
                        {"assertions", asserts},
                        {"all_pass", out.all_pass}};
    return out;
}

inline std::string curves_csv(const ReplicationResult& res) {
    std::ostringstream os;
    os << "estimator,p,n,moment,stderr\n";
    for (const auto& c : res.curves)
        for (const auto& p : c.points)
            os << estimator_name(c.estimator) << ',' << c.p << ',' << p.n << ',' << format_double(p.moment) << ','
               << format_double(p.standard_error) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------

struct DiagnosticsOutcome {
    std::vector<DiagnosticsRecord> records;
    WeiszfeldResult oracle;
    HessianResult hessian;
    BoundSummary bounds;
    double abel_residual = 0.0;
    double xi_mean_norm = 0.0;
    Json document;
};

// Full-resolution trajectory of n steps from the empirical law of `points`,
// then every decomposition check against the Weiszfeld median.
inline DiagnosticsOutcome run_diagnostics(std::shared_ptr<const std::vector<HilbertPoint>> points,
                                          const SpaceSpec& space, const StepSchedule& schedule,
                                          std::uint64_t n, std::uint64_t seed) {
    if (n < 2) throw ValidationError("diagnose: n must be >= 2");
    DiagnosticsOutcome out;
    Sampler sampler(SourceSpec{Empirical{points, true}, seed});
    RunOptions opts;
    opts.record_samples = true;
    const auto cps = every_step(n);
    const Trajectory traj = run_stream(sampler, n, schedule, space, cps, opts);

    out.oracle = weiszfeld(*points, space);
    out.hessian = hessian_empirical(out.oracle.point, *points, space);
    out.records = xi_delta(traj, schedule, *points, space, out.oracle.point, out.hessian.op);
    out.abel_residual = abel_identity_residual(traj, out.records, schedule, space, out.oracle.point, out.hessian.op);
    out.bounds = bound_report(out.records, space, out.hessian.c1_hat);

    std::vector<double> mean(space.dimension(), 0.0);
    for (const auto& r : out.records)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += r.xi[k];
    for (double& v : mean) v /= static_cast<double>(out.records.size());
    out.xi_mean_norm = norm(HilbertPoint(mean), space);

    const auto& last = traj.snapshots.back();
    out.document = Json{{"n", out.records.size()},
                        {"xi_norm_max", out.bounds.xi_norm_max},
                        {"xi_mean_norm", out.xi_mean_norm},
                        {"delta_ratio_max", out.bounds.delta_ratio_max},
                        {"delta_ratio_bound", out.bounds.linear_bound},
                        {"delta_ratio_ok", out.bounds.linear_ok},
                        {"abel_residual", out.abel_residual},
                        {"c_hat", Json{{"c1", out.hessian.c1_hat}, {"c_m", out.bounds.delta_ratio_sq_max}}},
                        {"quadratic_ratio_spikes", out.bounds.quadratic_spikes},
                        {"skipped_updates", last.skipped},
                        {"median", to_json(out.oracle.point)},
                        {"final_distance", distance(last.z, out.oracle.point, space)},
                        {"final_averaged_distance", distance(last.z_bar, out.oracle.point, space)}};
    return out;
}

} // namespace geomed
