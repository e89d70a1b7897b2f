#include "geomed/experiments.hpp"
#include "geomed/json_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>

using namespace geomed;

namespace {

ExperimentConfig small_config(std::size_t replicates = 8, std::uint64_t n_max = 2000) {
    ExperimentConfig c;
    c.source = SourceSpec{SphericalGaussian{HilbertPoint(std::vector<double>(4, 0.5)), 1.0}, 0};
    c.schedule = StepSchedule(2.0, 0.66);
    c.n_max = n_max;
    c.checkpoints = log_checkpoints(n_max, 10);
    c.replicates = replicates;
    c.master_seed = 42;
    c.fit_window = Window{100, n_max};
    c.threads = 1;
    return c;
}

std::string dump(const ReplicationResult& r) {
    Json j = Json::array();
    for (const auto& tr : r.traces) j.push_back(Json{{"rm", tr.rm_dist}, {"avg", tr.avg_dist}, {"mean", tr.mean_dist}});
    for (const auto& c : r.curves)
        for (const auto& p : c.points) j.push_back(Json::array({p.n, p.moment, p.standard_error}));
    return to_json_text(j);
}

MomentCurve power_law(double a, double b, std::uint64_t n_max) {
    MomentCurve c;
    for (auto n : log_checkpoints(n_max, 20)) c.points.push_back({n, a * std::pow(static_cast<double>(n), b), 0.0});
    return c;
}

} // namespace

TEST(Checkpoints, LogGrid) {
    const auto cps = log_checkpoints(100000, 20);
    EXPECT_EQ(cps.front(), 1u);
    EXPECT_EQ(cps.back(), 100000u);
    for (std::size_t i = 1; i < cps.size(); ++i) EXPECT_LT(cps[i - 1], cps[i]);
    // 20 per decade over five decades, minus duplicates at small n.
    EXPECT_GE(cps.size(), 70u);
    EXPECT_LE(cps.size(), 101u);
    EXPECT_NO_THROW(detail::check_checkpoints(cps, 100000));
    EXPECT_EQ(log_checkpoints(1, 20), (std::vector<std::uint64_t>{1}));
}

TEST(CompensatedSum, RecoversSmallTerms) {
    CompensatedSum s;
    s.add(1e16);
    for (int i = 0; i < 1000; ++i) s.add(1.0);
    s.add(-1e16);
    EXPECT_EQ(s.value(), 1000.0);
}

TEST(FitRate, ExactPowerLaw) {
    const auto fit = fit_rate(power_law(5.0, -0.66, 100000), Window{1000, 100000});
    EXPECT_NEAR(fit.slope, -0.66, 1e-12);
    EXPECT_NEAR(fit.intercept, std::log(5.0), 1e-10);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    EXPECT_NEAR(fit.slope_stderr, 0.0, 1e-10);
    EXPECT_EQ(fit.points, 41u);
}

TEST(FitRate, Errors) {
    EXPECT_THROW(fit_rate(power_law(1.0, -1.0, 100000), Window{90000, 100000}), ValidationError);
    auto zero = power_law(1.0, -1.0, 1000);
    zero.points[30].moment = 0.0;
    EXPECT_THROW(fit_rate(zero, Window{1, 1000}), ValidationError);
}

TEST(Replications, DeterministicAcrossRuns) {
    auto c = small_config(2, 10);
    c.checkpoints = {1, 2, 5, 10};
    c.fit_window = {1, 10};
    EXPECT_EQ(dump(run_replications(c)), dump(run_replications(c)));
    auto c2 = c;
    c2.master_seed = 43;
    EXPECT_NE(dump(run_replications(c)), dump(run_replications(c2)));
}

TEST(Replications, ExecutionOrderAndThreadsDoNotMatter) {
    auto c = small_config(6, 500);
    c.fit_window = {10, 500};
    const auto base = dump(run_replications(c));
    c.execution_order = {5, 3, 1, 0, 2, 4};
    EXPECT_EQ(dump(run_replications(c)), base);
    c.execution_order.clear();
    c.threads = 3;
    EXPECT_EQ(dump(run_replications(c)), base);
}

TEST(Replications, RejectsUncoveredConfigurations) {
    auto c = small_config();
    c.source = SourceSpec{SphericalGaussian{{0.0}, 1.0}, 0};
    EXPECT_THROW(run_replications(c), ValidationError);

    auto point_mass = std::make_shared<const std::vector<HilbertPoint>>(std::vector<HilbertPoint>(5, HilbertPoint{1, 1}));
    c.source = SourceSpec{Empirical{point_mass, true}, 0};
    EXPECT_THROW(run_replications(c), ValidationError);

    auto collinear = std::make_shared<const std::vector<HilbertPoint>>(
        std::vector<HilbertPoint>{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {5, 5, 5}});
    c.source = SourceSpec{Empirical{collinear, true}, 0};
    EXPECT_THROW(run_replications(c), ValidationError);

    c = small_config();
    c.replicates = 1;
    EXPECT_THROW(run_replications(c), ValidationError);
    c = small_config();
    c.fit_window = {100, 5000};
    EXPECT_THROW(run_replications(c), ValidationError);
    c = small_config();
    c.execution_order = {0, 1, 1, 2, 3, 4, 5, 6};
    EXPECT_THROW(run_replications(c), ValidationError);
}

TEST(Replications, MomentsSatisfyJensen) {
    auto c = small_config(40, 2000);
    const auto res = run_replications(c);
    ASSERT_EQ(res.curves.size(), 4u);
    for (int e = 0; e < 2; ++e) {
        const auto& p1 = res.curves[static_cast<std::size_t>(e)];
        const auto& p2 = res.curves[static_cast<std::size_t>(2 + e)];
        ASSERT_EQ(p1.p, 1);
        ASSERT_EQ(p2.p, 2);
        for (std::size_t j = 0; j < p1.points.size(); ++j)
            EXPECT_LE(p1.points[j].moment * p1.points[j].moment, p2.points[j].moment + 3 * p2.points[j].standard_error);
    }
}

TEST(Replications, ScalingHomogeneity) {
    // X -> sX, c_gamma -> s c_gamma maps Z_n -> s Z_n exactly for s = 2.
    auto c = small_config(4, 300);
    c.fit_window = {10, 300};
    c.run.init.radius = 1.5;
    auto s = c;
    s.source = SourceSpec{SphericalGaussian{HilbertPoint(std::vector<double>(4, 1.0)), 2.0}, 0};
    s.schedule = StepSchedule(4.0, 0.66);
    s.run.init.radius = 3.0;
    const auto a = run_replications(c), b = run_replications(s);
    for (std::size_t r = 0; r < a.traces.size(); ++r)
        for (std::size_t j = 0; j < a.checkpoints.size(); ++j) {
            EXPECT_EQ(2.0 * a.traces[r].rm_dist[j], b.traces[r].rm_dist[j]);
            EXPECT_EQ(2.0 * a.traces[r].avg_dist[j], b.traces[r].avg_dist[j]);
        }
    const auto ea = averaged_as_check(a, 1.0, Window{10, 50}, Window{51, 300});
    const auto eb = averaged_as_check(b, 1.0, Window{10, 50}, Window{51, 300});
    for (std::size_t r = 0; r < ea.early_max.size(); ++r) {
        EXPECT_EQ(2.0 * ea.early_max[r], eb.early_max[r]);
        EXPECT_EQ(2.0 * ea.late_max[r], eb.late_max[r]);
    }
}

TEST(Envelope, Errors) {
    auto c = small_config(4, 300);
    c.fit_window = {10, 300};
    EXPECT_THROW(as_envelope(c, 0.66, Window{10, 50}, Window{51, 300}), ValidationError);
    EXPECT_THROW(as_envelope(c, 0.7, Window{10, 50}, Window{51, 300}), ValidationError);
    EXPECT_THROW(averaged_as_check(c, 0.0, Window{10, 50}, Window{51, 300}), ValidationError);
    EXPECT_THROW(averaged_as_check(c, -1.0, Window{10, 50}, Window{51, 300}), ValidationError);
    EXPECT_THROW(as_envelope(c, 0.5, Window{10, 60}, Window{51, 300}), ValidationError);
    EXPECT_THROW(averaged_as_check(c, 1.0, Window{1, 50}, Window{51, 300}), ValidationError);
    const auto rep = as_envelope(c, 0.56, Window{10, 50}, Window{51, 300});
    EXPECT_EQ(rep.early_max.size(), 4u);
    EXPECT_GE(rep.fraction, 0.0);
    EXPECT_LE(rep.fraction, 1.0);
}

TEST(Envelope, SplitWindow) {
    const auto [e, l] = split_window(Window{1000, 100000});
    EXPECT_EQ(e.lo, 1000u);
    EXPECT_EQ(e.hi, 10000u);
    EXPECT_EQ(l.lo, 10001u);
    EXPECT_EQ(l.hi, 100000u);
}

TEST(Oracle, CompareOnSquare) {
    auto square = std::make_shared<const std::vector<HilbertPoint>>(
        std::vector<HilbertPoint>{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
    auto c = small_config(2, 20000);
    c.fit_window = {100, 20000};
    const auto d = compare_to_oracle(square, c);
    ASSERT_EQ(d.size(), c.checkpoints.size());
    EXPECT_LT(d.back().distance, 0.05);
    EXPECT_LT(d.back().distance, d.front().distance + 1e-12);

    auto single = std::make_shared<const std::vector<HilbertPoint>>(std::vector<HilbertPoint>{{1, 1}});
    EXPECT_THROW(compare_to_oracle(single, c), ValidationError);
    EXPECT_THROW(compare_to_oracle(nullptr, c), ValidationError);
}
