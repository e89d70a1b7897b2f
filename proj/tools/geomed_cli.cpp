// geomed: streaming geometric-median estimation, Weiszfeld oracle,
// decomposition diagnostics and Monte Carlo rate verification.
//
// Exit codes: 0 success, 2 validation/config error, 3 I/O or parse error,
// 4 acceptance check failed (rates --assert).

#include "geomed/config.hpp"
#include "geomed/diagnostics.hpp"
#include "geomed/estimators.hpp"
#include "geomed/experiments.hpp"
#include "geomed/json_io.hpp"
#include "geomed/report.hpp"
#include "geomed/sources.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace geomed;

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kIo = 3;
constexpr int kAssert = 4;

struct Output {
    std::string path;
    std::string format = "json";
};

void emit(const Output& out, const std::string& text) {
    if (out.path.empty() || out.path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out.path, std::ios::binary);
    if (!f) throw IoError("cannot write " + out.path);
    f << text;
    if (!f) throw IoError("write failed for " + out.path);
}

void add_output(CLI::App* cmd, Output& out, bool csv_supported = true) {
    cmd->add_option("--out", out.path, "Output path (default: stdout)");
    auto* fmt = cmd->add_option("--format", out.format, "Output format");
    fmt->check(CLI::IsMember(csv_supported ? std::vector<std::string>{"json", "csv"} : std::vector<std::string>{"json"}));
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("GEOMED_SEED")) {
        const std::string s(env);
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ValidationError("GEOMED_SEED is not a non-negative integer");
        return v;
    }
    return 0;
}

struct InputArgs {
    std::string path;
    std::string format = "csv";
};

void add_input(CLI::App* cmd, InputArgs& in) {
    cmd->add_option("--input", in.path, "Dataset file, one observation per row")->required();
    cmd->add_option("--input-format", in.format, "Dataset format")->check(CLI::IsMember({"csv", "binary_f64"}));
}

Dataset load(const InputArgs& in) {
    return load_dataset(in.path, in.format == "csv" ? DataFormat::csv : DataFormat::binary_f64);
}

std::string point_csv(const std::string& label, const HilbertPoint& p) {
    std::ostringstream os;
    os << label;
    for (double v : p) os << ',' << format_double(v);
    os << '\n';
    return os.str();
}

KeyValues config_with_overrides(const std::string& path, const std::vector<std::string>& sets,
                                const std::optional<std::uint64_t>& seed) {
    KeyValues kv = path.empty() ? KeyValues{} : parse_key_values(read_text_file(path));
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
        auto more = parse_key_values(s.substr(0, eq) + " = " + s.substr(eq + 1));
        for (auto& [k, v] : more) kv[k] = v;
    }
    if (seed)
        kv["master_seed"] = std::to_string(*seed);
    else if (!kv.count("master_seed"))
        kv["master_seed"] = std::to_string(default_seed());
    return kv;
}

int run(int argc, char** argv) {
    CLI::App app{"Streaming geometric-median estimation and rate verification"};
    app.require_subcommand(1);

    // median
    InputArgs med_in;
    Output med_out;
    double med_alpha = 2.0 / 3.0, med_c = 1.0, med_radius = std::numeric_limits<double>::infinity();
    std::uint64_t med_passes = 1;
    std::optional<std::uint64_t> med_seed;
    auto* med = app.add_subcommand("median", "Averaged stochastic-gradient median over resampling passes of a dataset");
    add_input(med, med_in);
    med->add_option("--alpha", med_alpha, "Step exponent, in (1/2, 1)");
    med->add_option("--c-gamma", med_c, "Step constant c_gamma > 0");
    med->add_option("--passes", med_passes, "Number of passes: draws = passes * rows")->check(CLI::PositiveNumber);
    med->add_option("--seed", med_seed, "Resampling seed (default: GEOMED_SEED or 0)");
    med->add_option("--init-radius", med_radius, "Z_1 = X_1 if |X_1| <= radius, else 0");
    add_output(med, med_out);

    // weiszfeld
    InputArgs wz_in;
    Output wz_out;
    double wz_tol = 1e-10;
    std::size_t wz_iter = 10000;
    auto* wz = app.add_subcommand("weiszfeld", "Offline Weiszfeld geometric median of a dataset");
    add_input(wz, wz_in);
    wz->add_option("--tol", wz_tol, "Relative tolerance (step and stationarity, times the data scale)");
    wz->add_option("--max-iter", wz_iter, "Iteration cap");
    add_output(wz, wz_out);

    // simulate
    std::string sim_cfg;
    std::vector<std::string> sim_sets;
    std::optional<std::uint64_t> sim_seed;
    Output sim_out;
    auto* sim = app.add_subcommand("simulate", "One trajectory (replicate 0) of a configured experiment");
    sim->add_option("--config", sim_cfg, "Key-value experiment config")->required();
    sim->add_option("--set", sim_sets, "Override a config key: key=value (repeatable)");
    sim->add_option("--seed", sim_seed, "Master seed (overrides config and GEOMED_SEED)");
    add_output(sim, sim_out);

    // rates
    std::string rates_cfg, rates_csv;
    std::vector<std::string> rates_sets;
    std::optional<std::uint64_t> rates_seed;
    std::optional<unsigned> rates_threads;
    bool rates_assert = false;
    Output rates_out;
    auto* rates = app.add_subcommand("rates", "Monte Carlo moment curves, rate fits and envelope checks");
    rates->add_option("--config", rates_cfg, "Key-value experiment config")->required();
    rates->add_option("--set", rates_sets, "Override a config key: key=value (repeatable)");
    rates->add_option("--seed", rates_seed, "Master seed (overrides config and GEOMED_SEED)");
    rates->add_option("--threads", rates_threads, "Worker threads (does not affect results)");
    rates->add_option("--csv", rates_csv, "Also write the moment curves as CSV to this path");
    rates->add_flag("--assert", rates_assert, "Exit 4 unless every slope/r^2/envelope check passes");
    add_output(rates, rates_out);

    // diagnose
    InputArgs dg_in;
    Output dg_out;
    std::uint64_t dg_n = 1000;
    std::optional<std::uint64_t> dg_seed;
    double dg_alpha = 2.0 / 3.0, dg_c = 1.0;
    auto* dg = app.add_subcommand("diagnose", "Exact xi/delta decomposition, Abel identity and bound checks");
    add_input(dg, dg_in);
    dg->add_option("--n", dg_n, "Trajectory length")->check(CLI::Range(std::uint64_t{2}, std::uint64_t{200000}));
    dg->add_option("--seed", dg_seed, "Resampling seed (default: GEOMED_SEED or 0)");
    dg->add_option("--alpha", dg_alpha, "Step exponent, in (1/2, 1)");
    dg->add_option("--c-gamma", dg_c, "Step constant c_gamma > 0");
    add_output(dg, dg_out, false);

    // compare
    InputArgs cmp_in;
    Output cmp_out;
    std::uint64_t cmp_n = 1000000;
    std::optional<std::uint64_t> cmp_seed;
    double cmp_alpha = 2.0 / 3.0, cmp_c = 1.0;
    int cmp_per_decade = 20;
    auto* cmp = app.add_subcommand("compare", "Distance of the averaged estimate to the Weiszfeld median");
    add_input(cmp, cmp_in);
    cmp->add_option("--n", cmp_n, "Number of resampled draws")->check(CLI::PositiveNumber);
    cmp->add_option("--seed", cmp_seed, "Resampling seed (default: GEOMED_SEED or 0)");
    cmp->add_option("--alpha", cmp_alpha, "Step exponent, in (1/2, 1)");
    cmp->add_option("--c-gamma", cmp_c, "Step constant c_gamma > 0");
    cmp->add_option("--checkpoints-per-decade", cmp_per_decade, "Checkpoint density")->check(CLI::PositiveNumber);
    add_output(cmp, cmp_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        throw ValidationError(e.what());
    }

    if (*med) {
        auto ds = load(med_in);
        const StepSchedule sched(med_c, med_alpha);
        auto pts = std::make_shared<const std::vector<HilbertPoint>>(std::move(ds.points));
        Sampler sampler(SourceSpec{Empirical{pts, true}, med_seed.value_or(default_seed())});
        RunOptions opts;
        opts.init.radius = med_radius;
        const std::uint64_t n = med_passes * pts->size();
        const std::vector<std::uint64_t> cps{n};
        const auto traj = run_stream(sampler, n, sched, ds.space, cps, opts);
        const auto& st = traj.snapshots.back();
        if (med_out.format == "csv") {
            emit(med_out, point_csv("z_bar", st.z_bar) + point_csv("z", st.z));
            return kOk;
        }
        const auto rep = pts->size() >= 2 ? std::optional(assumption_check(*pts, ds.space)) : std::nullopt;
        Json doc{{"n", st.n}, {"passes", med_passes}, {"z_bar", to_json(st.z_bar)}, {"z", to_json(st.z)},
                 {"skipped_updates", st.skipped}, {"last_iterate_gap", distance(st.z, st.z_bar, ds.space)}};
        if (rep)
            doc["assumptions"] = Json{{"a1_ok", rep->a1_ok}, {"variance_first", rep->variance_first},
                                      {"variance_second", rep->variance_second}, {"c_hat_inv", rep->c_hat_inv},
                                      {"c_hat_inv_sq", rep->c_hat_inv_sq}, {"probes", rep->probes},
                                      {"dimension_warning", rep->dimension_warning}};
        emit(med_out, to_json_text(doc));
        return kOk;
    }

    if (*wz) {
        auto ds = load(wz_in);
        WeiszfeldOptions opts;
        opts.tol = wz_tol;
        opts.max_iter = wz_iter;
        const auto res = weiszfeld(ds.points, ds.space, opts);
        if (wz_out.format == "csv") {
            emit(wz_out, point_csv("median", res.point));
            return kOk;
        }
        emit(wz_out, to_json_text(Json{{"median", to_json(res.point)}, {"iterations", res.iterations},
                                       {"final_step", res.final_step}, {"converged", res.converged},
                                       {"objective", objective_empirical(res.point, ds.points, ds.space)}}));
        return kOk;
    }

    if (*sim) {
        const auto rc = build_rates_config(config_with_overrides(sim_cfg, sim_sets, sim_seed));
        const auto& ex = rc.experiment;
        const HilbertPoint m = validate_experiment(ex);
        const auto cps = effective_checkpoints(ex);
        const auto tr = simulate_replicate(ex, m, cps, 0);
        if (sim_out.format == "csv") {
            std::ostringstream os;
            os << "n,rm_distance,averaged_distance,mean_distance\n";
            for (std::size_t j = 0; j < cps.size(); ++j)
                os << cps[j] << ',' << format_double(tr.rm_dist[j]) << ',' << format_double(tr.avg_dist[j]) << ','
                   << format_double(tr.mean_dist[j]) << '\n';
            emit(sim_out, os.str());
            return kOk;
        }
        Json pts = Json::array();
        for (std::size_t j = 0; j < cps.size(); ++j)
            pts.push_back(Json{{"n", cps[j]}, {"rm_distance", tr.rm_dist[j]}, {"averaged_distance", tr.avg_dist[j]},
                               {"mean_distance", tr.mean_dist[j]}});
        emit(sim_out, to_json_text(Json{{"source", kind_name(ex.source.kind)}, {"median", to_json(m)},
                                        {"skipped_updates", tr.skipped}, {"trajectory", pts}}));
        return kOk;
    }

    if (*rates) {
        auto rc = build_rates_config(config_with_overrides(rates_cfg, rates_sets, rates_seed));
        if (rates_threads) rc.experiment.threads = *rates_threads;
        const auto out = run_rates(rc);
        if (rates_out.format == "csv")
            emit(rates_out, curves_csv(out.replication));
        else
            emit(rates_out, to_json_text(out.document));
        if (!rates_csv.empty()) emit(Output{rates_csv, "csv"}, curves_csv(out.replication));
        if (rates_assert && !out.all_pass) {
            for (const auto& a : out.assertions)
                if (!a.pass)
                    std::cerr << "geomed: assertion failed name=" << a.name << " value=" << format_double(a.value)
                              << " lo=" << format_double(a.lo) << " hi=" << format_double(a.hi) << '\n';
            return kAssert;
        }
        return kOk;
    }

    if (*dg) {
        auto ds = load(dg_in);
        auto pts = std::make_shared<const std::vector<HilbertPoint>>(std::move(ds.points));
        const auto out = run_diagnostics(pts, ds.space, StepSchedule(dg_c, dg_alpha), dg_n, dg_seed.value_or(default_seed()));
        emit(dg_out, to_json_text(out.document));
        return kOk;
    }

    if (*cmp) {
        auto ds = load(cmp_in);
        auto pts = std::make_shared<const std::vector<HilbertPoint>>(std::move(ds.points));
        ExperimentConfig ex;
        ex.schedule = StepSchedule(cmp_c, cmp_alpha);
        ex.n_max = cmp_n;
        ex.checkpoints = log_checkpoints(cmp_n, cmp_per_decade);
        ex.fit_window = Window{1, cmp_n};
        ex.master_seed = cmp_seed.value_or(default_seed());
        const auto dist = compare_to_oracle(pts, ex);
        if (cmp_out.format == "csv") {
            std::ostringstream os;
            os << "n,distance\n";
            for (const auto& d : dist) os << d.n << ',' << format_double(d.distance) << '\n';
            emit(cmp_out, os.str());
            return kOk;
        }
        Json arr = Json::array();
        for (const auto& d : dist) arr.push_back(Json::array({d.n, d.distance}));
        emit(cmp_out, to_json_text(Json{{"distances", arr}}));
        return kOk;
    }
    return kValidation;
}

void report(int code, const char* kind, const std::string& reason) {
    std::string r = reason;
    for (char& c : r)
        if (c == '\n' || c == '\r') c = ' ';
    std::cerr << "geomed: error code=" << code << " kind=" << kind << " reason=" << Json(r).dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const geomed::ParseError& e) {
        report(kIo, "parse", e.what());
        return kIo;
    } catch (const geomed::IoError& e) {
        report(kIo, "io", e.what());
        return kIo;
    } catch (const geomed::SourceExhausted& e) {
        report(kIo, "source_exhausted", e.what());
        return kIo;
    } catch (const geomed::ValidationError& e) {
        report(kValidation, "validation", e.what());
        return kValidation;
    } catch (const geomed::ContractViolation& e) {
        report(kValidation, "contract", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        report(kValidation, "internal", e.what());
        return kValidation;
    }
}
