#pragma once

// Flat key-value experiment configuration:
//
//     # comment
//     kind = spherical_gaussian
//     dim = 10
//     center = 0.31622776601683794      # scalar broadcast or comma list
//
// Unknown keys are rejected. See README for the full key list.

#include "errors.hpp"
#include "experiments.hpp"
#include "sources.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace geomed {

struct RatesConfig {
    ExperimentConfig experiment;
    int checkpoints_per_decade = 20;
    double beta = std::numeric_limits<double>::quiet_NaN(); // NaN: alpha - 0.1
    double delta = 1.0;
    // --assert thresholds
    double slope_tol = 0.12;        // p = 1 slopes
    double slope_tol_higher = 0.20; // p >= 2 slopes
    double min_r2 = 0.98;
    double envelope_min_fraction = 0.8;
    std::map<std::string, std::string> raw; // effective key-values, for the echo
};

using KeyValues = std::map<std::string, std::string>;

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "kind", "dim", "center", "sigma", "sigma_core", "sigma_outlier", "outlier_fraction",
        "scale_diag", "dof", "dataset", "dataset_format", "with_replacement", "grid_size",
        "center_function", "c_gamma", "alpha", "n_max", "checkpoints_per_decade", "replicates",
        "moments", "master_seed", "fit_lo", "fit_hi", "init_radius", "threads", "beta", "delta",
        "slope_tol", "slope_tol_higher", "min_r2", "envelope_min_fraction"};
    return keys;
}

inline KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw ParseError("config: expected key = value", row);
        const std::string key(detail::trim(t.substr(0, eq)));
        const std::string value(detail::trim(t.substr(eq + 1)));
        if (!config_keys().count(key)) throw ValidationError("config: unknown key '" + key + "'");
        if (value.empty()) throw ParseError("config: empty value for '" + key + "'", row);
        kv[key] = value;
    }
    return kv;
}

namespace detail {

class KeyReader {
public:
    explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

    bool has(const std::string& k) const { return kv_.count(k) != 0; }

    std::string str(const std::string& k, const std::string& fallback) const {
        auto it = kv_.find(k);
        return it == kv_.end() ? fallback : it->second;
    }

    double num(const std::string& k, double fallback) const {
        auto it = kv_.find(k);
        if (it == kv_.end()) return fallback;
        auto v = parse_double(it->second);
        if (!v) throw ValidationError("config: '" + k + "' is not a number");
        return *v;
    }

    std::uint64_t integer(const std::string& k, std::uint64_t fallback) const {
        auto it = kv_.find(k);
        if (it == kv_.end()) return fallback;
        const std::string& s = it->second;
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) {
            // Allow 1e5 style for counts.
            auto d = parse_double(s);
            if (!d || *d < 0 || std::floor(*d) != *d || *d > 1.8e19)
                throw ValidationError("config: '" + k + "' is not a non-negative integer");
            return static_cast<std::uint64_t>(*d);
        }
        return v;
    }

    // Comma list, or a scalar broadcast to `dim` entries.
    std::vector<double> list(const std::string& k, std::size_t dim, double fallback) const {
        auto it = kv_.find(k);
        if (it == kv_.end()) return std::vector<double>(dim, fallback);
        std::vector<double> out;
        for (auto cell : split(it->second, ',')) {
            auto v = parse_double(cell);
            if (!v) throw ValidationError("config: '" + k + "' has a non-numeric entry");
            out.push_back(*v);
        }
        if (out.size() == 1 && dim > 1) out.assign(dim, out[0]);
        if (out.size() != dim)
            throw ValidationError("config: '" + k + "' must have " + std::to_string(dim) + " entries");
        return out;
    }

private:
    const KeyValues& kv_;
};

} // namespace detail

// Builds the source, schedule and run settings. `dataset` is loaded from the
// `dataset` key when kind = empirical.
inline RatesConfig build_rates_config(const KeyValues& kv) {
    detail::KeyReader rd(kv);
    RatesConfig rc;
    rc.raw = kv;
    auto& ex = rc.experiment;

    const std::string kind = rd.str("kind", "spherical_gaussian");
    const auto dim = static_cast<std::size_t>(rd.integer("dim", 10));
    if (dim == 0) throw ValidationError("config: dim must be >= 1");
    auto center = [&] { return HilbertPoint(rd.list("center", dim, 0.0)); };
    if (kind == "spherical_gaussian") {
        ex.source.kind = SphericalGaussian{center(), rd.num("sigma", 1.0)};
    } else if (kind == "contaminated") {
        ex.source.kind = Contaminated{center(), rd.num("sigma_core", 1.0), rd.num("sigma_outlier", 20.0),
                                      rd.num("outlier_fraction", 0.1)};
    } else if (kind == "elliptical_student") {
        ex.source.kind = EllipticalStudent{center(), rd.list("scale_diag", dim, 1.0), rd.num("dof", 3.0)};
    } else if (kind == "empirical") {
        if (!rd.has("dataset")) throw ValidationError("config: kind = empirical needs 'dataset'");
        const std::string fmt = rd.str("dataset_format", "csv");
        if (fmt != "csv" && fmt != "binary_f64") throw ValidationError("config: dataset_format must be csv or binary_f64");
        auto ds = load_dataset(rd.str("dataset", ""), fmt == "csv" ? DataFormat::csv : DataFormat::binary_f64);
        const std::string repl = rd.str("with_replacement", "true");
        if (repl != "true" && repl != "false") throw ValidationError("config: with_replacement must be true or false");
        ex.source.kind = Empirical{std::make_shared<const std::vector<HilbertPoint>>(std::move(ds.points)), repl == "true"};
    } else if (kind == "functional_bridge") {
        const auto g = static_cast<std::size_t>(rd.integer("grid_size", 64));
        FunctionalBridge fb{g, {}};
        if (rd.has("center_function")) fb.center_function = rd.list("center_function", g, 0.0);
        ex.source.kind = std::move(fb);
    } else {
        throw ValidationError("config: unknown kind '" + kind + "'");
    }

    ex.schedule = StepSchedule(rd.num("c_gamma", 1.0), rd.num("alpha", 2.0 / 3.0));
    ex.n_max = rd.integer("n_max", 100000);
    rc.checkpoints_per_decade = static_cast<int>(rd.integer("checkpoints_per_decade", 20));
    ex.checkpoints = log_checkpoints(ex.n_max, rc.checkpoints_per_decade);
    ex.replicates = static_cast<std::size_t>(rd.integer("replicates", 200));
    ex.moments = {1, 2};
    if (rd.has("moments")) {
        ex.moments.clear();
        const auto count = detail::split(rd.str("moments", ""), ',').size();
        for (double p : rd.list("moments", count, 0.0)) {
            if (p < 1 || p > 16 || std::floor(p) != p) throw ValidationError("config: moments must be integers in [1, 16]");
            ex.moments.push_back(static_cast<int>(p));
        }
    }
    ex.master_seed = rd.integer("master_seed", 0);
    ex.fit_window = Window{rd.integer("fit_lo", std::min<std::uint64_t>(1000, ex.n_max)), rd.integer("fit_hi", ex.n_max)};
    ex.run.init.radius = rd.num("init_radius", std::numeric_limits<double>::infinity());
    if (!(ex.run.init.radius > 0.0)) throw ValidationError("config: init_radius must be > 0");
    ex.threads = static_cast<unsigned>(rd.integer("threads", 0));

    rc.beta = rd.num("beta", ex.schedule.alpha() - 0.1);
    rc.delta = rd.num("delta", 1.0);
    rc.slope_tol = rd.num("slope_tol", 0.12);
    rc.slope_tol_higher = rd.num("slope_tol_higher", 0.20);
    rc.min_r2 = rd.num("min_r2", 0.98);
    rc.envelope_min_fraction = rd.num("envelope_min_fraction", 0.8);
    return rc;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace geomed
