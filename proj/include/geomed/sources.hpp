#pragma once

// Sample laws, dataset ingestion, and empirical checks of the non-collinearity
// (A1) and non-concentration (A2) hypotheses.

#include "errors.hpp"
#include "estimators.hpp"
#include "hilbert.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace geomed {

struct SphericalGaussian {
    HilbertPoint center;
    double sigma = 1.0;
};

// Two Gaussian components sharing `center`; each draw is an outlier with
// probability outlier_fraction.
struct Contaminated {
    HilbertPoint center;
    double sigma_core = 1.0;
    double sigma_outlier = 20.0;
    double outlier_fraction = 0.1;
};

// center + diag(scale) * N(0, I) / sqrt(chi2_dof / dof)
struct EllipticalStudent {
    HilbertPoint center;
    std::vector<double> scale_diag;
    double dof = 3.0;
};

struct Empirical {
    std::shared_ptr<const std::vector<HilbertPoint>> dataset;
    bool with_replacement = true;
};

// Brownian bridge on an equispaced grid of [0, 1] plus a center function, with
// trapezoidal quadrature weights (summing to 1).
struct FunctionalBridge {
    std::size_t grid_size = 64;
    std::vector<double> center_function; // empty means the zero function
};

using SourceKind = std::variant<SphericalGaussian, Contaminated, EllipticalStudent, Empirical, FunctionalBridge>;

struct SourceSpec {
    SourceKind kind;
    std::uint64_t seed = 0;
};

inline const char* kind_name(const SourceKind& k) {
    switch (k.index()) {
    case 0: return "spherical_gaussian";
    case 1: return "contaminated";
    case 2: return "elliptical_student";
    case 3: return "empirical";
    default: return "functional_bridge";
    }
}

inline std::vector<double> trapezoid_weights(std::size_t grid_size) {
    std::vector<double> w(grid_size, 1.0 / static_cast<double>(grid_size - 1));
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

inline void validate(const SourceSpec& spec) {
    auto positive = [](double v, const char* what) {
        if (!std::isfinite(v) || v <= 0.0) throw ValidationError(std::string("source: ") + what + " must be > 0");
    };
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, SphericalGaussian>) {
                if (k.center.size() == 0) throw ValidationError("source: empty center");
                positive(k.sigma, "sigma");
            } else if constexpr (std::is_same_v<K, Contaminated>) {
                if (k.center.size() == 0) throw ValidationError("source: empty center");
                positive(k.sigma_core, "sigma_core");
                positive(k.sigma_outlier, "sigma_outlier");
                if (!(k.outlier_fraction >= 0.0 && k.outlier_fraction < 1.0))
                    throw ValidationError("source: outlier_fraction must lie in [0, 1)");
            } else if constexpr (std::is_same_v<K, EllipticalStudent>) {
                if (k.center.size() == 0) throw ValidationError("source: empty center");
                if (k.scale_diag.size() != k.center.size())
                    throw ValidationError("source: scale_diag length must match center");
                for (double s : k.scale_diag) positive(s, "scale_diag");
                positive(k.dof, "dof");
            } else if constexpr (std::is_same_v<K, Empirical>) {
                if (!k.dataset || k.dataset->empty()) throw ValidationError("source: empirical dataset is empty");
                const auto d = k.dataset->front().size();
                if (d == 0) throw ValidationError("source: empirical points have dimension 0");
                for (const auto& p : *k.dataset)
                    if (p.size() != d) throw ValidationError("source: empirical dataset is ragged");
            } else {
                if (k.grid_size < 2) throw ValidationError("source: grid_size must be >= 2");
                if (!k.center_function.empty() && k.center_function.size() != k.grid_size)
                    throw ValidationError("source: center_function length must equal grid_size");
            }
        },
        spec.kind);
}

inline SpaceSpec space_of(const SourceSpec& spec) {
    return std::visit(
        [](const auto& k) -> SpaceSpec {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Empirical>) {
                if (!k.dataset || k.dataset->empty()) throw ValidationError("source: empirical dataset is empty");
                return SpaceSpec::euclidean(k.dataset->front().size());
            } else if constexpr (std::is_same_v<K, FunctionalBridge>) {
                if (k.grid_size < 2) throw ValidationError("source: grid_size must be >= 2");
                return SpaceSpec::weighted(trapezoid_weights(k.grid_size));
            } else {
                return SpaceSpec::euclidean(k.center.size());
            }
        },
        spec.kind);
}

// Stateful i.i.d. stream for a SourceSpec; satisfies SampleSource.
class Sampler {
public:
    explicit Sampler(SourceSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
        validate(spec_);
        dim_ = space_of(spec_).dimension();
        if (const auto* e = std::get_if<Empirical>(&spec_.kind); e && !e->with_replacement) {
            order_.resize(e->dataset->size());
            for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
            for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
        }
    }

    std::size_t dimension() const noexcept { return dim_; }
    std::uint64_t drawn() const noexcept { return drawn_; }
    std::uint64_t outliers_drawn() const noexcept { return outliers_; }

    void next(std::span<double> out) {
        if (out.size() != dim_) throw ContractViolation("Sampler::next: dimension mismatch");
        std::visit([&](const auto& k) { draw_one(k, out); }, spec_.kind);
        ++drawn_;
    }

private:
    void draw_one(const SphericalGaussian& k, std::span<double> out) {
        for (std::size_t i = 0; i < dim_; ++i) out[i] = k.center[i] + k.sigma * rng_.normal();
    }
    void draw_one(const Contaminated& k, std::span<double> out) {
        const bool outlier = rng_.bernoulli(k.outlier_fraction);
        outliers_ += outlier ? 1 : 0;
        const double s = outlier ? k.sigma_outlier : k.sigma_core;
        for (std::size_t i = 0; i < dim_; ++i) out[i] = k.center[i] + s * rng_.normal();
    }
    void draw_one(const EllipticalStudent& k, std::span<double> out) {
        for (std::size_t i = 0; i < dim_; ++i) out[i] = rng_.normal();
        const double mixing = std::sqrt(rng_.chi_squared(k.dof) / k.dof);
        for (std::size_t i = 0; i < dim_; ++i) out[i] = k.center[i] + k.scale_diag[i] * out[i] / mixing;
    }
    void draw_one(const Empirical& k, std::span<double> out) {
        std::size_t idx;
        if (k.with_replacement) {
            idx = rng_.below(k.dataset->size());
        } else {
            if (drawn_ >= order_.size())
                throw SourceExhausted("empirical source exhausted after " + std::to_string(drawn_) + " draws");
            idx = order_[drawn_];
        }
        const auto& p = (*k.dataset)[idx];
        std::copy(p.begin(), p.end(), out.begin());
    }
    void draw_one(const FunctionalBridge& k, std::span<double> out) {
        const double dt = 1.0 / static_cast<double>(k.grid_size - 1);
        const double sd = std::sqrt(dt);
        out[0] = 0.0;
        for (std::size_t i = 1; i < dim_; ++i) out[i] = out[i - 1] + sd * rng_.normal();
        const double end = out[dim_ - 1];
        for (std::size_t i = 0; i < dim_; ++i) {
            const double t = static_cast<double>(i) * dt;
            out[i] -= t * end;
            if (!k.center_function.empty()) out[i] += k.center_function[i];
        }
        out[dim_ - 1] = k.center_function.empty() ? 0.0 : k.center_function[dim_ - 1];
    }

    SourceSpec spec_;
    Rng rng_;
    std::size_t dim_ = 0;
    std::uint64_t drawn_ = 0;
    std::uint64_t outliers_ = 0;
    std::vector<std::size_t> order_;
};

// Adds a fixed vector to every draw of the wrapped source.
template <SampleSource S>
class ShiftedSource {
public:
    ShiftedSource(S& inner, HilbertPoint shift) : inner_(inner), shift_(std::move(shift)) {}
    std::size_t dimension() const { return inner_.dimension(); }
    void next(std::span<double> out) {
        inner_.next(out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += shift_[i];
    }

private:
    S& inner_;
    HilbertPoint shift_;
};

inline std::vector<HilbertPoint> draw(const SourceSpec& spec, std::size_t count) {
    if (count < 1) throw ContractViolation("draw: count must be >= 1");
    Sampler s(spec);
    std::vector<HilbertPoint> out;
    out.reserve(count);
    std::vector<double> buf(s.dimension());
    for (std::size_t i = 0; i < count; ++i) {
        s.next(buf);
        out.emplace_back(buf);
    }
    return out;
}

// Known median: the center of every centrally symmetric kind, the Weiszfeld
// solution for an empirical source.
inline std::optional<HilbertPoint> true_median(const SourceSpec& spec, const WeiszfeldOptions& opts = {}) {
    validate(spec);
    return std::visit(
        [&](const auto& k) -> std::optional<HilbertPoint> {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Empirical>) {
                return weiszfeld(*k.dataset, space_of(spec), opts).point;
            } else if constexpr (std::is_same_v<K, FunctionalBridge>) {
                if (k.center_function.empty()) return HilbertPoint::zeros(k.grid_size);
                return HilbertPoint(k.center_function);
            } else {
                return k.center;
            }
        },
        spec.kind);
}

// ---------------------------------------------------------------------------
// Dataset files

enum class DataFormat { csv, binary_f64 };

struct Dataset {
    std::vector<HilbertPoint> points;
    SpaceSpec space = SpaceSpec::euclidean(1);
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

} // namespace detail

inline Dataset parse_csv(std::string_view text) {
    Dataset ds;
    std::size_t width = 0, row = 0;
    bool first_content = true;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        const auto line = detail::trim(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
        ++row;
        start = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        std::vector<double> vals;
        vals.reserve(cells.size());
        bool numeric = true;
        for (auto c : cells) {
            auto v = detail::parse_double(c);
            if (!v) {
                numeric = false;
                break;
            }
            vals.push_back(*v);
        }
        if (first_content) {
            first_content = false;
            width = cells.size();
            if (!numeric) continue; // header row
        }
        if (cells.size() != width)
            throw ParseError("csv: expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()), row);
        if (!numeric) throw ParseError("csv: non-numeric cell", row);
        ds.points.emplace_back(std::move(vals));
    }
    if (ds.points.empty()) throw ParseError("csv: no observations", 0);
    ds.space = SpaceSpec::euclidean(width);
    return ds;
}

inline Dataset parse_binary(std::span<const unsigned char> bytes) {
    if (bytes.size() < 4) throw ParseError("binary: missing dimension header", 0);
    const std::uint32_t d = std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
                            (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
    if (d == 0) throw ParseError("binary: dimension is 0", 0);
    const std::size_t body = bytes.size() - 4;
    const std::size_t row_bytes = std::size_t(d) * 8;
    if (body == 0) throw ParseError("binary: no observations", 0);
    if (body % row_bytes != 0)
        throw ParseError("binary: truncated row", body / row_bytes + 1);
    Dataset ds;
    const std::size_t rows = body / row_bytes;
    ds.points.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> v(d);
        for (std::size_t k = 0; k < d; ++k) {
            const unsigned char* p = bytes.data() + 4 + r * row_bytes + k * 8;
            std::uint64_t u = 0;
            for (int b = 7; b >= 0; --b) u = (u << 8) | p[b];
            double x;
            std::memcpy(&x, &u, 8);
            if (!std::isfinite(x)) throw ParseError("binary: non-finite value", r + 1);
            v[k] = x;
        }
        ds.points.emplace_back(std::move(v));
    }
    ds.space = SpaceSpec::euclidean(d);
    return ds;
}

inline std::vector<unsigned char> encode_binary(std::span<const HilbertPoint> points) {
    if (points.empty()) throw ContractViolation("encode_binary: no points");
    const auto d = static_cast<std::uint32_t>(points.front().size());
    std::vector<unsigned char> out;
    out.reserve(4 + points.size() * d * 8);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(d >> (8 * b)));
    for (const auto& p : points) {
        if (p.size() != d) throw ContractViolation("encode_binary: ragged points");
        for (double x : p) {
            std::uint64_t u;
            std::memcpy(&u, &x, 8);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(u >> (8 * b)));
        }
    }
    return out;
}

inline Dataset load_dataset(const std::string& path, DataFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    if (format == DataFormat::csv) return parse_csv(data);
    return parse_binary(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(data.data()), data.size()));
}

// ---------------------------------------------------------------------------
// Assumption checks

struct AssumptionReport {
    bool a1_ok = false;
    double variance_first = 0.0;  // two leading empirical variances along
    double variance_second = 0.0; // orthogonal principal directions
    double c_hat_inv = 0.0;       // probe sup of mean 1/|X - h|
    double c_hat_inv_sq = 0.0;    // probe sup of mean 1/|X - h|^2
    std::size_t probes = 0;
    bool dimension_warning = false;
};

namespace detail {

// Leading eigenvalues of the empirical covariance in H coordinates.
inline std::vector<double> covariance_spectrum(std::span<const HilbertPoint> points, const SpaceSpec& space) {
    const std::size_t d = space.dimension();
    const std::size_t cap = 1000;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points.size() <= cap || (i * cap) % points.size() < cap) idx.push_back(i);
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd y(n, static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < n; ++r)
        for (std::size_t k = 0; k < d; ++k)
            y(r, static_cast<Eigen::Index>(k)) = std::sqrt(space.weight(k)) * points[idx[static_cast<std::size_t>(r)]][k];
    y.rowwise() -= y.colwise().mean();
    Eigen::MatrixXd c = (static_cast<Eigen::Index>(d) <= n) ? Eigen::MatrixXd(y.transpose() * y)
                                                            : Eigen::MatrixXd(y * y.transpose());
    c /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

inline std::pair<double, double> inverse_distance_means(std::span<const HilbertPoint> points,
                                                        std::span<const double> h, std::span<const double> w) {
    double s1 = 0.0, s2 = 0.0;
    std::size_t used = 0;
    for (const auto& x : points) {
        const double r2 = kernel::distance_sq(x.coords(), h, w);
        if (r2 == 0.0) continue;
        s1 += 1.0 / std::sqrt(r2);
        s2 += 1.0 / r2;
        ++used;
    }
    if (used == 0) return {0.0, 0.0};
    return {s1 / static_cast<double>(used), s2 / static_cast<double>(used)};
}

} // namespace detail

// A1 holds when the covariance has rank >= 2 (relative tolerance 1e-10). The A2
// constant is a sup over probe points only: `probe_count` data points jittered
// by 1e-3 of the data scale, plus 10 random convex combinations of data points.
inline AssumptionReport assumption_check(std::span<const HilbertPoint> points, const SpaceSpec& space,
                                         std::size_t probe_count = 50, std::uint64_t seed = 0) {
    if (points.size() < 2) throw ContractViolation("assumption_check: need at least 2 points");
    for (const auto& p : points) space.require(p, "assumption_check");
    AssumptionReport rep;
    const std::size_t d = space.dimension();
    rep.dimension_warning = d < 3;

    const auto ev = detail::covariance_spectrum(points, space);
    rep.variance_first = ev.empty() ? 0.0 : std::max(ev[0], 0.0);
    rep.variance_second = ev.size() < 2 ? 0.0 : std::max(ev[1], 0.0);
    rep.a1_ok = rep.variance_first > 0.0 && rep.variance_second > 1e-10 * rep.variance_first;

    const auto w = space.weights();
    const double scale = detail::mean_pairwise_distance(points, w);
    Rng rng(seed);
    std::vector<double> h(d);
    auto probe = [&] {
        const auto [c1, c2] = detail::inverse_distance_means(points, h, w);
        rep.c_hat_inv = std::max(rep.c_hat_inv, c1);
        rep.c_hat_inv_sq = std::max(rep.c_hat_inv_sq, c2);
        ++rep.probes;
    };
    if (scale > 0.0) {
        for (std::size_t j = 0; j < probe_count; ++j) {
            const auto& base = points[rng.below(points.size())];
            double nn = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                h[k] = rng.normal();
                nn += space.weight(k) * h[k] * h[k];
            }
            nn = std::sqrt(nn);
            for (std::size_t k = 0; k < d; ++k) h[k] = base[k] + 1e-3 * scale * h[k] / nn;
            probe();
        }
        const std::size_t members = std::min<std::size_t>(points.size(), d + 1);
        for (int j = 0; j < 10; ++j) {
            std::fill(h.begin(), h.end(), 0.0);
            double tot = 0.0;
            for (std::size_t m = 0; m < members; ++m) {
                const double e = -std::log(rng.uniform_open());
                const auto& p = points[rng.below(points.size())];
                for (std::size_t k = 0; k < d; ++k) h[k] += e * p[k];
                tot += e;
            }
            for (double& v : h) v /= tot;
            probe();
        }
    }
    return rep;
}

} // namespace geomed
