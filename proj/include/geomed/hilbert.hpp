#pragma once

// Geometry of the working space: plain Euclidean coordinates, or values of a
// function on a fixed grid with quadrature weights folded into the inner
// product. Everything above this layer touches H only through inner/norm.

#include "errors.hpp"

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace geomed {

class HilbertPoint {
public:
    HilbertPoint() = default;

    explicit HilbertPoint(std::vector<double> coords) : coords_(std::move(coords)) {
        for (double c : coords_) {
            if (!std::isfinite(c)) throw ContractViolation("HilbertPoint: non-finite coordinate");
        }
    }

    HilbertPoint(std::initializer_list<double> coords) : HilbertPoint(std::vector<double>(coords)) {}

    static HilbertPoint zeros(std::size_t d) {
        HilbertPoint p;
        p.coords_.assign(d, 0.0);
        return p;
    }

    std::size_t size() const noexcept { return coords_.size(); }
    double operator[](std::size_t i) const noexcept { return coords_[i]; }
    double& operator[](std::size_t i) noexcept { return coords_[i]; }

    std::span<const double> coords() const noexcept { return coords_; }
    std::span<double> coords() noexcept { return coords_; }
    const std::vector<double>& vector() const noexcept { return coords_; }

    auto begin() const noexcept { return coords_.begin(); }
    auto end() const noexcept { return coords_.end(); }

    friend bool operator==(const HilbertPoint&, const HilbertPoint&) = default;

private:
    std::vector<double> coords_;
};

class SpaceSpec {
public:
    static SpaceSpec euclidean(std::size_t dimension) {
        if (dimension == 0) throw ContractViolation("SpaceSpec: dimension must be >= 1");
        SpaceSpec s;
        s.dimension_ = dimension;
        return s;
    }

    static SpaceSpec weighted(std::vector<double> weights) {
        if (weights.empty()) throw ContractViolation("SpaceSpec: dimension must be >= 1");
        for (double w : weights) {
            if (!std::isfinite(w) || w <= 0.0)
                throw ContractViolation("SpaceSpec: quadrature weights must be finite and > 0");
        }
        SpaceSpec s;
        s.dimension_ = weights.size();
        s.weights_ = std::move(weights);
        return s;
    }

    std::size_t dimension() const noexcept { return dimension_; }
    bool is_weighted() const noexcept { return !weights_.empty(); }
    // Empty span in the Euclidean case.
    std::span<const double> weights() const noexcept { return weights_; }
    double weight(std::size_t i) const noexcept { return weights_.empty() ? 1.0 : weights_[i]; }

    void require(std::size_t size, const char* who) const {
        if (size != dimension_) {
            throw ContractViolation(std::string(who) + ": dimension mismatch (got " +
                                    std::to_string(size) + ", space has " +
                                    std::to_string(dimension_) + ")");
        }
    }
    void require(const HilbertPoint& p, const char* who) const { require(p.size(), who); }

    friend bool operator==(const SpaceSpec&, const SpaceSpec&) = default;

private:
    SpaceSpec() = default;
    std::size_t dimension_ = 1;
    std::vector<double> weights_;
};

namespace kernel {

// Unchecked span kernels used by the hot loops; callers validate sizes.
inline double inner(std::span<const double> a, std::span<const double> b,
                    std::span<const double> w) noexcept {
    double s = 0.0;
    if (w.empty()) {
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * (a[i] * b[i]);
    }
    return s;
}

inline double distance_sq(std::span<const double> a, std::span<const double> b,
                          std::span<const double> w) noexcept {
    double s = 0.0;
    if (w.empty()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double t = a[i] - b[i];
            s += t * t;
        }
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double t = a[i] - b[i];
            s += w[i] * t * t;
        }
    }
    return s;
}

inline double distance(std::span<const double> a, std::span<const double> b,
                       std::span<const double> w) noexcept {
    return std::sqrt(distance_sq(a, b, w));
}

} // namespace kernel

inline double inner(const HilbertPoint& a, const HilbertPoint& b, const SpaceSpec& space) {
    space.require(a, "inner");
    space.require(b, "inner");
    return kernel::inner(a.coords(), b.coords(), space.weights());
}

inline double norm(const HilbertPoint& a, const SpaceSpec& space) {
    space.require(a, "norm");
    return std::sqrt(kernel::inner(a.coords(), a.coords(), space.weights()));
}

inline double distance(const HilbertPoint& a, const HilbertPoint& b, const SpaceSpec& space) {
    space.require(a, "distance");
    space.require(b, "distance");
    return kernel::distance(a.coords(), b.coords(), space.weights());
}

// a + s*b
inline HilbertPoint combine(const HilbertPoint& a, double s, const HilbertPoint& b) {
    if (a.size() != b.size()) throw ContractViolation("combine: dimension mismatch");
    if (!std::isfinite(s)) throw ContractViolation("combine: non-finite scalar");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
    return HilbertPoint(std::move(out));
}

inline HilbertPoint operator-(const HilbertPoint& a, const HilbertPoint& b) { return combine(a, -1.0, b); }
inline HilbertPoint operator+(const HilbertPoint& a, const HilbertPoint& b) { return combine(a, 1.0, b); }

inline HilbertPoint scaled(const HilbertPoint& a, double s) {
    return combine(HilbertPoint::zeros(a.size()), s, a);
}

} // namespace geomed
