#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gncqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Input that violates a documented precondition (bad shape, bad value).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Data-dependent failure: the inputs are well formed but cannot produce a result.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
    if (v == 0.0) return "0";  // folds -0 as well
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw InvalidInput("not a number: '" + std::string(text) + "'");
    return v;
}

/// 64-bit FNV-1a; used for config fingerprints in run manifests.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string format_hash(std::uint64_t h) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

/// Forecast horizon in quarters, stored at weekly resolution (12 calendar weeks per quarter).
class Horizon {
public:
    static constexpr int weeks_per_quarter = 12;

    constexpr Horizon() = default;
    static Horizon from_weeks(int weeks) {
        if (weeks <= 0) throw InvalidInput("horizon must be positive");
        Horizon h;
        h.weeks_ = weeks;
        return h;
    }
    static Horizon quarters(int q) { return from_weeks(q * weeks_per_quarter); }

    /// Accepts "4", "1/12", "5/12" or a decimal such as "0.08" (rounded to the nearest week).
    static Horizon parse(std::string_view text) {
        if (auto slash = text.find('/'); slash != std::string_view::npos) {
            const double num = parse_double(text.substr(0, slash));
            const double den = parse_double(text.substr(slash + 1));
            if (den <= 0) throw InvalidInput("horizon denominator must be positive");
            return from_value(num / den);
        }
        return from_value(parse_double(text));
    }
    static Horizon from_value(double h) {
        if (!(h > 0.0) || !std::isfinite(h)) throw InvalidInput("horizon must be positive, got " + format_double(h));
        const double w = h * weeks_per_quarter;
        const double r = std::round(w);
        if (std::abs(w - r) > 0.1 || r < 1)
            throw InvalidInput("horizon " + format_double(h) + " is not a multiple of 1/12 quarter");
        return from_weeks(static_cast<int>(r));
    }

    int weeks() const { return weeks_; }
    double value() const { return static_cast<double>(weeks_) / weeks_per_quarter; }
    bool is_nowcast() const { return weeks_ < weeks_per_quarter; }
    /// ceil(h) in whole quarters.
    int ceil_quarters() const { return (weeks_ + weeks_per_quarter - 1) / weeks_per_quarter; }

    /// File-name friendly label: "4" for integers, "5_12" for fractions in lowest terms.
    std::string label() const {
        if (weeks_ % weeks_per_quarter == 0) return std::to_string(weeks_ / weeks_per_quarter);
        const int g = std::gcd(weeks_, weeks_per_quarter);
        return std::to_string(weeks_ / g) + "_" + std::to_string(weeks_per_quarter / g);
    }

    friend bool operator==(Horizon a, Horizon b) { return a.weeks_ == b.weeks_; }
    friend auto operator<=>(Horizon a, Horizon b) { return a.weeks_ <=> b.weeks_; }

private:
    int weeks_ = weeks_per_quarter;
};

}  // namespace gncqr
