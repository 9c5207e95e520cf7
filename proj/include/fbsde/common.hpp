#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// construction rejected: bad family parameters (gamma <= 0, b < a, ...)
struct InvalidFamilyParams : Error {
    using Error::Error;
};

// adaptive quadrature exhausted its panel budget
struct QuadratureNonConvergence : Error {
    using Error::Error;
};

// grid box too small for the 6 sigma sqrt(T) margin rule
struct DomainTooSmall : Error {
    using Error::Error;
};

// malformed or inconsistent run configuration
struct ConfigError : Error {
    using Error::Error;
};

// single named check inside a validation report
struct CheckResult {
    std::string name;
    bool pass = false;
    double observed = 0.0;
    double bound = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    const CheckResult* first_failure() const {
        for (const auto& c : checks)
            if (!c.pass) return &c;
        return nullptr;
    }
};

// shortest round-trip decimal form, locale independent
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const double* a, int n) {
    return std::sqrt(dot(a, a, n));
}

}  // namespace fbsde
