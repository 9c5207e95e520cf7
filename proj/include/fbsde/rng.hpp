#pragma once

#include <cmath>
#include <cstdint>

namespace fbsde {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// rational approximation of the normal quantile plus one Halley step
inline double inverse_normal(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

}  // namespace detail

// counter-based stream: the draw for (path, step, dim) is a pure function of
// the key, so ensembles are identical for any worker split
class CounterRng {
  public:
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    double uniform(uint64_t path, uint64_t step, uint64_t dim) const {
        uint64_t h = detail::splitmix64(seed_ ^ (0x632BE59BD9B4E019ULL * (path + 1)));
        h = detail::splitmix64(h ^ (0x9E3779B97F4A7C15ULL * (step + 1)));
        h = detail::splitmix64(h ^ (0x94D049BB133111EBULL * (dim + 1)));
        return (static_cast<double>(h >> 11) + 0.5) * 0x1p-53;
    }

    double normal(uint64_t path, uint64_t step, uint64_t dim) const {
        return detail::inverse_normal(uniform(path, step, dim));
    }

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_;
};

}  // namespace fbsde
