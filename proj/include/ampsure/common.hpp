#ifndef AMPSURE_COMMON_HPP
#define AMPSURE_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampsure {

using real = double;
using cplx = std::complex<double>;

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct parameter_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct range_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// AMP iterate went non-finite; carries the iteration index.
struct divergence_error : std::runtime_error {
    int iteration;
    divergence_error(const std::string& msg, int it)
        : std::runtime_error(msg + " (iteration " + std::to_string(it) + ")"), iteration(it) {}
};

struct curation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct training_error : std::runtime_error {
    int epoch;
    training_error(const std::string& msg, int ep)
        : std::runtime_error(msg + " (epoch " + std::to_string(ep) + ")"), epoch(ep) {}
};

// Deterministic RNG: mt19937_64 with hand-rolled uniform/normal so the
// byte stream does not depend on libstdc++'s distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in (0, 1]
    double uniform() { return double((gen_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller standard normal
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::size_t index(std::size_t n) { return std::size_t(gen_() % n); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::vector<real> normal_vector(std::size_t n, Rng& rng) {
    std::vector<real> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline real dot(const std::vector<real>& a, const std::vector<real>& b) {
    real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline real norm2_sq(const std::vector<real>& v) { return dot(v, v); }
inline real norm2(const std::vector<real>& v) { return std::sqrt(norm2_sq(v)); }

inline real norm2_sq(const std::vector<cplx>& v) {
    real s = 0;
    for (const auto& z : v) s += std::norm(z);
    return s;
}
inline real norm2(const std::vector<cplx>& v) { return std::sqrt(norm2_sq(v)); }

inline bool all_finite(const std::vector<real>& v) {
    for (real x : v)
        if (!std::isfinite(x)) return false;
    return true;
}
inline bool all_finite(const std::vector<cplx>& v) {
    for (const auto& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

inline real mean(const std::vector<real>& v) {
    real s = 0;
    for (real x : v) s += x;
    return v.empty() ? 0.0 : s / real(v.size());
}

inline real sample_std(const std::vector<real>& v) {
    if (v.size() < 2) return 0.0;
    real mu = mean(v);
    real s = 0;
    for (real x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / real(v.size()));
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace ampsure

#endif
