#ifndef AMPSURE_METRICS_HPP
#define AMPSURE_METRICS_HPP

#include <algorithm>
#include <vector>

#include "ampsure/common.hpp"
#include "ampsure/image.hpp"

namespace ampsure {

/// 10 log10(255^2 / MSE) on the 0-255 scale; zero MSE returns the 100 dB cap.
inline real psnr(const Image& xhat, const Image& xgt) {
    if (xhat.width != xgt.width || xhat.height != xgt.height)
        throw shape_error("psnr: image dimensions differ");
    real mse = 0;
    for (std::size_t i = 0; i < xhat.size(); ++i) {
        real r = xhat.pixels[i] - xgt.pixels[i];
        mse += r * r;
    }
    mse /= real(xhat.size());
    if (mse == 0.0) return 100.0;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// One-sample Kolmogorov-Smirnov statistic against the standard normal.
inline real ks_statistic_std_normal(std::vector<real> samples) {
    std::sort(samples.begin(), samples.end());
    const real n = real(samples.size());
    real d = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const real cdf = std_normal_cdf(samples[i]);
        d = std::max(d, std::abs(real(i + 1) / n - cdf));
        d = std::max(d, std::abs(real(i) / n - cdf));
    }
    return d;
}

/// Asymptotic KS critical value at the given significance.
inline real ks_critical(std::size_t n, real alpha) {
    // c(alpha) = sqrt(-ln(alpha/2)/2)
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(real(n));
}

inline real excess_kurtosis(const std::vector<real>& v) {
    const real mu = mean(v);
    real m2 = 0, m4 = 0;
    for (real x : v) {
        real d = x - mu;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= real(v.size());
    m4 /= real(v.size());
    if (m2 == 0) return 0.0;
    return m4 / (m2 * m2) - 3.0;
}

struct ResidualHistogram {
    std::vector<real> bin_edges;  // bins + 1 entries
    std::vector<real> densities;  // bin-width-weighted sum is 1 over the binned range
    real ks_statistic = 0.0;
    real excess_kurtosis = 0.0;
    bool degenerate = false;  // all residuals identical
};

/// Histogram of (pseudo_clean - xgt) / sigma_normalizer over [-4, 4], with KS
/// statistic and excess kurtosis against the standard normal.
inline ResidualHistogram residual_histogram(const Image& pseudo_clean, const Image& xgt,
                                            real sigma_normalizer, int bins = 61) {
    if (pseudo_clean.width != xgt.width || pseudo_clean.height != xgt.height)
        throw shape_error("residual_histogram: image dimensions differ");
    if (!(sigma_normalizer > 0))
        throw parameter_error("residual_histogram: normalizer must be positive");
    if (bins < 1) throw parameter_error("residual_histogram: bins must be >= 1");
    std::vector<real> r(pseudo_clean.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = (pseudo_clean.pixels[i] - xgt.pixels[i]) / sigma_normalizer;

    ResidualHistogram h;
    h.degenerate = sample_std(r) == 0.0;
    const real lo = -4.0, hi = 4.0;
    const real bw = (hi - lo) / real(bins);
    h.bin_edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.bin_edges[b] = lo + bw * b;
    std::vector<std::size_t> counts(bins, 0);
    std::size_t inside = 0;
    for (real x : r) {
        if (x < lo || x >= hi) continue;
        int b = int((x - lo) / bw);
        if (b >= bins) b = bins - 1;
        ++counts[b];
        ++inside;
    }
    h.densities.resize(bins, 0.0);
    if (inside > 0)
        for (int b = 0; b < bins; ++b) h.densities[b] = real(counts[b]) / (real(inside) * bw);
    if (!h.degenerate) {
        h.ks_statistic = ks_statistic_std_normal(r);
        h.excess_kurtosis = ampsure::excess_kurtosis(r);
    }
    return h;
}

}  // namespace ampsure

#endif
