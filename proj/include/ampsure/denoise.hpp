#ifndef AMPSURE_DENOISE_HPP
#define AMPSURE_DENOISE_HPP

#include <algorithm>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ampsure/common.hpp"
#include "ampsure/fft.hpp"

namespace ampsure {

struct DenoiserInput {
    int width = 0;
    int height = 0;
    std::vector<real> image;  // intensity units, 0-255 scale
    real sigma = 0.0;

    std::size_t size() const { return image.size(); }
};

/// sigma-parameterized denoiser. Immutable; safe for concurrent callers.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual std::vector<real> apply(const DenoiserInput& in) const = 0;

    virtual real sigma_lo() const { return 0.0; }
    virtual real sigma_hi() const { return std::numeric_limits<real>::infinity(); }

    virtual bool has_analytic_divergence() const { return false; }
    virtual real analytic_divergence_value(const DenoiserInput&) const {
        throw capability_error("denoiser has no analytic divergence");
    }

    virtual std::string name() const = 0;
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;

inline std::vector<real> denoise(const Denoiser& d, const DenoiserInput& in) {
    if (in.sigma < 0 || !all_finite(in.image))
        throw parameter_error("denoise: sigma must be >= 0 and image finite");
    if (in.sigma < d.sigma_lo() || in.sigma > d.sigma_hi())
        throw range_error("denoise: sigma outside valid range of " + d.name());
    return d.apply(in);
}

inline real analytic_divergence(const Denoiser& d, const DenoiserInput& in) {
    return d.analytic_divergence_value(in);
}

struct DivergenceProbe {
    real epsilon = 1e-3;
    std::uint64_t probe_seed = 0;
};

inline std::vector<real> probe_vector(const DivergenceProbe& probe, std::size_t n) {
    Rng rng(probe.probe_seed);
    return normal_vector(n, rng);
}

/// n' (D(v + eps n) - D(v)) / eps with n standard normal from probe_seed.
inline real mc_divergence(const Denoiser& d, const DenoiserInput& in,
                          const DivergenceProbe& probe) {
    if (!(probe.epsilon > 0)) throw parameter_error("mc_divergence: epsilon must be positive");
    const auto n_tilde = probe_vector(probe, in.size());
    auto base = denoise(d, in);
    DenoiserInput perturbed = in;
    for (std::size_t i = 0; i < in.size(); ++i) perturbed.image[i] += probe.epsilon * n_tilde[i];
    auto shifted = denoise(d, perturbed);
    real s = 0;
    for (std::size_t i = 0; i < in.size(); ++i) s += n_tilde[i] * (shifted[i] - base[i]);
    return s / probe.epsilon;
}

// ---------------------------------------------------------------------------

class IdentityDenoiser final : public Denoiser {
public:
    std::vector<real> apply(const DenoiserInput& in) const override { return in.image; }
    bool has_analytic_divergence() const override { return true; }
    real analytic_divergence_value(const DenoiserInput& in) const override {
        return real(in.size());
    }
    std::string name() const override { return "identity"; }
};

class ScaleDenoiser final : public Denoiser {
public:
    explicit ScaleDenoiser(real c) : c_(c) {}
    std::vector<real> apply(const DenoiserInput& in) const override {
        auto out = in.image;
        for (auto& v : out) v *= c_;
        return out;
    }
    bool has_analytic_divergence() const override { return true; }
    real analytic_divergence_value(const DenoiserInput& in) const override {
        return c_ * real(in.size());
    }
    real scale() const { return c_; }
    std::string name() const override { return "scale"; }

private:
    real c_;
};

inline real soft_threshold(real v, real tau) {
    if (v > tau) return v - tau;
    if (v < -tau) return v + tau;
    return 0.0;
}

/// Orthonormal 2-D DCT, soft threshold at tau = k * sigma, inverse DCT.
class SoftThresholdDctDenoiser final : public Denoiser {
public:
    explicit SoftThresholdDctDenoiser(real k = 2.5) : k_(k) {}
    std::vector<real> apply(const DenoiserInput& in) const override {
        const real tau = k_ * in.sigma;
        auto c = in.image;
        ortho_dct2(c, in.width, in.height);
        for (auto& v : c) v = soft_threshold(v, tau);
        ortho_idct2(c, in.width, in.height);
        return c;
    }
    bool has_analytic_divergence() const override { return true; }
    real analytic_divergence_value(const DenoiserInput& in) const override {
        const real tau = k_ * in.sigma;
        auto c = in.image;
        ortho_dct2(c, in.width, in.height);
        std::size_t cnt = 0;
        for (real v : c)
            if (std::abs(v) > tau) ++cnt;
        return real(cnt);
    }
    real threshold_factor() const { return k_; }
    std::string name() const override { return "soft_threshold_dct"; }

private:
    real k_;
};

/// Test variant: pointwise soft threshold in the identity basis.
class SoftThresholdPointwiseDenoiser final : public Denoiser {
public:
    explicit SoftThresholdPointwiseDenoiser(real k = 1.0) : k_(k) {}
    std::vector<real> apply(const DenoiserInput& in) const override {
        const real tau = k_ * in.sigma;
        auto out = in.image;
        for (auto& v : out) v = soft_threshold(v, tau);
        return out;
    }
    bool has_analytic_divergence() const override { return true; }
    real analytic_divergence_value(const DenoiserInput& in) const override {
        const real tau = k_ * in.sigma;
        std::size_t cnt = 0;
        for (real v : in.image)
            if (std::abs(v) > tau) ++cnt;
        return real(cnt);
    }
    std::string name() const override { return "soft_threshold_pointwise"; }

private:
    real k_;
};

/// General-purpose fallback: hard threshold at tau = k * sigma on overlapping 16x16
/// block DCTs, uniform overlap aggregation.
class HardThresholdBlockDctDenoiser final : public Denoiser {
public:
    explicit HardThresholdBlockDctDenoiser(real k = 2.7, int block = 16, int stride = 8)
        : k_(k), block_(block), stride_(stride) {}

    std::vector<real> apply(const DenoiserInput& in) const override {
        const int b = std::min({block_, in.width, in.height});
        const real tau = k_ * in.sigma;
        std::vector<real> acc(in.size(), 0.0);
        std::vector<real> cnt(in.size(), 0.0);
        std::vector<real> blk(std::size_t(b) * b);
        for (int r0 : block_starts(in.height, b))
            for (int c0 : block_starts(in.width, b)) {
                for (int r = 0; r < b; ++r)
                    for (int c = 0; c < b; ++c)
                        blk[std::size_t(r) * b + c] =
                            in.image[std::size_t(r0 + r) * in.width + (c0 + c)];
                ortho_dct2(blk, b, b);
                for (auto& v : blk)
                    if (std::abs(v) <= tau) v = 0.0;
                ortho_idct2(blk, b, b);
                for (int r = 0; r < b; ++r)
                    for (int c = 0; c < b; ++c) {
                        const std::size_t i = std::size_t(r0 + r) * in.width + (c0 + c);
                        acc[i] += blk[std::size_t(r) * b + c];
                        cnt[i] += 1.0;
                    }
            }
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= cnt[i];
        return acc;
    }

    std::string name() const override { return "hard_threshold_block_dct"; }

private:
    std::vector<int> block_starts(int extent, int b) const {
        std::vector<int> starts;
        for (int s = 0; s + b <= extent; s += stride_) starts.push_back(s);
        if (starts.empty() || starts.back() + b < extent) starts.push_back(extent - b);
        return starts;
    }

    real k_;
    int block_;
    int stride_;
};

}  // namespace ampsure

#endif
