#ifndef AMPSURE_SURE_HPP
#define AMPSURE_SURE_HPP

#include <vector>

#include "ampsure/denoise.hpp"
#include "ampsure/image.hpp"

namespace ampsure {

/// Per-batch SURE value with its three components exposed:
/// total = fidelity - N sigma^2 + 2 sigma^2 div.
struct SureLossValue {
    real total = 0.0;
    real fidelity = 0.0;
    real penalty = 0.0;
    real divergence_term = 0.0;
    std::size_t n = 0;
    real sigma = 0.0;
};

struct SureOptions {
    real epsilon_factor = 1e-3;   // per-image epsilon = factor * sigma
    bool exact_divergence = false;  // test hook: analytic divergence instead of MC
    int probe_average = 1;          // probes averaged per image, default one
};

struct NoisyCleanPair {
    DenoiserInput noisy;
    std::vector<real> clean;
};

/// Eq.-(4)-style empirical risk: per-image squared error summed over pixels,
/// averaged over the batch.
inline real mse_loss(const Denoiser& d, const std::vector<NoisyCleanPair>& pairs) {
    if (pairs.empty()) throw parameter_error("mse_loss: empty batch");
    real total = 0.0;
    for (const auto& p : pairs) {
        if (p.noisy.size() != p.clean.size())
            throw shape_error("mse_loss: noisy/clean length mismatch");
        auto out = denoise(d, p.noisy);
        real s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            real r = out[i] - p.clean[i];
            s += r * r;
        }
        total += s;
    }
    return total / real(pairs.size());
}

namespace detail {

inline real sure_divergence(const Denoiser& d, const DenoiserInput& in,
                            const DivergenceProbe& probe, const SureOptions& opts) {
    if (opts.exact_divergence && d.has_analytic_divergence())
        return d.analytic_divergence_value(in);
    DivergenceProbe p = probe;
    if (!(p.epsilon > 0)) p.epsilon = opts.epsilon_factor * in.sigma;
    if (opts.probe_average <= 1) return mc_divergence(d, in, p);
    real acc = 0;
    for (int k = 0; k < opts.probe_average; ++k) {
        DivergenceProbe pk = p;
        pk.probe_seed = p.probe_seed + 0x9E3779B97F4A7C15ull * std::uint64_t(k);
        acc += mc_divergence(d, in, pk);
    }
    return acc / real(opts.probe_average);
}

}  // namespace detail

/// MC-SURE over a batch, one probe per input; all three terms are batch
/// averaged. Probes with epsilon == 0 take epsilon = epsilon_factor * sigma.
inline SureLossValue sure_loss(const Denoiser& d, const std::vector<DenoiserInput>& batch,
                               const std::vector<DivergenceProbe>& probes,
                               const SureOptions& opts = {}) {
    if (batch.empty()) throw parameter_error("sure_loss: empty batch");
    if (probes.size() != batch.size())
        throw shape_error("sure_loss: need one probe per input");
    SureLossValue v;
    v.n = batch.front().size();
    v.sigma = batch.front().sigma;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& in = batch[j];
        if (!(in.sigma > 0))
            throw parameter_error("sure_loss: sigma must be positive (SURE undefined at 0)");
        auto out = denoise(d, in);
        real fid = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            real r = in.image[i] - out[i];
            fid += r * r;
        }
        const real s2 = in.sigma * in.sigma;
        const real div = detail::sure_divergence(d, in, probes[j], opts);
        v.fidelity += fid;
        v.penalty += -real(in.size()) * s2;
        v.divergence_term += 2.0 * s2 * div;
    }
    const real k = real(batch.size());
    v.fidelity /= k;
    v.penalty /= k;
    v.divergence_term /= k;
    v.total = v.fidelity + v.penalty + v.divergence_term;
    return v;
}

struct UnbiasednessReport {
    real mean_sure = 0.0;
    real mean_mse = 0.0;
    real rel_gap = 0.0;
    real std_sure = 0.0;
    bool gap_undefined = false;  // mean_mse == 0 (perfect denoiser)
    int trials = 0;
};

/// Draws `trials` noise realizations of a hidden image and compares mean
/// MC-SURE against mean MSE.
inline UnbiasednessReport unbiasedness_report(const Denoiser& d, const Image& x_hidden, real sigma,
                                              int trials, std::uint64_t seed,
                                              const SureOptions& opts = {}) {
    if (trials < 2) throw parameter_error("unbiasedness_report: trials must be >= 2");
    if (!(sigma > 0)) throw parameter_error("unbiasedness_report: sigma must be positive");
    const std::size_t n = x_hidden.size();
    Rng rng(seed);
    std::vector<real> sure_vals(trials);
    real sum_mse = 0;
    for (int tr = 0; tr < trials; ++tr) {
        DenoiserInput in;
        in.width = x_hidden.width;
        in.height = x_hidden.height;
        in.sigma = sigma;
        in.image.resize(n);
        for (std::size_t i = 0; i < n; ++i) in.image[i] = x_hidden.pixels[i] + sigma * rng.normal();
        DivergenceProbe probe;
        probe.epsilon = 0;  // derive from sigma
        probe.probe_seed = rng.next_u64();
        auto v = sure_loss(d, {in}, {probe}, opts);
        sure_vals[tr] = v.total;
        auto out = denoise(d, in);
        real m = 0;
        for (std::size_t i = 0; i < n; ++i) {
            real r = out[i] - x_hidden.pixels[i];
            m += r * r;
        }
        sum_mse += m;
    }
    UnbiasednessReport rep;
    rep.trials = trials;
    rep.mean_sure = mean(sure_vals);
    rep.mean_mse = sum_mse / real(trials);
    rep.std_sure = sample_std(sure_vals);
    if (rep.mean_mse == 0.0)
        rep.gap_undefined = true;
    else
        rep.rel_gap = std::abs(rep.mean_sure - rep.mean_mse) / rep.mean_mse;
    return rep;
}

}  // namespace ampsure

#endif
