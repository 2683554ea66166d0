#ifndef AMPSURE_DAMP_HPP
#define AMPSURE_DAMP_HPP

#include <optional>
#include <vector>

#include "ampsure/denoise.hpp"
#include "ampsure/measure_ops.hpp"

namespace ampsure {

enum class SigmaEstimator { MeasurementDomain, ImageDomainReal };
enum class DivergenceMode { MonteCarlo, AnalyticIfAvailable };

/// ||z||_2 / sqrt(M)
inline real estimate_sigma_measurement(const Measurement& z) {
    if (z.size() == 0) throw shape_error("estimate_sigma_measurement: empty measurement");
    return norm2(z.values) / std::sqrt(real(z.size()));
}

/// ||Re(A^H z)||_2 / sqrt(N)
inline real estimate_sigma_image(const MeasurementOp& op, const Measurement& z) {
    auto a = adjoint_real(op, z);
    return norm2(a) / std::sqrt(real(a.size()));
}

struct DenoiserBank {
    DenoiserPtr blind;     // used while sigma_hat <= sigma_switch
    DenoiserPtr fallback;  // high-noise fallback, any sigma
};

struct DAmpConfig {
    int iterations = 10;
    SigmaEstimator estimator = SigmaEstimator::MeasurementDomain;
    real sigma_switch = 55.0;  // MRI profile: 10
    real probe_epsilon_factor = 1e-3;
    bool clamp_output = true;
    std::uint64_t probe_seed = 0;
    DivergenceMode divergence = DivergenceMode::MonteCarlo;
    int width = 0;   // image grid; 0 means take it from the operator
    int height = 0;
};

struct DAmpState {
    std::vector<real> x;            // x_t
    Measurement z;                  // z_t
    std::vector<cplx> b;            // b_t
    real sigma_hat = 0.0;
    int t = 0;
    std::vector<real> pseudo_clean;  // x_t + Re(A^H z_t) at the last denoise
};

struct DAmpTraceEntry {
    real sigma_hat = 0.0;
    std::optional<real> sigma_true;  // rms of pseudo_clean - x_true, when supplied
    bool used_fallback = false;
};

struct DAmpResult {
    Image image;
    DAmpState state;
    std::vector<DAmpTraceEntry> trace;
};

namespace detail {

inline void resolve_dims(const MeasurementOp& op, const DAmpConfig& cfg, int& w, int& h) {
    w = cfg.width > 0 ? cfg.width : op.width;
    h = cfg.height > 0 ? cfg.height : op.height;
    if (w <= 0 || h <= 0 || std::size_t(w) * h != std::size_t(op.n))
        throw shape_error("damp: image dimensions unknown or inconsistent with operator");
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t t) {
    std::uint64_t x = base + 0x9E3779B97F4A7C15ull * (t + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    return x;
}

inline real sigma_estimate(const MeasurementOp& op, const Measurement& z, SigmaEstimator est) {
    return est == SigmaEstimator::MeasurementDomain ? estimate_sigma_measurement(z)
                                                    : estimate_sigma_image(op, z);
}

inline const Denoiser& pick_denoiser(const DenoiserBank& bank, real sigma_hat,
                                     real sigma_switch, bool& used_fallback) {
    used_fallback = !(sigma_hat <= sigma_switch) || !bank.blind;
    if (used_fallback) {
        if (!bank.fallback) throw parameter_error("damp: denoiser bank has no fallback");
        return *bank.fallback;
    }
    return *bank.blind;
}

}  // namespace detail

inline DAmpState damp_init(const MeasurementOp& op, const Measurement& y, const DAmpConfig& cfg) {
    if (y.size() != std::size_t(op.m))
        throw shape_error("damp_init: measurement length does not match operator rows");
    int w, h;
    detail::resolve_dims(op, cfg, w, h);
    DAmpState s;
    s.x.assign(op.n, 0.0);
    s.z = y;
    s.b.assign(op.m, cplx(0, 0));
    s.t = 0;
    s.sigma_hat = detail::sigma_estimate(op, y, cfg.estimator);
    s.pseudo_clean = adjoint_real(op, y);
    return s;
}

/// One full iteration: Onsager term, residual, noise estimate, denoise.
/// The Onsager divergence is evaluated at the previous pseudo-clean point
/// with the previous sigma_hat; it is zero on the first iteration.
inline DAmpState damp_step(const DAmpState& state, const MeasurementOp& op, const Measurement& y,
                           const DenoiserBank& bank, const DAmpConfig& cfg,
                           DAmpTraceEntry* trace_entry = nullptr) {
    int w, h;
    detail::resolve_dims(op, cfg, w, h);
    const int t = state.t + 1;
    DAmpState next;
    next.t = t;

    // b_t = z_{t-1} * div D(x_{t-1} + A^H z_{t-1}) / M
    next.b.assign(op.m, cplx(0, 0));
    if (t > 1) {
        bool prev_fallback = false;
        const Denoiser& den =
            detail::pick_denoiser(bank, state.sigma_hat, cfg.sigma_switch, prev_fallback);
        DenoiserInput in{w, h, state.pseudo_clean, state.sigma_hat};
        real div;
        if (cfg.divergence == DivergenceMode::AnalyticIfAvailable &&
            den.has_analytic_divergence()) {
            div = den.analytic_divergence_value(in);
        } else {
            DivergenceProbe probe;
            probe.epsilon = std::max(state.sigma_hat, 1.0) * cfg.probe_epsilon_factor;
            probe.probe_seed = detail::mix_seed(cfg.probe_seed, std::uint64_t(t));
            div = mc_divergence(den, in, probe);
        }
        const real scale = div / real(op.m);
        for (int i = 0; i < op.m; ++i) next.b[i] = state.z.values[i] * scale;
    }

    // z_t = y - A x_t + b_t
    Measurement ax = apply(op, Image(w, h, state.x));
    next.z.field = op.field;
    next.z.values.resize(op.m);
    for (int i = 0; i < op.m; ++i) next.z.values[i] = y.values[i] - ax.values[i] + next.b[i];
    if (!all_finite(next.z.values)) throw divergence_error("damp_step: residual not finite", t);

    next.sigma_hat = detail::sigma_estimate(op, next.z, cfg.estimator);

    // x_{t+1} = D(x_t + A^H z_t)
    next.pseudo_clean = adjoint_real(op, next.z);
    for (int j = 0; j < op.n; ++j) next.pseudo_clean[j] += state.x[j];
    if (!all_finite(next.pseudo_clean))
        throw divergence_error("damp_step: pseudo-clean image not finite", t);

    bool used_fallback = false;
    const Denoiser& den =
        detail::pick_denoiser(bank, next.sigma_hat, cfg.sigma_switch, used_fallback);
    DenoiserInput in{w, h, next.pseudo_clean, next.sigma_hat};
    try {
        next.x = denoise(den, in);
    } catch (const range_error&) {
        used_fallback = true;
        if (!bank.fallback) throw;
        next.x = denoise(*bank.fallback, in);
    }
    if (!all_finite(next.x)) throw divergence_error("damp_step: estimate not finite", t);

    if (trace_entry) {
        trace_entry->sigma_hat = next.sigma_hat;
        trace_entry->used_fallback = used_fallback;
    }
    return next;
}

inline DAmpResult damp_run(const MeasurementOp& op, const Measurement& y, const DenoiserBank& bank,
                           const DAmpConfig& cfg, const Image* x_true = nullptr) {
    if (cfg.iterations < 1) throw parameter_error("damp_run: iterations must be >= 1");
    int w, h;
    detail::resolve_dims(op, cfg, w, h);
    DAmpState state = damp_init(op, y, cfg);
    DAmpResult result;
    result.trace.reserve(cfg.iterations);
    for (int t = 0; t < cfg.iterations; ++t) {
        DAmpTraceEntry entry;
        state = damp_step(state, op, y, bank, cfg, &entry);
        if (x_true) {
            real s = 0;
            for (int j = 0; j < op.n; ++j) {
                real r = state.pseudo_clean[j] - x_true->pixels[j];
                s += r * r;
            }
            entry.sigma_true = std::sqrt(s / real(op.n));
        }
        result.trace.push_back(entry);
    }
    Image out(w, h, state.x);
    if (cfg.clamp_output) out = clamp_image(out);
    result.image = std::move(out);
    result.state = std::move(state);
    return result;
}

}  // namespace ampsure

#endif
