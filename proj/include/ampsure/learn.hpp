#ifndef AMPSURE_LEARN_HPP
#define AMPSURE_LEARN_HPP

#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "ampsure/damp.hpp"
#include "ampsure/denoise.hpp"
#include "ampsure/metrics.hpp"
#include "ampsure/sure.hpp"

namespace ampsure {

enum class Arch : std::uint8_t { LearnedShrinkage = 0, SmallResidualCNN = 1 };

/// Denoiser with a weight vector and reverse-mode parameter gradients.
/// accumulate_param_grad adds J_w^T upstream for the forward map at `in`.
class TrainableDenoiser : public Denoiser {
public:
    virtual Arch arch() const = 0;
    virtual const std::vector<real>& weights() const = 0;
    virtual void set_weights(std::vector<real> w) = 0;
    virtual void accumulate_param_grad(const DenoiserInput& in, const std::vector<real>& upstream,
                                       std::vector<real>& grad) const = 0;
    virtual std::shared_ptr<TrainableDenoiser> clone() const = 0;
};

using TrainablePtr = std::shared_ptr<TrainableDenoiser>;

// ---------------------------------------------------------------------------
// LearnedShrinkage: DCT -> per-band soft threshold at tau_b * sigma -> IDCT,
// with tau_b = p_b^2 so thresholds stay nonnegative. sigma enters only
// multiplicatively, so one weight set is blind over the whole range.

class LearnedShrinkageDenoiser final : public TrainableDenoiser {
public:
    static constexpr int kBands = 16;

    explicit LearnedShrinkageDenoiser(real sigma_hi = 55.0) : sigma_hi_(sigma_hi), p_(kBands, 0.0) {}
    LearnedShrinkageDenoiser(std::vector<real> p, real sigma_hi)
        : sigma_hi_(sigma_hi), p_(std::move(p)) {
        if (p_.size() != kBands) throw shape_error("LearnedShrinkage: expected 16 weights");
    }

    static int band_of(int r, int c, int width, int height) {
        const real fr = real(r) / real(height);
        const real fc = real(c) / real(width);
        const real rad = std::sqrt((fr * fr + fc * fc) / 2.0);
        int g = int(rad * kBands);
        return g > kBands - 1 ? kBands - 1 : g;
    }

    std::vector<real> apply(const DenoiserInput& in) const override {
        auto c = in.image;
        ortho_dct2(c, in.width, in.height);
        for (int r = 0; r < in.height; ++r)
            for (int col = 0; col < in.width; ++col) {
                const int g = band_of(r, col, in.width, in.height);
                const real tau = p_[g] * p_[g] * in.sigma;
                auto& v = c[std::size_t(r) * in.width + col];
                v = soft_threshold(v, tau);
            }
        ortho_idct2(c, in.width, in.height);
        return c;
    }

    void accumulate_param_grad(const DenoiserInput& in, const std::vector<real>& upstream,
                               std::vector<real>& grad) const override {
        if (grad.size() != p_.size()) throw shape_error("LearnedShrinkage: gradient size mismatch");
        auto c = in.image;
        ortho_dct2(c, in.width, in.height);
        auto a = upstream;  // dL/ds = DCT(dL/dy) through the orthonormal inverse
        ortho_dct2(a, in.width, in.height);
        for (int r = 0; r < in.height; ++r)
            for (int col = 0; col < in.width; ++col) {
                const int g = band_of(r, col, in.width, in.height);
                const real tau = p_[g] * p_[g] * in.sigma;
                const real ci = c[std::size_t(r) * in.width + col];
                if (std::abs(ci) > tau) {
                    const real sgn = ci > 0 ? 1.0 : -1.0;
                    grad[g] += a[std::size_t(r) * in.width + col] * (-sgn) * in.sigma * 2.0 * p_[g];
                }
            }
    }

    Arch arch() const override { return Arch::LearnedShrinkage; }
    const std::vector<real>& weights() const override { return p_; }
    void set_weights(std::vector<real> w) override {
        if (w.size() != kBands) throw shape_error("LearnedShrinkage: expected 16 weights");
        p_ = std::move(w);
    }
    std::shared_ptr<TrainableDenoiser> clone() const override {
        return std::make_shared<LearnedShrinkageDenoiser>(*this);
    }
    real sigma_hi() const override { return sigma_hi_; }
    std::string name() const override { return "learned_shrinkage"; }

    std::vector<real> thresholds() const {
        std::vector<real> tau(p_.size());
        for (std::size_t i = 0; i < p_.size(); ++i) tau[i] = p_[i] * p_[i];
        return tau;
    }

private:
    real sigma_hi_;
    std::vector<real> p_;
};

// ---------------------------------------------------------------------------
// SmallResidualCnn: 4 conv layers (3x3, 16 channels, tanh between), residual
// output x - 255 f(x/255). Blind: sigma is unused. All-zero weights give the
// identity map.

class SmallResidualCnn final : public TrainableDenoiser {
public:
    static constexpr int kChannels = 16;
    static constexpr real kScale = 255.0;

    explicit SmallResidualCnn(real sigma_hi = 55.0)
        : sigma_hi_(sigma_hi), w_(weight_count(), 0.0) {}

    static SmallResidualCnn random_init(std::uint64_t seed, real sigma_hi = 55.0,
                                        real scale = 0.05) {
        SmallResidualCnn d(sigma_hi);
        Rng rng(seed);
        std::size_t off = 0;
        for (int layer = 0; layer < 4; ++layer) {
            const int cin = layer == 0 ? 1 : kChannels;
            const int cout = layer == 3 ? 1 : kChannels;
            const real s = scale / std::sqrt(9.0 * cin);
            for (int i = 0; i < cout * cin * 9; ++i) d.w_[off++] = s * rng.normal();
            off += cout;  // biases stay zero
        }
        return d;
    }

    static std::size_t weight_count() {
        return (1 * kChannels * 9 + kChannels) + 2 * (kChannels * kChannels * 9 + kChannels) +
               (kChannels * 1 * 9 + 1);
    }

    std::vector<real> apply(const DenoiserInput& in) const override {
        Planes a1, a2, a3;
        std::vector<real> f;
        forward_internal(in, a1, a2, a3, f);
        auto out = in.image;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= kScale * f[i];
        return out;
    }

    void accumulate_param_grad(const DenoiserInput& in, const std::vector<real>& upstream,
                               std::vector<real>& grad) const override {
        if (grad.size() != w_.size()) throw shape_error("SmallResidualCnn: gradient size mismatch");
        const int w = in.width, h = in.height;
        Planes a1, a2, a3;
        std::vector<real> f;
        forward_internal(in, a1, a2, a3, f);
        Planes u0(1, in.image);
        for (auto& v : u0[0]) v /= kScale;

        Planes g_f(1, upstream);
        for (auto& v : g_f[0]) v *= -kScale;  // y = x - kScale f

        LayerView l1 = layer_view(0), l2 = layer_view(1), l3 = layer_view(2), l4 = layer_view(3);
        Planes g_a3, g_a2, g_a1;
        conv_backward(a3, g_f, l4, w, h, grad, &g_a3);
        tanh_backward(g_a3, a3);
        conv_backward(a2, g_a3, l3, w, h, grad, &g_a2);
        tanh_backward(g_a2, a2);
        conv_backward(a1, g_a2, l2, w, h, grad, &g_a1);
        tanh_backward(g_a1, a1);
        conv_backward(u0, g_a1, l1, w, h, grad, nullptr);
    }

    Arch arch() const override { return Arch::SmallResidualCNN; }
    const std::vector<real>& weights() const override { return w_; }
    void set_weights(std::vector<real> w) override {
        if (w.size() != w_.size()) throw shape_error("SmallResidualCnn: weight size mismatch");
        w_ = std::move(w);
    }
    std::shared_ptr<TrainableDenoiser> clone() const override {
        return std::make_shared<SmallResidualCnn>(*this);
    }
    real sigma_hi() const override { return sigma_hi_; }
    std::string name() const override { return "small_residual_cnn"; }

private:
    using Planes = std::vector<std::vector<real>>;

    struct LayerView {
        const real* W;       // [cout][cin][3][3]
        const real* b;       // [cout]
        std::size_t w_off;   // offsets into the flat weight vector
        std::size_t b_off;
        int cin, cout;
    };

    LayerView layer_view(int layer) const {
        std::size_t off = 0;
        for (int l = 0; l < 4; ++l) {
            const int cin = l == 0 ? 1 : kChannels;
            const int cout = l == 3 ? 1 : kChannels;
            const std::size_t wsz = std::size_t(cout) * cin * 9;
            if (l == layer)
                return LayerView{w_.data() + off, w_.data() + off + wsz, off, off + wsz, cin, cout};
            off += wsz + cout;
        }
        throw parameter_error("SmallResidualCnn: bad layer index");
    }

    static void conv_forward(const Planes& in, const LayerView& l, int w, int h, Planes& out) {
        out.assign(l.cout, std::vector<real>(std::size_t(w) * h));
        for (int o = 0; o < l.cout; ++o) {
            auto& dst = out[o];
            for (auto& v : dst) v = l.b[o];
            for (int i = 0; i < l.cin; ++i) {
                const real* K = l.W + (std::size_t(o) * l.cin + i) * 9;
                const auto& src = in[i];
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < w; ++c) {
                        real s = 0;
                        for (int dr = -1; dr <= 1; ++dr) {
                            const int rr = r + dr;
                            if (rr < 0 || rr >= h) continue;
                            for (int dc = -1; dc <= 1; ++dc) {
                                const int cc = c + dc;
                                if (cc < 0 || cc >= w) continue;
                                s += K[(dr + 1) * 3 + (dc + 1)] * src[std::size_t(rr) * w + cc];
                            }
                        }
                        dst[std::size_t(r) * w + c] += s;
                    }
            }
        }
    }

    // Accumulates weight/bias gradients; optionally propagates to g_in.
    static void conv_backward(const Planes& in, const Planes& g_out, const LayerView& l, int w,
                              int h, std::vector<real>& grad, Planes* g_in) {
        if (g_in) g_in->assign(l.cin, std::vector<real>(std::size_t(w) * h, 0.0));
        for (int o = 0; o < l.cout; ++o) {
            const auto& go = g_out[o];
            real gb = 0;
            for (real v : go) gb += v;
            grad[l.b_off + o] += gb;
            for (int i = 0; i < l.cin; ++i) {
                real* gK = grad.data() + l.w_off + (std::size_t(o) * l.cin + i) * 9;
                const real* K = l.W + (std::size_t(o) * l.cin + i) * 9;
                const auto& src = in[i];
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < w; ++c) {
                        const real g = go[std::size_t(r) * w + c];
                        if (g == 0.0) continue;
                        for (int dr = -1; dr <= 1; ++dr) {
                            const int rr = r + dr;
                            if (rr < 0 || rr >= h) continue;
                            for (int dc = -1; dc <= 1; ++dc) {
                                const int cc = c + dc;
                                if (cc < 0 || cc >= w) continue;
                                const std::size_t si = std::size_t(rr) * w + cc;
                                gK[(dr + 1) * 3 + (dc + 1)] += g * src[si];
                                if (g_in) (*g_in)[i][si] += g * K[(dr + 1) * 3 + (dc + 1)];
                            }
                        }
                    }
            }
        }
    }

    static void tanh_backward(Planes& g, const Planes& activated) {
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < g[i].size(); ++j)
                g[i][j] *= 1.0 - activated[i][j] * activated[i][j];
    }

    void forward_internal(const DenoiserInput& in, Planes& a1, Planes& a2, Planes& a3,
                          std::vector<real>& f) const {
        const int w = in.width, h = in.height;
        if (in.image.size() != std::size_t(w) * h)
            throw shape_error("SmallResidualCnn: image size does not match dimensions");
        Planes u0(1, in.image);
        for (auto& v : u0[0]) v /= kScale;
        conv_forward(u0, layer_view(0), w, h, a1);
        for (auto& p : a1)
            for (auto& v : p) v = std::tanh(v);
        conv_forward(a1, layer_view(1), w, h, a2);
        for (auto& p : a2)
            for (auto& v : p) v = std::tanh(v);
        conv_forward(a2, layer_view(2), w, h, a3);
        for (auto& p : a3)
            for (auto& v : p) v = std::tanh(v);
        Planes out4;
        conv_forward(a3, layer_view(3), w, h, out4);
        f = std::move(out4[0]);
    }

    real sigma_hi_;
    std::vector<real> w_;
};

// ---------------------------------------------------------------------------
// Objectives and gradients

enum class Objective { MSE, MCSURE };

inline std::vector<real> grad_mse(const TrainableDenoiser& d,
                                  const std::vector<NoisyCleanPair>& pairs) {
    if (pairs.empty()) throw parameter_error("grad_mse: empty batch");
    std::vector<real> grad(d.weights().size(), 0.0);
    const real invk = 1.0 / real(pairs.size());
    for (const auto& p : pairs) {
        if (p.noisy.size() != p.clean.size()) throw shape_error("grad_mse: length mismatch");
        auto out = d.apply(p.noisy);
        std::vector<real> upstream(out.size());
        for (std::size_t i = 0; i < out.size(); ++i)
            upstream[i] = 2.0 * (out[i] - p.clean[i]) * invk;
        d.accumulate_param_grad(p.noisy, upstream, grad);
    }
    return grad;
}

/// Gradient of the deterministic (fixed-probe) MC-SURE total, including the
/// divergence term's dependence on the weights.
inline std::vector<real> grad_sure(const TrainableDenoiser& d,
                                   const std::vector<DenoiserInput>& batch,
                                   const std::vector<DivergenceProbe>& probes,
                                   const SureOptions& opts = {}) {
    if (batch.empty()) throw parameter_error("grad_sure: empty batch");
    if (probes.size() != batch.size()) throw shape_error("grad_sure: need one probe per input");
    std::vector<real> grad(d.weights().size(), 0.0);
    const real invk = 1.0 / real(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& in = batch[j];
        if (!(in.sigma > 0)) throw parameter_error("grad_sure: sigma must be positive");
        real eps = probes[j].epsilon > 0 ? probes[j].epsilon : opts.epsilon_factor * in.sigma;
        const auto n_tilde = probe_vector(probes[j], in.size());
        auto out = d.apply(in);
        const real coef = 2.0 * in.sigma * in.sigma / eps;
        // at z: -2(z - D(z)) - coef * n
        std::vector<real> u_z(in.size());
        for (std::size_t i = 0; i < in.size(); ++i)
            u_z[i] = (-2.0 * (in.image[i] - out[i]) - coef * n_tilde[i]) * invk;
        d.accumulate_param_grad(in, u_z, grad);
        // at z + eps n: +coef * n
        DenoiserInput shifted = in;
        for (std::size_t i = 0; i < in.size(); ++i) shifted.image[i] += eps * n_tilde[i];
        std::vector<real> u_s(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) u_s[i] = coef * n_tilde[i] * invk;
        d.accumulate_param_grad(shifted, u_s, grad);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Training

enum class SampleSource : std::uint8_t { Harvested = 0, OutlierSubstitute = 1 };

/// Pseudo-clean image harvested from an AMP run, with its estimated noise std.
struct TrainingSample {
    int width = 0;
    int height = 0;
    std::vector<real> s;
    real sigma = 0.0;
    SampleSource source = SampleSource::Harvested;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 8;
    real lr_initial = 1e-3;
    real lr_drop_factor = 0.1;
    int lr_drop_epoch = 40;
    int patch_size = 50;
    real sigma_max = 55.0;  // MRI profile: 10
    int outer_rounds = 2;   // MRI profile: 1
    int patches_per_sample = 4;
    std::uint64_t seed = 0;
    SureOptions sure;
};

struct TrainReport {
    std::vector<real> epoch_loss;
};

namespace detail {

struct Patch {
    DenoiserInput noisy;
    std::vector<real> clean;  // empty for SURE samples
    std::uint64_t probe_seed = 0;
};

// patch_size-or-smaller crop with a random flip/rotation; sigma carried
// unchanged (no rescaling path).
inline void extract_patch(const std::vector<real>& src, int w, int h, int pr, int pc, int p,
                          int transform, std::vector<real>& dst) {
    dst.resize(std::size_t(p) * p);
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) {
            int tr = r, tc = c;
            if (transform & 4) tc = p - 1 - tc;  // horizontal flip
            switch (transform & 3) {             // quarter turns
                case 1: {
                    int t = tr;
                    tr = tc;
                    tc = p - 1 - t;
                    break;
                }
                case 2:
                    tr = p - 1 - tr;
                    tc = p - 1 - tc;
                    break;
                case 3: {
                    int t = tr;
                    tr = p - 1 - tc;
                    tc = t;
                    break;
                }
                default:
                    break;
            }
            dst[std::size_t(r) * p + c] = src[std::size_t(pr + tr) * w + (pc + tc)];
        }
}

template <typename MakePatch>
TrainablePtr run_training(const TrainableDenoiser& d, std::size_t n_samples, MakePatch&& make_patch,
                          const TrainConfig& cfg, Objective objective, TrainReport* report) {
    auto model = d.clone();
    if (cfg.epochs == 0) return model;
    Rng rng(cfg.seed);
    const std::size_t nw = model->weights().size();
    std::vector<real> m_adam(nw, 0.0), v_adam(nw, 0.0);
    std::size_t step = 0;
    const real beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const real lr =
            cfg.lr_initial * (epoch >= cfg.lr_drop_epoch ? cfg.lr_drop_factor : 1.0);
        // epoch patch list; probes resampled per epoch, fixed within it
        std::vector<Patch> patches;
        for (std::size_t s = 0; s < n_samples; ++s)
            for (int k = 0; k < cfg.patches_per_sample; ++k) patches.push_back(make_patch(s, rng));
        for (std::size_t i = patches.size(); i > 1; --i)
            std::swap(patches[i - 1], patches[rng.index(i)]);

        real epoch_loss = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < patches.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(patches.size(), start + std::size_t(cfg.batch_size));
            std::vector<real> grad;
            real loss;
            if (objective == Objective::MSE) {
                std::vector<NoisyCleanPair> pairs;
                for (std::size_t i = start; i < stop; ++i)
                    pairs.push_back({patches[i].noisy, patches[i].clean});
                grad = grad_mse(*model, pairs);
                loss = mse_loss(*model, pairs);
            } else {
                std::vector<DenoiserInput> batch;
                std::vector<DivergenceProbe> probes;
                for (std::size_t i = start; i < stop; ++i) {
                    batch.push_back(patches[i].noisy);
                    probes.push_back({0.0, patches[i].probe_seed});
                }
                grad = grad_sure(*model, batch, probes, cfg.sure);
                loss = sure_loss(*model, batch, probes, cfg.sure).total;
            }
            if (!std::isfinite(loss) || !all_finite(grad))
                throw training_error("train: loss or gradient not finite", epoch);
            ++step;
            auto w = model->weights();
            const real bc1 = 1.0 - std::pow(beta1, real(step));
            const real bc2 = 1.0 - std::pow(beta2, real(step));
            for (std::size_t i = 0; i < nw; ++i) {
                m_adam[i] = beta1 * m_adam[i] + (1 - beta1) * grad[i];
                v_adam[i] = beta2 * v_adam[i] + (1 - beta2) * grad[i] * grad[i];
                w[i] -= lr * (m_adam[i] / bc1) / (std::sqrt(v_adam[i] / bc2) + adam_eps);
            }
            model->set_weights(std::move(w));
            epoch_loss += loss;
            ++batches;
        }
        if (report) report->epoch_loss.push_back(batches ? epoch_loss / real(batches) : 0.0);
    }
    return model;
}

}  // namespace detail

/// MSE training on (noisy, clean) pairs.
inline TrainablePtr train(const TrainableDenoiser& d, const std::vector<NoisyCleanPair>& pairs,
                          const TrainConfig& cfg, TrainReport* report = nullptr) {
    if (pairs.empty()) throw parameter_error("train: empty sample set");
    auto make_patch = [&](std::size_t s, Rng& rng) {
        const auto& pr = pairs[s];
        detail::Patch patch;
        const int w = pr.noisy.width, h = pr.noisy.height;
        const int p = std::min({cfg.patch_size, w, h});
        const int r0 = int(rng.index(h - p + 1)), c0 = int(rng.index(w - p + 1));
        const int tf = int(rng.index(8));
        patch.noisy.width = p;
        patch.noisy.height = p;
        patch.noisy.sigma = pr.noisy.sigma;
        detail::extract_patch(pr.noisy.image, w, h, r0, c0, p, tf, patch.noisy.image);
        detail::extract_patch(pr.clean, w, h, r0, c0, p, tf, patch.clean);
        return patch;
    };
    return detail::run_training(d, pairs.size(), make_patch, cfg, Objective::MSE, report);
}

/// MC-SURE training on harvested samples (noisy image + estimated sigma).
inline TrainablePtr train(const TrainableDenoiser& d, const std::vector<TrainingSample>& samples,
                          const TrainConfig& cfg, TrainReport* report = nullptr) {
    if (samples.empty()) throw parameter_error("train: empty sample set");
    auto make_patch = [&](std::size_t s, Rng& rng) {
        const auto& ts = samples[s];
        detail::Patch patch;
        const int p = std::min({cfg.patch_size, ts.width, ts.height});
        const int r0 = int(rng.index(ts.height - p + 1)), c0 = int(rng.index(ts.width - p + 1));
        const int tf = int(rng.index(8));
        patch.noisy.width = p;
        patch.noisy.height = p;
        patch.noisy.sigma = ts.sigma;
        detail::extract_patch(ts.s, ts.width, ts.height, r0, c0, p, tf, patch.noisy.image);
        patch.probe_seed = rng.next_u64();
        return patch;
    };
    return detail::run_training(d, samples.size(), make_patch, cfg, Objective::MCSURE, report);
}

// ---------------------------------------------------------------------------
// Harvesting and the joint recover-and-train loop

struct HarvestReport {
    std::vector<TrainingSample> samples;
    std::vector<Image> recovered;  // aligned with inputs; empty Image where AMP diverged
    int diverged = 0;
    int below_floor = 0;
};

/// Runs D-AMP per measurement and emits (pseudo-clean, image-domain sigma
/// estimate) samples. Diverging instances are skipped, not fatal.
inline HarvestReport harvest(const MeasurementOp& op, const std::vector<Measurement>& ys,
                             const DenoiserBank& bank, const DAmpConfig& cfg,
                             real sigma_floor = 1e-3, int threads = 1) {
    int w, h;
    detail::resolve_dims(op, cfg, w, h);
    const std::size_t k = ys.size();
    std::vector<std::optional<TrainingSample>> slots(k);
    std::vector<Image> recovered(k);
    std::vector<int> status(k, 0);  // 0 ok, 1 diverged, 2 below floor

    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                auto res = damp_run(op, ys[i], bank, cfg);
                recovered[i] = res.image;
                const real sigma = estimate_sigma_image(op, res.state.z);
                if (sigma < sigma_floor) {
                    status[i] = 2;
                    continue;
                }
                TrainingSample ts;
                ts.width = w;
                ts.height = h;
                ts.s = res.state.pseudo_clean;
                ts.sigma = sigma;
                ts.source = SampleSource::Harvested;
                slots[i] = std::move(ts);
            } catch (const divergence_error&) {
                status[i] = 1;
            }
        }
    };
    if (threads <= 1 || k < 2) {
        work(0, k);
    } else {
        const int nt = std::min<std::size_t>(threads, k);
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) {
            const std::size_t lo = k * t / nt, hi = k * (t + 1) / nt;
            pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    HarvestReport rep;
    rep.recovered = std::move(recovered);
    for (std::size_t i = 0; i < k; ++i) {
        if (status[i] == 1) ++rep.diverged;
        if (status[i] == 2) ++rep.below_floor;
        if (slots[i]) rep.samples.push_back(std::move(*slots[i]));
    }
    return rep;
}

/// Keeps samples with sigma <= sigma_max; replaces outliers with a substitute
/// image plus synthetic Gaussian noise at sigma drawn uniformly in
/// (0, sigma_max].
inline std::vector<TrainingSample> curate(const std::vector<TrainingSample>& samples,
                                          real sigma_max, const std::vector<Image>& substitutes,
                                          std::uint64_t seed = 0) {
    bool any_outlier = false;
    for (const auto& s : samples)
        if (s.sigma > sigma_max) any_outlier = true;
    if (any_outlier && substitutes.empty())
        throw curation_error("curate: outliers present but no substitutes supplied");
    Rng rng(seed);
    std::vector<TrainingSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.sigma <= sigma_max) {
            out.push_back(s);
            continue;
        }
        const Image& sub = substitutes[rng.index(substitutes.size())];
        TrainingSample ts;
        ts.width = sub.width;
        ts.height = sub.height;
        ts.sigma = rng.uniform(0.0, sigma_max);  // uniform over (0, sigma_max]
        if (ts.sigma == 0.0) ts.sigma = sigma_max;
        ts.s.resize(sub.size());
        for (std::size_t i = 0; i < sub.size(); ++i)
            ts.s[i] = sub.pixels[i] + ts.sigma * rng.normal();
        ts.source = SampleSource::OutlierSubstitute;
        out.push_back(std::move(ts));
    }
    return out;
}

struct JointRoundStats {
    real mean_sigma_hat = 0.0;
    std::optional<real> mean_psnr;
    int harvested = 0;
    int substituted = 0;
    int diverged = 0;
};

struct JointResult {
    std::vector<Image> recovered;
    TrainablePtr trained;
    std::vector<JointRoundStats> rounds;
};

/// L outer rounds of { harvest -> curate -> train(MCSURE) } with warm-started
/// weights; the final round's recoveries are returned.
inline JointResult joint_loop(const std::vector<Measurement>& ys, const MeasurementOp& op,
                              const TrainableDenoiser& init, const TrainConfig& tcfg,
                              const DAmpConfig& dcfg, DenoiserPtr fallback,
                              const std::vector<Image>* ground_truth = nullptr, int threads = 1) {
    if (ys.empty()) throw parameter_error("joint_loop: no measurements");
    JointResult result;
    result.trained = init.clone();
    std::vector<Image> substitutes;  // fallback-only recoveries, built on demand
    for (int round = 0; round < tcfg.outer_rounds; ++round) {
        DenoiserBank bank{result.trained, fallback};
        auto hr = harvest(op, ys, bank, dcfg, 1e-3, threads);
        if (hr.samples.empty())
            throw curation_error("joint_loop: round produced no usable samples");
        bool any_outlier = false;
        for (const auto& s : hr.samples)
            if (s.sigma > tcfg.sigma_max) any_outlier = true;
        if (any_outlier && substitutes.empty()) {
            DenoiserBank fb{nullptr, fallback};
            auto fr = harvest(op, ys, fb, dcfg, 0.0, threads);
            for (auto& img : fr.recovered)
                if (img.size() > 0) substitutes.push_back(std::move(img));
        }
        auto curated = curate(hr.samples, tcfg.sigma_max, substitutes,
                              detail::mix_seed(tcfg.seed, std::uint64_t(round) + 101));
        TrainConfig round_cfg = tcfg;
        round_cfg.seed = detail::mix_seed(tcfg.seed, std::uint64_t(round) + 1);
        result.trained = train(*result.trained, curated, round_cfg);

        JointRoundStats stats;
        for (const auto& s : hr.samples) stats.mean_sigma_hat += s.sigma;
        stats.mean_sigma_hat /= real(hr.samples.size());
        stats.harvested = int(hr.samples.size());
        for (const auto& s : curated)
            if (s.source == SampleSource::OutlierSubstitute) ++stats.substituted;
        stats.diverged = hr.diverged;
        if (ground_truth) {
            real acc = 0;
            int cnt = 0;
            for (std::size_t i = 0; i < ys.size(); ++i)
                if (hr.recovered[i].size() > 0) {
                    acc += psnr(hr.recovered[i], (*ground_truth)[i]);
                    ++cnt;
                }
            if (cnt > 0) stats.mean_psnr = acc / real(cnt);
        }
        result.rounds.push_back(stats);
        result.recovered = std::move(hr.recovered);
    }
    return result;
}

// ---------------------------------------------------------------------------
// .ampw weight file: magic "AMPW", version byte, arch byte, f64 sigma range,
// u32 weight count, weights as little-endian f64.

inline void save_weights(const TrainableDenoiser& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("save_weights: cannot open " + path);
    os.write("AMPW", 4);
    detail::write_pod<std::uint8_t>(os, 1);
    detail::write_pod<std::uint8_t>(os, std::uint8_t(d.arch()));
    detail::write_pod<double>(os, d.sigma_lo());
    detail::write_pod<double>(os, d.sigma_hi());
    const auto& w = d.weights();
    detail::write_pod<std::uint32_t>(os, std::uint32_t(w.size()));
    detail::write_bytes(os, w.data(), w.size() * sizeof(real));
    if (!os) throw format_error("save_weights: write failure on " + path);
}

inline TrainablePtr load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("load_weights: cannot open " + path);
    char magic[4];
    detail::read_bytes(is, magic, 4);
    if (std::memcmp(magic, "AMPW", 4) != 0) throw format_error("load_weights: bad magic bytes");
    if (detail::read_pod<std::uint8_t>(is) != 1)
        throw format_error("load_weights: unsupported version");
    const Arch arch = Arch(detail::read_pod<std::uint8_t>(is));
    detail::read_pod<double>(is);  // sigma_lo, currently always 0
    const double sigma_hi = detail::read_pod<double>(is);
    const auto count = detail::read_pod<std::uint32_t>(is);
    std::vector<real> w(count);
    detail::read_bytes(is, w.data(), w.size() * sizeof(real));
    TrainablePtr d;
    switch (arch) {
        case Arch::LearnedShrinkage:
            d = std::make_shared<LearnedShrinkageDenoiser>(sigma_hi);
            break;
        case Arch::SmallResidualCNN:
            d = std::make_shared<SmallResidualCnn>(sigma_hi);
            break;
        default:
            throw format_error("load_weights: unknown architecture tag");
    }
    d->set_weights(std::move(w));
    return d;
}

}  // namespace ampsure

#endif
