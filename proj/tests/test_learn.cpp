#include <doctest.h>

#include "ampsure/learn.hpp"

using namespace ampsure;

namespace {

DenoiserInput noisy_input(const Image& x, real sigma, std::uint64_t seed) {
    DenoiserInput in;
    in.width = x.width;
    in.height = x.height;
    in.sigma = sigma;
    in.image.resize(x.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < x.size(); ++i) in.image[i] = x.pixels[i] + sigma * rng.normal();
    return in;
}

// loss evaluators shared by the finite-difference oracle
real eval_mse(const TrainableDenoiser& d, const std::vector<NoisyCleanPair>& pairs) {
    return mse_loss(d, pairs);
}

real eval_sure(const TrainableDenoiser& d, const std::vector<DenoiserInput>& batch,
               const std::vector<DivergenceProbe>& probes) {
    return sure_loss(d, batch, probes).total;
}

template <typename LossFn>
void check_grad_against_fd(const TrainableDenoiser& d, const std::vector<real>& grad,
                           LossFn&& loss_at, const std::vector<std::size_t>& coords,
                           real step = 1e-4, real tol = 1e-4) {
    for (std::size_t i : coords) {
        auto model = d.clone();
        auto w = d.weights();
        w[i] += step;
        model->set_weights(w);
        const real fp = loss_at(*model);
        w[i] -= 2 * step;
        model->set_weights(w);
        const real fm = loss_at(*model);
        const real fd = (fp - fm) / (2 * step);
        const real scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        CHECK(std::abs(grad[i] - fd) / scale <= tol);
    }
}

// coordinates with the largest gradient magnitude; tiny-gradient coordinates
// are dominated by cancellation noise in the difference quotient
std::vector<std::size_t> top_coords(const std::vector<real>& grad, std::size_t count) {
    std::vector<std::size_t> idx(grad.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
    idx.resize(std::min(count, idx.size()));
    return idx;
}

}  // namespace

TEST_CASE("both architectures are the identity at zero weights") {
    auto in = noisy_input(synthetic_image(12, 12, 1), 20.0, 2);
    LearnedShrinkageDenoiser shrink;
    auto o1 = shrink.apply(in);
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(o1[i] == doctest::Approx(in.image[i]).epsilon(1e-10));
    SmallResidualCnn cnn;
    auto o2 = cnn.apply(in);
    CHECK(o2 == in.image);
}

TEST_CASE("cnn weight count and layer layout") {
    CHECK(SmallResidualCnn::weight_count() ==
          std::size_t(1 * 16 * 9 + 16) + 2 * (16 * 16 * 9 + 16) + (16 * 9 + 1));
    SmallResidualCnn d;
    CHECK(d.weights().size() == SmallResidualCnn::weight_count());
}

TEST_CASE("random cnn init stays close to the identity") {
    auto d = SmallResidualCnn::random_init(3);
    auto in = noisy_input(synthetic_image(16, 16, 4), 15.0, 5);
    auto out = d.apply(in);
    real maxdiff = 0;
    for (std::size_t i = 0; i < in.size(); ++i)
        maxdiff = std::max(maxdiff, std::abs(out[i] - in.image[i]));
    CHECK(maxdiff > 0.0);
    CHECK(maxdiff < 30.0);
}

TEST_CASE("shrinkage denoiser matches a per-band hand computation") {
    const int w = 8, h = 8;
    const real sigma = 10.0;
    std::vector<real> p(16);
    for (int b = 0; b < 16; ++b) p[b] = 0.2 + 0.1 * b;
    LearnedShrinkageDenoiser d(p, 55.0);
    auto in = noisy_input(synthetic_image(w, h, 6), sigma, 7);

    auto coef = in.image;
    ortho_dct2(coef, w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int g = LearnedShrinkageDenoiser::band_of(r, c, w, h);
            coef[std::size_t(r) * w + c] =
                soft_threshold(coef[std::size_t(r) * w + c], p[g] * p[g] * sigma);
        }
    ortho_idct2(coef, w, h);
    auto out = d.apply(in);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(coef[i]).epsilon(1e-10));
}

TEST_CASE("band index covers all bands and respects symmetry in frequency radius") {
    CHECK(LearnedShrinkageDenoiser::band_of(0, 0, 64, 64) == 0);
    CHECK(LearnedShrinkageDenoiser::band_of(63, 63, 64, 64) == 15);
    CHECK(LearnedShrinkageDenoiser::band_of(10, 3, 64, 64) ==
          LearnedShrinkageDenoiser::band_of(3, 10, 64, 64));
}

TEST_CASE("shrinkage gradients match central finite differences") {
    const real sigma = 20.0;
    std::vector<real> p(16);
    Rng rng(11);
    for (auto& v : p) v = rng.uniform(0.5, 1.5);
    LearnedShrinkageDenoiser d(p, 55.0);
    auto x = synthetic_image(8, 8, 8);
    auto in = noisy_input(x, sigma, 9);

    SUBCASE("mse objective") {
        std::vector<NoisyCleanPair> pairs{{in, x.pixels}};
        auto grad = grad_mse(d, pairs);
        check_grad_against_fd(d, grad, [&](const TrainableDenoiser& m) { return eval_mse(m, pairs); },
                              top_coords(grad, 16));
    }
    SUBCASE("mc-sure objective") {
        std::vector<DenoiserInput> batch{in};
        std::vector<DivergenceProbe> probes{{0.5, 77}};
        auto grad = grad_sure(d, batch, probes);
        check_grad_against_fd(
            d, grad, [&](const TrainableDenoiser& m) { return eval_sure(m, batch, probes); },
            top_coords(grad, 16));
    }
}

TEST_CASE("cnn gradients match central finite differences") {
    auto d = SmallResidualCnn::random_init(13);
    auto x = synthetic_image(8, 8, 14);
    auto in = noisy_input(x, 20.0, 15);

    SUBCASE("mse objective") {
        std::vector<NoisyCleanPair> pairs{{in, x.pixels}};
        auto grad = grad_mse(d, pairs);
        check_grad_against_fd(d, grad, [&](const TrainableDenoiser& m) { return eval_mse(m, pairs); },
                              top_coords(grad, 24));
    }
    SUBCASE("mc-sure objective") {
        std::vector<DenoiserInput> batch{in};
        std::vector<DivergenceProbe> probes{{0.5, 78}};
        auto grad = grad_sure(d, batch, probes);
        check_grad_against_fd(
            d, grad, [&](const TrainableDenoiser& m) { return eval_sure(m, batch, probes); },
            top_coords(grad, 24));
    }
}

TEST_CASE("gradient batching averages over the batch") {
    std::vector<real> p(16, 1.0);
    LearnedShrinkageDenoiser d(p, 55.0);
    auto x = synthetic_image(8, 8, 20);
    auto in = noisy_input(x, 15.0, 21);
    std::vector<NoisyCleanPair> one{{in, x.pixels}};
    std::vector<NoisyCleanPair> two{{in, x.pixels}, {in, x.pixels}};
    auto g1 = grad_mse(d, one);
    auto g2 = grad_mse(d, two);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(g1[i]));
}

TEST_CASE("patch extraction preserves the pixel multiset and sigma") {
    std::vector<real> src(25);
    std::iota(src.begin(), src.end(), 0.0);
    for (int tf = 0; tf < 8; ++tf) {
        std::vector<real> dst;
        detail::extract_patch(src, 5, 5, 1, 1, 3, tf, dst);
        REQUIRE(dst.size() == 9);
        std::vector<real> sorted_dst = dst;
        std::sort(sorted_dst.begin(), sorted_dst.end());
        std::vector<real> expect = {6, 7, 8, 11, 12, 13, 16, 17, 18};
        CHECK(sorted_dst == expect);
    }
    // identity transform copies the window verbatim
    std::vector<real> dst;
    detail::extract_patch(src, 5, 5, 1, 1, 3, 0, dst);
    CHECK(dst == std::vector<real>{6, 7, 8, 11, 12, 13, 16, 17, 18});
}

TEST_CASE("zero epochs returns an unchanged copy") {
    std::vector<real> p(16, 0.7);
    LearnedShrinkageDenoiser d(p, 55.0);
    TrainingSample ts;
    ts.width = 8;
    ts.height = 8;
    ts.sigma = 10.0;
    ts.s.assign(64, 100.0);
    TrainConfig cfg;
    cfg.epochs = 0;
    auto out = train(d, std::vector<TrainingSample>{ts}, cfg);
    CHECK(out->weights() == d.weights());
}

TEST_CASE("mc-sure training reduces the loss and denoises better than the start") {
    std::vector<TrainingSample> samples;
    for (int i = 0; i < 4; ++i) {
        auto x = synthetic_image(32, 32, 30 + i);
        auto in = noisy_input(x, 25.0, 40 + i);
        TrainingSample ts;
        ts.width = 32;
        ts.height = 32;
        ts.s = in.image;
        ts.sigma = 25.0;
        samples.push_back(std::move(ts));
    }
    std::vector<real> p(16, 0.1);
    LearnedShrinkageDenoiser d(p, 55.0);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.lr_initial = 0.02;
    cfg.lr_drop_epoch = 25;
    cfg.patch_size = 24;
    cfg.patches_per_sample = 2;
    cfg.seed = 5;
    TrainReport report;
    auto trained = train(d, samples, cfg, &report);
    REQUIRE(report.epoch_loss.size() == 30);
    CHECK(report.epoch_loss.back() < report.epoch_loss.front());

    auto x = synthetic_image(32, 32, 50);
    auto in = noisy_input(x, 25.0, 51);
    Image before(32, 32, d.apply(in));
    Image after(32, 32, trained->apply(in));
    Image truth = x;
    CHECK(psnr(after, truth) > psnr(before, truth));
}

TEST_CASE("training is deterministic under a fixed seed") {
    std::vector<TrainingSample> samples;
    auto x = synthetic_image(16, 16, 60);
    auto in = noisy_input(x, 20.0, 61);
    TrainingSample ts{16, 16, in.image, 20.0, SampleSource::Harvested};
    samples.push_back(ts);
    std::vector<real> p(16, 0.3);
    LearnedShrinkageDenoiser d(p, 55.0);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.patch_size = 12;
    cfg.seed = 99;
    auto a = train(d, samples, cfg);
    auto b = train(d, samples, cfg);
    CHECK(a->weights() == b->weights());
}

TEST_CASE("harvest emits one sample per converging measurement") {
    const int n = 256, m = 128;
    auto op = make_gaussian_op(m, n, 70);
    std::vector<Measurement> ys;
    for (int i = 0; i < 3; ++i) {
        auto x = synthetic_image(16, 16, 71 + i);
        ys.push_back(measure_with_noise(op, x, NoiseSpec{5.0, 80 + std::uint64_t(i)}));
    }
    DenoiserBank bank{nullptr, std::make_shared<HardThresholdBlockDctDenoiser>()};
    DAmpConfig cfg;
    cfg.width = 16;
    cfg.height = 16;
    cfg.iterations = 3;
    auto rep = harvest(op, ys, bank, cfg);
    CHECK(rep.samples.size() == 3);
    CHECK(rep.diverged == 0);
    CHECK(rep.recovered.size() == 3);
    for (const auto& s : rep.samples) {
        CHECK(s.sigma > 0.0);
        CHECK(s.s.size() == 256);
        CHECK(s.source == SampleSource::Harvested);
    }
    // threaded harvest agrees with the serial one
    auto rep2 = harvest(op, ys, bank, cfg, 1e-3, 3);
    REQUIRE(rep2.samples.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(rep2.samples[i].sigma == rep.samples[i].sigma);
        CHECK(rep2.samples[i].s == rep.samples[i].s);
    }
}

TEST_CASE("curate keeps inliers and substitutes outliers") {
    TrainingSample inlier{8, 8, std::vector<real>(64, 1.0), 10.0, SampleSource::Harvested};
    TrainingSample outlier{8, 8, std::vector<real>(64, 2.0), 99.0, SampleSource::Harvested};

    auto kept = curate({inlier}, 55.0, {}, 1);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].sigma == 10.0);

    CHECK_THROWS_AS(curate({outlier}, 55.0, {}, 1), curation_error);

    Image sub(8, 8, std::vector<real>(64, 50.0));
    auto fixed = curate({inlier, outlier}, 55.0, {sub}, 2);
    REQUIRE(fixed.size() == 2);
    CHECK(fixed[0].source == SampleSource::Harvested);
    CHECK(fixed[1].source == SampleSource::OutlierSubstitute);
    CHECK(fixed[1].sigma > 0.0);
    CHECK(fixed[1].sigma <= 55.0);
    // the substitute is the base image plus noise at the drawn sigma
    real acc = 0;
    for (std::size_t i = 0; i < 64; ++i) {
        real r = fixed[1].s[i] - 50.0;
        acc += r * r;
    }
    CHECK(std::sqrt(acc / 64.0) == doctest::Approx(fixed[1].sigma).epsilon(0.5));
}

TEST_CASE("joint loop smoke test improves nothing catastrophically and reports rounds") {
    const int n = 256, m = 96;
    auto op = make_gaussian_op(m, n, 90);
    std::vector<Image> truth;
    std::vector<Measurement> ys;
    for (int i = 0; i < 2; ++i) {
        truth.push_back(synthetic_image(16, 16, 91 + i));
        ys.push_back(measure_with_noise(op, truth.back(), NoiseSpec{2.0, 95 + std::uint64_t(i)}));
    }
    LearnedShrinkageDenoiser init(std::vector<real>(16, 0.3), 1e6);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 4;
    tcfg.patch_size = 12;
    tcfg.patches_per_sample = 2;
    tcfg.outer_rounds = 1;
    tcfg.sigma_max = 1e6;
    tcfg.seed = 7;
    DAmpConfig dcfg;
    dcfg.width = 16;
    dcfg.height = 16;
    dcfg.iterations = 3;
    dcfg.sigma_switch = 1e6;
    auto res = joint_loop(ys, op, init, tcfg, dcfg,
                          std::make_shared<HardThresholdBlockDctDenoiser>(), &truth);
    REQUIRE(res.rounds.size() == 1);
    CHECK(res.recovered.size() == 2);
    CHECK(res.trained != nullptr);
    CHECK(res.rounds[0].harvested == 2);
    REQUIRE(res.rounds[0].mean_psnr.has_value());
    CHECK(*res.rounds[0].mean_psnr > 0.0);
    CHECK(res.rounds[0].mean_sigma_hat > 0.0);
}

TEST_CASE("weight files round-trip bit-identically") {
    auto d = SmallResidualCnn::random_init(101, 42.0);
    const std::string path = "/tmp/ampsure_test_weights.ampw";
    save_weights(d, path);
    auto back = load_weights(path);
    CHECK(back->arch() == Arch::SmallResidualCNN);
    CHECK(back->sigma_hi() == 42.0);
    CHECK(back->weights() == d.weights());

    std::vector<real> p(16, 0.4);
    LearnedShrinkageDenoiser s(p, 55.0);
    save_weights(s, path);
    auto back2 = load_weights(path);
    CHECK(back2->arch() == Arch::LearnedShrinkage);
    CHECK(back2->weights() == s.weights());
}

TEST_CASE("weight loader rejects corrupt files") {
    const std::string path = "/tmp/ampsure_bad_weights.ampw";
    {
        std::ofstream os(path, std::ios::binary);
        os.write("NOPE", 4);
    }
    CHECK_THROWS_AS(load_weights(path), format_error);
    CHECK_THROWS_AS(load_weights("/tmp/ampsure_nonexistent.ampw"), format_error);
}

TEST_CASE("weight setters validate sizes") {
    LearnedShrinkageDenoiser s;
    CHECK_THROWS_AS(s.set_weights(std::vector<real>(5, 0.0)), shape_error);
    SmallResidualCnn c;
    CHECK_THROWS_AS(c.set_weights(std::vector<real>(5, 0.0)), shape_error);
    CHECK_THROWS_AS(LearnedShrinkageDenoiser(std::vector<real>(3, 0.0), 55.0), shape_error);
}
