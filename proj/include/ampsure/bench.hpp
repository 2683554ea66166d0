#ifndef AMPSURE_BENCH_HPP
#define AMPSURE_BENCH_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ampsure/damp.hpp"
#include "ampsure/io_image.hpp"
#include "ampsure/learn.hpp"
#include "ampsure/metrics.hpp"

namespace ampsure {

struct MetricsRow {
    std::string image_id;
    std::string method;
    real rate = 1.0;
    real psnr_db = 0.0;
    real runtime_s = 0.0;
    real sigma_hat_final = 0.0;
    real sigma_true_final = -1.0;  // negative when unavailable
};

inline std::string format_real(real v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const MetricsRow& a, const MetricsRow& b) {
        return std::tie(a.image_id, a.method) < std::tie(b.image_id, b.method);
    });
    std::ofstream os(path);
    if (!os) throw format_error("write_metrics_csv: cannot open " + path);
    os << "image_id,method,rate,psnr_db,runtime_s,sigma_hat_final,sigma_true_final\n";
    for (const auto& r : sorted) {
        os << r.image_id << ',' << r.method << ',' << format_real(r.rate, 4) << ','
           << format_real(r.psnr_db, 4) << ',' << format_real(r.runtime_s, 4) << ','
           << format_real(r.sigma_hat_final, 6) << ','
           << (r.sigma_true_final < 0 ? std::string("n/a") : format_real(r.sigma_true_final, 6))
           << '\n';
    }
    if (!os) throw format_error("write_metrics_csv: write failure on " + path);
}

inline int env_thread_count() {
    if (const char* s = std::getenv("AMPSURE_THREADS")) {
        int v = std::atoi(s);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

struct ExperimentConfig {
    OpKind op_kind = OpKind::GaussianDense;
    real rate = 0.25;
    std::uint64_t seed = 0;
    int image_size = 64;
    real noise_sigma = 0.0;
    DAmpConfig damp;
    std::string dataset_dir;
    std::string out_dir;
    std::string weights_path;  // optional trained blind denoiser
    bool emit_histograms = false;
    bool record_sigma_true = true;
    bool compare_estimators_mode = false;
    int threads = 1;
};

namespace detail {

inline std::vector<std::filesystem::path> list_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw parameter_error("dataset directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw parameter_error("dataset directory has no .pgm/.png images: " + dir);
    return files;
}

inline MeasurementOp build_operator(const ExperimentConfig& cfg) {
    const int n = cfg.image_size * cfg.image_size;
    switch (cfg.op_kind) {
        case OpKind::GaussianDense: {
            int m = std::max(1, int(cfg.rate * n));
            return make_gaussian_op(m, n, cfg.seed);
        }
        case OpKind::CodedDiffraction:
            return make_cdp_op(cfg.image_size, cfg.image_size, cfg.rate, cfg.seed);
        case OpKind::RadialFourierMRI:
            return make_mri_op(cfg.image_size, cfg.image_size, cfg.rate, cfg.seed);
    }
    throw parameter_error("unknown operator kind");
}

inline void write_histogram_tsv(const ResidualHistogram& h, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw format_error("cannot open " + path);
    for (std::size_t b = 0; b < h.densities.size(); ++b) {
        const real center = 0.5 * (h.bin_edges[b] + h.bin_edges[b + 1]);
        os << format_real(center, 6) << '\t' << format_real(h.densities[b], 8) << '\n';
    }
}

}  // namespace detail

/// Simulates measurements from the dataset images, recovers with D-AMP, and
/// writes metrics CSV, recovered PGMs, and optional histogram TSVs under the
/// output directory. Deterministic under fixed seeds (runtime column aside).
inline int run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    auto files = detail::list_dataset(cfg.dataset_dir);
    fs::create_directories(cfg.out_dir);
    fs::create_directories(fs::path(cfg.out_dir) / "recovered");
    if (cfg.emit_histograms) fs::create_directories(fs::path(cfg.out_dir) / "histograms");

    MeasurementOp op = detail::build_operator(cfg);
    DAmpConfig damp_cfg = cfg.damp;
    damp_cfg.width = cfg.image_size;
    damp_cfg.height = cfg.image_size;

    DenoiserBank bank;
    bank.fallback = std::make_shared<HardThresholdBlockDctDenoiser>();
    std::string method = "damp-fallback";
    if (!cfg.weights_path.empty()) {
        auto trained = load_weights(cfg.weights_path);
        method = "ldamp-" + trained->name();
        bank.blind = trained;
    }

    std::vector<MetricsRow> rows(files.size() * (cfg.compare_estimators_mode ? 2 : 1));
    std::vector<Image> recovered(files.size());
    std::vector<std::string> ids(files.size());
    std::vector<std::optional<ResidualHistogram>> hists(files.size());

    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const std::string id = files[i].stem().string();
            ids[i] = id;
            Image gt = ingest_image(files[i].string(), cfg.image_size);
            NoiseSpec noise{cfg.noise_sigma, detail::mix_seed(cfg.seed, i + 7)};
            Measurement y = measure_with_noise(op, gt, noise);
            const auto t0 = std::chrono::steady_clock::now();
            auto res = damp_run(op, y, bank, damp_cfg, cfg.record_sigma_true ? &gt : nullptr);
            const auto t1 = std::chrono::steady_clock::now();
            const real secs = std::chrono::duration<real>(t1 - t0).count();
            recovered[i] = res.image;
            MetricsRow row;
            row.image_id = id;
            row.method = method;
            row.rate = cfg.rate;
            row.psnr_db = psnr(res.image, gt);
            row.runtime_s = secs;
            row.sigma_hat_final = res.state.sigma_hat;
            real sigma_true = -1.0;
            if (cfg.record_sigma_true && !res.trace.empty() && res.trace.back().sigma_true)
                sigma_true = *res.trace.back().sigma_true;
            row.sigma_true_final = sigma_true;
            if (cfg.compare_estimators_mode) {
                MetricsRow r6 = row, r7 = row;
                r6.method = method + "+meas";
                r6.sigma_hat_final = estimate_sigma_measurement(res.state.z);
                r7.method = method + "+img";
                r7.sigma_hat_final = estimate_sigma_image(op, res.state.z);
                rows[2 * i] = r6;
                rows[2 * i + 1] = r7;
            } else {
                rows[i] = row;
            }
            if (cfg.emit_histograms && sigma_true > 0) {
                Image pc(cfg.image_size, cfg.image_size, res.state.pseudo_clean);
                hists[i] = residual_histogram(pc, gt, sigma_true);
            }
        }
    };
    const int nt = std::max(1, std::min<int>(cfg.threads, int(files.size())));
    if (nt == 1) {
        work(0, files.size());
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(work, files.size() * t / nt, files.size() * (t + 1) / nt);
        for (auto& th : pool) th.join();
    }

    // single-writer output pass; CSV rows sorted by (image_id, method)
    write_metrics_csv(rows, (fs::path(cfg.out_dir) / "metrics.csv").string());
    for (std::size_t i = 0; i < files.size(); ++i) {
        write_pgm(recovered[i], (fs::path(cfg.out_dir) / "recovered" / (ids[i] + ".pgm")).string());
        if (hists[i])
            detail::write_histogram_tsv(
                *hists[i], (fs::path(cfg.out_dir) / "histograms" / (ids[i] + ".tsv")).string());
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct EstimatorComparisonRow {
    int instance = 0;
    real sigma_meas = 0.0;   // measurement-domain estimate
    real sigma_img = 0.0;   // image-domain estimate
    real sigma_true = 0.0;  // rms of pseudo-clean residual
    real ks_meas = 0.0;      // KS stat of residual normalized by each estimate
    real ks_img = 0.0;
    bool image_wins = false;  // image-domain closer to truth by absolute error
};

struct EstimatorComparison {
    std::vector<EstimatorComparisonRow> rows;
    real mean_abs_err_meas = 0.0;
    real mean_abs_err_img = 0.0;
    int img_ks_wins = 0;
};

struct EstimatorStudyConfig {
    OpKind kind = OpKind::CodedDiffraction;
    real rate = 0.15;
    int image_size = 64;
    int instances = 20;
    real noise_sigma = 0.0;
    std::uint64_t seed = 0;
    DAmpConfig damp;
    DenoiserPtr fallback;  // null: standard hard-threshold block DCT
};

/// Runs D-AMP on synthetic instances and compares both noise estimators
/// against the true residual std at the final iteration.
inline EstimatorComparison compare_estimators(const EstimatorStudyConfig& study) {
    EstimatorComparison cmp;
    DenoiserBank bank;
    bank.fallback =
        study.fallback ? study.fallback : std::make_shared<HardThresholdBlockDctDenoiser>();
    const int image_size = study.image_size;
    DAmpConfig damp_cfg = study.damp;
    damp_cfg.width = image_size;
    damp_cfg.height = image_size;
    const int n = image_size * image_size;
    for (int inst = 0; inst < study.instances; ++inst) {
        const std::uint64_t s = detail::mix_seed(study.seed, std::uint64_t(inst));
        MeasurementOp op;
        switch (study.kind) {
            case OpKind::GaussianDense:
                op = make_gaussian_op(std::max(1, int(study.rate * n)), n, s);
                break;
            case OpKind::CodedDiffraction:
                op = make_cdp_op(image_size, image_size, study.rate, s);
                break;
            case OpKind::RadialFourierMRI:
                op = make_mri_op(image_size, image_size, study.rate, s);
                break;
        }
        Image gt = synthetic_image(image_size, image_size, s + 1);
        Measurement y = measure_with_noise(op, gt, NoiseSpec{study.noise_sigma, s + 2});
        auto res = damp_run(op, y, bank, damp_cfg, &gt);
        EstimatorComparisonRow row;
        row.instance = inst;
        row.sigma_meas = estimate_sigma_measurement(res.state.z);
        row.sigma_img = estimate_sigma_image(op, res.state.z);
        row.sigma_true = res.trace.back().sigma_true.value();
        Image pc(image_size, image_size, res.state.pseudo_clean);
        row.ks_meas = residual_histogram(pc, gt, row.sigma_meas).ks_statistic;
        row.ks_img = residual_histogram(pc, gt, row.sigma_img).ks_statistic;
        row.image_wins = std::abs(row.sigma_img - row.sigma_true) <
                         std::abs(row.sigma_meas - row.sigma_true);
        cmp.mean_abs_err_meas += std::abs(row.sigma_meas - row.sigma_true);
        cmp.mean_abs_err_img += std::abs(row.sigma_img - row.sigma_true);
        if (row.ks_img < row.ks_meas) ++cmp.img_ks_wins;
        cmp.rows.push_back(row);
    }
    if (study.instances > 0) {
        cmp.mean_abs_err_meas /= real(study.instances);
        cmp.mean_abs_err_img /= real(study.instances);
    }
    return cmp;
}

// ---------------------------------------------------------------------------

/// Mean PSNR per (method, rate) cell; methods are rows, sampling rates are
/// columns, missing cells print as n/a.
struct SummaryTable {
    std::vector<real> rates;
    std::vector<std::string> methods;
    std::vector<std::vector<std::optional<real>>> cells;  // [method][rate]
};

inline SummaryTable summarize_metrics(const std::vector<MetricsRow>& rows) {
    SummaryTable t;
    for (const auto& r : rows) {
        if (std::find(t.rates.begin(), t.rates.end(), r.rate) == t.rates.end())
            t.rates.push_back(r.rate);
        if (std::find(t.methods.begin(), t.methods.end(), r.method) == t.methods.end())
            t.methods.push_back(r.method);
    }
    std::sort(t.rates.begin(), t.rates.end());
    std::sort(t.methods.begin(), t.methods.end());
    std::vector<std::vector<real>> acc(t.methods.size(), std::vector<real>(t.rates.size(), 0.0));
    std::vector<std::vector<int>> cnt(t.methods.size(), std::vector<int>(t.rates.size(), 0));
    for (const auto& r : rows) {
        const auto mi = std::find(t.methods.begin(), t.methods.end(), r.method) - t.methods.begin();
        const auto ri = std::find(t.rates.begin(), t.rates.end(), r.rate) - t.rates.begin();
        acc[mi][ri] += r.psnr_db;
        ++cnt[mi][ri];
    }
    t.cells.assign(t.methods.size(), std::vector<std::optional<real>>(t.rates.size()));
    for (std::size_t m = 0; m < t.methods.size(); ++m)
        for (std::size_t r = 0; r < t.rates.size(); ++r)
            if (cnt[m][r] > 0) t.cells[m][r] = acc[m][r] / real(cnt[m][r]);
    return t;
}

inline std::string format_summary_table(const SummaryTable& t) {
    std::size_t name_w = std::string("method").size();
    for (const auto& m : t.methods) name_w = std::max(name_w, m.size());
    std::string out = "method";
    out.append(name_w - 6, ' ');
    for (real r : t.rates) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "  %6.0f%%", 100.0 * r);
        out += buf;
    }
    out += '\n';
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
        out += t.methods[m];
        out.append(name_w - t.methods[m].size(), ' ');
        for (std::size_t r = 0; r < t.rates.size(); ++r) {
            char buf[32];
            if (t.cells[m][r])
                std::snprintf(buf, sizeof buf, "  %7.2f", double(*t.cells[m][r]));
            else
                std::snprintf(buf, sizeof buf, "  %7s", "n/a");
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace ampsure

#endif
