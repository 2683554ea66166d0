#ifndef AMPSURE_FFT_HPP
#define AMPSURE_FFT_HPP

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "ampsure/common.hpp"

namespace ampsure {

// Unitary 2-D transforms on row-major (height x width) grids, backed by FFTW.
// Plan creation is serialized; fftw_execute_dft on caller-owned buffers is
// safe for concurrent use.
class FftEngine {
public:
    static FftEngine& instance() {
        static FftEngine e;
        return e;
    }

    // forward unitary DFT: X = F x, scaled by 1/sqrt(N)
    void dft2(std::vector<cplx>& inout, int width, int height, bool inverse) {
        fftw_plan plan = get_dft_plan(width, height, inverse);
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(inout.data()),
                         reinterpret_cast<fftw_complex*>(inout.data()));
        const real scale = 1.0 / std::sqrt(real(width) * real(height));
        for (auto& z : inout) z *= scale;
    }

    // orthonormal 2-D DCT-II (forward) / DCT-III (inverse)
    void dct2(std::vector<real>& inout, int width, int height, bool inverse) {
        const std::size_t n = std::size_t(width) * std::size_t(height);
        if (!inverse) {
            fftw_plan plan = get_dct_plan(width, height, false);
            fftw_execute_r2r(plan, inout.data(), inout.data());
            // FFTW REDFT10 gives Y_k = 2 sum x_n cos(pi(n+1/2)k/N); orthonormal
            // needs s_0 = sqrt(1/(4N)), s_k = sqrt(1/(2N)) per dimension.
            scale_dct(inout, width, height, false);
        } else {
            // REDFT01 weights the DC input without the factor 2, so its DC
            // prescale is sqrt(1/N).
            scale_dct(inout, width, height, true);
            fftw_plan plan = get_dct_plan(width, height, true);
            fftw_execute_r2r(plan, inout.data(), inout.data());
        }
        (void)n;
    }

private:
    FftEngine() = default;
    ~FftEngine() = default;
    FftEngine(const FftEngine&) = delete;

    static void scale_dct(std::vector<real>& v, int width, int height, bool inverse) {
        const real dc = inverse ? 1.0 : 4.0;
        const real sw0 = std::sqrt(1.0 / (dc * width)), sw = std::sqrt(1.0 / (2.0 * width));
        const real sh0 = std::sqrt(1.0 / (dc * height)), sh = std::sqrt(1.0 / (2.0 * height));
        for (int r = 0; r < height; ++r) {
            const real fr = (r == 0) ? sh0 : sh;
            for (int c = 0; c < width; ++c) {
                const real fc = (c == 0) ? sw0 : sw;
                v[std::size_t(r) * width + c] *= fr * fc;
            }
        }
    }

    fftw_plan get_dft_plan(int width, int height, bool inverse) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(width, height, inverse ? 1 : 0, 0);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<cplx> scratch(std::size_t(width) * height);
        fftw_plan p = fftw_plan_dft_2d(height, width,
                                       reinterpret_cast<fftw_complex*>(scratch.data()),
                                       reinterpret_cast<fftw_complex*>(scratch.data()),
                                       inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_[key] = p;
        return p;
    }

    fftw_plan get_dct_plan(int width, int height, bool inverse) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(width, height, inverse ? 1 : 0, 1);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<real> scratch(std::size_t(width) * height);
        fftw_r2r_kind kind = inverse ? FFTW_REDFT01 : FFTW_REDFT10;
        fftw_r2r_kind kinds[2] = {kind, kind};
        int dims[2] = {height, width};
        fftw_plan p = fftw_plan_r2r(2, dims, scratch.data(), scratch.data(), kinds,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_[key] = p;
        return p;
    }

    std::mutex mutex_;
    std::map<std::tuple<int, int, int, int>, fftw_plan> plans_;
};

inline void unitary_dft2(std::vector<cplx>& v, int width, int height) {
    FftEngine::instance().dft2(v, width, height, false);
}
inline void unitary_idft2(std::vector<cplx>& v, int width, int height) {
    FftEngine::instance().dft2(v, width, height, true);
}
inline void ortho_dct2(std::vector<real>& v, int width, int height) {
    FftEngine::instance().dct2(v, width, height, false);
}
inline void ortho_idct2(std::vector<real>& v, int width, int height) {
    FftEngine::instance().dct2(v, width, height, true);
}

}  // namespace ampsure

#endif
