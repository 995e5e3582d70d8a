#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ventus {

struct SiftOptions {
    double sd_threshold = 0.2;  // standard-deviation stop criterion
    int max_sifts = 10;         // per IMF
    int max_imfs = 0;           // 0: floor(log2(length))
};

struct EemdOptions {
    int ensemble_size = 50;
    double noise_std = 0.0;     // absolute standard deviation of the added white noise
    std::uint64_t seed = 0;
    SiftOptions sift;
    // > 0: return exactly this many IMFs (extra ones are zero, surplus ones
    // are folded into the residue). Used when several histories must share
    // one component layout.
    int fixed_imfs = 0;
    std::size_t jobs = 1;
};

struct Decomposition {
    std::vector<std::vector<double>> imfs;  // fast to slow
    std::vector<double> residue;
    int ensemble_size = 0;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    SiftOptions sift;

    std::size_t length() const { return residue.size(); }
};

// Natural cubic spline through (xs, ys), evaluated at 0, 1, ..., n-1.
// xs must be strictly increasing with at least two knots.
std::vector<double> natural_spline(std::span<const double> xs, std::span<const double> ys, std::size_t n);

// Indices of local maxima and minima. Plateaus report their midpoint.
struct Extrema {
    std::vector<std::size_t> maxima;
    std::vector<std::size_t> minima;
};
Extrema find_extrema(std::span<const double> x);

// Plain EMD. Returns the IMFs; the remainder is x minus their sum.
std::vector<std::vector<double>> emd(std::span<const double> x, const SiftOptions& opts = {});

Decomposition eemd(std::span<const double> x, const EemdOptions& opts);
Decomposition eemd(std::span<const double> x, int ensemble_size, double noise_std, std::uint64_t seed);

std::vector<double> recompose(const Decomposition& d);

}  // namespace ventus
