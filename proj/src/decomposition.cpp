#include "ventus/decomposition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <string>

#include "ventus/error.hpp"
#include "ventus/parallel.hpp"

namespace ventus {

std::vector<double> natural_spline(std::span<const double> xs, std::span<const double> ys, std::size_t n) {
    const std::size_t k = xs.size();
    if (k < 2 || ys.size() != k) throw ValidationError("spline needs at least two knots");
    std::vector<double> h(k - 1);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        h[i] = xs[i + 1] - xs[i];
        if (!(h[i] > 0.0)) throw ValidationError("spline knots must be strictly increasing");
    }
    // Second derivatives, natural boundary M[0] = M[k-1] = 0. Thomas algorithm.
    std::vector<double> m(k, 0.0);
    if (k > 2) {
        const std::size_t r = k - 2;
        std::vector<double> diag(r), upper(r), rhs(r);
        for (std::size_t j = 0; j < r; ++j) {
            const std::size_t i = j + 1;
            diag[j] = 2.0 * (h[i - 1] + h[i]);
            upper[j] = h[i];
            rhs[j] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        for (std::size_t j = 1; j < r; ++j) {
            const double w = h[j] / diag[j - 1];  // lower[j] == h[j]
            diag[j] -= w * upper[j - 1];
            rhs[j] -= w * rhs[j - 1];
        }
        m[r] = rhs[r - 1] / diag[r - 1];
        for (std::size_t j = r - 1; j-- > 0;) m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    std::vector<double> out(n);
    std::size_t seg = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double x = static_cast<double>(t);
        while (seg + 2 < k && x > xs[seg + 1]) ++seg;
        const double a = xs[seg + 1] - x;
        const double b = x - xs[seg];
        const double hh = h[seg];
        out[t] = (m[seg] * a * a * a + m[seg + 1] * b * b * b) / (6.0 * hh) +
                 (ys[seg] / hh - m[seg] * hh / 6.0) * a + (ys[seg + 1] / hh - m[seg + 1] * hh / 6.0) * b;
    }
    return out;
}

Extrema find_extrema(std::span<const double> x) {
    Extrema e;
    const std::size_t n = x.size();
    std::size_t i = 1;
    while (i + 1 < n) {
        const bool up = x[i] > x[i - 1];
        const bool down = x[i] < x[i - 1];
        if (!up && !down) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && x[j + 1] == x[i]) ++j;
        if (j + 1 >= n) break;  // plateau runs into the boundary
        if (up && x[j + 1] < x[i]) e.maxima.push_back((i + j) / 2);
        if (down && x[j + 1] > x[i]) e.minima.push_back((i + j) / 2);
        i = j + 1;
    }
    return e;
}

namespace {

// Envelope through the given extrema, with the two outermost extrema on
// each side mirrored across the series ends.
std::vector<double> envelope(std::span<const double> x, const std::vector<std::size_t>& idx) {
    const std::size_t n = x.size();
    const double last = static_cast<double>(n - 1);
    std::vector<double> kx, ky;
    const std::size_t mirror = std::min<std::size_t>(2, idx.size());
    for (std::size_t j = mirror; j-- > 0;) {
        kx.push_back(-static_cast<double>(idx[j]));
        ky.push_back(x[idx[j]]);
    }
    for (std::size_t p : idx) {
        kx.push_back(static_cast<double>(p));
        ky.push_back(x[p]);
    }
    for (std::size_t j = 0; j < mirror; ++j) {
        const std::size_t p = idx[idx.size() - 1 - j];
        kx.push_back(2.0 * last - static_cast<double>(p));
        ky.push_back(x[p]);
    }
    return natural_spline(kx, ky, n);
}

bool can_sift(const Extrema& e) {
    return !e.maxima.empty() && !e.minima.empty() && e.maxima.size() + e.minima.size() >= 3;
}

int imf_cap(std::size_t n, const SiftOptions& opts) {
    if (opts.max_imfs > 0) return opts.max_imfs;
    return static_cast<int>(std::bit_width(n)) - 1;
}

void check_series(std::span<const double> x) {
    if (x.size() < 16) throw ValidationError("decomposition needs at least 16 samples, got " + std::to_string(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i])) throw NonFiniteError("non-finite value at index " + std::to_string(i));
}

}  // namespace

std::vector<std::vector<double>> emd(std::span<const double> x, const SiftOptions& opts) {
    const std::size_t n = x.size();
    const int cap = imf_cap(n, opts);
    std::vector<std::vector<double>> imfs;
    std::vector<double> r(x.begin(), x.end());
    double energy = 0.0;
    for (double v : x) energy += v * v;
    while (static_cast<int>(imfs.size()) < cap) {
        if (!can_sift(find_extrema(r))) break;
        // A remainder at rounding level still wiggles; it carries no mode.
        double rest = 0.0;
        for (double v : r) rest += v * v;
        if (rest <= 1e-24 * energy) break;
        std::vector<double> h = r;
        for (int s = 0; s < opts.max_sifts; ++s) {
            const Extrema e = find_extrema(h);
            if (!can_sift(e)) break;
            const auto up = envelope(h, e.maxima);
            const auto lo = envelope(h, e.minima);
            double num = 0.0, den = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                const double mean = 0.5 * (up[t] + lo[t]);
                num += mean * mean;
                den += h[t] * h[t];
                h[t] -= mean;
            }
            if (den == 0.0 || num / den < opts.sd_threshold) break;
        }
        for (std::size_t t = 0; t < n; ++t) r[t] -= h[t];
        imfs.push_back(std::move(h));
    }
    return imfs;
}

Decomposition eemd(std::span<const double> x, const EemdOptions& opts) {
    check_series(x);
    if (opts.ensemble_size < 1) throw ValidationError("ensemble size must be at least 1");
    if (!(opts.noise_std >= 0.0) || !std::isfinite(opts.noise_std))
        throw ValidationError("noise amplitude must be finite and non-negative");
    if (opts.fixed_imfs < 0) throw ValidationError("fixed IMF count must be non-negative");

    const std::size_t n = x.size();
    // Without noise every member sifts the same series.
    const int members = opts.noise_std == 0.0 ? 1 : opts.ensemble_size;
    std::vector<std::vector<std::vector<double>>> per_member(members);
    parallel_for(static_cast<std::size_t>(members), opts.jobs, [&](std::size_t m) {
        std::vector<double> y(x.begin(), x.end());
        if (opts.noise_std > 0.0) {
            std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                              static_cast<std::uint32_t>(m)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> noise(0.0, opts.noise_std);
            for (auto& v : y) v += noise(rng);
        }
        per_member[m] = emd(y, opts.sift);
    });

    std::size_t k = 0;
    for (const auto& imfs : per_member) k = std::max(k, imfs.size());
    std::vector<std::vector<double>> avg(k, std::vector<double>(n, 0.0));
    for (const auto& imfs : per_member)
        for (std::size_t j = 0; j < imfs.size(); ++j)
            for (std::size_t t = 0; t < n; ++t) avg[j][t] += imfs[j][t];
    if (members > 1)
        for (auto& c : avg)
            for (auto& v : c) v /= members;

    if (opts.fixed_imfs > 0) {
        avg.resize(static_cast<std::size_t>(opts.fixed_imfs), std::vector<double>(n, 0.0));
    } else {
        while (!avg.empty() && std::all_of(avg.back().begin(), avg.back().end(), [](double v) { return v == 0.0; }))
            avg.pop_back();
    }

    Decomposition d;
    d.residue.assign(x.begin(), x.end());
    std::vector<double> sum(n, 0.0);
    for (const auto& c : avg)
        for (std::size_t t = 0; t < n; ++t) sum[t] += c[t];
    for (std::size_t t = 0; t < n; ++t) d.residue[t] = x[t] - sum[t];
    d.imfs = std::move(avg);
    d.ensemble_size = opts.ensemble_size;
    d.noise_std = opts.noise_std;
    d.seed = opts.seed;
    d.sift = opts.sift;
    return d;
}

Decomposition eemd(std::span<const double> x, int ensemble_size, double noise_std, std::uint64_t seed) {
    EemdOptions opts;
    opts.ensemble_size = ensemble_size;
    opts.noise_std = noise_std;
    opts.seed = seed;
    return eemd(x, opts);
}

std::vector<double> recompose(const Decomposition& d) {
    std::vector<double> out(d.residue.size(), 0.0);
    for (const auto& c : d.imfs)
        for (std::size_t t = 0; t < out.size(); ++t) out[t] += c[t];
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += d.residue[t];
    return out;
}

}  // namespace ventus
