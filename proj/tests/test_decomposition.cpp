#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ventus/decomposition.hpp"
#include "ventus/error.hpp"

using namespace ventus;

namespace {

double corr(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

double stddev(const std::vector<double>& a) {
    double m = 0;
    for (double v : a) m += v;
    m /= static_cast<double>(a.size());
    double s = 0;
    for (double v : a) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(a.size()));
}

std::vector<double> sine(std::size_t n, double period, double amp = 1.0, double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * std::numbers::pi * t / period + phase);
    return x;
}

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> x(n);
    double walk = 0.0;
    for (auto& v : x) {
        walk += 0.3 * z(rng);
        v = walk + z(rng);
    }
    return x;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("natural spline interpolates and reproduces lines") {
    const std::vector<double> xs{-3.0, 0.0, 2.5, 7.0, 11.0};
    std::vector<double> line;
    for (double x : xs) line.push_back(2.0 * x - 1.0);
    const auto s = natural_spline(xs, line, 11);
    for (std::size_t t = 0; t < 11; ++t) CHECK(s[t] == doctest::Approx(2.0 * t - 1.0).epsilon(1e-12));

    // Oracle: piecewise cubic coefficients from one dense system
    // (interpolation, C1 and C2 continuity, zero end curvature).
    const std::vector<double> kx{0.0, 2.0, 5.0, 6.0, 10.0};
    const std::vector<double> ky{1.0, -2.0, 0.5, 3.0, 0.0};
    const int segs = 4, unknowns = 4 * segs;
    std::vector<std::vector<double>> a;
    auto row = [&] { a.emplace_back(unknowns + 1, 0.0); return a.size() - 1; };
    for (int s = 0; s < segs; ++s) {
        const double h = kx[s + 1] - kx[s];
        auto r0 = row();
        a[r0][4 * s] = 1.0;
        a[r0][unknowns] = ky[s];
        auto r1 = row();
        for (int p = 0; p < 4; ++p) a[r1][4 * s + p] = std::pow(h, p);
        a[r1][unknowns] = ky[s + 1];
        if (s + 1 < segs) {
            auto c1 = row();
            a[c1][4 * s + 1] = 1.0;
            a[c1][4 * s + 2] = 2.0 * h;
            a[c1][4 * s + 3] = 3.0 * h * h;
            a[c1][4 * (s + 1) + 1] = -1.0;
            auto c2 = row();
            a[c2][4 * s + 2] = 2.0;
            a[c2][4 * s + 3] = 6.0 * h;
            a[c2][4 * (s + 1) + 2] = -2.0;
        }
    }
    auto e0 = row();
    a[e0][2] = 2.0;
    auto e1 = row();
    a[e1][4 * (segs - 1) + 2] = 2.0;
    a[e1][4 * (segs - 1) + 3] = 6.0 * (kx[segs] - kx[segs - 1]);
    for (int c = 0; c < unknowns; ++c) {
        int piv = c;
        for (int r = c + 1; r < unknowns; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (int r = 0; r < unknowns; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (int k = c; k <= unknowns; ++k) a[r][k] -= f * a[c][k];
        }
    }
    const auto v = natural_spline(kx, ky, 11);
    for (int t = 0; t <= 10; ++t) {
        int s = 0;
        while (s + 1 < segs && t > kx[s + 1]) ++s;
        const double d = t - kx[s];
        double expect = 0.0;
        for (int p = 0; p < 4; ++p) expect += a[4 * s + p][unknowns] / a[4 * s + p][4 * s + p] * std::pow(d, p);
        CHECK(v[t] == doctest::Approx(expect).epsilon(1e-12));
    }

    CHECK_THROWS_AS(natural_spline(std::vector<double>{1.0}, std::vector<double>{1.0}, 3), ValidationError);
    CHECK_THROWS_AS(natural_spline(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}, 3), ValidationError);
}

TEST_CASE("extrema detection with plateaus") {
    const std::vector<double> x{0, 1, 0, -1, -1, -1, 0, 2, 2, 1, 1, 3};
    const auto e = find_extrema(x);
    CHECK(e.maxima == std::vector<std::size_t>{1, 7});
    CHECK(e.minima == std::vector<std::size_t>{4, 9});
    CHECK(find_extrema(std::vector<double>(20, 1.0)).maxima.empty());
}

TEST_CASE("pure sinusoid: first IMF carries the signal") {
    const auto x = sine(256, 32.0);
    const auto d = eemd(x, 50, 0.0, 1);
    REQUIRE(!d.imfs.empty());
    CHECK(corr(d.imfs[0], x) > 0.99);
    CHECK(stddev(d.residue) < 0.05 * stddev(x));
}

TEST_CASE("constant series has no IMFs") {
    const std::vector<double> x(64, 3.25);
    const auto d = eemd(x, 10, 0.0, 1);
    CHECK(d.imfs.empty());
    CHECK(d.residue == x);
}

TEST_CASE("two-tone: first IMF follows the fast component") {
    const auto fast = sine(512, 10.0);
    const auto slow = sine(512, 100.0, 1.0, 0.4);
    std::vector<double> x(512);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = fast[t] + slow[t];
    const auto d0 = eemd(x, 1, 0.0, 3);
    CHECK(corr(d0.imfs[0], fast) > 0.9);
    const auto d = eemd(x, 50, 0.2 * stddev(x), 3);
    CHECK(corr(d.imfs[0], fast) > 0.9);
}

TEST_CASE("recompose") {
    Decomposition empty;
    empty.residue = {1.0, 2.0, 3.0};
    CHECK(recompose(empty) == empty.residue);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Decomposition d;
    for (int j = 0; j < 4; ++j) {
        d.imfs.emplace_back(128);
        for (auto& v : d.imfs.back()) v = u(rng);
    }
    d.residue.resize(128);
    for (auto& v : d.residue) v = u(rng);
    const auto r = recompose(d);
    for (std::size_t t = 0; t < 128; ++t) {
        long double s = d.residue[t];
        for (const auto& c : d.imfs) s += c[t];
        CHECK(std::abs(r[t] - static_cast<double>(s)) < 1e-12);
    }
}

TEST_CASE("reconstruction is exact on random series") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = random_series(rng, 256);
        const auto d = eemd(x, 10, 0.2 * stddev(x), 100 + rep);
        CHECK(d.imfs.size() <= 8);
        for (const auto& c : d.imfs) CHECK(c.size() == x.size());
        CHECK(d.residue.size() == x.size());
        CHECK(rel_l2(recompose(d), x) < 1e-8);
    }
}

TEST_CASE("determinism across seeds and thread counts") {
    std::mt19937_64 rng(12);
    const auto x = random_series(rng, 200);
    EemdOptions o;
    o.ensemble_size = 12;
    o.noise_std = 0.3;
    o.seed = 77;
    const auto a = eemd(x, o);
    const auto b = eemd(x, o);
    o.jobs = 4;
    const auto c = eemd(x, o);
    CHECK(a.imfs == b.imfs);
    CHECK(a.residue == b.residue);
    CHECK(a.imfs == c.imfs);
    CHECK(a.residue == c.residue);
    o.seed = 78;
    CHECK(eemd(x, o).imfs != a.imfs);
}

TEST_CASE("IMF count does not grow as the input gets smoother") {
    // x_k drops the k fastest tones of a five-tone mixture.
    const std::vector<double> periods{4.0, 9.0, 21.0, 47.0, 110.0};
    std::size_t prev = 1000;
    for (std::size_t k = 0; k < periods.size(); ++k) {
        std::vector<double> x(512, 0.0);
        for (std::size_t j = k; j < periods.size(); ++j) {
            const auto s = sine(512, periods[j], 1.0, 0.3 * j);
            for (std::size_t t = 0; t < x.size(); ++t) x[t] += s[t];
        }
        const auto n = eemd(x, 1, 0.0, 0).imfs.size();
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("fixed IMF layout") {
    std::mt19937_64 rng(13);
    const auto x = random_series(rng, 64);
    EemdOptions o;
    o.ensemble_size = 4;
    o.noise_std = 0.1;
    o.fixed_imfs = 6;
    CHECK(eemd(x, o).imfs.size() == 6);
    o.fixed_imfs = 1;
    const auto d = eemd(x, o);
    CHECK(d.imfs.size() == 1);
    CHECK(rel_l2(recompose(d), x) < 1e-12);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(eemd(std::vector<double>(15, 1.0), 1, 0.0, 0), ValidationError);
    std::vector<double> x(32, 1.0);
    x[7] = std::nan("");
    CHECK_THROWS_AS(eemd(x, 1, 0.0, 0), NonFiniteError);
    CHECK_THROWS_AS(eemd(std::vector<double>(32, 1.0), 0, 0.0, 0), ValidationError);
    CHECK_THROWS_AS(eemd(std::vector<double>(32, 1.0), 1, -0.1, 0), ValidationError);
}
