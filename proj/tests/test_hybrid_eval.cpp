#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <stack>

#include "ventus/error.hpp"
#include "ventus/hybrid_eval.hpp"
#include "ventus/io_util.hpp"

using namespace ventus;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("ventus_hybrid_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

LeadSeries series(const std::string& loc, Instant issue, const std::vector<int>& leads, double (*f)(int)) {
    LeadSeries s{loc, issue, {}};
    for (int l : leads) s.values[l] = f(l);
    return s;
}

std::vector<int> hourly(int a, int b) {
    std::vector<int> v;
    for (int l = a; l <= b; ++l) v.push_back(l);
    return v;
}

std::vector<int> six_hourly(int a, int b) {
    std::vector<int> v;
    for (int l = a; l <= b; l += 6) v.push_back(l);
    return v;
}

// Accepts a document with exactly one root element and balanced tags.
bool well_formed_xml(const std::string& s) {
    std::stack<std::string> open;
    int roots = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '<') {
            if (open.empty() && !std::isspace(static_cast<unsigned char>(s[i]))) return false;
            ++i;
            continue;
        }
        const auto close = s.find('>', i);
        if (close == std::string::npos) return false;
        std::string tag = s.substr(i + 1, close - i - 1);
        i = close + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        if (tag[0] == '/') {
            if (open.empty() || open.top() != tag.substr(1)) return false;
            open.pop();
            continue;
        }
        const bool self_closing = tag.back() == '/';
        const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
        if (open.empty()) ++roots;
        if (!self_closing) open.push(name);
    }
    return open.empty() && roots == 1;
}

}  // namespace

TEST_CASE("rmse hand values and errors") {
    CHECK(rmse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(rmse({3.0, 4.0}, {0.0, 0.0}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), ValidationError);
    CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(rmse(std::vector<std::vector<double>>{{1.0}}, std::vector<std::vector<double>>{{1.0, 2.0}}), ShapeError);
}

TEST_CASE("rmse matches a naive loop and is scale equivariant") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 3.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = len(rng), h = len(rng);
        std::vector<std::vector<double>> p(n, std::vector<double>(h)), t(n, std::vector<double>(h));
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < h; ++k) p[i][k] = nd(rng), t[i][k] = nd(rng);
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < h; ++k) s += (p[i][k] - t[i][k]) * (p[i][k] - t[i][k]);
        const double naive = std::sqrt(s / (n * h));
        const double r = rmse(p, t);
        CHECK(std::abs(r - naive) <= 1e-12 * std::max(1.0, naive));
        CHECK(std::abs(rmse(p[0], t[0]) - rmse(std::vector{p[0]}, std::vector{t[0]})) <= 1e-12);

        const double k = std::exp(nd(rng) / 3.0);
        for (auto& row : p)
            for (double& v : row) v *= k;
        for (auto& row : t)
            for (double& v : row) v *= k;
        CHECK(std::abs(rmse(p, t) - k * r) <= 1e-12 * std::max(1.0, k * r));
    }
}

TEST_CASE("stitching keeps regimes and both values at the handoff") {
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    const auto s = series("A", t0, hourly(1, 48), [](int l) { return 1.0 * l; });
    const auto m = series("A", t0, six_hourly(6, 240), [](int l) { return 1000.0 + l; });
    const auto b = stitch_hybrid({s}, {m});
    REQUIRE(b.rows.size() == 48 + 32);
    CHECK(b.rows.front().lead_hours == 1);
    CHECK(b.rows.back().lead_hours == 240);
    const auto& h = b.rows[47];
    CHECK(h.lead_hours == 48);
    CHECK(h.short_term == 48.0);
    CHECK(h.medium_term == 1048.0);
    CHECK(b.point(h) == 48.0);
    CHECK(b.point(b.rows[48]) == 1054.0);
    CHECK(std::isnan(b.rows[48].short_term));
    CHECK(std::isnan(b.rows[0].medium_term));

    const auto again = stitch_hybrid({s}, {m});
    REQUIRE(again.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < b.rows.size(); ++i) CHECK(b.point(b.rows[i]) == again.point(again.rows[i]));
}

TEST_CASE("stitching agrees with either model when they agree") {
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    auto f = [](int l) { return std::sin(0.1 * l); };
    const auto s = series("A", t0, hourly(1, 48), f);
    const auto m = series("A", t0, six_hourly(6, 240), f);
    const auto b = stitch_hybrid({s}, {m});
    for (const auto& r : b.rows) CHECK(b.point(r) == f(r.lead_hours));
}

TEST_CASE("stitching names a missing lead") {
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    const auto s = series("A", t0, hourly(1, 48), [](int) { return 1.0; });
    auto m = series("A", t0, six_hourly(6, 240), [](int) { return 2.0; });
    m.values.erase(54);
    try {
        stitch_hybrid({s}, {m});
        FAIL("expected a coverage error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("lead 54h") != std::string::npos);
    }
    auto s2 = s;
    s2.values.erase(17);
    CHECK_THROWS_WITH_AS(stitch_hybrid({s2}, {series("A", t0, six_hourly(6, 240), [](int) { return 2.0; })}),
                         doctest::Contains("lead 17h"), ValidationError);
    CHECK_THROWS_AS(stitch_hybrid({s}, {}), ValidationError);
}

TEST_CASE("stitched forecast is never worse than either model on a planted regime") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd(0.0, 1.0);
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    std::vector<LeadSeries> shorts, mediums, truth, base;
    std::vector<int> all_leads = hourly(1, 48);
    for (int l : six_hourly(54, 240)) all_leads.push_back(l);
    for (const std::string loc : {"B", "A", "C"})
        for (int issue = 0; issue < 20; ++issue) {
            const Instant t = t0 + std::chrono::hours(24 * issue);
            LeadSeries s{loc, t, {}}, m{loc, t, {}}, tr{loc, t, {}}, bl{loc, t, {}};
            for (int l : all_leads) {
                const double y = 8.0 + nd(rng);
                tr.values[l] = y;
                // short: small error early, large late; medium the reverse
                const double es = l <= 48 ? 0.2 : 2.0, em = l <= 48 ? 1.0 : 0.5;
                s.values[l] = y + es * nd(rng);
                m.values[l] = y + em * nd(rng);
                bl.values[l] = y + 1.5 * nd(rng);
            }
            shorts.push_back(s), mediums.push_back(m), truth.push_back(tr), base.push_back(bl);
        }
    auto b = stitch_hybrid(shorts, mediums);
    attach_truth(b, truth);
    attach_baseline(b, base);
    b.validate();
    const auto hybrid = skill_report(b, {});

    auto only = [&](bool use_short) {
        ForecastBundle single = b;
        for (auto& r : single.rows) {
            for (std::size_t k = 0; k < shorts.size(); ++k)
                if (shorts[k].location == r.location && shorts[k].issue == r.issue) {
                    const double x = (use_short ? shorts[k] : mediums[k]).values.at(r.lead_hours);
                    r.short_term = r.medium_term = x;
                }
        }
        return skill_report(single, {});
    };
    const auto s_only = only(true), m_only = only(false);
    REQUIRE(s_only.leads.size() == hybrid.leads.size());
    for (std::size_t i = 0; i < hybrid.leads.size(); ++i) {
        const double best = std::min(s_only.leads[i].rmse_model, m_only.leads[i].rmse_model);
        CHECK(hybrid.leads[i].rmse_model <= best + 1e-12);
    }
}

TEST_CASE("skill of a model identical to the baseline") {
    const std::vector<int> leads = six_hourly(6, 120);
    std::vector<double> r(leads.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.5 + 0.1 * i;
    const auto rep = skill_from_rmse(leads, r, r);
    for (const auto& s : rep.leads) {
        CHECK(s.normalized_rmse == 1.0);
        CHECK(s.improvement == 0.0);
    }
    CHECK_FALSE(rep.crossover_lead.has_value());
}

TEST_CASE("half the baseline error gives improvement 0.5 and crossover at the first lead") {
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    ForecastBundle b;
    b.handoff = 48;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int issue = 0; issue < 5; ++issue)
        for (int l = 1; l <= 48; ++l) {
            BundleRow r{"A", t0 + std::chrono::hours(24 * issue), l};
            r.truth = 6.0 + nd(rng);
            const double e = 1.0 + std::abs(nd(rng));
            r.baseline = r.truth + e;
            r.short_term = r.truth + 0.5 * e;
            b.rows.push_back(r);
        }
    const auto rep = skill_report(b);
    for (const auto& s : rep.leads) CHECK(s.improvement == doctest::Approx(0.5).epsilon(1e-12));
    REQUIRE(rep.crossover_lead.has_value());
    CHECK(*rep.crossover_lead == 1);
}

TEST_CASE("planted crossover after 30 hours") {
    const std::vector<int> leads = six_hourly(6, 240);
    std::vector<double> rm, rb;
    for (int l : leads) {
        rb.push_back(1.0 + 0.01 * l);
        // worse up to 30 h, including an early dip that must not count
        const double ratio = l <= 30 ? (l == 12 ? 0.9 : 1.2) : 0.8 + 0.0005 * l;
        rm.push_back(ratio * rb.back());
    }
    const auto rep = skill_from_rmse(leads, rm, rb);
    REQUIRE(rep.crossover_lead.has_value());
    CHECK(*rep.crossover_lead == 36);
    for (const auto& s : rep.leads) {
        CHECK(std::abs(s.improvement - (1.0 - s.normalized_rmse)) <= 1e-12);
        CHECK(s.rmse_model >= 0.0);
    }
}

TEST_CASE("normalized rmse is invariant to joint rescaling") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    std::vector<int> leads = hourly(1, 48);
    std::vector<double> rm(48), rb(48);
    for (int i = 0; i < 48; ++i) rm[i] = u(rng), rb[i] = u(rng);
    const auto a = skill_from_rmse(leads, rm, rb);
    for (double k : {1e-3, 0.7, 13.0}) {
        std::vector<double> km = rm, kb = rb;
        for (double& v : km) v *= k;
        for (double& v : kb) v *= k;
        const auto b = skill_from_rmse(leads, km, kb);
        for (int i = 0; i < 48; ++i) CHECK(std::abs(a.leads[i].normalized_rmse - b.leads[i].normalized_rmse) <= 1e-12);
        CHECK(a.crossover_lead == b.crossover_lead);
    }
}

TEST_CASE("window summary is closed on both ends") {
    const std::vector<int> leads = hourly(1, 48);
    std::vector<double> rm, rb(48, 1.0);
    for (int l : leads) rm.push_back(l == 14 || l == 38 ? 0.5 : 0.9);
    const auto rep = skill_from_rmse(leads, rm, rb, {Window{14, 38}, parse_window("40:48"), Window{100, 120}});
    REQUIRE(rep.windows.size() == 3);
    CHECK(rep.windows[0].n_leads == 25);
    CHECK(rep.windows[0].max_improvement == doctest::Approx(0.5));
    CHECK(rep.windows[0].min_improvement == doctest::Approx(0.1));
    CHECK(rep.windows[1].n_leads == 9);
    CHECK(rep.windows[2].n_leads == 0);
    CHECK(std::isnan(rep.windows[2].mean_improvement));
    CHECK_THROWS_AS(parse_window("38:14"), ValidationError);
    CHECK_THROWS_AS(parse_window("14-38"), ValidationError);
}

TEST_CASE("skill input errors") {
    CHECK_THROWS_AS(skill_from_rmse({6}, {1.0}, {0.0}), ValidationError);
    CHECK_THROWS_AS(skill_from_rmse({6, 6}, {1.0, 1.0}, {1.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(skill_from_rmse({6}, {1.0, 2.0}, {1.0}), ShapeError);

    ForecastBundle b;
    BundleRow r{"A", parse_utc("2021-01-01T00:00:00Z"), 1};
    r.short_term = 1.0;
    r.truth = 1.5;
    b.rows.push_back(r);
    CHECK_THROWS_WITH_AS(skill_report(b), doctest::Contains("baseline"), ValidationError);
    b.rows[0].truth = kMissing;
    b.rows[0].baseline = 1.0;
    CHECK_THROWS_WITH_AS(skill_report(b), doctest::Contains("truth"), ValidationError);
}

TEST_CASE("bundle validation finds gaps") {
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    const auto s = series("A", t0, hourly(1, 48), [](int) { return 1.0; });
    const auto m = series("A", t0, six_hourly(6, 240), [](int) { return 2.0; });
    auto b = stitch_hybrid({s}, {m});
    attach_truth(b, {series("A", t0, hourly(1, 240), [](int) { return 1.5; })});
    b.validate();
    b.rows.erase(b.rows.begin() + 60);
    CHECK_THROWS_AS(b.validate(), ValidationError);
}

TEST_CASE("bundle csv round trip") {
    const auto dir = scratch_dir("bundle");
    const Instant t0 = parse_utc("2021-03-01T00:00:00Z");
    const auto s = series("A", t0, hourly(1, 48), [](int l) { return 1.0 / (l + 2.0); });
    const auto m = series("A", t0, six_hourly(6, 240), [](int l) { return std::sqrt(l + 0.1); });
    auto b = stitch_hybrid({s}, {m});
    attach_truth(b, {series("A", t0, hourly(1, 240), [](int l) { return std::log(l + 3.0); })});
    b.write_csv(dir / "bundle.csv");
    const auto c = ForecastBundle::load_csv(dir / "bundle.csv");
    REQUIRE(c.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
        const auto &x = b.rows[i], &y = c.rows[i];
        CHECK(x.location == y.location);
        CHECK(x.issue == y.issue);
        CHECK(x.lead_hours == y.lead_hours);
        CHECK(x.truth == y.truth);
        CHECK(std::isnan(y.baseline));
        CHECK((std::isnan(x.short_term) ? std::isnan(y.short_term) : x.short_term == y.short_term));
        CHECK((std::isnan(x.medium_term) ? std::isnan(y.medium_term) : x.medium_term == y.medium_term));
    }
    write_file(dir / "bad.csv", "location,issue,lead_hours,short_term,medium_term,baseline,truth\nA,2021-03-01T00:00:00Z,x,,,,\n");
    try {
        ForecastBundle::load_csv(dir / "bad.csv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("report files round trip and the plot is well formed") {
    const auto dir = scratch_dir("report");
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    std::vector<int> leads = six_hourly(6, 240);
    std::vector<double> rm, rb;
    for (std::size_t i = 0; i < leads.size(); ++i) rm.push_back(u(rng)), rb.push_back(u(rng));
    const auto rep = skill_from_rmse(leads, rm, rb);
    emit_report(rep, dir);
    const auto back = load_skill_csv(dir / "skill.csv");
    REQUIRE(back.size() == rep.leads.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].lead_hours == rep.leads[i].lead_hours);
        CHECK(back[i].rmse_model == rep.leads[i].rmse_model);
        CHECK(back[i].rmse_baseline == rep.leads[i].rmse_baseline);
        CHECK(back[i].normalized_rmse == rep.leads[i].normalized_rmse);
        CHECK(back[i].improvement == rep.leads[i].improvement);
    }
    const std::string svg = read_file(dir / "skill.svg");
    CHECK(well_formed_xml(svg));
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "summary.json"));

    CHECK(well_formed_xml("<a><b/></a>"));
    CHECK_FALSE(well_formed_xml("<a><b></a>"));
    CHECK_FALSE(well_formed_xml("<a></a><a></a>"));
}

TEST_CASE("one-lead report") {
    const auto dir = scratch_dir("one");
    emit_report(skill_from_rmse({24}, {0.5}, {1.0}), dir);
    const auto text = read_file(dir / "skill.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(well_formed_xml(read_file(dir / "skill.svg")));
}

TEST_CASE("unwritable report directory") {
    const auto dir = scratch_dir("blocked");
    write_file(dir / "file", "x");
    CHECK_THROWS_AS(emit_report(skill_from_rmse({24}, {0.5}, {1.0}), dir / "file" / "sub"), ValidationError);
}
