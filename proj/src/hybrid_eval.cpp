#include "ventus/hybrid_eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ventus/error.hpp"
#include "ventus/io_util.hpp"

namespace ventus {

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty()) throw ValidationError("rmse of an empty sample");
    if (pred.size() != truth.size()) throw ShapeError("predictions and truths differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double rmse(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& truth) {
    if (pred.size() != truth.size()) throw ShapeError("predictions and truths differ in series count");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (pred[k].size() != truth[k].size()) throw ShapeError("series " + std::to_string(k) + " differs in length");
        for (std::size_t i = 0; i < pred[k].size(); ++i) s += (pred[k][i] - truth[k][i]) * (pred[k][i] - truth[k][i]);
        n += pred[k].size();
    }
    if (n == 0) throw ValidationError("rmse of an empty sample");
    return std::sqrt(s / static_cast<double>(n));
}

// ------------------------------------------------------------------ bundle

namespace {

using RunKey = std::pair<std::string, Instant>;

std::string run_name(const RunKey& k) { return k.first + " issued " + format_utc(k.second); }

std::map<RunKey, const LeadSeries*> index_runs(const std::vector<LeadSeries>& runs, const char* what) {
    std::map<RunKey, const LeadSeries*> m;
    for (const auto& r : runs)
        if (!m.emplace(RunKey{r.location, r.issue}, &r).second)
            throw ValidationError(std::string("duplicate ") + what + " forecast for " + run_name({r.location, r.issue}));
    return m;
}

double lead_value(const LeadSeries& s, int lead, const char* what) {
    const auto it = s.values.find(lead);
    if (it == s.values.end())
        throw ValidationError(std::string(what) + " forecast for " + run_name({s.location, s.issue}) + " is missing lead " +
                              std::to_string(lead) + "h");
    return it->second;
}

void attach(ForecastBundle& b, const std::vector<LeadSeries>& runs, double BundleRow::*field) {
    const auto idx = index_runs(runs, "attached");
    for (auto& r : b.rows) {
        const auto it = idx.find({r.location, r.issue});
        if (it == idx.end()) continue;
        const auto v = it->second->values.find(r.lead_hours);
        if (v != it->second->values.end()) r.*field = v->second;
    }
}

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double17(v); }

}  // namespace

ForecastBundle stitch_hybrid(const std::vector<LeadSeries>& short_term, const std::vector<LeadSeries>& medium_term,
                             int handoff, int max_lead) {
    if (handoff < 1 || handoff % 6 != 0) throw ValidationError("handoff must be a positive multiple of 6 hours");
    if (max_lead < handoff || max_lead % 6 != 0) throw ValidationError("maximum lead must be a multiple of 6 at or past the handoff");
    const auto shorts = index_runs(short_term, "short-term");
    const auto mediums = index_runs(medium_term, "medium-term");
    std::set<RunKey> keys;
    for (const auto& [k, _] : shorts) keys.insert(k);
    for (const auto& [k, _] : mediums) keys.insert(k);
    ForecastBundle b;
    b.handoff = handoff;
    for (const auto& k : keys) {
        const auto s = shorts.find(k);
        const auto m = mediums.find(k);
        if (s == shorts.end()) throw ValidationError("no short-term forecast for " + run_name(k));
        if (m == mediums.end()) throw ValidationError("no medium-term forecast for " + run_name(k));
        for (int lead = 1; lead <= handoff; ++lead) {
            BundleRow r{k.first, k.second, lead};
            r.short_term = lead_value(*s->second, lead, "short-term");
            if (lead == handoff) r.medium_term = lead_value(*m->second, lead, "medium-term");
            b.rows.push_back(r);
        }
        for (int lead = handoff + 6; lead <= max_lead; lead += 6) {
            BundleRow r{k.first, k.second, lead};
            r.medium_term = lead_value(*m->second, lead, "medium-term");
            b.rows.push_back(r);
        }
    }
    return b;
}

void attach_baseline(ForecastBundle& bundle, const std::vector<LeadSeries>& baseline) {
    attach(bundle, baseline, &BundleRow::baseline);
}

void attach_truth(ForecastBundle& bundle, const std::vector<LeadSeries>& truth) { attach(bundle, truth, &BundleRow::truth); }

void ForecastBundle::validate() const {
    std::map<RunKey, std::vector<int>> leads;
    for (const auto& r : rows) {
        const bool any = !std::isnan(r.short_term) || !std::isnan(r.medium_term) || !std::isnan(r.baseline);
        if (any && std::isnan(r.truth))
            throw ValidationError("no truth for " + run_name({r.location, r.issue}) + " at lead " + std::to_string(r.lead_hours) + "h");
        if (std::isnan(point(r)))
            throw ValidationError("no point forecast for " + run_name({r.location, r.issue}) + " at lead " +
                                  std::to_string(r.lead_hours) + "h");
        leads[{r.location, r.issue}].push_back(r.lead_hours);
    }
    for (auto& [k, l] : leads) {
        std::sort(l.begin(), l.end());
        int expect = 1;
        for (int lead : l) {
            if (lead != expect)
                throw ValidationError("lead grid of " + run_name(k) + " has a gap at lead " + std::to_string(expect) + "h");
            expect = lead < handoff ? lead + 1 : lead + 6;
        }
    }
}

void ForecastBundle::write_csv(const std::filesystem::path& path) const {
    std::ostringstream o;
    o << "location,issue,lead_hours,short_term,medium_term,baseline,truth\n";
    for (const auto& r : rows)
        o << r.location << ',' << format_utc(r.issue) << ',' << r.lead_hours << ',' << cell(r.short_term) << ','
          << cell(r.medium_term) << ',' << cell(r.baseline) << ',' << cell(r.truth) << '\n';
    write_file(path, o.str());
}

ForecastBundle ForecastBundle::load_csv(const std::filesystem::path& path, int handoff) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    ForecastBundle b;
    b.handoff = handoff;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (n == 1) {
            if (line != "location,issue,lead_hours,short_term,medium_term,baseline,truth")
                throw ParseError(n, "unexpected bundle header");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 7) throw ParseError(n, "expected 7 fields");
        auto num = [&](const std::string& s) {
            if (s.empty()) return kMissing;
            try {
                return parse_double(s);
            } catch (const ValidationError& e) {
                throw ParseError(n, e.what());
            }
        };
        BundleRow r;
        r.location = f[0];
        try {
            r.issue = parse_utc(f[1]);
            r.lead_hours = static_cast<int>(parse_integer(f[2]));
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError& e) {
            throw ParseError(n, e.what());
        }
        r.short_term = num(f[3]);
        r.medium_term = num(f[4]);
        r.baseline = num(f[5]);
        r.truth = num(f[6]);
        b.rows.push_back(std::move(r));
    }
    std::sort(b.rows.begin(), b.rows.end(), [](const BundleRow& a, const BundleRow& c) {
        return std::tie(a.location, a.issue, a.lead_hours) < std::tie(c.location, c.issue, c.lead_hours);
    });
    return b;
}

// ------------------------------------------------------------------ skill

Window parse_window(const std::string& text) {
    const auto f = split(text, ':');
    if (f.size() != 2) throw ValidationError("window must look like START:END, got '" + text + "'");
    Window w{static_cast<int>(parse_integer(f[0])), static_cast<int>(parse_integer(f[1]))};
    if (w.start > w.end) throw ValidationError("window start exceeds its end");
    return w;
}

SkillReport skill_from_rmse(const std::vector<int>& leads, const std::vector<double>& rmse_model,
                            const std::vector<double>& rmse_baseline, const std::vector<Window>& windows) {
    if (leads.size() != rmse_model.size() || leads.size() != rmse_baseline.size())
        throw ShapeError("lead and RMSE vectors differ in length");
    if (leads.empty()) throw ValidationError("no leads to report");
    SkillReport rep;
    for (std::size_t i = 0; i < leads.size(); ++i) {
        if (i > 0 && leads[i] <= leads[i - 1]) throw ValidationError("leads must be strictly increasing");
        if (!(rmse_model[i] >= 0.0) || !(rmse_baseline[i] >= 0.0)) throw ValidationError("RMSE values must be non-negative");
        if (rmse_baseline[i] == 0.0)
            throw ValidationError("baseline RMSE is zero at lead " + std::to_string(leads[i]) + "h");
        LeadSkill s{leads[i], rmse_model[i], rmse_baseline[i]};
        s.normalized_rmse = s.rmse_model / s.rmse_baseline;
        s.improvement = 1.0 - s.normalized_rmse;
        rep.leads.push_back(s);
    }
    // Scan from the last lead back while the model stays strictly better.
    for (std::size_t i = rep.leads.size(); i-- > 0;) {
        if (!(rep.leads[i].rmse_model < rep.leads[i].rmse_baseline)) break;
        rep.crossover_lead = rep.leads[i].lead_hours;
    }
    for (const auto& w : windows) {
        WindowSkill ws{w.start, w.end};
        ws.min_improvement = std::numeric_limits<double>::infinity();
        ws.max_improvement = -std::numeric_limits<double>::infinity();
        double sum_i = 0.0, sum_n = 0.0;
        for (const auto& s : rep.leads) {
            if (s.lead_hours < w.start || s.lead_hours > w.end) continue;
            ++ws.n_leads;
            ws.min_improvement = std::min(ws.min_improvement, s.improvement);
            ws.max_improvement = std::max(ws.max_improvement, s.improvement);
            sum_i += s.improvement;
            sum_n += s.normalized_rmse;
        }
        if (ws.n_leads == 0) {
            ws.min_improvement = ws.max_improvement = ws.mean_improvement = ws.mean_normalized_rmse = kMissing;
        } else {
            ws.mean_improvement = sum_i / static_cast<double>(ws.n_leads);
            ws.mean_normalized_rmse = sum_n / static_cast<double>(ws.n_leads);
        }
        rep.windows.push_back(ws);
    }
    return rep;
}

SkillReport skill_report(const ForecastBundle& bundle, const std::vector<Window>& windows) {
    bundle.validate();
    // lead -> location -> (model errors, baseline errors)
    std::map<int, std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>> err;
    for (const auto& r : bundle.rows) {
        if (std::isnan(r.baseline))
            throw ValidationError("baseline missing for " + r.location + " at lead " + std::to_string(r.lead_hours) + "h");
        auto& e = err[r.lead_hours][r.location];
        e.first.push_back(bundle.point(r) - r.truth);
        e.second.push_back(r.baseline - r.truth);
    }
    std::vector<int> leads;
    std::vector<double> rm, rb;
    for (const auto& [lead, by_loc] : err) {
        double sm = 0.0, sb = 0.0;
        for (const auto& [loc, e] : by_loc) {
            const std::vector<double> zero(e.first.size(), 0.0);
            sm += rmse(e.first, zero);
            sb += rmse(e.second, zero);
        }
        leads.push_back(lead);
        rm.push_back(sm / static_cast<double>(by_loc.size()));
        rb.push_back(sb / static_cast<double>(by_loc.size()));
    }
    return skill_from_rmse(leads, rm, rb, windows);
}

// ------------------------------------------------------------------ output

std::string skill_svg(const SkillReport& report) {
    const double W = 720, H = 300, ml = 60, mr = 20, mt = 30, mb = 40;
    const double lead_max = report.leads.empty() ? 1.0 : std::max(1, report.leads.back().lead_hours);
    double rmse_max = 0.0, norm_max = 1.0;
    for (const auto& s : report.leads) {
        rmse_max = std::max({rmse_max, s.rmse_model, s.rmse_baseline});
        norm_max = std::max(norm_max, s.normalized_rmse);
    }
    if (rmse_max <= 0.0) rmse_max = 1.0;
    norm_max *= 1.1;
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    auto x = [&](double lead) { return ml + (W - ml - mr) * lead / lead_max; };
    auto panel = [&](double top, const std::string& title, double ymax, auto value_of, const std::string& colour,
                     bool unity) {
        auto y = [&](double v) { return top + mt + (H - mt - mb) * (1.0 - v / ymax); };
        o << "<g>\n<text x=\"" << ml << "\" y=\"" << top + 20 << "\" font-size=\"14\">" << title << "</text>\n";
        o << "<line x1=\"" << ml << "\" y1=\"" << y(0) << "\" x2=\"" << W - mr << "\" y2=\"" << y(0)
          << "\" stroke=\"black\"/>\n";
        o << "<line x1=\"" << ml << "\" y1=\"" << y(0) << "\" x2=\"" << ml << "\" y2=\"" << y(ymax)
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << (W / 2) << "\" y=\"" << top + H - 8 << "\" font-size=\"12\">lead (h)</text>\n";
        if (unity)
            o << "<line x1=\"" << ml << "\" y1=\"" << y(1.0) << "\" x2=\"" << W - mr << "\" y2=\"" << y(1.0)
              << "\" stroke=\"grey\" stroke-dasharray=\"4 4\"/>\n";
        for (std::size_t series = 0; series < value_of.size(); ++series) {
            o << "<polyline fill=\"none\" stroke=\"" << (series == 0 ? colour : std::string("grey")) << "\" points=\"";
            for (const auto& s : report.leads) o << x(s.lead_hours) << ',' << y(value_of[series](s)) << ' ';
            o << "\"/>\n";
        }
        o << "</g>\n";
    };
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << 2 * H << "\">\n";
    using Get = double (*)(const LeadSkill&);
    panel(0, "RMSE (model, baseline)", rmse_max * 1.1,
          std::vector<Get>{[](const LeadSkill& s) { return s.rmse_model; }, [](const LeadSkill& s) { return s.rmse_baseline; }},
          "steelblue", false);
    panel(H, "normalized RMSE", norm_max, std::vector<Get>{[](const LeadSkill& s) { return s.normalized_rmse; }},
          "firebrick", true);
    o << "</svg>\n";
    return o.str();
}

void emit_report(const SkillReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::ostringstream csv;
    csv << "lead_hours,rmse_model,rmse_baseline,normalized_rmse,improvement\n";
    for (const auto& s : report.leads)
        csv << s.lead_hours << ',' << format_double17(s.rmse_model) << ',' << format_double17(s.rmse_baseline) << ','
            << format_double17(s.normalized_rmse) << ',' << format_double17(s.improvement) << '\n';
    write_file(dir / "skill.csv", csv.str());
    write_file(dir / "skill.svg", skill_svg(report));

    nlohmann::ordered_json j;
    j["crossover_lead_hours"] = report.crossover_lead ? nlohmann::ordered_json(*report.crossover_lead) : nlohmann::ordered_json();
    j["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : report.windows) {
        auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json() : nlohmann::ordered_json(v); };
        j["windows"].push_back({{"start_hours", w.start},
                                {"end_hours", w.end},
                                {"n_leads", w.n_leads},
                                {"min_improvement", num(w.min_improvement)},
                                {"max_improvement", num(w.max_improvement)},
                                {"mean_improvement", num(w.mean_improvement)},
                                {"mean_normalized_rmse", num(w.mean_normalized_rmse)}});
    }
    write_file(dir / "summary.json", j.dump(2) + "\n");
}

std::vector<LeadSkill> load_skill_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t n = 0;
    std::vector<LeadSkill> out;
    while (std::getline(in, line)) {
        ++n;
        if (n == 1) {
            if (line != "lead_hours,rmse_model,rmse_baseline,normalized_rmse,improvement")
                throw ParseError(n, "unexpected skill header");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 5) throw ParseError(n, "expected 5 fields");
        try {
            out.push_back({static_cast<int>(parse_integer(f[0])), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]),
                           parse_double(f[4])});
        } catch (const ValidationError& e) {
            throw ParseError(n, e.what());
        }
    }
    return out;
}

}  // namespace ventus
