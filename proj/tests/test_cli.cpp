#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "cli_harness.hpp"
#include "ventus/hybrid_eval.hpp"

using namespace harness;

namespace {

std::set<std::string> entries(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
    return out;
}

}  // namespace

TEST_CASE("help lists every subcommand") {
    const auto d = fresh_dir("help");
    const auto r = run_cli(d, "--help");
    CHECK(r.code == 0);
    for (const char* sub : {"ingest", "synth", "decompose", "analyze-marginal", "train-tide", "predict-tide", "train-grid",
                            "finetune-grid", "bias-correct", "predict-hybrid", "evaluate"})
        CHECK_MESSAGE(r.out.find(sub) != std::string::npos, sub);
    CHECK(entries(d).empty());
}

TEST_CASE("exit codes") {
    const auto d = fresh_dir("codes");
    CHECK(run_cli(d, "").code == 1);
    CHECK(run_cli(d, "frobnicate --out x").code == 1);
    CHECK(run_cli(d, "synth --hours 5 --out x").code == 1);
    const auto missing = run_cli(d, "evaluate --bundle nowhere --out x");
    CHECK(missing.code == 1);
    CHECK(missing.err.find("nowhere") != std::string::npos);
    CHECK(missing.out.empty());

    REQUIRE(run_cli(d, "synth --seed 3 --hours 240 --out data").code == 0);
    const auto blowup = run_cli(d, "train-grid --data data --steps 20 --lr 1e6 --out g");
    CHECK(blowup.code == 2);
    CHECK(blowup.err.find("non-finite") != std::string::npos);
}

TEST_CASE("synth is byte-identical across runs") {
    const auto d = fresh_dir("synth");
    REQUIRE(run_cli(d, "synth --seed 7 --hours 720 --out out").code == 0);
    std::map<std::string, std::string> first;
    for (const auto& name : entries(d / "out")) first[name] = ventus::read_file(d / "out" / name);
    fs::remove_all(d / "out");
    REQUIRE(run_cli(d, "synth --seed 7 --hours 720 --out out").code == 0);
    CHECK(entries(d / "out").size() == first.size());
    for (const auto& [name, bytes] : first) CHECK_MESSAGE(ventus::read_file(d / "out" / name) == bytes, name);
    CHECK(first.count("run.json"));
    CHECK(first.count("grid.gt1"));
    CHECK(first.count("stations.csv"));
}

TEST_CASE("data commands") {
    const auto d = fresh_dir("data");
    REQUIRE(run_cli(d, "synth --seed 2 --hours 2000 --out s").code == 0);

    auto r = run_cli(d, "ingest --generation s/generation.csv --grid s/grid.gt1 --stations s/stations.csv "
                        "--locations s/locations.csv --out ing");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(ventus::read_file(d / "ing" / "grid.gt1") == ventus::read_file(d / "s" / "grid.gt1"));
    CHECK(ventus::read_file(d / "ing" / "stations.csv") == ventus::read_file(d / "s" / "stations.csv"));
    const auto run = nlohmann::json::parse(ventus::read_file(d / "ing" / "run.json"));
    CHECK(run["command"] == "ingest");
    CHECK(run["resolved"]["location_cells"].size() == 4);

    CHECK(run_cli(d, "ingest --out empty").code == 1);

    r = run_cli(d, "analyze-marginal --panel s --per-plant --out marg");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto report = ventus::read_file(d / "marg" / "report.csv");
    CHECK(report.rfind("target,coefficient,std_error,t_stat,label\n", 0) == 0);
    CHECK(report.find("aggregate:wind,") != std::string::npos);

    ventus::write_file(d / "series.csv", [] {
        std::string s = "t,value\n";
        for (int i = 0; i < 200; ++i) s += std::to_string(i) + "," + std::to_string(std::sin(0.3 * i) + 0.01 * i) + "\n";
        return s;
    }());
    r = run_cli(d, "decompose --series series.csv --ensemble 10 --noise 0.2 --seed 4 --out dec");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto comps = ventus::read_file(d / "dec" / "components.csv");
    CHECK(comps.find("residue") != std::string::npos);
    CHECK(std::count(comps.begin(), comps.end(), '\n') == 201);
    CHECK(run_cli(d, "decompose --series series.csv --column nope --out dec2").code == 1);
}

TEST_CASE("short-term train and predict") {
    const auto d = fresh_dir("tide");
    REQUIRE(run_cli(d, "synth --seed 5 --hours 720 --locations 2 --out s").code == 0);
    auto r = run_cli(d, "train-tide --data s --epochs 2 --out m");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run_cli(d, "predict-tide --model m --data s --horizon 24 --chains 3 --out f");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto csv = ventus::read_file(d / "f" / "forecast.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 24);
    CHECK(run_cli(d, "predict-tide --model m --data s --horizon 5 --out g").code == 1);
    const auto run = nlohmann::json::parse(ventus::read_file(d / "m" / "run.json"));
    CHECK(run["resolved"]["tide_config"].get<std::string>().find("max_epochs = 2") != std::string::npos);
}

TEST_CASE("full pipeline is deterministic and stays inside its output directories") {
    const auto a = fresh_dir("pipe_a"), b = fresh_dir("pipe_b");
    const auto ra = run_pipeline(a, 11);
    REQUIRE_MESSAGE(ra.code == 0, ra.err);
    const auto rb = run_pipeline(b, 11);
    REQUIRE_MESSAGE(rb.code == 0, rb.err);
    CHECK(ventus::read_file(a / "report" / "skill.csv") == ventus::read_file(b / "report" / "skill.csv"));
    CHECK(ventus::read_file(a / "hybrid" / "bundle.csv") == ventus::read_file(b / "hybrid" / "bundle.csv"));
    CHECK(entries(a) == std::set<std::string>{"data", "tide", "grid", "finetuned", "bias", "hybrid", "report"});
    CHECK(entries(a / "report") == std::set<std::string>{"skill.csv", "skill.svg", "summary.json", "run.json"});

    const auto skill = ventus::load_skill_csv(a / "report" / "skill.csv");
    REQUIRE(skill.size() == 48 + 32);
    for (const auto& s : skill) CHECK(std::abs(s.improvement - (1.0 - s.normalized_rmse)) <= 1e-12);
    const auto summary = nlohmann::json::parse(ventus::read_file(a / "report" / "summary.json"));
    CHECK(summary["windows"][0]["n_leads"] == 25);
    // Short-range leads beat persistence comfortably on the synthetic scenario.
    CHECK(summary["windows"][0]["mean_improvement"].get<double>() > 0.3);
}
