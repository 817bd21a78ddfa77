// SPDX-License-Identifier: Apache-2.0
//
// ccmcf: coupled-core multicore fiber link and MIMO DSP simulator
// Copyright (C) 2026 The ccmcf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <ccmcf/harness.hpp>

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>

using namespace ccmcf;
using Catch::Approx;
namespace fs = std::filesystem;

namespace
{
    // two channels, short frames: fast enough for unit tests
    ExperimentConfig small_config()
    {
        ExperimentConfig c;
        c.run.modes = 2;
        c.link.modes = 2;
        c.run.log2_symbols = 14;
        c.run.trials = 2;
        c.run.span_counts = {1, 2};
        c.run.mdl_curve_trials = 20;
        c.run.wdm_span_counts = {1};
        c.link.sections_per_span = 10;
        return c;
    }

    fs::path scratch_dir(const std::string &name)
    {
        const auto p = fs::temp_directory_path() / ("ccmcf_test_" + name);
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }

    std::string slurp(const fs::path &p)
    {
        std::ifstream is(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(is), {}};
    }

    int run_sim(const std::string &args)
    {
        const char *sim = std::getenv("CCMCF_SIM");
        REQUIRE(sim != nullptr);
        const int rc = std::system((std::string(sim) + " " + args + " > /dev/null 2>&1").c_str());
        REQUIRE(WIFEXITED(rc));
        return WEXITSTATUS(rc);
    }

    void write_json(const fs::path &p, const json &j)
    {
        std::ofstream os(p);
        os << j.dump(2);
    }
} // namespace

TEST_CASE("config JSON round trip and hash", "[harness][config]")
{
    ExperimentConfig c;
    c.link.amp_gain_db = 11.5;
    c.link.core_skew_ps = {0.0, 3.0};
    c.rx.mode = EqualizerMode::widely_linear;
    const auto j = to_json(c);
    const auto back = config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(hex64(config_hash(c)).size() == 16);

    auto d = c;
    d.run.master_seed = 2;
    CHECK(config_hash(d) != config_hash(c));
    d = c;
    d.rx.mu_final = 0.002;
    CHECK(config_hash(d) != config_hash(c));
    d = c;
    d.run.workers = 8;
    d.output.dir = "elsewhere";
    CHECK(config_hash(d) == config_hash(c));

    // an empty object means defaults
    CHECK(to_json(config_from_json(json::object())) == to_json(ExperimentConfig{}));
}

TEST_CASE("config rejects bad input", "[harness][config]")
{
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"link": {"spans": 3}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"rx": {"mode": "nonlinear"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"run": {"modes": "four"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"tx": 3})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse("[1, 2]")), ConfigError);

    auto bad = [](auto mutate) {
        ExperimentConfig c;
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](auto &c) { c.run.modes = 3; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.run.log2_symbols = 4; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.run.wdm_channels = 40; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.run.span_counts = {}; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.run.span_counts = {0}; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.tx.rolloff = 0.2; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.schema_version = 2; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto &c) { c.link.span_loss_db = -1.0; }).validate(), ConfigError);
    CHECK_NOTHROW(ExperimentConfig{}.validate());
}

TEST_CASE("environment overrides", "[harness][config]")
{
    const auto dir = scratch_dir("env");
    write_json(dir / "c.json", json::parse(R"({"run": {"modes": 6, "trials": 3}})"));
    const std::map<std::string, std::string> env{{"CCMCF_RUN__MODES", "8"},
                                                 {"CCMCF_RX__MODE", "widely_linear"},
                                                 {"CCMCF_RUN__SPAN_COUNTS", "[2, 3]"},
                                                 {"CCMCF_LINK__NOISELESS", "true"},
                                                 {"HOME", "/root"},
                                                 {"CCMCF_NOSEPARATOR", "1"}};
    const auto c = load_config((dir / "c.json").string(), env);
    CHECK(c.run.modes == 8);
    CHECK(c.link.modes == 8);
    CHECK(c.run.trials == 3);
    CHECK(c.rx.mode == EqualizerMode::widely_linear);
    CHECK(c.run.span_counts == std::vector<int>{2, 3});
    CHECK(c.link.noiseless);

    CHECK_THROWS_AS(load_config("", {{"CCMCF_RUN__NOT_A_KEY", "1"}}), ConfigError);
    CHECK_THROWS_AS(load_config((dir / "missing.json").string(), {}), ConfigError);
    {
        std::ofstream os(dir / "broken.json");
        os << "{ not json";
    }
    CHECK_THROWS_AS(load_config((dir / "broken.json").string(), {}), ConfigError);
    CHECK(load_config("", {}).run.modes == 4);
}

TEST_CASE("full-scale switch", "[harness][config]")
{
    ExperimentConfig c;
    apply_full_scale(c);
    CHECK(c.run.modes == 24);
    CHECK(c.rx.mode == EqualizerMode::widely_linear);
    CHECK(equalizer_inputs(24, c.rx.sps, c.rx.mode) == 96);
    CHECK(c.run.wdm_channels == 31);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("report serialisation", "[harness][report]")
{
    MetricsReport r;
    r.kind = "distance";
    r.config_hash = "0123456789abcdef";
    r.seed = 7;
    r.columns = {"spans", "x"};
    r.rows = {{1.0, 0.25}, {2.0, std::nan("")}};
    r.status = {"ok", "equalizer diverged, block 3"};
    r.summary = {{"a", 1.5}, {"b", std::nan("")}};
    r.notes = {"note"};
    CHECK(r.failed() == 1);
    CHECK(r.at(0, "x") == 0.25);
    CHECK_THROWS_AS(r.at(0, "y"), DomainError);

    const auto back = report_from_json(json::parse(to_json(r).dump()));
    CHECK(back == r);

    const auto csv = report_csv(r);
    std::istringstream is(csv);
    std::vector<std::string> lines;
    for (std::string l; std::getline(is, l);)
        lines.push_back(l);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "# ccmcf distance config_hash=0123456789abcdef seed=7");
    CHECK(lines[1] == "spans,x,status");
    CHECK(lines[2] == "1,0.25,ok");
    CHECK(lines[3] == "2,nan,equalizer diverged; block 3");

    const auto dat = report_gnuplot(r);
    CHECK(dat.find("\n1 0.25\n") != std::string::npos);
    CHECK(dat.find("\n# 2 nan\n") != std::string::npos);

    const auto dir = scratch_dir("report");
    const auto written = emit_outputs(r, dir.string());
    CHECK(written.size() == 3);
    for (const char *ext : {".json", ".csv", ".dat"})
        CHECK(fs::exists(dir / (std::string("distance") + ext)));
    CHECK(slurp(dir / "distance.csv") == csv);
    const auto j = json::parse(slurp(dir / "distance.json"));
    CHECK(j.at("header") == "ccmcf distance config_hash=0123456789abcdef seed=7");
    CHECK(report_from_json(j) == r);
}

TEST_CASE("parallel_for visits every index once", "[harness]")
{
    for (int w : {1, 3, 8})
    {
        std::vector<std::atomic<int>> hits(37);
        parallel_for(hits.size(), w, [&](std::size_t i) { hits[i]++; });
        for (auto &h : hits)
            CHECK(h == 1);
    }
}

TEST_CASE("calibration file lookup", "[harness]")
{
    const auto dir = scratch_dir("cal");
    write_json(dir / "cal.json", json::parse(R"({"section_delay_scale": {"4": 1.2}})"));
    CHECK(calibrated_scale_from_file((dir / "cal.json").string(), 4) == 1.2);
    CHECK_FALSE(calibrated_scale_from_file((dir / "cal.json").string(), 8).has_value());
    CHECK_FALSE(calibrated_scale_from_file("", 4).has_value());
    write_json(dir / "other.json", json::parse(R"({"x": 1})"));
    CHECK_THROWS_AS(calibrated_scale_from_file((dir / "other.json").string(), 4), ConfigError);
    CHECK_THROWS_AS(calibrated_scale_from_file((dir / "none.json").string(), 4), ConfigError);

    const auto cal = calibrate_delay_scale(4, 20, Seed(3), 512);
    CHECK(cal.measured_ps == Approx(53.0).epsilon(1e-9));
    CHECK(cal.scale == Approx(std::sqrt(4.0 / 3.0)).epsilon(0.1));
}

TEST_CASE("one simulated point", "[harness][point]")
{
    auto cfg = small_config();
    cfg.run.modes = 4;
    cfg.link.modes = 4;
    cfg.run.log2_symbols = 15;
    cfg.link.sections_per_span = 50;
    const auto link = build_link(detail::link_for(cfg, 4), Seed(5));
    const auto dir = scratch_dir("point");
    const auto pm = simulate_point(cfg, link, Seed(5), 0, 1, (dir / "taps.bin").string());
    INFO("taps " << pm.tau_taps_ns << " channel " << pm.tau_channel_ns << " snr " << pm.snr_db);
    CHECK(pm.snr_db > 15.0);
    CHECK(pm.gmi.size() == 4);
    CHECK(pm.mean_gmi > 3.5);
    CHECK(pm.mean_gmi <= 4.688 + 1e-9);
    // the converged filter spreads over the same window as the channel
    CHECK(pm.tau_taps_ns == Approx(pm.tau_channel_ns).epsilon(0.15));
    CHECK(pm.sigma_channel_db == Approx(0.35 * 2.0).epsilon(0.5));
    CHECK(pm.rate.net_bps <= pm.rate.achievable_bps);
    const auto d = read_tap_dump((dir / "taps.bin").string());
    CHECK(d.n_out == 4);
    CHECK(d.sample_rate == 280e9);
}

TEST_CASE("distance sweep is deterministic and worker-independent", "[harness][sweep]")
{
    auto cfg = small_config();
    const auto a = run_distance_sweep(cfg);
    cfg.run.workers = 3;
    const auto b = run_distance_sweep(cfg);
    CHECK(a.rows.size() == 4);
    CHECK(a.failed() == 0);
    CHECK(a.columns.size() == 11);
    CHECK(a.rows == b.rows);
    CHECK(a.summary == b.summary);
    CHECK(a.config_hash == b.config_hash); // the worker count does not enter the hash
    for (const char *k : {"a_taps_ps_per_sqrt_km", "a_channel_ps_per_sqrt_km", "tau_exponent", "sigma_g_fit_db",
                          "k1_tau_m_taps_ns_mean", "k2_sigma_rms_channel_db_std", "points_failed"})
        CHECK(a.summary.count(k) == 1);
    CHECK(a.at(2, "length_km") == Approx(107.0));
    CHECK(a.summary.at("points_failed") == 0.0);
}

TEST_CASE("failing points are contained", "[harness][sweep]")
{
    auto cfg = small_config();
    cfg.rx.mu_train = 1e3;
    cfg.rx.divergence_threshold = 2.0;
    const auto r = run_distance_sweep(cfg);
    CHECK(r.failed() == r.rows.size());
    CHECK(std::isnan(r.at(0, "snr_db")));
    CHECK(r.at(0, "spans") == 1.0);
    CHECK(r.status[0].find("diverged") != std::string::npos);
    CHECK(r.summary.at("points_failed") == double(r.rows.size()));
    CHECK_FALSE(r.notes.empty());
}

TEST_CASE("stability sweep", "[harness][sweep]")
{
    auto cfg = small_config();
    cfg.run.stability_spans = 1;
    cfg.run.trials = 1;
    CHECK_THROWS_AS(run_stability_sweep(cfg), ConfigError);
    cfg.run.trials = 3;
    cfg.run.redraw = false;
    const auto same = run_stability_sweep(cfg);
    CHECK(same.rows.size() == 3);
    CHECK(same.summary.at("tau_m_taps_ns_std") == 0.0);
    // a single span has sigma_rms = sigma_g exactly, so the spread needs two
    cfg.run.stability_spans = 2;
    cfg.run.redraw = true;
    const auto fresh = run_stability_sweep(cfg);
    CHECK(fresh.summary.at("sigma_rms_channel_db_std") > 0.0);
}

TEST_CASE("wdm sweep totals", "[harness][sweep]")
{
    auto cfg = small_config();
    cfg.run.wdm_channels = 3;
    const auto r = run_wdm_sweep(cfg);
    REQUIRE(r.rows.size() == 4);
    CHECK(r.failed() == 0);
    CHECK(r.at(0, "slot") == 14.0);
    CHECK(r.at(3, "slot") == -1.0);
    CHECK(r.at(1, "frequency_thz") == Approx(193.7));
    double net = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        net += r.at(i, "net_tbps");
    CHECK(r.at(3, "net_tbps") == Approx(net));
    CHECK(r.summary.at("k1_extrapolated_net_tbps") == Approx(net / 3.0 * 31.0));
    CHECK(r.summary.at("band_thz") == Approx(4.65));
    CHECK(r.summary.at("gross_bound_tbps") == Approx(2 * 0.14 * 4.688).epsilon(1e-6));
}

TEST_CASE("command-line exit codes", "[harness][cli]")
{
    const auto dir = scratch_dir("cli");
    auto cfg = small_config();
    cfg.run.span_counts = {1};
    cfg.run.trials = 1;
    cfg.run.log2_symbols = 13;
    write_json(dir / "ok.json", to_json(cfg));
    auto bad = cfg;
    bad.rx.mu_train = 1e3;
    bad.rx.divergence_threshold = 2.0;
    write_json(dir / "diverge.json", to_json(bad));
    write_json(dir / "unknown.json", json::parse(R"({"run": {"nope": 1}})"));

    CHECK(run_sim("distance --config " + (dir / "ok.json").string() + " --out " + (dir / "out").string()) == 0);
    CHECK(fs::exists(dir / "out" / "distance.csv"));
    CHECK(fs::exists(dir / "out" / "distance.json"));
    CHECK(fs::exists(dir / "out" / "distance.dat"));
    CHECK(run_sim("distance --config " + (dir / "diverge.json").string() + " --out " + (dir / "bad").string()) == 2);
    CHECK(run_sim("distance --config " + (dir / "unknown.json").string()) == 1);
    CHECK(run_sim("distance --config " + (dir / "absent.json").string()) == 1);
    CHECK(run_sim("frobnicate") == 1);
    CHECK(run_sim("") == 1);
    CHECK(run_sim("--help") == 0);
}
