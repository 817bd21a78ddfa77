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

// ccmcf-sim: distance / wdm / stability sweeps and the calibration run.

#include <ccmcf/ccmcf.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace
{
    struct Options
    {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::string out;
        bool full = false;
        std::optional<int> workers;
    };

    ccmcf::ExperimentConfig resolve(const Options &o)
    {
        auto cfg = ccmcf::load_config(o.config);
        if (o.full)
        {
            ccmcf::apply_full_scale(cfg);
            std::cerr << "warning: --full runs 24 channels and the 96x24 equalizer on every slot; "
                         "expect hours of runtime\n";
        }
        if (o.seed)
            cfg.run.master_seed = *o.seed;
        if (!o.out.empty())
            cfg.output.dir = o.out;
        if (o.workers)
            cfg.run.workers = *o.workers;
        cfg.validate();
        return cfg;
    }

    int finish(const ccmcf::MetricsReport &r, const ccmcf::ExperimentConfig &cfg)
    {
        for (const auto &p : ccmcf::emit_outputs(r, cfg.output.dir))
            std::cout << "wrote " << p << "\n";
        for (const auto &[k, v] : r.summary)
            std::cout << "  " << k << " = " << v << "\n";
        for (const auto &n : r.notes)
            std::cout << "  note: " << n << "\n";
        for (std::size_t i = 0; i < r.status.size(); ++i)
            if (r.status[i] != "ok")
                std::cerr << "point " << i << " failed: " << r.status[i] << "\n";
        return r.failed() > 0 ? 2 : 0;
    }

    int calibrate(const ccmcf::ExperimentConfig &cfg, bool full)
    {
        namespace fs = std::filesystem;
        ccmcf::json table = ccmcf::json::object(), measured = ccmcf::json::object();
        const ccmcf::Seed seed = ccmcf::Seed(cfg.run.master_seed).child(99);
        for (int s : {2, 4, 8, 12, 24})
        {
            // large S self-averages; fewer draws keep the 24-mode run short
            const int draws = full ? 400 : (s <= 8 ? 400 : s <= 12 ? 100 : 40);
            const auto c = ccmcf::calibrate_delay_scale(s, draws, seed.child(std::uint64_t(s)), 1024, 280e9,
                                                        cfg.link.smd_coeff);
            std::cout << "modes " << s << ": scale " << c.scale << " (" << draws << " draws)\n";
            table[std::to_string(s)] = c.scale;
            measured[std::to_string(s)] = {{"draws", draws}, {"rms_width_ps", c.measured_ps}};
        }
        fs::create_directories(cfg.output.dir);
        const auto path = (fs::path(cfg.output.dir) / "calibration.json").string();
        std::ofstream os(path);
        if (!os)
            throw std::runtime_error("cannot write " + path);
        ccmcf::json j{{"header", "ccmcf calibration seed=" + std::to_string(cfg.run.master_seed)},
                      {"smd_coeff", cfg.link.smd_coeff},
                      {"section_delay_scale", table},
                      {"details", measured}};
        os << j.dump(2) << "\n";
        std::cout << "wrote " << path << "\n";
        return 0;
    }
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Coupled-core multicore fiber link and MIMO DSP simulator"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config, "JSON config file (defaults when omitted)");
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_flag("--full", o.full, "full scale: 24 channels, widely-linear 96x24 equalizer, all slots");
        sub->add_option("--workers", o.workers, "concurrent sweep points")->check(CLI::PositiveNumber);
    };
    auto *distance = app.add_subcommand("distance", "memory length and MDL versus span count");
    auto *wdm = app.add_subcommand("wdm", "per-slot rates over the WDM grid");
    auto *stability = app.add_subcommand("stability", "repeated realizations at a fixed distance");
    auto *cal = app.add_subcommand("calibrate", "Monte Carlo calibration of the section delay scale");
    for (auto *s : {distance, wdm, stability, cal})
        add_common(s);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try
    {
        const auto cfg = resolve(o);
        std::cout << "config hash " << ccmcf::hex64(ccmcf::config_hash(cfg)) << ", seed " << cfg.run.master_seed
                  << "\n";
        if (distance->parsed())
            return finish(ccmcf::run_distance_sweep(cfg), cfg);
        if (wdm->parsed())
            return finish(ccmcf::run_wdm_sweep(cfg), cfg);
        if (stability->parsed())
            return finish(ccmcf::run_stability_sweep(cfg), cfg);
        return calibrate(cfg, o.full);
    }
    catch (const ccmcf::ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
