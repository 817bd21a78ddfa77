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

#pragma once

#include "calibration.hpp"
#include "channel_model.hpp"
#include "core.hpp"
#include "metrics.hpp"
#include "random.hpp"
#include "rx_dsp.hpp"
#include "tx_dsp.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>

/*!SECTION
Experiment harness

Config-driven sweeps over the whole chain (distance, WDM slot, stability), a
small worker pool, and report emission. Every point draws from
Seed(master).child(sweep tag).child(...) so results do not depend on the
worker count or on scheduling.

Config keys can be overridden from the environment with
CCMCF_<SECTION>__<KEY>=<json value>, e.g. CCMCF_RUN__TRIALS=4 or
CCMCF_RX__MODE='"widely_linear"'. Values that do not parse as JSON are taken
as strings.
SECTION!*/

extern "C" char **environ;

namespace ccmcf
{
    using json = nlohmann::json;

    inline constexpr int config_schema_version = 1;

    struct TxConfig
    {
        double symbol_rate_hz = default_symbol_rate;
        double grid_hz = default_grid_hz;
        double entropy_bits = 4.688;
        double rolloff = 0.05;
        double pilot_rate = 1.0 / 64.0;
        int n_wdm = 31;
        int wdm_sps = 4;            // three-slot waveform rate
        double linewidth_hz = 10e3; // combined tx + LO; 0 disables phase noise
    };

    struct RunConfig
    {
        int modes = 4;
        int log2_symbols = 16;
        int trials = 10;
        std::uint64_t master_seed = 1;
        std::vector<int> span_counts{1, 4, 8, 19};
        int stability_spans = 8;
        bool redraw = true;           // stability: fresh link per trial
        int wdm_channels = 3;         // slots evaluated, centred in the n_wdm grid
        std::vector<int> wdm_span_counts{1, 19};
        int mdl_curve_trials = 200;
        std::string calibration_file; // optional, written by `calibrate`
        int workers = 1;
    };

    struct OutputConfig
    {
        std::string dir = "results";
        bool tap_dumps = false;
    };

    struct ExperimentConfig
    {
        int schema_version = config_schema_version;
        LinkConfig link;
        TxConfig tx;
        EqualizerConfig rx;
        RunConfig run;
        OutputConfig output;

        std::size_t symbols() const { return std::size_t(1) << run.log2_symbols; }

        void validate() const
        {
            if (schema_version != config_schema_version)
                throw ConfigError("config: unsupported schema_version " + std::to_string(schema_version));
            LinkConfig l = link;
            l.modes = run.modes;
            l.validate();
            rx.validate();
            if (run.log2_symbols < 8 || run.log2_symbols > 24)
                throw ConfigError("run: log2_symbols must be in [8, 24]");
            if (symbols() * std::size_t(rx.sps) < rx.fft_size)
                throw ConfigError("run: frame shorter than the equalizer FFT");
            if (run.trials < 1)
                throw ConfigError("run: trials must be >= 1");
            if (run.span_counts.empty() || run.wdm_span_counts.empty())
                throw ConfigError("run: span lists must not be empty");
            for (int k : run.span_counts)
                if (k < 1)
                    throw ConfigError("run: span counts must be >= 1");
            if (run.modes % 2 != 0)
                throw ConfigError("run: modes must be even (two polarizations per core)");
            if (run.wdm_channels < 1 || run.wdm_channels > tx.n_wdm)
                throw ConfigError("run: wdm_channels must be in [1, n_wdm]");
            if (tx.wdm_sps < 3 || tx.wdm_sps % rx.sps != 0)
                throw ConfigError("tx: wdm_sps must be >= 3 and a multiple of rx.sps");
            if (!(tx.pilot_rate > 0.0) || tx.pilot_rate > 1.0)
                throw ConfigError("tx: pilot_rate must be in (0, 1]");
            check_rolloff(tx.symbol_rate_hz, tx.rolloff, tx.grid_hz);
            if (run.workers < 1)
                throw ConfigError("run: workers must be >= 1");
        }
    };

    // ---- JSON ---------------------------------------------------------------

    namespace detail
    {
        // Reads `key` into `v` when present; records it as consumed.
        template <typename T>
        void take(const json &j, const char *key, T &v, std::vector<std::string> &seen)
        {
            seen.emplace_back(key);
            if (!j.contains(key))
                return;
            try
            {
                v = j.at(key).get<T>();
            }
            catch (const json::exception &e)
            {
                throw ConfigError(std::string("config key '") + key + "': " + e.what());
            }
        }

        inline void reject_unknown(const json &j, const std::string &section, const std::vector<std::string> &seen)
        {
            for (const auto &[k, _] : j.items())
                if (std::find(seen.begin(), seen.end(), k) == seen.end())
                    throw ConfigError("config: unknown key '" + section + (section.empty() ? "" : ".") + k + "'");
        }

        inline std::string mode_name(EqualizerMode m)
        {
            return m == EqualizerMode::widely_linear ? "widely_linear" : "strictly_linear";
        }

        inline EqualizerMode mode_from(const std::string &s)
        {
            if (s == "strictly_linear")
                return EqualizerMode::strictly_linear;
            if (s == "widely_linear")
                return EqualizerMode::widely_linear;
            throw ConfigError("rx.mode must be strictly_linear or widely_linear, got '" + s + "'");
        }
    } // namespace detail

    inline json to_json(const ExperimentConfig &c)
    {
        json j;
        j["schema_version"] = c.schema_version;
        const auto &l = c.link;
        j["link"] = {{"span_length_km", l.span_length_km},
                     {"sections_per_span", l.sections_per_span},
                     {"smd_coeff", l.smd_coeff},
                     {"section_delay_scale", l.section_delay_scale},
                     {"fiber_loss_db_per_km", l.fiber_loss_db_per_km},
                     {"span_loss_db", l.span_loss_db},
                     {"sigma_g_db", l.sigma_g_db},
                     {"amp_gain_db", l.amp_gain_db ? json(*l.amp_gain_db) : json(nullptr)},
                     {"noise_figure_db", l.noise_figure_db},
                     {"noiseless", l.noiseless},
                     {"beta2", l.beta2},
                     {"loop_reuse", l.loop_reuse},
                     {"core_skew_ps", l.core_skew_ps},
                     {"channel_launch_power_dbm", l.channel_launch_power_dbm}};
        const auto &t = c.tx;
        j["tx"] = {{"symbol_rate_hz", t.symbol_rate_hz}, {"grid_hz", t.grid_hz},         {"entropy_bits", t.entropy_bits},
                   {"rolloff", t.rolloff},               {"pilot_rate", t.pilot_rate},    {"n_wdm", t.n_wdm},
                   {"wdm_sps", t.wdm_sps},               {"linewidth_hz", t.linewidth_hz}};
        const auto &r = c.rx;
        j["rx"] = {{"fft_size", r.fft_size},
                   {"sps", r.sps},
                   {"mode", detail::mode_name(r.mode)},
                   {"mu_train", r.mu_train},
                   {"mu", r.mu},
                   {"mu_final", r.mu_final},
                   {"training_fraction", r.training_fraction},
                   {"training_passes", r.training_passes},
                   {"frame_passes", r.frame_passes},
                   {"constrained", r.constrained},
                   {"power_smoothing", r.power_smoothing},
                   {"divergence_threshold", r.divergence_threshold},
                   {"cpr_in_loop", r.cpr_in_loop}};
        const auto &u = c.run;
        j["run"] = {{"modes", u.modes},
                    {"log2_symbols", u.log2_symbols},
                    {"trials", u.trials},
                    {"master_seed", u.master_seed},
                    {"span_counts", u.span_counts},
                    {"stability_spans", u.stability_spans},
                    {"redraw", u.redraw},
                    {"wdm_channels", u.wdm_channels},
                    {"wdm_span_counts", u.wdm_span_counts},
                    {"mdl_curve_trials", u.mdl_curve_trials},
                    {"calibration_file", u.calibration_file},
                    {"workers", u.workers}};
        j["output"] = {{"dir", c.output.dir}, {"tap_dumps", c.output.tap_dumps}};
        return j;
    }

    inline ExperimentConfig config_from_json(const json &j)
    {
        if (!j.is_object())
            throw ConfigError("config: top level must be an object");
        ExperimentConfig c;
        std::vector<std::string> seen;
        detail::take(j, "schema_version", c.schema_version, seen);
        seen.insert(seen.end(), {"link", "tx", "rx", "run", "output"});
        detail::reject_unknown(j, "", seen);

        auto section = [&](const char *name) -> json {
            if (!j.contains(name))
                return json::object();
            if (!j.at(name).is_object())
                throw ConfigError(std::string("config: section '") + name + "' must be an object");
            return j.at(name);
        };

        {
            const json s = section("link");
            std::vector<std::string> k;
            auto &l = c.link;
            detail::take(s, "span_length_km", l.span_length_km, k);
            detail::take(s, "sections_per_span", l.sections_per_span, k);
            detail::take(s, "smd_coeff", l.smd_coeff, k);
            detail::take(s, "section_delay_scale", l.section_delay_scale, k);
            detail::take(s, "fiber_loss_db_per_km", l.fiber_loss_db_per_km, k);
            detail::take(s, "span_loss_db", l.span_loss_db, k);
            detail::take(s, "sigma_g_db", l.sigma_g_db, k);
            k.emplace_back("amp_gain_db");
            if (s.contains("amp_gain_db") && !s.at("amp_gain_db").is_null())
                l.amp_gain_db = s.at("amp_gain_db").get<double>();
            detail::take(s, "noise_figure_db", l.noise_figure_db, k);
            detail::take(s, "noiseless", l.noiseless, k);
            detail::take(s, "beta2", l.beta2, k);
            detail::take(s, "loop_reuse", l.loop_reuse, k);
            detail::take(s, "core_skew_ps", l.core_skew_ps, k);
            detail::take(s, "channel_launch_power_dbm", l.channel_launch_power_dbm, k);
            detail::reject_unknown(s, "link", k);
        }
        {
            const json s = section("tx");
            std::vector<std::string> k;
            auto &t = c.tx;
            detail::take(s, "symbol_rate_hz", t.symbol_rate_hz, k);
            detail::take(s, "grid_hz", t.grid_hz, k);
            detail::take(s, "entropy_bits", t.entropy_bits, k);
            detail::take(s, "rolloff", t.rolloff, k);
            detail::take(s, "pilot_rate", t.pilot_rate, k);
            detail::take(s, "n_wdm", t.n_wdm, k);
            detail::take(s, "wdm_sps", t.wdm_sps, k);
            detail::take(s, "linewidth_hz", t.linewidth_hz, k);
            detail::reject_unknown(s, "tx", k);
        }
        {
            const json s = section("rx");
            std::vector<std::string> k;
            auto &r = c.rx;
            detail::take(s, "fft_size", r.fft_size, k);
            detail::take(s, "sps", r.sps, k);
            std::string mode = detail::mode_name(r.mode);
            detail::take(s, "mode", mode, k);
            r.mode = detail::mode_from(mode);
            detail::take(s, "mu_train", r.mu_train, k);
            detail::take(s, "mu", r.mu, k);
            detail::take(s, "mu_final", r.mu_final, k);
            detail::take(s, "training_fraction", r.training_fraction, k);
            detail::take(s, "training_passes", r.training_passes, k);
            detail::take(s, "frame_passes", r.frame_passes, k);
            detail::take(s, "constrained", r.constrained, k);
            detail::take(s, "power_smoothing", r.power_smoothing, k);
            detail::take(s, "divergence_threshold", r.divergence_threshold, k);
            detail::take(s, "cpr_in_loop", r.cpr_in_loop, k);
            detail::reject_unknown(s, "rx", k);
        }
        {
            const json s = section("run");
            std::vector<std::string> k;
            auto &u = c.run;
            detail::take(s, "modes", u.modes, k);
            detail::take(s, "log2_symbols", u.log2_symbols, k);
            detail::take(s, "trials", u.trials, k);
            detail::take(s, "master_seed", u.master_seed, k);
            detail::take(s, "span_counts", u.span_counts, k);
            detail::take(s, "stability_spans", u.stability_spans, k);
            detail::take(s, "redraw", u.redraw, k);
            detail::take(s, "wdm_channels", u.wdm_channels, k);
            detail::take(s, "wdm_span_counts", u.wdm_span_counts, k);
            detail::take(s, "mdl_curve_trials", u.mdl_curve_trials, k);
            detail::take(s, "calibration_file", u.calibration_file, k);
            detail::take(s, "workers", u.workers, k);
            detail::reject_unknown(s, "run", k);
        }
        {
            const json s = section("output");
            std::vector<std::string> k;
            detail::take(s, "dir", c.output.dir, k);
            detail::take(s, "tap_dumps", c.output.tap_dumps, k);
            detail::reject_unknown(s, "output", k);
        }
        c.link.modes = c.run.modes;
        return c;
    }

    /// Applies CCMCF_<SECTION>__<KEY> variables from `env` (name -> value) on top of `j`.
    inline void apply_env_overrides(json &j, const std::map<std::string, std::string> &env)
    {
        const std::string prefix = "CCMCF_";
        for (const auto &[name, value] : env)
        {
            if (name.rfind(prefix, 0) != 0)
                continue;
            const auto rest = name.substr(prefix.size());
            const auto sep = rest.find("__");
            if (sep == std::string::npos)
                continue;
            auto lower = [](std::string s) {
                for (auto &ch : s)
                    ch = char(std::tolower(static_cast<unsigned char>(ch)));
                return s;
            };
            const auto section = lower(rest.substr(0, sep));
            const auto key = lower(rest.substr(sep + 2));
            json v;
            try
            {
                v = json::parse(value);
            }
            catch (const json::parse_error &)
            {
                v = value;
            }
            j[section][key] = v;
        }
    }

    inline std::map<std::string, std::string> process_environment()
    {
        std::map<std::string, std::string> env;
        for (char **e = ::environ; e && *e; ++e)
        {
            const std::string s(*e);
            const auto eq = s.find('=');
            if (eq != std::string::npos)
                env.emplace(s.substr(0, eq), s.substr(eq + 1));
        }
        return env;
    }

    /// Loads a config file (empty path: defaults) and applies environment overrides.
    inline ExperimentConfig load_config(const std::string &path,
                                        const std::map<std::string, std::string> &env = process_environment())
    {
        json j = json::object();
        if (!path.empty())
        {
            std::ifstream is(path);
            if (!is)
                throw ConfigError("cannot open config " + path);
            try
            {
                j = json::parse(is);
            }
            catch (const json::parse_error &e)
            {
                throw ConfigError("config " + path + ": " + e.what());
            }
        }
        apply_env_overrides(j, env);
        auto c = config_from_json(j);
        c.validate();
        return c;
    }

    /// Full-scale settings: 24 channels through the 96 x 24 widely-linear equalizer, all 31 slots.
    inline void apply_full_scale(ExperimentConfig &c)
    {
        c.run.modes = 24;
        c.link.modes = 24;
        c.rx.mode = EqualizerMode::widely_linear;
        c.run.wdm_channels = c.tx.n_wdm;
    }

    /// FNV-1a over the canonical (sorted-key) JSON dump, leaving out settings that cannot change
    /// results (worker count, output directory).
    inline std::uint64_t config_hash(const ExperimentConfig &c)
    {
        json j = to_json(c);
        j["run"].erase("workers");
        j["output"].erase("dir");
        const auto s = j.dump();
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char ch : s)
        {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    inline std::string hex64(std::uint64_t v)
    {
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << v;
        return os.str();
    }

    // ---- Reports ------------------------------------------------------------

    /// A table of numeric rows plus summary scalars. Failed points keep NaN values and a status message.
    struct MetricsReport
    {
        std::string kind;
        std::string config_hash;
        std::uint64_t seed = 0;
        std::vector<std::string> columns;
        std::vector<std::vector<double>> rows;
        std::vector<std::string> status; // "ok" or the error text, one per row
        std::map<std::string, double> summary;
        std::vector<std::string> notes;

        std::size_t failed() const
        {
            return std::size_t(std::count_if(status.begin(), status.end(), [](const auto &s) { return s != "ok"; }));
        }

        double at(std::size_t row, const std::string &col) const
        {
            const auto it = std::find(columns.begin(), columns.end(), col);
            if (it == columns.end())
                throw DomainError("report: no column " + col);
            return rows[row][std::size_t(it - columns.begin())];
        }

        bool operator==(const MetricsReport &o) const
        {
            auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
            if (kind != o.kind || config_hash != o.config_hash || seed != o.seed || columns != o.columns ||
                status != o.status || notes != o.notes || rows.size() != o.rows.size() ||
                summary.size() != o.summary.size())
                return false;
            for (std::size_t r = 0; r < rows.size(); ++r)
            {
                if (rows[r].size() != o.rows[r].size())
                    return false;
                for (std::size_t c = 0; c < rows[r].size(); ++c)
                    if (!same(rows[r][c], o.rows[r][c]))
                        return false;
            }
            for (const auto &[k, v] : summary)
            {
                const auto it = o.summary.find(k);
                if (it == o.summary.end() || !same(v, it->second))
                    return false;
            }
            return true;
        }
    };

    namespace detail
    {
        inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
        inline double number_from(const json &j) { return j.is_null() ? std::nan("") : j.get<double>(); }

        inline std::string format_number(double v)
        {
            if (std::isnan(v))
                return "nan";
            std::ostringstream os;
            os << std::setprecision(17) << v;
            return os.str();
        }
    } // namespace detail

    inline json to_json(const MetricsReport &r)
    {
        json j;
        j["kind"] = r.kind;
        j["config_hash"] = r.config_hash;
        j["seed"] = r.seed;
        j["columns"] = r.columns;
        json rows = json::array();
        for (const auto &row : r.rows)
        {
            json jr = json::array();
            for (double v : row)
                jr.push_back(detail::number(v));
            rows.push_back(jr);
        }
        j["rows"] = rows;
        j["status"] = r.status;
        json s = json::object();
        for (const auto &[k, v] : r.summary)
            s[k] = detail::number(v);
        j["summary"] = s;
        j["notes"] = r.notes;
        return j;
    }

    inline MetricsReport report_from_json(const json &j)
    {
        MetricsReport r;
        r.kind = j.at("kind").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto &jr : j.at("rows"))
        {
            std::vector<double> row;
            for (const auto &v : jr)
                row.push_back(detail::number_from(v));
            r.rows.push_back(std::move(row));
        }
        r.status = j.at("status").get<std::vector<std::string>>();
        for (const auto &[k, v] : j.at("summary").items())
            r.summary[k] = detail::number_from(v);
        r.notes = j.at("notes").get<std::vector<std::string>>();
        return r;
    }

    inline std::string report_header(const MetricsReport &r)
    {
        return "ccmcf " + r.kind + " config_hash=" + r.config_hash + " seed=" + std::to_string(r.seed);
    }

    inline std::string report_csv(const MetricsReport &r)
    {
        std::ostringstream os;
        os << "# " << report_header(r) << "\n";
        for (std::size_t c = 0; c < r.columns.size(); ++c)
            os << r.columns[c] << ",";
        os << "status\n";
        for (std::size_t i = 0; i < r.rows.size(); ++i)
        {
            for (double v : r.rows[i])
                os << detail::format_number(v) << ",";
            std::string st = r.status[i];
            std::replace(st.begin(), st.end(), ',', ';');
            std::replace(st.begin(), st.end(), '\n', ' ');
            os << st << "\n";
        }
        return os.str();
    }

    // whitespace-separated, '#' comments; failed rows are commented out
    inline std::string report_gnuplot(const MetricsReport &r)
    {
        std::ostringstream os;
        os << "# " << report_header(r) << "\n# ";
        for (const auto &c : r.columns)
            os << c << " ";
        os << "\n";
        for (std::size_t i = 0; i < r.rows.size(); ++i)
        {
            if (r.status[i] != "ok")
                os << "# ";
            for (std::size_t c = 0; c < r.rows[i].size(); ++c)
                os << (c ? " " : "") << detail::format_number(r.rows[i][c]);
            os << "\n";
        }
        return os.str();
    }

    /// Writes <dir>/<kind>.json, .csv and .dat. Returns the paths written.
    inline std::vector<std::string> emit_outputs(const MetricsReport &r, const std::string &dir)
    {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec)
            throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
        std::vector<std::string> written;
        auto put = [&](const std::string &name, const std::string &body) {
            const auto path = (fs::path(dir) / name).string();
            std::ofstream os(path, std::ios::binary);
            if (!os)
                throw std::runtime_error("cannot write " + path);
            os << body;
            if (!os)
                throw std::runtime_error("write failed: " + path);
            written.push_back(path);
        };
        json j = to_json(r);
        j["header"] = report_header(r);
        put(r.kind + ".json", j.dump(2) + "\n");
        put(r.kind + ".csv", report_csv(r));
        put(r.kind + ".dat", report_gnuplot(r));
        return written;
    }

    // ---- Worker pool --------------------------------------------------------

    /// Runs task(i) for i in [0, n) on up to `workers` threads. Exceptions stay inside the task.
    inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)> &task)
    {
        const auto w = std::size_t(std::max(1, workers));
        if (w == 1 || n <= 1)
        {
            for (std::size_t i = 0; i < n; ++i)
                task(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(w, n); ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++)
                    task(i);
            });
        for (auto &th : pool)
            th.join();
    }

    // ---- Calibration --------------------------------------------------------

    struct DelayScaleCalibration
    {
        int modes = 0;
        double scale = 0.0;
        double measured_ps = 0.0; // ensemble-mean rms width with the returned scale
        int draws = 0;
    };

    /// Monte Carlo delay-scale calibration: draws 100-section, 100-km links with unit scale and
    /// returns the factor that brings the ensemble-mean rms impulse width to smd * sqrt(100 km).
    /// Widths are taken in a 2-sps band and the back-to-back pulse width is removed in quadrature,
    /// which leaves a quantity linear in the scale.
    inline DelayScaleCalibration calibrate_delay_scale(int modes, int draws, const Seed &seed,
                                                       std::size_t bins = 1024, double sample_rate = 280e9,
                                                       double smd_coeff = 5.3)
    {
        LinkConfig cfg;
        cfg.modes = modes;
        cfg.spans = 1;
        cfg.span_length_km = 100.0;
        cfg.sections_per_span = 100;
        cfg.smd_coeff = smd_coeff;
        cfg.section_delay_scale = 1.0;
        cfg.sigma_g_db = 0.0;
        cfg.span_loss_db = cfg.fiber_loss_db_per_km * cfg.span_length_km;
        const auto grid = fft_bin_frequencies(bins, sample_rate);
        const double target_ps = smd_coeff * std::sqrt(100.0);
        const double dt_ps = 1e12 / sample_rate;
        const auto weight = raised_cosine_weight(grid, sample_rate / 2.0, 0.05);
        LinkRealization b2b;
        b2b.modes = modes;
        const double w0 = rms_width_samples(impulse_power_profile(link_transfer(b2b, grid), weight));

        double acc = 0.0;
        for (int d = 0; d < draws; ++d)
        {
            const auto link = build_link(cfg, seed.child(std::uint64_t(d)));
            const double w = rms_width_samples(impulse_power_profile(link_transfer(link, grid, 0.0, false), weight));
            acc += std::sqrt(std::max(w * w - w0 * w0, 0.0)) * dt_ps;
        }
        DelayScaleCalibration out;
        out.modes = modes;
        out.draws = draws;
        const double unit = acc / double(draws);
        out.scale = target_ps / unit;
        out.measured_ps = unit * out.scale;
        return out;
    }

    /// Reads {"section_delay_scale": {"<modes>": value}} from a calibration file.
    inline std::optional<double> calibrated_scale_from_file(const std::string &path, int modes)
    {
        if (path.empty())
            return std::nullopt;
        std::ifstream is(path);
        if (!is)
            throw ConfigError("cannot open calibration file " + path);
        const json j = json::parse(is, nullptr, false);
        if (j.is_discarded() || !j.contains("section_delay_scale"))
            throw ConfigError("calibration file " + path + " has no section_delay_scale table");
        const auto key = std::to_string(modes);
        const auto &t = j.at("section_delay_scale");
        if (!t.contains(key))
            return std::nullopt;
        return t.at(key).get<double>();
    }

    // ---- One simulated point -------------------------------------------------

    struct PointMetrics
    {
        double tau_taps_ns = std::nan("");
        double tau_channel_ns = std::nan("");
        double sigma_taps_db = std::nan("");
        double sigma_channel_db = std::nan("");
        double snr_db = std::nan("");
        std::vector<double> gmi; // per spatial channel
        double mean_gmi = std::nan("");
        RateResult rate;
    };

    namespace detail
    {
        inline LinkConfig link_for(const ExperimentConfig &cfg, int spans)
        {
            LinkConfig l = cfg.link;
            l.modes = cfg.run.modes;
            l.spans = spans;
            if (l.section_delay_scale <= 0.0)
                if (auto s = calibrated_scale_from_file(cfg.run.calibration_file, l.modes))
                    l.section_delay_scale = *s;
            return l;
        }

        // In-band bins (|f| below the Nyquist edge of the pulse) of an n-point grid.
        inline std::vector<std::size_t> inband_bins(std::span<const double> grid, double symbol_rate, double rolloff)
        {
            std::vector<std::size_t> bins;
            for (std::size_t k = 0; k < grid.size(); ++k)
                if (std::abs(grid[k]) <= 0.5 * symbol_rate * (1.0 - rolloff))
                    bins.push_back(k);
            return bins;
        }
    } // namespace detail

    /// Transmit, propagate, receive and evaluate one link realization.
    /// `slot` / `slots` place the SUT in the WDM grid; slots == 1 runs a single wavelength at rx.sps.
    inline PointMetrics simulate_point(const ExperimentConfig &cfg, const LinkRealization &link, const Seed &seed,
                                       std::size_t slot = 0, std::size_t slots = 1,
                                       const std::string &tap_dump_path = {})
    {
        const auto c = mb_shape(cfg.tx.entropy_bits);
        const auto s = std::size_t(cfg.run.modes);
        const std::size_t m = cfg.symbols();
        const double rs = cfg.tx.symbol_rate_hz;
        const auto frame = draw_frame(seed, c, s, m, cfg.tx.pilot_rate, rs);

        const bool wdm = slots > 1;
        const int tx_sps = wdm ? cfg.tx.wdm_sps : cfg.rx.sps;
        auto wave = rrc_modulate(frame, tx_sps, cfg.tx.rolloff, PulseNormalization::unit_power, cfg.tx.grid_hz);
        double offset = 0.0;
        if (wdm)
        {
            WdmOptions wo;
            wo.grid_hz = cfg.tx.grid_hz;
            wo.symbol_rate = rs;
            wo.rolloff = cfg.tx.rolloff;
            const auto neigh = slot_neighbour_offsets(slot, slots, cfg.tx.grid_hz);
            wave = wdm_assemble(wave, std::span<const double>(neigh), wo, seed);
            offset = wdm_slot_frequency(slot, slots, cfg.tx.grid_hz) - carrier_hz;
        }
        apply_phase_noise(wave, cfg.tx.linewidth_hz, seed);

        ApplyLinkOptions lo;
        lo.frequency_offset_hz = offset;
        auto rx = apply_link(wave, link, seed, lo);
        rx = cd_compensate(rx, link.beta2, link.total_length_km);
        rrc_filter_inplace(rx, rs, cfg.tx.rolloff);
        if (tx_sps != cfg.rx.sps)
        {
            rx = spectral_resample(rx, m * std::size_t(cfg.rx.sps));
        }

        const auto lag = find_frame_offset(rx, frame, cfg.rx.sps);
        rx = circular_advance(rx, lag * std::size_t(cfg.rx.sps));

        const auto eq = fd_mimo_equalize(rx, frame, c, cfg.rx);
        PointMetrics pm;

        const double fs = rs * cfg.rx.sps;
        const auto grid = fft_bin_frequencies(cfg.rx.fft_size, fs);
        const auto band = raised_cosine_weight(grid, rs, cfg.tx.rolloff);
        const double dt = 1.0 / fs;
        pm.tau_taps_ns = memory_length(tap_power_profile(eq.state, band), dt) * 1e9;
        const auto h = link_transfer(link, grid, offset, false);
        pm.tau_channel_ns = memory_length(impulse_power_profile(h, band), dt) * 1e9;
        const auto bins = detail::inband_bins(grid, rs, cfg.tx.rolloff);
        pm.sigma_channel_db = rms_mdl(h, bins).sigma_rms_db;
        pm.sigma_taps_db = rms_mdl(equalizer_response(eq.state, bins, fs)).sigma_rms_db;

        double snr = 0.0;
        for (double v : eq.residual_snr_db)
            snr += v;
        pm.snr_db = snr / double(s);

        const auto use = payload_mask(eq, frame);
        for (std::size_t ch = 0; ch < s; ++ch)
        {
            std::vector<int> idx;
            std::vector<cplx> y;
            for (std::size_t k = 0; k < m; ++k)
                if (use[k])
                {
                    idx.push_back(frame.indices[ch][k]);
                    y.push_back(eq.symbols[ch][k]);
                }
            pm.gmi.push_back(gmi(idx, y, c));
        }
        double g = 0.0;
        for (double v : pm.gmi)
            g += v;
        pm.mean_gmi = g / double(s);
        pm.rate = net_rate(pm.gmi, rs, c.entropy_2d);
        if (!tap_dump_path.empty())
            write_tap_dump(tap_dump_path, eq.state, fs);
        return pm;
    }

    // ---- Sweeps -------------------------------------------------------------

    namespace sweep_tag
    {
        inline constexpr std::uint64_t distance = 101;
        inline constexpr std::uint64_t wdm = 102;
        inline constexpr std::uint64_t stability = 103;
        inline constexpr std::uint64_t mdl_curve = 104;
    } // namespace sweep_tag

    namespace detail
    {
        inline std::vector<double> point_row(double a, double b, double c, const PointMetrics &pm)
        {
            return {a,
                    b,
                    c,
                    pm.tau_taps_ns,
                    pm.tau_channel_ns,
                    pm.sigma_taps_db,
                    pm.sigma_channel_db,
                    pm.snr_db,
                    pm.mean_gmi,
                    pm.rate.achievable_bps * 1e-12,
                    pm.rate.net_bps * 1e-12};
        }

        inline const std::vector<std::string> metric_columns{"tau_m_taps_ns",   "tau_m_channel_ns", "sigma_rms_taps_db",
                                                             "sigma_rms_channel_db", "snr_db",       "gmi_bits",
                                                             "achievable_tbps", "net_tbps"};

        inline std::vector<double> nan_row(std::size_t n) { return std::vector<double>(n, std::nan("")); }

        inline std::string tap_path(const ExperimentConfig &cfg, const std::string &name)
        {
            if (!cfg.output.tap_dumps)
                return {};
            std::filesystem::create_directories(cfg.output.dir);
            return (std::filesystem::path(cfg.output.dir) / name).string();
        }

        inline void mean_std(const MetricsReport &r, const std::string &col, const std::string &prefix,
                             std::map<std::string, double> &out)
        {
            std::vector<double> v;
            for (std::size_t i = 0; i < r.rows.size(); ++i)
                if (r.status[i] == "ok")
                    v.push_back(r.at(i, col));
            if (v.empty())
                return;
            const double n = double(v.size());
            double mean = 0.0, ss = 0.0;
            for (double x : v)
                mean += x / n;
            for (double x : v)
                ss += sqr(x - mean);
            out[prefix + "_mean"] = mean;
            out[prefix + "_std"] = v.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        }
    } // namespace detail

    /// One row per (span count, trial); fitted a (ps/sqrt(km)), power-law exponent and sigma_g in the summary.
    inline MetricsReport run_distance_sweep(const ExperimentConfig &cfg)
    {
        cfg.validate();
        MetricsReport r;
        r.kind = "distance";
        r.config_hash = hex64(config_hash(cfg));
        r.seed = cfg.run.master_seed;
        r.columns = {"spans", "length_km", "trial"};
        r.columns.insert(r.columns.end(), detail::metric_columns.begin(), detail::metric_columns.end());

        struct Job
        {
            int spans, trial;
        };
        std::vector<Job> jobs;
        for (int k : cfg.run.span_counts)
            for (int t = 0; t < cfg.run.trials; ++t)
                jobs.push_back({k, t});
        r.rows.resize(jobs.size());
        r.status.resize(jobs.size());
        const Seed base = Seed(cfg.run.master_seed).child(sweep_tag::distance);

        parallel_for(jobs.size(), cfg.run.workers, [&](std::size_t i) {
            const auto [k, t] = jobs[i];
            const double len = k * cfg.link.span_length_km;
            try
            {
                const Seed ps = base.child(std::uint64_t(k)).child(std::uint64_t(t));
                const auto link = build_link(detail::link_for(cfg, k), ps);
                const auto pm = simulate_point(cfg, link, ps, 0, 1,
                                               detail::tap_path(cfg, "taps_distance_" + std::to_string(k) + "_" +
                                                                         std::to_string(t) + ".bin"));
                r.rows[i] = detail::point_row(k, len, t, pm);
                r.status[i] = "ok";
            }
            catch (const std::exception &e)
            {
                auto row = detail::nan_row(r.columns.size());
                row[0] = k;
                row[1] = len;
                row[2] = t;
                r.rows[i] = row;
                r.status[i] = e.what();
            }
        });

        // fits over successful rows
        std::vector<std::pair<double, double>> tau_pts, tau_ch_pts;
        std::vector<std::pair<int, double>> mdl_pts;
        for (std::size_t i = 0; i < r.rows.size(); ++i)
        {
            if (r.status[i] != "ok")
                continue;
            const double l = r.at(i, "length_km");
            tau_pts.emplace_back(l, r.at(i, "tau_m_taps_ns") * 1e3);
            tau_ch_pts.emplace_back(l, r.at(i, "tau_m_channel_ns") * 1e3);
            mdl_pts.emplace_back(int(r.at(i, "spans")), r.at(i, "sigma_rms_channel_db"));
        }
        auto try_fit = [&](const std::string &name, auto &&fn) {
            try
            {
                fn();
            }
            catch (const std::exception &e)
            {
                r.notes.push_back(name + ": " + e.what());
            }
        };
        try_fit("sqrt fit", [&] {
            r.summary["a_taps_ps_per_sqrt_km"] = fit_sqrt_law(tau_pts);
            r.summary["a_channel_ps_per_sqrt_km"] = fit_sqrt_law(tau_ch_pts);
        });
        try_fit("power-law fit", [&] {
            const auto f = fit_power_law(tau_pts);
            r.summary["tau_exponent"] = f.exponent;
            r.summary["tau_r_squared"] = f.r_squared;
        });
        try_fit("mdl fit", [&] {
            std::vector<int> ks = cfg.run.span_counts;
            std::sort(ks.begin(), ks.end());
            ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
            std::vector<double> grid;
            for (int i = 0; i <= 30; ++i)
                grid.push_back(0.05 * i);
            const auto curve = MdlAccumulationCurve::build(cfg.run.modes, ks, grid, cfg.run.mdl_curve_trials,
                                                           Seed(cfg.run.master_seed).child(sweep_tag::mdl_curve));
            const auto fit = fit_mdl_per_span(mdl_pts, curve, 1.5);
            r.summary["sigma_g_fit_db"] = fit.sigma_g_db;
            if (fit.non_monotone)
                r.notes.push_back("sigma_rms decreases with distance; sigma_g fit flagged");
        });
        for (int k : cfg.run.span_counts)
        {
            MetricsReport sub = r;
            sub.rows.clear();
            sub.status.clear();
            for (std::size_t i = 0; i < r.rows.size(); ++i)
                if (int(r.at(i, "spans")) == k)
                {
                    sub.rows.push_back(r.rows[i]);
                    sub.status.push_back(r.status[i]);
                }
            const auto p = "k" + std::to_string(k) + "_";
            detail::mean_std(sub, "tau_m_taps_ns", p + "tau_m_taps_ns", r.summary);
            detail::mean_std(sub, "sigma_rms_channel_db", p + "sigma_rms_channel_db", r.summary);
        }
        r.summary["points_failed"] = double(r.failed());
        return r;
    }

    /// One row per (span count, slot) over the centred run.wdm_channels slots of the n_wdm grid, then a totals
    /// row per span count; the summary extrapolates the per-slot mean to all n_wdm slots.
    inline MetricsReport run_wdm_sweep(const ExperimentConfig &cfg)
    {
        cfg.validate();
        MetricsReport r;
        r.kind = "wdm";
        r.config_hash = hex64(config_hash(cfg));
        r.seed = cfg.run.master_seed;
        r.columns = {"spans", "slot", "frequency_thz"};
        r.columns.insert(r.columns.end(), detail::metric_columns.begin(), detail::metric_columns.end());

        const auto n_slots = std::size_t(cfg.tx.n_wdm);
        const auto n_eval = std::size_t(cfg.run.wdm_channels);
        const std::size_t first = (n_slots - n_eval) / 2;
        struct Job
        {
            int spans;
            std::size_t slot;
        };
        std::vector<Job> jobs;
        for (int k : cfg.run.wdm_span_counts)
            for (std::size_t i = 0; i < n_eval; ++i)
                jobs.push_back({k, first + i});
        std::vector<std::vector<double>> rows(jobs.size());
        std::vector<std::string> status(jobs.size());
        const Seed base = Seed(cfg.run.master_seed).child(sweep_tag::wdm);

        parallel_for(jobs.size(), cfg.run.workers, [&](std::size_t i) {
            const auto [k, slot] = jobs[i];
            const double f_thz = wdm_slot_frequency(slot, n_slots, cfg.tx.grid_hz) * 1e-12;
            try
            {
                // the same fiber for every slot of a span count
                const auto link = build_link(detail::link_for(cfg, k), base.child(std::uint64_t(k)));
                const Seed ps = base.child(std::uint64_t(k)).child(slot);
                const auto pm = simulate_point(cfg, link, ps, slot, n_slots,
                                               detail::tap_path(cfg, "taps_wdm_" + std::to_string(k) + "_" +
                                                                         std::to_string(slot) + ".bin"));
                rows[i] = detail::point_row(k, double(slot), f_thz, pm);
                status[i] = "ok";
            }
            catch (const std::exception &e)
            {
                auto row = detail::nan_row(r.columns.size());
                row[0] = k;
                row[1] = double(slot);
                row[2] = f_thz;
                rows[i] = row;
                status[i] = e.what();
            }
        });

        const auto col = [&](const std::string &n) {
            return std::size_t(std::find(r.columns.begin(), r.columns.end(), n) - r.columns.begin());
        };
        for (int k : cfg.run.wdm_span_counts)
        {
            std::vector<double> total(r.columns.size(), std::nan(""));
            total[0] = k;
            total[col("achievable_tbps")] = 0.0;
            total[col("net_tbps")] = 0.0;
            bool ok = true;
            int n_ok = 0;
            for (std::size_t i = 0; i < jobs.size(); ++i)
            {
                if (jobs[i].spans != k)
                    continue;
                r.rows.push_back(rows[i]);
                r.status.push_back(status[i]);
                if (status[i] != "ok")
                {
                    ok = false;
                    continue;
                }
                ++n_ok;
                total[col("achievable_tbps")] += rows[i][col("achievable_tbps")];
                total[col("net_tbps")] += rows[i][col("net_tbps")];
            }
            total[1] = -1.0; // totals marker
            r.rows.push_back(total);
            r.status.push_back(ok ? "ok" : "incomplete");
            const auto p = "k" + std::to_string(k) + "_";
            if (n_ok > 0)
            {
                const double mean_net = total[col("net_tbps")] / n_ok;
                const double mean_ach = total[col("achievable_tbps")] / n_ok;
                r.summary[p + "mean_net_tbps"] = mean_net;
                r.summary[p + "mean_achievable_tbps"] = mean_ach;
                r.summary[p + "extrapolated_net_tbps"] = mean_net * double(n_slots);
                r.summary[p + "extrapolated_achievable_tbps"] = mean_ach * double(n_slots);
            }
        }
        r.summary["band_thz"] = wdm_band_hz(n_slots, cfg.tx.grid_hz) * 1e-12;
        r.summary["gross_bound_tbps"] =
            double(cfg.run.modes) * cfg.tx.symbol_rate_hz * mb_shape(cfg.tx.entropy_bits).entropy_2d *
            1e-12;
        r.summary["points_failed"] = double(std::count_if(status.begin(), status.end(), [](auto &s) { return s != "ok"; }));
        return r;
    }

    /// One row per trial at run.stability_spans; redraw = false reuses one realization (zero spread).
    inline MetricsReport run_stability_sweep(const ExperimentConfig &cfg)
    {
        cfg.validate();
        if (cfg.run.trials < 2)
            throw ConfigError("stability: trials must be >= 2");
        MetricsReport r;
        r.kind = "stability";
        r.config_hash = hex64(config_hash(cfg));
        r.seed = cfg.run.master_seed;
        r.columns = {"spans", "length_km", "trial"};
        r.columns.insert(r.columns.end(), detail::metric_columns.begin(), detail::metric_columns.end());
        const int k = cfg.run.stability_spans;
        const auto n = std::size_t(cfg.run.trials);
        r.rows.resize(n);
        r.status.resize(n);
        const Seed base = Seed(cfg.run.master_seed).child(sweep_tag::stability);

        parallel_for(n, cfg.run.workers, [&](std::size_t t) {
            const double len = k * cfg.link.span_length_km;
            try
            {
                const Seed ps = cfg.run.redraw ? base.child(t) : base.child(0);
                const auto link = build_link(detail::link_for(cfg, k), ps);
                const auto pm = simulate_point(cfg, link, ps, 0, 1,
                                               detail::tap_path(cfg, "taps_stability_" + std::to_string(t) + ".bin"));
                r.rows[t] = detail::point_row(k, len, double(t), pm);
                r.status[t] = "ok";
            }
            catch (const std::exception &e)
            {
                auto row = detail::nan_row(r.columns.size());
                row[0] = k;
                row[1] = len;
                row[2] = double(t);
                r.rows[t] = row;
                r.status[t] = e.what();
            }
        });
        detail::mean_std(r, "tau_m_taps_ns", "tau_m_taps_ns", r.summary);
        detail::mean_std(r, "tau_m_channel_ns", "tau_m_channel_ns", r.summary);
        detail::mean_std(r, "sigma_rms_taps_db", "sigma_rms_taps_db", r.summary);
        detail::mean_std(r, "sigma_rms_channel_db", "sigma_rms_channel_db", r.summary);
        r.summary["points_failed"] = double(r.failed());
        return r;
    }

} // namespace ccmcf
