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
#include "core.hpp"
#include "fft.hpp"
#include "random.hpp"

#include <numeric>
#include <optional>

/*!SECTION
Linear coupled-core link model

A link is a chain of spans. Each span is a cascade of short fiber sections, each
a Haar-random mode coupler followed by per-mode group delays, then a lumped
mode-dependent loss stage (diagonal log gains in a random eigenbasis), scalar
loss and a transparent amplifier that adds ASE. Chromatic dispersion is a scalar
quadratic phase common to all modes and applied once for the whole length.

H(f) = CD(f) * prod_spans [ g * A_mdl * prod_sections ( U_k * diag(exp(-j 2 pi f tau_k)) ) * Skew(f) ]
SECTION!*/

namespace ccmcf
{
    struct FiberSection
    {
        CMatrix coupling;              // S x S unitary
        std::vector<double> delays_ps; // zero-mean per-mode group delays
        double section_length_km = 0.0;
    };

    struct SpanRealization
    {
        std::vector<FiberSection> sections;
        double span_length_km = 0.0;
        double fiber_loss_coeff = 0.0; // dB/km
        double lumped_loss_db = 0.0;   // fan-in/out, splices, connectors
        std::vector<double> mdl_log_gains_db;
        CMatrix mdl_basis;             // eigenbasis of the MDL stage
        double amp_gain_db = 0.0;
        double amp_noise_figure_db = 0.0;
        std::vector<double> input_phase_rad; // loop-reuse inter-span phases (empty if unused)
        std::vector<double> skew_ps;         // per-channel static skew at span input (empty if unused)

        double total_loss_db() const { return fiber_loss_coeff * span_length_km + lumped_loss_db; }

        // A_mdl = V diag(10^(g/20)) V^H
        CMatrix mdl_matrix() const
        {
            const auto s = Eigen::Index(mdl_log_gains_db.size());
            Eigen::VectorXcd d(s);
            for (Eigen::Index i = 0; i < s; ++i)
                d(i) = std::pow(10.0, mdl_log_gains_db[std::size_t(i)] / 20.0);
            return mdl_basis * d.asDiagonal() * mdl_basis.adjoint();
        }

        double scalar_amplitude() const { return std::pow(10.0, (amp_gain_db - total_loss_db()) / 20.0); }
    };

    struct LinkRealization
    {
        std::vector<SpanRealization> spans;
        int modes = 0;
        double smd_coeff = 0.0;   // ps/sqrt(km)
        double beta2 = 0.0;       // ps^2/km
        double total_length_km = 0.0;
        double channel_launch_power_w = 1e-3;
        bool noiseless = false;
    };

    /// Link parameters. Defaults follow the installed 12-core cable: 53.5-km spans,
    /// 0.176 dB/km, 12.1 dB per span incl. fan-in/out, SMD 5.3 ps/sqrt(km), sigma_g 0.35 dB.
    struct LinkConfig
    {
        int modes = 4;
        int spans = 1;
        double span_length_km = 53.5;
        int sections_per_span = 50;
        double smd_coeff = 5.3;
        double section_delay_scale = 0.0; // 0 selects the frozen calibration for `modes`
        double fiber_loss_db_per_km = 0.176;
        double span_loss_db = 12.1;
        double sigma_g_db = 0.35;
        std::optional<double> amp_gain_db; // unset: equal to span loss
        double noise_figure_db = 5.0;
        bool noiseless = false;
        double beta2 = -21.7;
        bool loop_reuse = false;
        std::vector<double> core_skew_ps; // one entry per core, applied every span
        // 20.0 dBm per core shared by 31 wavelengths and 2 polarizations
        double channel_launch_power_dbm = 20.0 - 10.0 * std::log10(62.0);

        void validate() const
        {
            if (modes < 2)
                throw ConfigError("link: modes must be >= 2");
            if (spans < 1)
                throw ConfigError("link: spans must be >= 1");
            if (sections_per_span < 1)
                throw ConfigError("link: sections_per_span must be >= 1");
            if (!(span_length_km > 0.0))
                throw ConfigError("link: span_length_km must be positive");
            if (smd_coeff < 0.0 || fiber_loss_db_per_km < 0.0 || sigma_g_db < 0.0 || section_delay_scale < 0.0)
                throw ConfigError("link: negative smd_coeff, loss or sigma_g");
            if (span_loss_db < fiber_loss_db_per_km * span_length_km)
                throw ConfigError("link: span_loss_db is below the fiber loss of one span");
            if (!core_skew_ps.empty() && int(core_skew_ps.size()) * 2 != modes)
                throw ConfigError("link: core_skew_ps needs one entry per core (modes / 2)");
        }
    };

    // ---- Draws --------------------------------------------------------------

    inline FiberSection draw_section(const Seed &seed, int s, double section_length_km, double smd_coeff,
                                     double calibration)
    {
        if (s < 2)
            throw DomainError("draw_section: at least two modes are needed for coupling");
        if (!(section_length_km > 0.0))
            throw DomainError("draw_section: section_length must be positive");

        CounterRng rng(seed);
        FiberSection sec;
        sec.section_length_km = section_length_km;
        sec.coupling = haar_unitary(rng, s);
        sec.delays_ps.resize(std::size_t(s));
        const double sigma = calibration * smd_coeff * std::sqrt(section_length_km);
        for (auto &d : sec.delays_ps)
            d = sigma * rng.normal();
        const double mean = std::accumulate(sec.delays_ps.begin(), sec.delays_ps.end(), 0.0) / double(s);
        for (auto &d : sec.delays_ps)
            d -= mean;
        if (sigma == 0.0)
            std::fill(sec.delays_ps.begin(), sec.delays_ps.end(), 0.0);
        return sec;
    }

    /// Zero-mean log gains (dB) whose rms equals sigma_g exactly.
    inline std::vector<double> draw_mdl_log_gains(const Seed &seed, int s, double sigma_g_db)
    {
        if (sigma_g_db < 0.0)
            throw DomainError("draw_mdl_log_gains: sigma_g must be >= 0");
        if (s < 1)
            throw DomainError("draw_mdl_log_gains: s must be >= 1");
        std::vector<double> g(std::size_t(s), 0.0);
        if (sigma_g_db == 0.0 || s == 1)
            return g;
        CounterRng rng(seed);
        for (auto &v : g)
            v = rng.normal();
        const double mean = std::accumulate(g.begin(), g.end(), 0.0) / double(s);
        double ss = 0.0;
        for (auto &v : g)
        {
            v -= mean;
            ss += v * v;
        }
        const double rms = std::sqrt(ss / double(s));
        for (auto &v : g)
            v *= sigma_g_db / rms;
        return g;
    }

    inline double resolved_delay_scale(const LinkConfig &cfg)
    {
        return cfg.section_delay_scale > 0.0 ? cfg.section_delay_scale : calibration::section_delay_scale(cfg.modes);
    }

    inline SpanRealization draw_span(const LinkConfig &cfg, const Seed &span_seed)
    {
        SpanRealization sp;
        sp.span_length_km = cfg.span_length_km;
        sp.fiber_loss_coeff = cfg.fiber_loss_db_per_km;
        sp.lumped_loss_db = cfg.span_loss_db - cfg.fiber_loss_db_per_km * cfg.span_length_km;
        sp.amp_gain_db = cfg.amp_gain_db.value_or(cfg.span_loss_db);
        sp.amp_noise_figure_db = cfg.noise_figure_db;

        const double len = cfg.span_length_km / double(cfg.sections_per_span);
        const double scale = resolved_delay_scale(cfg);
        sp.sections.reserve(std::size_t(cfg.sections_per_span));
        for (int k = 0; k < cfg.sections_per_span; ++k)
            sp.sections.push_back(draw_section(span_seed.child(0).child(std::uint64_t(k)), cfg.modes, len,
                                               cfg.smd_coeff, scale));

        sp.mdl_log_gains_db = draw_mdl_log_gains(span_seed.child(1), cfg.modes, cfg.sigma_g_db);
        CounterRng basis_rng(span_seed.child(2));
        sp.mdl_basis = haar_unitary(basis_rng, cfg.modes);

        if (!cfg.core_skew_ps.empty())
        {
            sp.skew_ps.resize(std::size_t(cfg.modes));
            for (int c = 0; c < cfg.modes; ++c)
                sp.skew_ps[std::size_t(c)] = cfg.core_skew_ps[std::size_t(c / 2)];
        }
        return sp;
    }

    /// Draws every section and span MDL stage from the stream seed/{link}/{span}/...
    inline LinkRealization build_link(const LinkConfig &cfg, const Seed &seed)
    {
        cfg.validate();
        LinkRealization link;
        link.modes = cfg.modes;
        link.smd_coeff = cfg.smd_coeff;
        link.beta2 = cfg.beta2;
        link.noiseless = cfg.noiseless;
        link.channel_launch_power_w = 1e-3 * std::pow(10.0, cfg.channel_launch_power_dbm / 10.0);

        const Seed base = seed.child(stream::link);
        for (int k = 0; k < cfg.spans; ++k)
        {
            const Seed span_seed = base.child(std::uint64_t(k));
            if (cfg.loop_reuse && k > 0)
            {
                // Same loop realization each recirculation, fresh per-mode phase at re-entry.
                SpanRealization sp = link.spans.front();
                CounterRng rng(span_seed.child(3));
                sp.input_phase_rad.resize(std::size_t(cfg.modes));
                for (auto &p : sp.input_phase_rad)
                    p = 2.0 * pi * rng.uniform();
                link.spans.push_back(std::move(sp));
            }
            else
            {
                link.spans.push_back(draw_span(cfg, span_seed));
            }
            link.total_length_km += cfg.span_length_km;
        }
        return link;
    }

    // ---- Transfer -----------------------------------------------------------

    /// (beta2/2) * (2 pi f)^2 * L in radians; beta2 in ps^2/km, L in km.
    inline double cd_phase(double f_hz, double beta2_ps2_per_km, double length_km)
    {
        const double w = 2.0 * pi * f_hz;
        return 0.5 * beta2_ps2_per_km * ps * ps * w * w * length_km;
    }

    namespace detail
    {
        struct SpanOperators
        {
            CMatrix mdl;   // scalar amplitude folded in
            bool has_phase = false;
            Eigen::VectorXcd static_phase; // loop-reuse phases
        };

        inline std::vector<SpanOperators> span_operators(const LinkRealization &link)
        {
            std::vector<SpanOperators> ops;
            ops.reserve(link.spans.size());
            for (const auto &sp : link.spans)
            {
                SpanOperators op;
                op.mdl = sp.mdl_matrix() * sp.scalar_amplitude();
                if (!sp.input_phase_rad.empty())
                {
                    op.has_phase = true;
                    op.static_phase.resize(link.modes);
                    for (int i = 0; i < link.modes; ++i)
                        op.static_phase(i) = std::polar(1.0, sp.input_phase_rad[std::size_t(i)]);
                }
                ops.push_back(std::move(op));
            }
            return ops;
        }

        // Left-multiplies `h` (S x C, column-major) through the whole link at one frequency,
        // without the CD phase. `phasor(span, section, mode)` supplies exp(-j 2 pi f tau).
        template <typename Phasor, typename SpanHook>
        void propagate(const LinkRealization &link, const std::vector<SpanOperators> &ops, double f_hz, CMatrix &h,
                       CMatrix &tmp, Phasor &&phasor, SpanHook &&after_span)
        {
            const int s = link.modes;
            for (std::size_t k = 0; k < link.spans.size(); ++k)
            {
                const auto &sp = link.spans[k];
                if (ops[k].has_phase)
                    h = ops[k].static_phase.asDiagonal() * h;
                if (!sp.skew_ps.empty())
                    for (int i = 0; i < s; ++i)
                        h.row(i) *= std::polar(1.0, -2.0 * pi * f_hz * sp.skew_ps[std::size_t(i)] * ps);
                for (std::size_t m = 0; m < sp.sections.size(); ++m)
                {
                    const auto &sec = sp.sections[m];
                    for (int i = 0; i < s; ++i)
                        h.row(i) *= phasor(k, m, i);
                    tmp.noalias() = sec.coupling * h;
                    h.swap(tmp);
                }
                tmp.noalias() = ops[k].mdl * h;
                h.swap(tmp);
                after_span(k, h);
            }
        }
    } // namespace detail

    /// H(f) on an arbitrary baseband grid. `frequency_offset_hz` shifts the grid for the
    /// fiber stages (a WDM slot away from the reference); CD stays relative to the slot center.
    /// With `include_cd` false the common CD phase is left out (the channel seen after CD compensation).
    inline SpectralTransfer link_transfer(const LinkRealization &link, std::span<const double> freq_grid,
                                          double frequency_offset_hz = 0.0, bool include_cd = true)
    {
        SpectralTransfer out;
        out.freq_grid.assign(freq_grid.begin(), freq_grid.end());
        out.matrices.resize(freq_grid.size());
        const int s = link.modes;
        const auto ops = detail::span_operators(link);
        CMatrix tmp(s, s);
        for (std::size_t b = 0; b < freq_grid.size(); ++b)
        {
            const double f = freq_grid[b];
            const double fa = f + frequency_offset_hz;
            CMatrix h = CMatrix::Identity(s, s);
            auto phasor = [&](std::size_t k, std::size_t m, int i) {
                return std::polar(1.0, -2.0 * pi * fa * link.spans[k].sections[m].delays_ps[std::size_t(i)] * ps);
            };
            if (link.spans.empty() || s == 0)
            {
                out.matrices[b] = h;
                continue;
            }
            detail::propagate(link, ops, fa, h, tmp, phasor, [](std::size_t, CMatrix &) {});
            if (include_cd)
                h *= std::polar(1.0, -cd_phase(f, link.beta2, link.total_length_km));
            out.matrices[b] = std::move(h);
        }
        return out;
    }

    /// ASE variance per sample (W) added by one amplifier over the simulated bandwidth fs.
    inline double ase_noise_power_w(const SpanRealization &sp, double sample_rate)
    {
        const double nf = std::pow(10.0, sp.amp_noise_figure_db / 10.0);
        const double g = std::pow(10.0, sp.amp_gain_db / 10.0);
        return std::max(nf * g - 1.0, 0.0) * planck * carrier_hz * sample_rate / 2.0;
    }

    struct ApplyLinkOptions
    {
        double frequency_offset_hz = 0.0;
        bool noiseless = false; // forces NF -> -inf regardless of the realization
    };

    /// Propagates a waveform through the link in the frequency domain, adding ASE at every
    /// amplifier output. The waveform is in units of the per-channel launch power.
    inline MultiChannelWaveform apply_link(const MultiChannelWaveform &wave, const LinkRealization &link,
                                           const Seed &seed, const ApplyLinkOptions &opt = {})
    {
        if (int(wave.channels()) != link.modes)
            throw DomainError("apply_link: waveform has " + std::to_string(wave.channels()) + " channels, link has " +
                              std::to_string(link.modes) + " modes");
        const std::size_t n = wave.length();
        const int s = link.modes;
        const double fs = wave.sample_rate;
        const bool noisy = !(link.noiseless || opt.noiseless);

        auto spec = to_spectrum(wave);
        const auto freqs = fft_bin_frequencies(n, fs);
        const auto ops = detail::span_operators(link);

        // Per-span noise std per FFT bin (unnormalized forward transform scales variance by n)
        std::vector<double> noise_var(link.spans.size(), 0.0);
        std::vector<std::vector<std::uint64_t>> noise_keys(link.spans.size());
        const Seed ase_seed = seed.child(stream::ase);
        for (std::size_t k = 0; k < link.spans.size(); ++k)
        {
            noise_var[k] = noisy ? ase_noise_power_w(link.spans[k], fs) / link.channel_launch_power_w * double(n) : 0.0;
            for (int c = 0; c < s; ++c)
                noise_keys[k].push_back(ase_seed.child(k).child(std::uint64_t(c)).key());
        }

        // Per-section phasors advanced bin to bin by a fixed rotation, resynchronized periodically.
        std::size_t total_sections = 0;
        for (const auto &sp : link.spans)
            total_sections += sp.sections.size();
        std::vector<std::size_t> section_base(link.spans.size(), 0);
        for (std::size_t k = 1; k < link.spans.size(); ++k)
            section_base[k] = section_base[k - 1] + link.spans[k - 1].sections.size();
        std::vector<cplx> rot(total_sections * std::size_t(s));
        std::vector<cplx> step(total_sections * std::size_t(s));
        const double df = fs / double(n);
        auto resync = [&](double fa) {
            for (std::size_t k = 0; k < link.spans.size(); ++k)
                for (std::size_t m = 0; m < link.spans[k].sections.size(); ++m)
                    for (int i = 0; i < s; ++i)
                    {
                        const double tau = link.spans[k].sections[m].delays_ps[std::size_t(i)] * ps;
                        const auto idx = (section_base[k] + m) * std::size_t(s) + std::size_t(i);
                        rot[idx] = std::polar(1.0, -2.0 * pi * fa * tau);
                        step[idx] = std::polar(1.0, -2.0 * pi * df * tau);
                    }
        };

        CMatrix x(s, 1), tmp(s, 1);
        const std::size_t half = (n + 1) / 2;
        constexpr std::size_t resync_every = 256;
        for (std::size_t j = 0; j < n; ++j)
        {
            // ascending frequency order: negative bins first
            const std::size_t b = (j < n - half) ? half + j : j - (n - half);
            const double f = freqs[b];
            const double fa = f + opt.frequency_offset_hz;
            if (j % resync_every == 0)
                resync(fa);

            for (int c = 0; c < s; ++c)
                x(c, 0) = spec[std::size_t(c)][b];

            auto phasor = [&](std::size_t k, std::size_t m, int i) -> cplx {
                return rot[(section_base[k] + m) * std::size_t(s) + std::size_t(i)];
            };
            auto add_noise = [&](std::size_t k, CMatrix &h) {
                if (noise_var[k] <= 0.0)
                    return;
                for (int c = 0; c < s; ++c)
                {
                    auto rng = CounterRng::from_key(noise_keys[k][std::size_t(c)], 4 * std::uint64_t(b));
                    h(c, 0) += rng.complex_normal(noise_var[k]);
                }
            };
            if (!link.spans.empty())
                detail::propagate(link, ops, fa, x, tmp, phasor, add_noise);
            const cplx cd = std::polar(1.0, -cd_phase(f, link.beta2, link.total_length_km));
            for (int c = 0; c < s; ++c)
                spec[std::size_t(c)][b] = x(c, 0) * cd;

            for (std::size_t q = 0; q < rot.size(); ++q)
                rot[q] *= step[q];
        }

        MultiChannelWaveform out;
        out.sample_rate = fs;
        out.center_frequency = wave.center_frequency;
        from_spectrum(out, std::move(spec));
        return out;
    }

    /// Analytic per-channel noise variance at the receiver relative to launch power,
    /// assuming a power-transparent link (noise from each amplifier reaches the receiver at unit gain).
    inline double expected_ase_variance(const LinkRealization &link, double sample_rate)
    {
        double v = 0.0;
        for (const auto &sp : link.spans)
            v += ase_noise_power_w(sp, sample_rate) / link.channel_launch_power_w;
        return v;
    }

} // namespace ccmcf
