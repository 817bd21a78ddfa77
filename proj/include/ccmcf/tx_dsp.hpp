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

#include "core.hpp"
#include "fft.hpp"
#include "random.hpp"

#include <algorithm>
#include <array>

/*!SECTION
Transmitter

PS-36QAM source (6x6 truncation of the odd-integer 64QAM grid with
Maxwell-Boltzmann probabilities), pilot insertion, root-raised-cosine shaping,
delay-line core multiplexing and ASE-dummy WDM assembly.
SECTION!*/

namespace ccmcf
{
    inline constexpr std::size_t qam36_size = 36;
    inline constexpr double default_symbol_rate = 140e9;
    inline constexpr double default_grid_hz = 150e9;

    using PointSet = std::array<cplx, qam36_size>;
    using ProbSet = std::array<double, qam36_size>;

    /// The 36 lowest-energy points of the odd-integer 64QAM grid: {+-1,+-3,+-5}^2, unnormalized.
    inline PointSet truncated_36qam_points()
    {
        PointSet pts{};
        constexpr int levels[6] = {-5, -3, -1, 1, 3, 5};
        std::size_t k = 0;
        for (int q : levels)
            for (int i : levels)
                pts[k++] = cplx(double(i), double(q));
        return pts;
    }

    inline double entropy_bits(std::span<const double> probs)
    {
        double h = 0.0;
        for (double p : probs)
            if (p > 0.0)
                h -= p * std::log2(p);
        return h;
    }

    /// p(x) ~ exp(-nu |x|^2) over the unnormalized points.
    inline ProbSet maxwell_boltzmann(const PointSet &raw, double nu)
    {
        ProbSet p{};
        // Shift by the minimum energy (2) so exp never underflows for large nu.
        double sum = 0.0;
        for (std::size_t k = 0; k < qam36_size; ++k)
        {
            p[k] = std::exp(-nu * (std::norm(raw[k]) - 2.0));
            sum += p[k];
        }
        for (auto &v : p)
            v /= sum;
        return p;
    }

    struct ShapedConstellation
    {
        PointSet points{};     // unit mean energy under probs
        PointSet raw_points{}; // odd-integer grid
        ProbSet probs{};
        double nu = 0.0;
        double entropy_2d = 0.0;
        double scale = 1.0; // points = scale * raw_points

        double mean_energy() const
        {
            double e = 0.0;
            for (std::size_t k = 0; k < qam36_size; ++k)
                e += probs[k] * std::norm(points[k]);
            return e;
        }

        std::size_t nearest(cplx y) const
        {
            std::size_t best = 0;
            double bd = std::norm(y - points[0]);
            for (std::size_t k = 1; k < qam36_size; ++k)
            {
                const double d = std::norm(y - points[k]);
                if (d < bd)
                {
                    bd = d;
                    best = k;
                }
            }
            return best;
        }
    };

    inline ShapedConstellation make_constellation(double nu)
    {
        ShapedConstellation c;
        c.raw_points = truncated_36qam_points();
        c.probs = maxwell_boltzmann(c.raw_points, nu);
        c.nu = nu;
        c.entropy_2d = entropy_bits(c.probs);
        double e = 0.0;
        for (std::size_t k = 0; k < qam36_size; ++k)
            e += c.probs[k] * std::norm(c.raw_points[k]);
        c.scale = 1.0 / std::sqrt(e);
        for (std::size_t k = 0; k < qam36_size; ++k)
            c.points[k] = c.raw_points[k] * c.scale;
        return c;
    }

    /// Maxwell-Boltzmann shaping of PS-36QAM to a target 2D entropy (bisection on nu).
    /// Entropy falls from log2(36) at nu = 0 toward 2 bits (the four inner points) as nu grows.
    inline ShapedConstellation mb_shape(double target_entropy_2d)
    {
        const double hmax = std::log2(double(qam36_size));
        if (!(target_entropy_2d > 0.0))
            throw DomainError("mb_shape: target entropy must be positive");
        if (target_entropy_2d > hmax + 1e-12)
            throw DomainError("mb_shape: target entropy exceeds log2(36); infeasible");
        if (target_entropy_2d <= 2.0)
            throw DomainError("mb_shape: target entropy must exceed 2 bits (limit of the four inner points)");
        if (target_entropy_2d >= hmax)
            return make_constellation(0.0);

        const auto raw = truncated_36qam_points();
        auto h = [&](double nu) {
            const auto p = maxwell_boltzmann(raw, nu);
            return entropy_bits(p);
        };
        double lo = 0.0, hi = 0.05;
        while (h(hi) > target_entropy_2d)
            hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15; ++it)
        {
            const double mid = 0.5 * (lo + hi);
            if (h(mid) > target_entropy_2d)
                lo = mid;
            else
                hi = mid;
        }
        return make_constellation(0.5 * (lo + hi));
    }

    // ---- Symbol frames ------------------------------------------------------

    struct SymbolFrame
    {
        std::vector<CVector> symbols;          // [channel][symbol]
        std::vector<std::vector<int>> indices; // constellation index, -1 for pilots
        std::vector<bool> pilot_mask;          // shared pilot positions
        double symbol_rate = default_symbol_rate;

        std::size_t channels() const { return symbols.size(); }
        std::size_t length() const { return pilot_mask.size(); }
    };

    inline std::size_t pilot_period(double pilot_rate)
    {
        return pilot_rate > 0.0 ? std::max<std::size_t>(1, std::size_t(std::floor(1.0 / pilot_rate))) : 0;
    }

    /// i.i.d. draws from the shaped distribution; QPSK pilots of unit energy every floor(1/pilot_rate) symbols.
    inline SymbolFrame draw_frame(const Seed &seed, const ShapedConstellation &c, std::size_t s, std::size_t m,
                                  double pilot_rate, double symbol_rate = default_symbol_rate)
    {
        if (m == 0)
            throw DomainError("draw_frame: m must be >= 1");
        if (pilot_rate < 0.0 || pilot_rate >= 1.0)
            throw DomainError("draw_frame: pilot_rate must be in [0, 1)");

        SymbolFrame f;
        f.symbol_rate = symbol_rate;
        f.pilot_mask.assign(m, false);
        if (const auto period = pilot_period(pilot_rate); period > 0)
            for (std::size_t k = 0; k < m; k += period)
                f.pilot_mask[k] = true;

        ProbSet cdf{};
        double acc = 0.0;
        for (std::size_t k = 0; k < qam36_size; ++k)
        {
            acc += c.probs[k];
            cdf[k] = acc;
        }

        const double a = 1.0 / std::sqrt(2.0);
        f.symbols.assign(s, CVector(m));
        f.indices.assign(s, std::vector<int>(m, -1));
        const Seed base = seed.child(stream::frame);
        for (std::size_t ch = 0; ch < s; ++ch)
        {
            CounterRng rng(base.child(ch));
            for (std::size_t k = 0; k < m; ++k)
            {
                const double u = rng.uniform();
                if (f.pilot_mask[k])
                {
                    const auto q = std::size_t(u * 4.0) & 3u;
                    f.symbols[ch][k] = cplx((q & 1u) ? -a : a, (q & 2u) ? -a : a);
                    continue;
                }
                const auto it = std::lower_bound(cdf.begin(), cdf.end(), u * acc);
                const auto idx = std::min<std::size_t>(std::size_t(it - cdf.begin()), qam36_size - 1);
                f.indices[ch][k] = int(idx);
                f.symbols[ch][k] = c.points[idx];
            }
        }
        return f;
    }

    // ---- Pulse shaping ------------------------------------------------------

    /// Root-raised-cosine amplitude response, 1 at DC.
    inline double rrc_response(double f_hz, double symbol_rate, double rolloff)
    {
        const double af = std::abs(f_hz);
        const double f1 = (1.0 - rolloff) * symbol_rate / 2.0;
        const double f2 = (1.0 + rolloff) * symbol_rate / 2.0;
        if (af <= f1)
            return 1.0;
        if (af > f2)
            return 0.0;
        return std::sqrt(0.5 * (1.0 + std::cos(pi / (rolloff * symbol_rate) * (af - f1))));
    }

    /// Raised-cosine amplitude (the squared RRC response) on a frequency grid; the spectrum a
    /// matched-filtered signal occupies.
    inline std::vector<double> raised_cosine_weight(std::span<const double> freq_grid, double symbol_rate,
                                                    double rolloff)
    {
        std::vector<double> w(freq_grid.size());
        for (std::size_t k = 0; k < w.size(); ++k)
            w[k] = sqr(rrc_response(freq_grid[k], symbol_rate, rolloff));
        return w;
    }

    enum class PulseNormalization
    {
        unit_power, // each channel scaled to mean power 1
        unit_peak,  // pulse peak 1, so an isolated symbol reappears at its sampling instant
    };

    inline void check_rolloff(double symbol_rate, double rolloff, double grid_hz)
    {
        if (!(rolloff > 0.0))
            throw ConfigError("rolloff must be positive");
        if (symbol_rate * (1.0 + rolloff) > grid_hz * (1.0 + 1e-12))
            throw ConfigError("rolloff " + std::to_string(rolloff) + " makes the signal wider than the " +
                              std::to_string(grid_hz * 1e-9) + "-GHz grid");
    }

    /// Upsample by sps and shape with an RRC pulse (frequency-domain, circular over the frame).
    inline MultiChannelWaveform rrc_modulate(const SymbolFrame &frame, int sps, double rolloff,
                                             PulseNormalization norm = PulseNormalization::unit_power,
                                             double grid_hz = default_grid_hz)
    {
        if (sps < 2)
            throw ConfigError("rrc_modulate: sps must be >= 2");
        check_rolloff(frame.symbol_rate, rolloff, grid_hz);

        const std::size_t m = frame.length();
        const std::size_t n = m * std::size_t(sps);
        const double fs = frame.symbol_rate * double(sps);
        const auto freqs = fft_bin_frequencies(n, fs);
        std::vector<double> h(n);
        double h0 = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            h[k] = rrc_response(freqs[k], frame.symbol_rate, rolloff);
            h0 += h[k];
        }
        h0 /= double(n); // pulse value at t = 0

        MultiChannelWaveform w(frame.channels(), n, fs);
        for (std::size_t c = 0; c < frame.channels(); ++c)
        {
            auto &x = w.samples[c];
            for (std::size_t k = 0; k < m; ++k)
                x[k * std::size_t(sps)] = frame.symbols[c][k];
            fft_inplace(x);
            for (std::size_t k = 0; k < n; ++k)
                x[k] *= h[k];
            ifft_inplace(x);
            if (norm == PulseNormalization::unit_peak)
            {
                for (auto &v : x)
                    v /= h0;
            }
            else
            {
                const double p = w.power(c);
                if (p > 0.0)
                    for (auto &v : x)
                        v /= std::sqrt(p);
            }
        }
        return w;
    }

    /// Receiver RRC matched filter; response 1 at DC.
    inline void rrc_filter_inplace(MultiChannelWaveform &w, double symbol_rate, double rolloff)
    {
        const auto freqs = fft_bin_frequencies(w.length(), w.sample_rate);
        for (auto &x : w.samples)
        {
            fft_inplace(x);
            for (std::size_t k = 0; k < x.size(); ++k)
                x[k] *= rrc_response(freqs[k], symbol_rate, rolloff);
            ifft_inplace(x);
        }
    }

    // ---- Core multiplexing --------------------------------------------------

    /// Replicates an X/Y pair to s_channels/2 cores, core k delayed circularly by k * delay_step_samples.
    inline MultiChannelWaveform core_mux_emulate(const MultiChannelWaveform &pair, std::size_t s_channels,
                                                 std::size_t delay_step_samples)
    {
        if (pair.channels() != 2)
            throw DomainError("core_mux_emulate: input must be one X/Y pair");
        if (s_channels % 2 != 0 || s_channels == 0)
            throw DomainError("core_mux_emulate: s_channels must be even");
        const std::size_t cores = s_channels / 2;
        const std::size_t n = pair.length();
        if (cores > 1 && (cores - 1) * delay_step_samples >= n)
            throw ConfigError("core_mux_emulate: delay budget exceeds frame length");
        if (cores > 1 && delay_step_samples == 0)
            throw ConfigError("core_mux_emulate: delay step must be positive");

        MultiChannelWaveform out(s_channels, n, pair.sample_rate, pair.center_frequency);
        for (std::size_t core = 0; core < cores; ++core)
            for (std::size_t pol = 0; pol < 2; ++pol)
            {
                const auto d = core * delay_step_samples;
                const auto &src = pair.samples[pol];
                auto &dst = out.samples[2 * core + pol];
                for (std::size_t k = 0; k < n; ++k)
                    dst[(k + d) % n] = src[k];
            }
        return out;
    }

    /// The symbol-level counterpart of core_mux_emulate, for use as equalizer reference.
    inline SymbolFrame core_mux_frame(const SymbolFrame &pair, std::size_t s_channels, std::size_t delay_step_symbols)
    {
        if (pair.channels() != 2 || s_channels % 2 != 0)
            throw DomainError("core_mux_frame: need one X/Y pair and an even channel count");
        const std::size_t m = pair.length();
        SymbolFrame out;
        out.symbol_rate = pair.symbol_rate;
        out.symbols.assign(s_channels, CVector(m));
        out.indices.assign(s_channels, std::vector<int>(m, -1));
        out.pilot_mask.assign(m, false);
        for (std::size_t core = 0; core < s_channels / 2; ++core)
            for (std::size_t pol = 0; pol < 2; ++pol)
                for (std::size_t k = 0; k < m; ++k)
                {
                    const auto j = (k + core * delay_step_symbols) % m;
                    out.symbols[2 * core + pol][j] = pair.symbols[pol][k];
                    out.indices[2 * core + pol][j] = pair.indices[pol][k];
                }
        // Pilot positions move with the delays, so only the undelayed core keeps a shared mask.
        if (s_channels == 2)
            out.pilot_mask = pair.pilot_mask;
        return out;
    }

    // ---- WDM ----------------------------------------------------------------

    inline double wdm_band_hz(std::size_t n_channels, double grid_hz) { return double(n_channels) * grid_hz; }

    /// Absolute center frequency of slot i of an n-slot grid centered on band_center_hz.
    inline double wdm_slot_frequency(std::size_t i, std::size_t n, double grid_hz, double band_center_hz = carrier_hz)
    {
        return band_center_hz + (double(i) - 0.5 * double(n - 1)) * grid_hz;
    }

    /// Offsets (Hz) of the waveform-simulated neighbours of the SUT: none, +grid, or +-grid.
    inline std::vector<double> simulated_dummy_offsets(std::size_t n_channels, double grid_hz)
    {
        if (n_channels <= 1)
            return {};
        if (n_channels == 2)
            return {grid_hz};
        return {-grid_hz, grid_hz};
    }

    struct WdmOptions
    {
        double grid_hz = default_grid_hz;
        double symbol_rate = default_symbol_rate;
        double rolloff = 0.05;
        double dummy_osnr_db = INFINITY; // in-band dummy PSD over the out-of-slot floor; inf: no floor
    };

    /// Offsets of the neighbours that exist for slot i of an n-slot grid (edge slots have one).
    inline std::vector<double> slot_neighbour_offsets(std::size_t i, std::size_t n, double grid_hz)
    {
        std::vector<double> out;
        if (i > 0)
            out.push_back(-grid_hz);
        if (i + 1 < n)
            out.push_back(grid_hz);
        return out;
    }

    /// SUT at baseband plus ASE-like Gaussian dummies of matched power at the given offsets.
    inline MultiChannelWaveform wdm_assemble(const MultiChannelWaveform &sut, std::span<const double> offsets,
                                             const WdmOptions &opt, const Seed &seed)
    {
        if (opt.grid_hz < opt.symbol_rate * (1.0 + opt.rolloff))
            throw ConfigError("wdm_assemble: grid narrower than occupied bandwidth");
        if (offsets.empty())
            return sut;

        double reach = 0.0;
        for (double o : offsets)
            reach = std::max(reach, std::abs(o));
        const double span_needed = 2.0 * reach + opt.grid_hz;
        if (sut.sample_rate < span_needed * (1.0 - 1e-12))
            throw ConfigError("wdm_assemble: sample rate " + std::to_string(sut.sample_rate * 1e-9) +
                              " GHz does not cover " + std::to_string(span_needed * 1e-9) + " GHz");

        const std::size_t n = sut.length();
        const auto freqs = fft_bin_frequencies(n, sut.sample_rate);
        const double floor_lin = std::isfinite(opt.dummy_osnr_db) ? std::pow(10.0, -opt.dummy_osnr_db / 10.0) : 0.0;
        MultiChannelWaveform out = sut;
        const Seed base = seed.child(stream::dummy);
        for (std::size_t c = 0; c < sut.channels(); ++c)
        {
            const double target = sut.power(c);
            for (std::size_t d = 0; d < offsets.size(); ++d)
            {
                CVector z(n);
                CounterRng rng(base.child(c).child(d));
                for (std::size_t k = 0; k < n; ++k)
                {
                    const double shape = sqr(rrc_response(freqs[k] - offsets[d], opt.symbol_rate, opt.rolloff));
                    z[k] = rng.complex_normal() * std::sqrt(shape + floor_lin);
                }
                ifft_inplace(z);
                double p = 0.0;
                for (const auto &v : z)
                    p += std::norm(v);
                p /= double(n);
                const double g = p > 0.0 ? std::sqrt(target / p) : 0.0;
                for (std::size_t k = 0; k < n; ++k)
                    out.samples[c][k] += g * z[k];
            }
        }
        return out;
    }

    /// Centre-slot form: the SUT's simulated neighbours follow from the channel count alone.
    inline MultiChannelWaveform wdm_assemble(const MultiChannelWaveform &sut, std::size_t n_channels,
                                             const WdmOptions &opt, const Seed &seed)
    {
        if (n_channels == 0)
            throw ConfigError("wdm_assemble: n_channels must be >= 1");
        if (opt.grid_hz < opt.symbol_rate * (1.0 + opt.rolloff))
            throw ConfigError("wdm_assemble: grid narrower than occupied bandwidth");
        const auto offsets = simulated_dummy_offsets(n_channels, opt.grid_hz);
        return wdm_assemble(sut, std::span<const double>(offsets), opt, seed);
    }

    // ---- Impairments shared by tx and rx ------------------------------------

    /// Wiener laser phase noise common to all channels; combined linewidth in Hz.
    inline void apply_phase_noise(MultiChannelWaveform &w, double linewidth_hz, const Seed &seed)
    {
        if (linewidth_hz <= 0.0)
            return;
        CounterRng rng(seed.child(stream::phase_noise));
        const double sd = std::sqrt(2.0 * pi * linewidth_hz / w.sample_rate);
        double phi = 0.0;
        for (std::size_t k = 0; k < w.length(); ++k)
        {
            phi += sd * rng.normal();
            const cplx r = std::polar(1.0, phi);
            for (auto &ch : w.samples)
                ch[k] *= r;
        }
    }

    /// White Gaussian noise for a target Es/N0 given unit-power channels: variance = (fs/Rs) / snr.
    inline void add_awgn(MultiChannelWaveform &w, double snr_db, double symbol_rate, const Seed &seed)
    {
        const double var = (w.sample_rate / symbol_rate) / std::pow(10.0, snr_db / 10.0);
        const Seed base = seed.child(stream::noise);
        for (std::size_t c = 0; c < w.channels(); ++c)
        {
            CounterRng rng(base.child(c));
            for (auto &v : w.samples[c])
                v += rng.complex_normal(var);
        }
    }

} // namespace ccmcf
