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

#include "channel_model.hpp"
#include "core.hpp"
#include "fft.hpp"
#include "tx_dsp.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>

/*!SECTION
Receiver

Chromatic dispersion compensation, frequency-domain block-adaptive MIMO
equalization and pilot-aided carrier phase recovery.

The equalizer runs on polyphase symbol-rate input streams: channel c sampled at
sps samples/symbol contributes sps streams x_{c,p}[k] = x_c[k*sps + p]. In
widely-linear mode each stream is further split into its real and imaginary
parts, so 24 channels at 2 sps give a 96-input, 24-output equalizer.

Filtering is overlap-save; fft_size counts samples, so every polyphase stream
is transformed with fft_size/sps bins, with 50% block advance. Taps live in the frequency domain; the gradient
conj(X_i(f)) * E_o(f) is normalized by the smoothed input power per bin and,
when `constrained` is set, projected onto causal taps [0, fft_size/(2 sps)).
SECTION!*/

namespace ccmcf
{
    class AdaptationFailure : public std::runtime_error
    {
    public:
        AdaptationFailure(std::size_t block, const std::string &what)
            : std::runtime_error("equalizer diverged at block " + std::to_string(block) + ": " + what), block_(block)
        {
        }
        std::size_t block() const { return block_; }

    private:
        std::size_t block_;
    };

    // ---- Chromatic dispersion -----------------------------------------------

    /// Multiplies every channel by exp(+j (beta2/2) (2 pi f)^2 L), the exact inverse of the link CD stage.
    inline MultiChannelWaveform cd_compensate(const MultiChannelWaveform &wave, double beta2_ps2_per_km,
                                              double length_km)
    {
        if (length_km == 0.0 || beta2_ps2_per_km == 0.0)
            return wave;
        MultiChannelWaveform out = wave;
        const auto freqs = fft_bin_frequencies(wave.length(), wave.sample_rate);
        for (auto &x : out.samples)
        {
            fft_inplace(x);
            for (std::size_t k = 0; k < x.size(); ++k)
                x[k] *= std::polar(1.0, cd_phase(freqs[k], beta2_ps2_per_km, length_km));
            ifft_inplace(x);
        }
        return out;
    }

    /// Keeps |f| < min(fs_in, fs_out)/2 and changes the sample rate by spectral truncation or zero padding.
    inline MultiChannelWaveform spectral_resample(const MultiChannelWaveform &wave, std::size_t new_length)
    {
        const std::size_t n = wave.length();
        MultiChannelWaveform out(wave.channels(), new_length, wave.sample_rate * double(new_length) / double(n),
                                 wave.center_frequency);
        const std::size_t keep = std::min(n, new_length);
        const std::size_t pos = (keep + 1) / 2; // bins 0..pos-1 and the last keep-pos bins
        const double scale = double(new_length) / double(n);
        for (std::size_t c = 0; c < wave.channels(); ++c)
        {
            auto x = fft(wave.samples[c]);
            auto &y = out.samples[c];
            std::fill(y.begin(), y.end(), cplx(0.0));
            for (std::size_t k = 0; k < pos; ++k)
                y[k] = x[k] * scale;
            for (std::size_t k = 1; k <= keep - pos; ++k)
                y[new_length - k] = x[n - k] * scale;
            ifft_inplace(y);
        }
        return out;
    }

    // ---- Input composition --------------------------------------------------

    enum class EqualizerMode
    {
        strictly_linear,
        widely_linear,
    };

    /// Polyphase symbol-rate streams, index c*sps + p.
    inline std::vector<CVector> polyphase_compose(const MultiChannelWaveform &wave, int sps)
    {
        if (sps < 1 || wave.length() % std::size_t(sps) != 0)
            throw DomainError("polyphase_compose: length must be a multiple of sps");
        const std::size_t m = wave.length() / std::size_t(sps);
        std::vector<CVector> out;
        out.reserve(wave.channels() * std::size_t(sps));
        for (std::size_t c = 0; c < wave.channels(); ++c)
            for (int p = 0; p < sps; ++p)
            {
                CVector s(m);
                for (std::size_t k = 0; k < m; ++k)
                    s[k] = wave.samples[c][k * std::size_t(sps) + std::size_t(p)];
                out.push_back(std::move(s));
            }
        return out;
    }

    /// Real-composite streams for widely-linear equalization, index (c*sps + p)*2 + {0: real, 1: imag}.
    inline std::vector<CVector> widely_linear_compose(const MultiChannelWaveform &wave, int sps)
    {
        const auto poly = polyphase_compose(wave, sps);
        std::vector<CVector> out;
        out.reserve(poly.size() * 2);
        for (const auto &s : poly)
        {
            CVector re(s.size()), im(s.size());
            for (std::size_t k = 0; k < s.size(); ++k)
            {
                re[k] = s[k].real();
                im[k] = s[k].imag();
            }
            out.push_back(std::move(re));
            out.push_back(std::move(im));
        }
        return out;
    }

    inline std::size_t equalizer_inputs(std::size_t channels, int sps, EqualizerMode mode)
    {
        return channels * std::size_t(sps) * (mode == EqualizerMode::widely_linear ? 2 : 1);
    }

    // ---- Equalizer ----------------------------------------------------------

    struct EqualizerConfig
    {
        std::size_t fft_size = 2048;    // samples; each polyphase stream uses fft_size / sps bins
        int sps = 2;
        EqualizerMode mode = EqualizerMode::strictly_linear;
        double mu_train = 0.5;          // normalized step during data-aided passes
        double mu = 0.2;                // first full-frame pass
        double mu_final = 0.001;        // last full-frame pass; geometric in between
        double training_fraction = 0.2; // leading part of the frame that is data-aided
        int training_passes = 12;       // repeated passes over the training segment
        int frame_passes = 6;           // full-frame passes, training segment data-aided, rest decision-directed
        bool constrained = true;
        double power_smoothing = 0.8;   // forgetting factor of the per-bin power estimate
        double divergence_threshold = 1e8;
        bool cpr_in_loop = true;

        void validate() const
        {
            if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
                throw ConfigError("equalizer: fft_size must be a power of two >= 4");
            if (sps < 1 || fft_size % std::size_t(sps) != 0 || fft_size / std::size_t(sps) < 4)
                throw ConfigError("equalizer: sps must divide fft_size with at least 4 bins per stream");
            if (frame_passes < 1)
                throw ConfigError("equalizer: frame_passes must be >= 1");
            if (!(mu > 0.0) || !(mu_train > 0.0) || !(mu_final > 0.0))
                throw ConfigError("equalizer: step sizes must be positive");
            if (training_fraction < 0.0 || training_fraction > 1.0)
                throw ConfigError("equalizer: training_fraction must be in [0, 1]");
            if (training_passes < 0)
                throw ConfigError("equalizer: training_passes must be >= 0");
        }
    };

    /// Frequency-domain taps, weights[o * n_in + i][bin].
    struct EqualizerState
    {
        std::vector<CVector> weights;
        std::size_t fft_size = 0;      // samples
        std::size_t stream_fft = 0;    // bins per polyphase stream, fft_size / sps
        std::size_t block_advance = 0; // symbols
        std::size_t n_in = 0;
        std::size_t n_out = 0;
        std::size_t center_tap = 0; // output k estimates reference symbol k - center_tap
        double mu = 0.0;
        EqualizerMode mode = EqualizerMode::strictly_linear;
        int sps = 2;

        CVector &w(std::size_t o, std::size_t i) { return weights[o * n_in + i]; }
        const CVector &w(std::size_t o, std::size_t i) const { return weights[o * n_in + i]; }

        double weight_energy() const
        {
            double e = 0.0;
            for (const auto &v : weights)
                for (const auto &x : v)
                    e += std::norm(x);
            return e / double(stream_fft);
        }
    };

    /// Center-spike initialization: output o starts as the on-time sample of channel o.
    inline EqualizerState init_equalizer(std::size_t n_out, const EqualizerConfig &cfg)
    {
        cfg.validate();
        EqualizerState st;
        st.fft_size = cfg.fft_size;
        st.stream_fft = cfg.fft_size / std::size_t(cfg.sps);
        st.block_advance = st.stream_fft / 2;
        st.n_out = n_out;
        st.n_in = equalizer_inputs(n_out, cfg.sps, cfg.mode);
        st.center_tap = st.stream_fft / 4;
        st.mu = cfg.mu;
        st.mode = cfg.mode;
        st.sps = cfg.sps;
        const std::size_t f = st.stream_fft;
        st.weights.assign(st.n_in * st.n_out, CVector(f, cplx(0.0)));
        for (std::size_t o = 0; o < n_out; ++o)
            for (std::size_t k = 0; k < f; ++k)
            {
                const cplx d = std::polar(1.0, -2.0 * pi * double(k) * double(st.center_tap) / double(f));
                if (cfg.mode == EqualizerMode::strictly_linear)
                {
                    st.w(o, o * std::size_t(cfg.sps))[k] = d;
                }
                else
                {
                    const std::size_t base = o * std::size_t(cfg.sps) * 2;
                    st.w(o, base)[k] = d;
                    st.w(o, base + 1)[k] = cplx(0.0, 1.0) * d;
                }
            }
        return st;
    }

    /// Time-domain taps, [o * n_in + i][tap]; the inverse transform of the weights.
    inline std::vector<CVector> equalizer_taps_time(const EqualizerState &st)
    {
        std::vector<CVector> taps;
        taps.reserve(st.weights.size());
        for (const auto &w : st.weights)
            taps.push_back(ifft(w));
        return taps;
    }

    /// Tap power on a T/sps grid (fft_size points), summed over outputs and input channels.
    /// Stream phase p at tap l sits at sample delay l*sps - p. With `band_weight` (amplitude
    /// per bin of an fft_size-point transform at sps samples/symbol) each per-channel filter
    /// is shaped before taking the power, which removes the bins the signal never excites.
    inline std::vector<double> tap_power_profile(const EqualizerState &st, std::span<const double> band_weight = {})
    {
        const auto taps = equalizer_taps_time(st);
        const std::size_t f = st.stream_fft;
        const auto sps = std::size_t(st.sps);
        const std::size_t n = f * sps;
        if (!band_weight.empty() && band_weight.size() != n)
            throw DomainError("tap_power_profile: band weight must have fft_size entries");
        const bool wl = st.mode == EqualizerMode::widely_linear;
        const std::size_t channels = st.n_in / (sps * (wl ? 2 : 1));
        std::vector<double> profile(n, 0.0);
        CVector g(n), gc(n);
        auto accumulate = [&](CVector &h) {
            if (!band_weight.empty())
            {
                fft_inplace(h);
                for (std::size_t k = 0; k < n; ++k)
                    h[k] *= band_weight[k];
                ifft_inplace(h);
            }
            for (std::size_t k = 0; k < n; ++k)
                profile[k] += std::norm(h[k]);
        };
        for (std::size_t o = 0; o < st.n_out; ++o)
            for (std::size_t c = 0; c < channels; ++c)
            {
                std::fill(g.begin(), g.end(), cplx(0.0));
                std::fill(gc.begin(), gc.end(), cplx(0.0));
                for (std::size_t p = 0; p < sps; ++p)
                    for (std::size_t l = 0; l < f; ++l)
                    {
                        const std::size_t idx = (l * sps + n - p) % n;
                        if (!wl)
                        {
                            g[idx] = taps[o * st.n_in + c * sps + p][l];
                        }
                        else
                        {
                            // a Re(x) + b Im(x) = (a - jb)/2 x + (a + jb)/2 conj(x)
                            const cplx a = taps[o * st.n_in + (c * sps + p) * 2][l];
                            const cplx bb = taps[o * st.n_in + (c * sps + p) * 2 + 1][l];
                            g[idx] = 0.5 * (a - cplx(0.0, 1.0) * bb);
                            gc[idx] = 0.5 * (a + cplx(0.0, 1.0) * bb);
                        }
                    }
                accumulate(g);
                if (wl)
                    accumulate(gc);
            }
        return profile;
    }

    /// Per-bin S_out x S_in response of the converged filter on the fft_size-point sample grid,
    /// restricted to `bins`. Widely-linear states report the part acting on x (not conj(x)).
    inline SpectralTransfer equalizer_response(const EqualizerState &st, std::span<const std::size_t> bins,
                                               double sample_rate)
    {
        const auto taps = equalizer_taps_time(st);
        const std::size_t f = st.stream_fft;
        const auto sps = std::size_t(st.sps);
        const std::size_t n = f * sps;
        const bool wl = st.mode == EqualizerMode::widely_linear;
        const std::size_t channels = st.n_in / (sps * (wl ? 2 : 1));
        const auto freqs = fft_bin_frequencies(n, sample_rate);
        SpectralTransfer out;
        for (auto k : bins)
        {
            if (k >= n)
                throw DomainError("equalizer_response: bin index out of range");
            out.freq_grid.push_back(freqs[k]);
        }
        out.matrices.assign(bins.size(), CMatrix::Zero(Eigen::Index(st.n_out), Eigen::Index(channels)));
        CVector g(n);
        for (std::size_t o = 0; o < st.n_out; ++o)
            for (std::size_t c = 0; c < channels; ++c)
            {
                std::fill(g.begin(), g.end(), cplx(0.0));
                for (std::size_t p = 0; p < sps; ++p)
                    for (std::size_t l = 0; l < f; ++l)
                    {
                        const std::size_t idx = (l * sps + n - p) % n;
                        if (!wl)
                            g[idx] = taps[o * st.n_in + c * sps + p][l];
                        else
                            g[idx] = 0.5 * (taps[o * st.n_in + (c * sps + p) * 2][l] -
                                            cplx(0.0, 1.0) * taps[o * st.n_in + (c * sps + p) * 2 + 1][l]);
                    }
                fft_inplace(g);
                for (std::size_t j = 0; j < bins.size(); ++j)
                    out.matrices[j](Eigen::Index(o), Eigen::Index(c)) = g[bins[j]];
            }
        return out;
    }

    // ---- Tap dump -----------------------------------------------------------
    //
    // Little-endian binary file:
    //   char[4]  magic "CCTP"
    //   u32      version (1)
    //   u32      n_out, n_in, stream_fft, fft_size, sps, mode (0 strictly, 1 widely linear)
    //   f64      sample_rate (Hz)
    //   f64[2]   taps, n_out * n_in * stream_fft complex values, order [o][i][l], (re, im)

    struct TapDump
    {
        std::size_t n_out = 0, n_in = 0, stream_fft = 0, fft_size = 0;
        int sps = 0;
        EqualizerMode mode = EqualizerMode::strictly_linear;
        double sample_rate = 0.0;
        std::vector<CVector> taps; // [o * n_in + i][l]
    };

    inline void write_tap_dump(const std::string &path, const EqualizerState &st, double sample_rate)
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw std::runtime_error("cannot open " + path + " for writing");
        const auto taps = equalizer_taps_time(st);
        auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), sizeof v); };
        os.write("CCTP", 4);
        u32(1);
        u32(std::uint32_t(st.n_out));
        u32(std::uint32_t(st.n_in));
        u32(std::uint32_t(st.stream_fft));
        u32(std::uint32_t(st.fft_size));
        u32(std::uint32_t(st.sps));
        u32(st.mode == EqualizerMode::widely_linear ? 1u : 0u);
        os.write(reinterpret_cast<const char *>(&sample_rate), sizeof sample_rate);
        for (const auto &t : taps)
            os.write(reinterpret_cast<const char *>(t.data()), std::streamsize(t.size() * sizeof(cplx)));
        if (!os)
            throw std::runtime_error("write failed: " + path);
    }

    inline TapDump read_tap_dump(const std::string &path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw std::runtime_error("cannot open " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::string(magic, 4) != "CCTP")
            throw std::runtime_error(path + ": not a tap dump");
        auto u32 = [&] {
            std::uint32_t v = 0;
            is.read(reinterpret_cast<char *>(&v), sizeof v);
            return v;
        };
        if (u32() != 1)
            throw std::runtime_error(path + ": unsupported tap dump version");
        TapDump d;
        d.n_out = u32();
        d.n_in = u32();
        d.stream_fft = u32();
        d.fft_size = u32();
        d.sps = int(u32());
        d.mode = u32() == 1 ? EqualizerMode::widely_linear : EqualizerMode::strictly_linear;
        is.read(reinterpret_cast<char *>(&d.sample_rate), sizeof d.sample_rate);
        d.taps.assign(d.n_out * d.n_in, CVector(d.stream_fft));
        for (auto &t : d.taps)
            is.read(reinterpret_cast<char *>(t.data()), std::streamsize(t.size() * sizeof(cplx)));
        if (!is)
            throw std::runtime_error(path + ": truncated tap dump");
        return d;
    }

    struct EqualizedOutput
    {
        std::vector<CVector> symbols;         // [channel][symbol], aligned with the reference, after CPR
        std::vector<double> residual_snr_db;  // per channel, payload symbols outside the training segment
        std::vector<double> mse_history;      // block-averaged error power, in processing order
        std::vector<CVector> taps_time;       // [o * n_in + i][tap]
        std::size_t training_blocks = 0;      // blocks per training pass
        EqualizerState state;
    };

    namespace detail
    {
        inline cplx circular_sample(const CVector &x, std::ptrdiff_t idx)
        {
            const auto m = std::ptrdiff_t(x.size());
            return x[std::size_t(((idx % m) + m) % m)];
        }

        inline double unbiased_snr_db(std::span<const cplx> y, std::span<const cplx> d, const std::vector<bool> &use)
        {
            cplx yd = 0.0;
            double dd = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k)
                if (use[k])
                {
                    yd += y[k] * std::conj(d[k]);
                    dd += std::norm(d[k]);
                }
            if (dd <= 0.0)
                return 0.0;
            const cplx a = yd / dd;
            double err = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k)
                if (use[k])
                    err += std::norm(y[k] - a * d[k]);
            if (err <= 0.0)
                return 300.0;
            return 10.0 * std::log10(std::norm(a) * dd / err);
        }
    } // namespace detail

    /// Applies fixed weights to the streams (no adaptation); outputs aligned to the reference index.
    inline std::vector<CVector> apply_equalizer(const EqualizerState &st, const std::vector<CVector> &streams)
    {
        if (streams.size() != st.n_in)
            throw DomainError("apply_equalizer: expected " + std::to_string(st.n_in) + " input streams");
        const std::size_t m = streams.front().size();
        const std::size_t f = st.stream_fft, b = st.block_advance;
        std::vector<CVector> out(st.n_out, CVector(m));
        std::vector<CVector> x(st.n_in, CVector(f));
        CVector y(f);
        const std::size_t blocks = (m + b - 1) / b;
        for (std::size_t kb = 0; kb < blocks; ++kb)
        {
            const auto start = std::ptrdiff_t(kb * b + st.center_tap) - std::ptrdiff_t(b);
            for (std::size_t i = 0; i < st.n_in; ++i)
            {
                for (std::size_t t = 0; t < f; ++t)
                    x[i][t] = detail::circular_sample(streams[i], start + std::ptrdiff_t(t));
                fft_inplace(x[i]);
            }
            for (std::size_t o = 0; o < st.n_out; ++o)
            {
                std::fill(y.begin(), y.end(), cplx(0.0));
                for (std::size_t i = 0; i < st.n_in; ++i)
                {
                    const auto &w = st.w(o, i);
                    for (std::size_t k = 0; k < f; ++k)
                        y[k] += w[k] * x[i][k];
                }
                ifft_inplace(y);
                for (std::size_t t = 0; t < b; ++t)
                    out[o][(kb * b + t) % m] = y[b + t];
            }
        }
        return out;
    }

    /// Pilot-aided carrier phase recovery result.
    struct CprResult
    {
        std::vector<CVector> symbols;
        std::vector<double> residual_phase_var; // rad^2 per channel, at pilot positions
        bool low_pilot_snr = false;
    };

    struct CprOptions
    {
        std::size_t window = 8;           // pilots averaged on each side
        double warn_phase_var = 0.05;     // rad^2
    };

    /// Per channel: averaged pilot phase estimates, unwrapped and linearly interpolated (circularly) between pilots.
    inline CprResult carrier_phase_recover(const std::vector<CVector> &symbols, const std::vector<bool> &pilot_mask,
                                           const std::vector<CVector> &reference, const CprOptions &opt = {})
    {
        CprResult res;
        res.symbols = symbols;
        res.residual_phase_var.assign(symbols.size(), 0.0);
        std::vector<std::size_t> pos;
        for (std::size_t k = 0; k < pilot_mask.size(); ++k)
            if (pilot_mask[k])
                pos.push_back(k);
        if (pos.empty())
            return res;
        const std::size_t m = pilot_mask.size();
        const std::size_t np = pos.size();
        for (std::size_t c = 0; c < symbols.size(); ++c)
        {
            std::vector<cplx> z(np);
            for (std::size_t j = 0; j < np; ++j)
                z[j] = symbols[c][pos[j]] * std::conj(reference[c][pos[j]]);
            std::vector<double> phi(np);
            const auto w = std::ptrdiff_t(std::min(opt.window, (np - 1) / 2));
            for (std::size_t j = 0; j < np; ++j)
            {
                cplx acc = 0.0;
                for (std::ptrdiff_t d = -w; d <= w; ++d)
                    acc += z[std::size_t((std::ptrdiff_t(j) + d + std::ptrdiff_t(np)) % std::ptrdiff_t(np))];
                phi[j] = std::arg(acc);
            }
            for (std::size_t j = 1; j < np; ++j)
            {
                double d = phi[j] - phi[j - 1];
                d -= 2.0 * pi * std::round(d / (2.0 * pi));
                phi[j] = phi[j - 1] + d;
            }
            double var = 0.0;
            for (std::size_t j = 0; j < np; ++j)
                var += sqr(std::arg(z[j] * std::polar(1.0, -phi[j])));
            res.residual_phase_var[c] = var / double(np);
            if (res.residual_phase_var[c] > opt.warn_phase_var)
                res.low_pilot_snr = true;

            // wrap segment from the last pilot to the first pilot of the next frame period
            double wrap_d = phi[0] - phi[np - 1];
            wrap_d -= 2.0 * pi * std::round(wrap_d / (2.0 * pi));
            for (std::size_t k = 0; k < m; ++k)
            {
                const auto it = std::upper_bound(pos.begin(), pos.end(), k);
                double p;
                if (it == pos.begin() || it == pos.end())
                {
                    // between last pilot and first pilot (circular)
                    const double k0 = double(pos[np - 1]);
                    const double kk = (k >= pos[np - 1]) ? double(k) : double(k + m);
                    const double len = double(pos[0] + m) - k0;
                    p = phi[np - 1] + wrap_d * (kk - k0) / len;
                }
                else
                {
                    const std::size_t j1 = std::size_t(it - pos.begin());
                    const std::size_t j0 = j1 - 1;
                    const double t = double(k - pos[j0]) / double(pos[j1] - pos[j0]);
                    p = phi[j0] + (phi[j1] - phi[j0]) * t;
                }
                res.symbols[c][k] *= std::polar(1.0, -p);
            }
        }
        return res;
    }

    /// Frame-start search: circular cross-correlation of the on-time samples of every received
    /// channel with every transmitted pilot sequence; returns the lag (symbols) of the strongest peak.
    inline std::size_t find_frame_offset(const MultiChannelWaveform &wave, const SymbolFrame &ref, int sps)
    {
        const std::size_t m = ref.length();
        if (wave.length() != m * std::size_t(sps))
            throw DomainError("find_frame_offset: waveform length does not match frame");
        std::vector<double> metric(m, 0.0);
        std::vector<CVector> pilots;
        for (std::size_t t = 0; t < ref.channels(); ++t)
        {
            CVector q(m, cplx(0.0));
            for (std::size_t k = 0; k < m; ++k)
                if (ref.pilot_mask[k])
                    q[k] = ref.symbols[t][k];
            pilots.push_back(fft(q));
        }
        for (std::size_t c = 0; c < wave.channels(); ++c)
        {
            CVector r(m);
            for (std::size_t k = 0; k < m; ++k)
                r[k] = wave.samples[c][k * std::size_t(sps)];
            fft_inplace(r);
            for (const auto &q : pilots)
            {
                CVector x(m);
                for (std::size_t k = 0; k < m; ++k)
                    x[k] = r[k] * std::conj(q[k]);
                ifft_inplace(x);
                for (std::size_t k = 0; k < m; ++k)
                    metric[k] += std::norm(x[k]);
            }
        }
        return std::size_t(std::max_element(metric.begin(), metric.end()) - metric.begin());
    }

    /// Circularly advances a waveform by `samples` (output[k] = input[k + samples]).
    inline MultiChannelWaveform circular_advance(const MultiChannelWaveform &wave, std::size_t samples)
    {
        MultiChannelWaveform out = wave;
        const std::size_t n = wave.length();
        for (std::size_t c = 0; c < wave.channels(); ++c)
            for (std::size_t k = 0; k < n; ++k)
                out.samples[c][k] = wave.samples[c][(k + samples) % n];
        return out;
    }

    /// Frequency-domain block-LMS MIMO equalizer with data-aided training passes followed by
    /// one full pass that is data-aided on the training segment and decision-directed elsewhere.
    inline EqualizedOutput fd_mimo_equalize(const MultiChannelWaveform &wave, const SymbolFrame &reference,
                                            const ShapedConstellation &constellation, const EqualizerConfig &cfg)
    {
        cfg.validate();
        const std::size_t s = reference.channels();
        const std::size_t m = reference.length();
        if (wave.channels() != s)
            throw DomainError("fd_mimo_equalize: waveform and reference channel counts differ");
        if (wave.length() != m * std::size_t(cfg.sps))
            throw DomainError("fd_mimo_equalize: waveform length must be symbols * sps");
        if (m * std::size_t(cfg.sps) < cfg.fft_size)
            throw DomainError("fd_mimo_equalize: frame shorter than fft_size");

        const auto streams = (cfg.mode == EqualizerMode::widely_linear) ? widely_linear_compose(wave, cfg.sps)
                                                                        : polyphase_compose(wave, cfg.sps);
        EqualizerState st = init_equalizer(s, cfg);
        const std::size_t n_in = st.n_in;
        const std::size_t f = st.stream_fft, b = st.block_advance;
        const std::size_t blocks = (m + b - 1) / b;
        const auto train_blocks = std::min<std::size_t>(
            blocks, std::size_t(std::ceil(cfg.training_fraction * double(m) / double(b))));

        EqualizedOutput out;
        out.training_blocks = train_blocks;
        out.symbols.assign(s, CVector(m));

        std::vector<CVector> x(n_in, CVector(f));
        std::vector<CVector> e(s, CVector(f));
        CVector y(f), g(f);
        std::vector<double> power(f, 0.0);
        bool power_init = false;
        const double threshold = cfg.divergence_threshold * std::max(1.0, st.weight_energy());

        auto run_block = [&](std::size_t kb, bool data_aided, double mu, bool emit, std::size_t counter) {
            const auto start = std::ptrdiff_t(kb * b + st.center_tap) - std::ptrdiff_t(b);
            for (std::size_t i = 0; i < n_in; ++i)
            {
                for (std::size_t t = 0; t < f; ++t)
                    x[i][t] = detail::circular_sample(streams[i], start + std::ptrdiff_t(t));
                fft_inplace(x[i]);
            }
            double mean_p = 0.0;
            for (std::size_t k = 0; k < f; ++k)
            {
                double p = 0.0;
                for (std::size_t i = 0; i < n_in; ++i)
                    p += std::norm(x[i][k]);
                power[k] = power_init ? cfg.power_smoothing * power[k] + (1.0 - cfg.power_smoothing) * p : p;
                mean_p += power[k];
            }
            power_init = true;
            mean_p /= double(f);
            const double reg = 1e-6 * mean_p + 1e-300;

            double err_power = 0.0;
            for (std::size_t o = 0; o < s; ++o)
            {
                std::fill(y.begin(), y.end(), cplx(0.0));
                for (std::size_t i = 0; i < n_in; ++i)
                {
                    const auto &w = st.w(o, i);
                    for (std::size_t k = 0; k < f; ++k)
                        y[k] += w[k] * x[i][k];
                }
                ifft_inplace(y);

                // block phase from pilots for the decision-directed targets
                cplx phase(1.0, 0.0);
                if (cfg.cpr_in_loop && !data_aided)
                {
                    cplx acc = 0.0;
                    for (std::size_t t = 0; t < b; ++t)
                    {
                        const std::size_t r = (kb * b + t) % m;
                        if (reference.pilot_mask[r])
                            acc += y[b + t] * std::conj(reference.symbols[o][r]);
                    }
                    if (std::abs(acc) > 0.0)
                        phase = acc / std::abs(acc);
                }

                std::fill(e[o].begin(), e[o].begin() + std::ptrdiff_t(b), cplx(0.0));
                for (std::size_t t = 0; t < b; ++t)
                {
                    const std::size_t r = (kb * b + t) % m;
                    const cplx yo = y[b + t];
                    cplx target;
                    if (data_aided || reference.pilot_mask[r])
                        target = reference.symbols[o][r];
                    else
                        target = constellation.points[constellation.nearest(yo * std::conj(phase))] * phase;
                    e[o][b + t] = target - yo;
                    err_power += std::norm(target - yo);
                    if (emit)
                        out.symbols[o][r] = yo;
                }
                fft_inplace(e[o]);
            }
            out.mse_history.push_back(err_power / double(s * b));

            for (std::size_t o = 0; o < s; ++o)
                for (std::size_t i = 0; i < n_in; ++i)
                {
                    auto &w = st.w(o, i);
                    for (std::size_t k = 0; k < f; ++k)
                        g[k] = std::conj(x[i][k]) * e[o][k] / (power[k] + reg);
                    if (cfg.constrained)
                    {
                        ifft_inplace(g);
                        std::fill(g.begin() + std::ptrdiff_t(b), g.end(), cplx(0.0));
                        fft_inplace(g);
                    }
                    for (std::size_t k = 0; k < f; ++k)
                        w[k] += mu * g[k];
                }

            const double energy = st.weight_energy();
            if (!std::isfinite(energy) || energy > threshold)
                throw AdaptationFailure(counter, "weight energy " + std::to_string(energy));
        };

        std::size_t counter = 0;
        for (int pass = 0; pass < cfg.training_passes; ++pass)
            for (std::size_t kb = 0; kb < train_blocks; ++kb)
                run_block(kb, true, cfg.mu_train, false, counter++);
        for (int pass = 0; pass < cfg.frame_passes; ++pass)
        {
            const double t = cfg.frame_passes > 1 ? double(pass) / double(cfg.frame_passes - 1) : 0.0;
            const double mu = cfg.mu * std::pow(cfg.mu_final / cfg.mu, t);
            const bool last = pass + 1 == cfg.frame_passes;
            for (std::size_t kb = 0; kb < blocks; ++kb)
                run_block(kb, kb < train_blocks, mu, last, counter++);
        }

        // pilot-aided phase recovery over the emitted stream
        auto cpr = carrier_phase_recover(out.symbols, reference.pilot_mask, reference.symbols);
        out.symbols = std::move(cpr.symbols);

        std::vector<bool> use(m, false);
        const std::size_t train_syms = std::min(m, train_blocks * b);
        for (std::size_t k = train_syms; k < m; ++k)
            use[k] = !reference.pilot_mask[k];
        if (train_syms >= m)
            for (std::size_t k = 0; k < m; ++k)
                use[k] = !reference.pilot_mask[k];
        for (std::size_t o = 0; o < s; ++o)
            out.residual_snr_db.push_back(detail::unbiased_snr_db(out.symbols[o], reference.symbols[o], use));

        out.taps_time = equalizer_taps_time(st);
        out.state = std::move(st);
        return out;
    }

    /// Payload mask: non-pilot symbols outside the training segment.
    inline std::vector<bool> payload_mask(const EqualizedOutput &eq, const SymbolFrame &ref)
    {
        const std::size_t m = ref.length();
        const std::size_t train = std::min(m, eq.training_blocks * eq.state.block_advance);
        std::vector<bool> use(m, false);
        for (std::size_t k = (train >= m ? 0 : train); k < m; ++k)
            use[k] = !ref.pilot_mask[k];
        return use;
    }

} // namespace ccmcf
