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

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

/*!SECTION
Shared value types
SECTION!*/

namespace ccmcf
{
    using cplx = std::complex<double>;
    using CVector = std::vector<cplx>;
    using CMatrix = Eigen::MatrixXcd;

    inline constexpr double pi = 3.14159265358979323846;
    inline constexpr double planck = 6.62607015e-34;    // J s
    inline constexpr double carrier_hz = 193.7e12;      // reference optical frequency for h*nu

    // Unit conventions: lengths in km, delays in ps, dispersion in ps^2/km, frequencies in Hz.
    inline constexpr double ps = 1e-12;

    // ---- Errors -------------------------------------------------------------

    // Precondition on a numeric argument violated (empty grid, bad mode count, ...)
    class DomainError : public std::domain_error
    {
    public:
        using std::domain_error::domain_error;
    };

    // Inconsistent or infeasible configuration
    class ConfigError : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    // ---- Decibels -----------------------------------------------------------

    inline double db_to_linear(double db)
    {
        if (!std::isfinite(db) && db != -INFINITY)
            throw DomainError("db_to_linear: non-finite input");
        return std::pow(10.0, db / 10.0);
    }

    inline double linear_to_db(double ratio)
    {
        if (!(ratio > 0.0))
            throw DomainError("linear_to_db: ratio must be positive");
        return 10.0 * std::log10(ratio);
    }

    // ---- FFT grid -----------------------------------------------------------

    /// Baseband frequency of every bin in natural FFT order:
    /// bin k maps to k*fs/n for k < n/2 and (k-n)*fs/n otherwise.
    inline std::vector<double> fft_bin_frequencies(std::size_t n, double sample_rate)
    {
        if (n == 0)
            throw DomainError("fft_bin_frequencies: n must be >= 1");
        if (!(sample_rate > 0.0))
            throw DomainError("fft_bin_frequencies: sample_rate must be positive");
        std::vector<double> f(n);
        const double df = sample_rate / double(n);
        const auto half = (n + 1) / 2; // k < n/2 positive; for odd n the middle bin stays positive
        for (std::size_t k = 0; k < n; ++k)
        {
            const auto kk = (k < half) ? double(k) : double(k) - double(n);
            f[k] = kk * df;
        }
        return f;
    }

    // ---- Waveform -----------------------------------------------------------

    /// Time-domain complex baseband samples of S channels sharing one sample rate.
    /// Channel index c = 2*core + pol.
    struct MultiChannelWaveform
    {
        std::vector<CVector> samples;  // [channel][sample]
        double sample_rate = 0.0;      // Hz
        double center_frequency = 0.0; // Hz, absolute optical (metadata only)

        MultiChannelWaveform() = default;
        MultiChannelWaveform(std::size_t channels, std::size_t n, double fs, double fc = carrier_hz)
            : samples(channels, CVector(n)), sample_rate(fs), center_frequency(fc)
        {
        }

        std::size_t channels() const { return samples.size(); }
        std::size_t length() const { return samples.empty() ? 0 : samples.front().size(); }

        std::span<cplx> channel(std::size_t c) { return samples.at(c); }
        std::span<const cplx> channel(std::size_t c) const { return samples.at(c); }

        double power(std::size_t c) const
        {
            const auto &x = samples.at(c);
            double p = 0.0;
            for (const auto &v : x)
                p += std::norm(v);
            return x.empty() ? 0.0 : p / double(x.size());
        }

        // All channels equal length, all samples finite
        bool valid() const
        {
            if (!(sample_rate > 0.0))
                return false;
            const auto n = length();
            for (const auto &ch : samples)
            {
                if (ch.size() != n)
                    return false;
                for (const auto &v : ch)
                    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                        return false;
            }
            return true;
        }
    };

    // ---- Spectral transfer --------------------------------------------------

    /// Channel transfer matrix H(f) on an FFT-ordered frequency grid.
    struct SpectralTransfer
    {
        std::vector<double> freq_grid; // Hz, fft_bin_frequencies order
        std::vector<CMatrix> matrices; // one S x S matrix per bin

        std::size_t bins() const { return freq_grid.size(); }
        std::size_t modes() const { return matrices.empty() ? 0 : std::size_t(matrices.front().rows()); }
    };

    inline double sqr(double x) { return x * x; }

} // namespace ccmcf
