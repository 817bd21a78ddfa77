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
#include "random.hpp"
#include "tx_dsp.hpp"

#include <algorithm>
#include <map>
#include <numeric>

/*!SECTION
Metrics

Memory length, rms MDL and their distance fits, GMI/NGMI and net/achievable rates.
SECTION!*/

namespace ccmcf
{
    class FitError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class AlignmentError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // ---- Memory length ------------------------------------------------------

    enum class ProfileTopology
    {
        circular, // profile from an inverse FFT; windows may wrap
        linear,
    };

    /// Length (in samples) of the shortest contiguous window holding at least `fraction` of the power,
    /// searched exhaustively over every start index.
    inline std::size_t memory_length_samples(std::span<const double> power, double fraction = 0.9,
                                             ProfileTopology topology = ProfileTopology::circular)
    {
        const std::size_t n = power.size();
        if (n == 0)
            throw DomainError("memory_length: empty profile");
        if (!(fraction > 0.0 && fraction <= 1.0))
            throw DomainError("memory_length: fraction must be in (0, 1]");
        const std::size_t ext = (topology == ProfileTopology::circular) ? 2 * n : n;
        std::vector<double> prefix(ext + 1, 0.0);
        for (std::size_t k = 0; k < ext; ++k)
            prefix[k + 1] = prefix[k] + power[k % n];
        const double total = prefix[n];
        if (!(total > 0.0))
            throw DomainError("memory_length: all-zero response");
        // relative slack absorbs summation-order rounding so shifted profiles agree exactly
        const double need = fraction * total * (1.0 - 1e-12);

        std::size_t best = n;
        std::size_t end = 0;
        for (std::size_t start = 0; start < n; ++start)
        {
            if (end < start)
                end = start;
            while (end < ext && prefix[end] - prefix[start] < need)
                ++end;
            if (prefix[end] - prefix[start] < need)
                break;
            best = std::min(best, end - start);
        }
        return best;
    }

    /// Memory length in seconds given the profile sample spacing.
    inline double memory_length(std::span<const double> power, double dt, double fraction = 0.9,
                                ProfileTopology topology = ProfileTopology::circular)
    {
        return double(memory_length_samples(power, fraction, topology)) * dt;
    }

    /// |h_ij(t)|^2 summed over all matrix entries, h = inverse FFT of H along frequency.
    /// `band_weight`, if given, multiplies every bin first (same order as the grid).
    inline std::vector<double> impulse_power_profile(const SpectralTransfer &h, std::span<const double> band_weight = {})
    {
        const std::size_t nb = h.bins();
        const std::size_t s = h.modes();
        if (!band_weight.empty() && band_weight.size() != nb)
            throw DomainError("impulse_power_profile: band weight size differs from the grid");
        std::vector<double> p(nb, 0.0);
        CVector col(nb);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j)
            {
                for (std::size_t k = 0; k < nb; ++k)
                    col[k] = h.matrices[k](Eigen::Index(i), Eigen::Index(j)) *
                             (band_weight.empty() ? 1.0 : band_weight[k]);
                ifft_inplace(col);
                for (std::size_t k = 0; k < nb; ++k)
                    p[k] += std::norm(col[k]);
            }
        return p;
    }

    /// rms width (samples) of a circular power profile, measured around its circular centroid.
    inline double rms_width_samples(std::span<const double> power)
    {
        const std::size_t n = power.size();
        cplx c = 0.0;
        double tot = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            c += power[k] * std::polar(1.0, 2.0 * pi * double(k) / double(n));
            tot += power[k];
        }
        if (!(tot > 0.0))
            throw DomainError("rms_width: all-zero profile");
        const double center = std::arg(c) / (2.0 * pi) * double(n);
        double m2 = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            double d = double(k) - center;
            d -= double(n) * std::round(d / double(n));
            m2 += power[k] * d * d;
        }
        return std::sqrt(m2 / tot);
    }

    // ---- Distance fits ------------------------------------------------------

    /// Least squares tau = a * sqrt(L); returns a in the units of tau per sqrt(km).
    inline double fit_sqrt_law(std::span<const std::pair<double, double>> points)
    {
        if (points.size() < 2)
            throw FitError("fit_sqrt_law: need at least two points");
        double num = 0.0, den = 0.0;
        bool distinct = false;
        for (const auto &[l, tau] : points)
        {
            if (!(l > 0.0))
                throw FitError("fit_sqrt_law: distances must be positive");
            if (l != points.front().first)
                distinct = true;
            num += tau * std::sqrt(l);
            den += l;
        }
        if (!distinct)
            throw FitError("fit_sqrt_law: all distances equal");
        return num / den;
    }

    struct PowerLawFit
    {
        double exponent = 0.0;
        double prefactor = 0.0;
        double r_squared = 0.0;
    };

    /// Log-log linear regression y = c * x^k.
    inline PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points)
    {
        if (points.size() < 2)
            throw FitError("fit_power_law: need at least two points");
        const double n = double(points.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto &[x, y] : points)
        {
            if (!(x > 0.0 && y > 0.0))
                throw FitError("fit_power_law: values must be positive");
            const double lx = std::log(x), ly = std::log(y);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        const double den = n * sxx - sx * sx;
        if (std::abs(den) < 1e-300)
            throw FitError("fit_power_law: degenerate abscissae");
        PowerLawFit fit;
        fit.exponent = (n * sxy - sx * sy) / den;
        const double intercept = (sy - fit.exponent * sx) / n;
        fit.prefactor = std::exp(intercept);
        double ss_res = 0, ss_tot = 0;
        const double mean_y = sy / n;
        for (const auto &[x, y] : points)
        {
            const double pred = intercept + fit.exponent * std::log(x);
            ss_res += sqr(std::log(y) - pred);
            ss_tot += sqr(std::log(y) - mean_y);
        }
        fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
        return fit;
    }

    // ---- MDL ----------------------------------------------------------------

    struct MdlEstimate
    {
        double sigma_rms_db = 0.0;
        bool clamped = false; // some eigenvalue fell below 1e-12 of the bin maximum
    };

    /// Variance of the mean-removed log eigen-gains of H^H H at one frequency (dB^2).
    inline double log_gain_variance(const CMatrix &h, bool *clamped = nullptr)
    {
        const CMatrix hh = h.adjoint() * h;
        Eigen::SelfAdjointEigenSolver<CMatrix> es(hh, Eigen::EigenvaluesOnly);
        const auto &lam = es.eigenvalues();
        const auto s = lam.size();
        const double lmax = lam.maxCoeff();
        std::vector<double> g(static_cast<std::size_t>(s));
        double mean = 0.0;
        for (Eigen::Index i = 0; i < s; ++i)
        {
            double l = lam(i);
            if (l < 1e-12 * lmax)
            {
                l = 1e-12 * lmax;
                if (clamped)
                    *clamped = true;
            }
            g[std::size_t(i)] = 10.0 * std::log10(l);
            mean += g[std::size_t(i)];
        }
        mean /= double(s);
        double var = 0.0;
        for (double v : g)
            var += sqr(v - mean);
        return var / double(s);
    }

    /// sigma_rms: square root of the frequency-averaged variance of mean-removed log eigen-gains (dB).
    /// `bins` optionally restricts the average to a subset of bins (e.g. the signal band).
    inline MdlEstimate rms_mdl(const SpectralTransfer &h, std::span<const std::size_t> bins = {})
    {
        if (h.matrices.empty())
            throw DomainError("rms_mdl: empty transfer");
        const auto rows = h.matrices.front().rows();
        if (rows != h.matrices.front().cols())
            throw DomainError("rms_mdl: H must be square");
        MdlEstimate est;
        double acc = 0.0;
        std::size_t count = 0;
        auto visit = [&](std::size_t k) {
            acc += log_gain_variance(h.matrices[k], &est.clamped);
            ++count;
        };
        if (bins.empty())
            for (std::size_t k = 0; k < h.bins(); ++k)
                visit(k);
        else
            for (auto k : bins)
                visit(k);
        est.sigma_rms_db = std::sqrt(acc / double(count));
        return est;
    }

    /// End-to-end sigma_rms versus span count, tabulated from the span model by Monte Carlo:
    /// curve(K, sigma_g) = sqrt(E[var]) over products of K spans of (Haar mixing) x (MDL stage).
    class MdlAccumulationCurve
    {
    public:
        MdlAccumulationCurve() = default;

        static MdlAccumulationCurve build(int modes, std::vector<int> span_counts, std::vector<double> sigma_grid,
                                          int trials, const Seed &seed)
        {
            if (trials < 1 || sigma_grid.size() < 2)
                throw DomainError("MdlAccumulationCurve: need >= 1 trial and >= 2 grid points");
            std::sort(span_counts.begin(), span_counts.end());
            span_counts.erase(std::unique(span_counts.begin(), span_counts.end()), span_counts.end());
            std::sort(sigma_grid.begin(), sigma_grid.end());
            MdlAccumulationCurve c;
            c.modes_ = modes;
            c.sigma_grid_ = sigma_grid;
            const int kmax = span_counts.back();
            for (int k : span_counts)
                c.table_[k].assign(sigma_grid.size(), 0.0);
            for (std::size_t gi = 0; gi < sigma_grid.size(); ++gi)
            {
                std::map<int, double> acc;
                for (int t = 0; t < trials; ++t)
                {
                    // common random numbers across the sigma grid keep the curve smooth in sigma
                    const Seed ts = seed.child(std::uint64_t(t));
                    CMatrix h = CMatrix::Identity(modes, modes);
                    for (int k = 1; k <= kmax; ++k)
                    {
                        const Seed ks = ts.child(std::uint64_t(k));
                        CounterRng mix_rng(ks.child(0));
                        CounterRng basis_rng(ks.child(2));
                        const CMatrix u = haar_unitary(mix_rng, modes);
                        const CMatrix v = haar_unitary(basis_rng, modes);
                        const auto g = draw_mdl_log_gains(ks.child(1), modes, sigma_grid[gi]);
                        Eigen::VectorXcd d(modes);
                        for (int i = 0; i < modes; ++i)
                            d(i) = std::pow(10.0, g[std::size_t(i)] / 20.0);
                        h = (v * d.asDiagonal() * v.adjoint()) * u * h;
                        if (c.table_.count(k))
                            acc[k] += log_gain_variance(h);
                    }
                }
                for (auto &[k, row] : c.table_)
                    row[gi] = std::sqrt(acc[k] / double(trials));
            }
            return c;
        }

        int modes() const { return modes_; }
        bool has(int spans) const { return table_.count(spans) > 0; }
        const std::vector<double> &sigma_grid() const { return sigma_grid_; }

        /// Linear interpolation in sigma_g; exact at K = 1 by construction of the span draw.
        double operator()(int spans, double sigma_g) const
        {
            const auto it = table_.find(spans);
            if (it == table_.end())
                throw DomainError("MdlAccumulationCurve: span count " + std::to_string(spans) + " not tabulated");
            const auto &row = it->second;
            const auto &x = sigma_grid_;
            if (sigma_g <= x.front())
                return row.front() * (x.front() > 0 ? sigma_g / x.front() : 1.0);
            if (sigma_g >= x.back())
                return row.back() * sigma_g / x.back();
            const auto hi = std::size_t(std::upper_bound(x.begin(), x.end(), sigma_g) - x.begin());
            const auto lo = hi - 1;
            const double t = (sigma_g - x[lo]) / (x[hi] - x[lo]);
            return row[lo] + t * (row[hi] - row[lo]);
        }

    private:
        int modes_ = 0;
        std::vector<double> sigma_grid_;
        std::map<int, std::vector<double>> table_;
    };

    /// Small-MDL closed form for comparison: xi = sigma_g sqrt(K), sigma = xi sqrt(1 + xi_n^2 / 12)
    /// with xi_n the accumulated MDL in natural-log power units.
    inline double mdl_closed_form(int spans, double sigma_g_db)
    {
        const double xi = sigma_g_db * std::sqrt(double(spans));
        const double xi_n = xi * std::log(10.0) / 10.0;
        return xi * std::sqrt(1.0 + xi_n * xi_n / 12.0);
    }

    struct MdlFit
    {
        double sigma_g_db = 0.0;
        bool non_monotone = false;
    };

    /// Least-squares sigma_g from (span count, sigma_rms) points against the accumulation curve.
    inline MdlFit fit_mdl_per_span(std::span<const std::pair<int, double>> points, const MdlAccumulationCurve &curve,
                                   double sigma_max = 2.0)
    {
        if (points.empty())
            throw FitError("fit_mdl_per_span: no points");
        std::vector<int> ks;
        for (const auto &p : points)
            ks.push_back(p.first);
        std::sort(ks.begin(), ks.end());
        ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

        MdlFit fit;
        if (ks.size() == 1 && ks.front() == 1)
        {
            double m = 0.0;
            for (const auto &p : points)
                m += p.second;
            fit.sigma_g_db = m / double(points.size());
            return fit;
        }
        if (ks.size() < 2)
            throw FitError("fit_mdl_per_span: need at least two distinct span counts");

        // per-K means must not decrease by more than 10%
        std::map<int, std::pair<double, int>> means;
        for (const auto &[k, v] : points)
        {
            means[k].first += v;
            means[k].second += 1;
        }
        double prev = -1.0;
        for (const auto &[k, mv] : means)
        {
            const double m = mv.first / mv.second;
            if (prev >= 0.0 && m < 0.9 * prev)
                fit.non_monotone = true;
            prev = std::max(prev, m);
        }

        auto cost = [&](double sg) {
            double c = 0.0;
            for (const auto &[k, v] : points)
                c += sqr(v - curve(k, sg));
            return c;
        };
        // coarse scan then golden-section refinement
        const int grid = 400;
        double best = 0.0, best_c = cost(0.0);
        for (int i = 1; i <= grid; ++i)
        {
            const double sg = sigma_max * double(i) / grid;
            const double c = cost(sg);
            if (c < best_c)
            {
                best_c = c;
                best = sg;
            }
        }
        double a = std::max(0.0, best - sigma_max / grid), b = std::min(sigma_max, best + sigma_max / grid);
        const double r = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 100; ++it)
        {
            const double x1 = b - r * (b - a), x2 = a + r * (b - a);
            if (cost(x1) < cost(x2))
                b = x2;
            else
                a = x1;
        }
        const double refined = 0.5 * (a + b);
        fit.sigma_g_db = (cost(refined) < best_c) ? refined : best;
        return fit;
    }

    // ---- GMI ----------------------------------------------------------------

    namespace detail
    {
        // Normalized |sum y conj(x)| at a circular lag, over payload symbols.
        inline double lag_correlation(std::span<const int> tx, std::span<const cplx> rx, const ShapedConstellation &c,
                                      std::ptrdiff_t lag)
        {
            const auto n = std::ptrdiff_t(rx.size());
            cplx acc = 0.0;
            double ex = 0.0, ey = 0.0;
            for (std::ptrdiff_t k = 0; k < n; ++k)
            {
                const auto j = std::size_t(((k + lag) % n + n) % n);
                if (tx[std::size_t(k)] < 0 || tx[j] < 0)
                    continue;
                const cplx x = c.points[std::size_t(tx[std::size_t(k)])];
                acc += rx[j] * std::conj(x);
                ex += std::norm(x);
                ey += std::norm(rx[j]);
            }
            return (ex > 0.0 && ey > 0.0) ? std::abs(acc) / std::sqrt(ex * ey) : 0.0;
        }
    } // namespace detail

    /// Mismatched-Gaussian-decoder information rate (bits/2D):
    /// H(P) - mean_k log2[ sum_x P(x) q(y_k|x) / (P(x_k) q(y_k|x_k)) ], q circular Gaussian whose variance
    /// is the residual variance to the transmitted symbol. Clipped to [0, H].
    /// Throws AlignmentError when the streams correlate clearly better at a nonzero lag (up to +-8).
    inline double gmi(std::span<const int> tx_indices, std::span<const cplx> rx, const ShapedConstellation &c,
                      double min_correlation = 0.2)
    {
        if (tx_indices.size() != rx.size())
            throw AlignmentError("gmi: symbol streams differ in length");
        double var = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < rx.size(); ++k)
        {
            if (tx_indices[k] < 0)
                continue;
            var += std::norm(rx[k] - c.points[std::size_t(tx_indices[k])]);
            ++n;
        }
        if (n == 0)
            throw AlignmentError("gmi: no payload symbols");
        var /= double(n);

        const double c0 = detail::lag_correlation(tx_indices, rx, c, 0);
        if (c0 < min_correlation)
            for (std::ptrdiff_t lag = -8; lag <= 8; ++lag)
                if (lag != 0)
                {
                    const double cl = detail::lag_correlation(tx_indices, rx, c, lag);
                    if (cl >= min_correlation && cl > 2.0 * c0)
                        throw AlignmentError("gmi: received symbols are offset by " + std::to_string(lag) + " symbols");
                }

        const double h = c.entropy_2d;
        if (var <= 1e-300)
            return h;
        std::array<double, qam36_size> logp{};
        for (std::size_t j = 0; j < qam36_size; ++j)
            logp[j] = std::log(c.probs[j]);

        double acc = 0.0;
        std::array<double, qam36_size> t{};
        for (std::size_t k = 0; k < rx.size(); ++k)
        {
            if (tx_indices[k] < 0)
                continue;
            const auto xi = std::size_t(tx_indices[k]);
            double mx = -INFINITY;
            for (std::size_t j = 0; j < qam36_size; ++j)
            {
                t[j] = logp[j] - std::norm(rx[k] - c.points[j]) / var;
                mx = std::max(mx, t[j]);
            }
            double s = 0.0;
            for (std::size_t j = 0; j < qam36_size; ++j)
                s += std::exp(t[j] - mx);
            const double lse = mx + std::log(s);
            acc += (lse - t[xi]) / std::log(2.0);
        }
        const double g = h - acc / double(n);
        return std::clamp(g, 0.0, h);
    }

    inline double ngmi(double gmi_bits, double entropy_bits_2d, double bits_per_symbol = std::log2(36.0))
    {
        return 1.0 - (entropy_bits_2d - gmi_bits) / bits_per_symbol;
    }

    // ---- Rates --------------------------------------------------------------

    enum class Framing
    {
        joint_spatial,            // one FEC frame spans all spatial channels; rate from the pooled NGMI
        per_channel_common_rate,  // frames within one spatial channel, one rate per wavelength: worst channel decides
        per_channel_adaptive,     // frames within one spatial channel, independent rate per channel
    };

    struct FecModel
    {
        std::vector<double> rates{0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
        std::vector<double> ngmi_thresholds{0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

        // Highest rate whose threshold is met; nullopt if none.
        std::optional<double> select(double ngmi_value) const
        {
            std::optional<double> best;
            for (std::size_t i = 0; i < rates.size(); ++i)
                if (ngmi_value >= ngmi_thresholds[i] - 1e-12 && (!best || rates[i] > *best))
                    best = rates[i];
            return best;
        }
    };

    struct RateResult
    {
        double net_bps = 0.0;
        double achievable_bps = 0.0;
        double code_rate = 0.0; // joint or common rate; mean rate for adaptive framing
        double pooled_gmi = 0.0;
        double pooled_ngmi = 0.0;
        bool infeasible = false;
    };

    /// achievable = Rs * sum gmi; net = Rs * sum [H - (1 - R) m] with R from the FEC table.
    inline RateResult net_rate(std::span<const double> gmi_per_channel, double symbol_rate, double entropy_2d,
                               const FecModel &fec = {}, Framing framing = Framing::joint_spatial,
                               double bits_per_symbol = std::log2(36.0))
    {
        RateResult r;
        if (gmi_per_channel.empty())
            return r;
        const double s = double(gmi_per_channel.size());
        double sum = 0.0;
        for (double g : gmi_per_channel)
        {
            if (g < -1e-12 || g > entropy_2d + 1e-9)
                throw DomainError("net_rate: gmi outside [0, H]");
            sum += g;
        }
        r.achievable_bps = symbol_rate * sum;
        r.pooled_gmi = sum / s;
        r.pooled_ngmi = ngmi(r.pooled_gmi, entropy_2d, bits_per_symbol);

        auto per_channel_net = [&](double rate) { return entropy_2d - (1.0 - rate) * bits_per_symbol; };

        switch (framing)
        {
        case Framing::joint_spatial: {
            const auto rate = fec.select(r.pooled_ngmi);
            if (!rate)
            {
                r.infeasible = true;
                return r;
            }
            r.code_rate = *rate;
            r.net_bps = symbol_rate * s * per_channel_net(*rate);
            break;
        }
        case Framing::per_channel_common_rate: {
            double worst = INFINITY;
            for (double g : gmi_per_channel)
                worst = std::min(worst, ngmi(g, entropy_2d, bits_per_symbol));
            const auto rate = fec.select(worst);
            if (!rate)
            {
                r.infeasible = true;
                return r;
            }
            r.code_rate = *rate;
            r.net_bps = symbol_rate * s * per_channel_net(*rate);
            break;
        }
        case Framing::per_channel_adaptive: {
            double rsum = 0.0;
            for (double g : gmi_per_channel)
            {
                const auto rate = fec.select(ngmi(g, entropy_2d, bits_per_symbol));
                if (!rate)
                {
                    r.infeasible = true;
                    continue;
                }
                rsum += *rate;
                r.net_bps += symbol_rate * per_channel_net(*rate);
            }
            r.code_rate = rsum / s;
            break;
        }
        }
        return r;
    }

} // namespace ccmcf
