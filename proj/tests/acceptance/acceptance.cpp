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

// Acceptance run: one [PASS]/[FAIL] line per criterion, nonzero exit if any fails.
// usage: ccmcf_acceptance --sim <path to ccmcf-sim> --work <scratch dir> [--only N]

#include <ccmcf/ccmcf.hpp>

#include <oracles/oracles.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>

using namespace ccmcf;
namespace fs = std::filesystem;

namespace
{
    struct Outcome
    {
        bool pass = true;
        std::ostringstream detail;

        void require(bool ok, const std::string &what)
        {
            if (!ok)
            {
                pass = false;
                detail << " [violated: " << what << "]";
            }
        }
    };

    double mean_of(const std::vector<double> &v)
    {
        double a = 0.0;
        for (double x : v)
            a += x;
        return a / double(v.size());
    }

    // residual SNR after the best complex scalar fit of y onto d
    double unbiased_snr_db(const CVector &y, const CVector &d, const std::vector<bool> &use)
    {
        cplx yd = 0.0;
        double dd = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k)
            if (use[k])
            {
                yd += y[k] * std::conj(d[k]);
                dd += std::norm(d[k]);
            }
        const cplx a = yd / dd;
        double e = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k)
            if (use[k])
                e += std::norm(y[k] - a * d[k]);
        return 10.0 * std::log10(std::norm(a) * dd / e);
    }

    double payload_gmi(const EqualizedOutput &eq, const SymbolFrame &f, const ShapedConstellation &c)
    {
        const auto use = payload_mask(eq, f);
        double acc = 0.0;
        for (std::size_t ch = 0; ch < f.channels(); ++ch)
        {
            std::vector<int> idx;
            std::vector<cplx> y;
            for (std::size_t k = 0; k < f.length(); ++k)
                if (use[k])
                {
                    idx.push_back(f.indices[ch][k]);
                    y.push_back(eq.symbols[ch][k]);
                }
            acc += gmi(idx, y, c);
        }
        return acc / double(f.channels());
    }

    // per-bin multiply by a test-side transfer
    template <typename H>
    MultiChannelWaveform apply_transfer(const MultiChannelWaveform &w, H &&h)
    {
        const auto s = Eigen::Index(w.channels());
        auto spec = to_spectrum(w);
        const auto freqs = fft_bin_frequencies(w.length(), w.sample_rate);
        Eigen::VectorXcd x(s);
        for (std::size_t k = 0; k < w.length(); ++k)
        {
            for (Eigen::Index i = 0; i < s; ++i)
                x(i) = spec[std::size_t(i)][k];
            const Eigen::VectorXcd y = h(freqs[k]) * x;
            for (Eigen::Index i = 0; i < s; ++i)
                spec[std::size_t(i)][k] = y(i);
        }
        MultiChannelWaveform out = w;
        from_spectrum(out, std::move(spec));
        return out;
    }

    // ---- 1 ----------------------------------------------------------------

    Outcome criterion_1()
    {
        Outcome o;
        const std::vector<int> spans{1, 4, 8, 15, 19};
        const int draws = 100;
        const double fs = 280e9;
        const auto grid = fft_bin_frequencies(2048, fs);
        const auto weight = raised_cosine_weight(grid, 140e9, 0.05);
        std::vector<std::pair<double, double>> pts;
        for (int k : spans)
        {
            LinkConfig c;
            c.modes = 4;
            c.spans = k;
            c.sigma_g_db = 0.0;
            c.noiseless = true;
            double acc = 0.0;
            for (int d = 0; d < draws; ++d)
            {
                const auto link = build_link(c, Seed(2024, {std::uint64_t(k), std::uint64_t(d)}));
                acc += memory_length(impulse_power_profile(link_transfer(link, grid, 0.0, false), weight), 1.0 / fs);
            }
            const double l = k * c.span_length_km;
            pts.emplace_back(l, acc / draws * 1e12);
            o.detail << " L=" << l << "km:" << std::lround(acc / draws * 1e12) << "ps";
        }
        const auto fit = fit_power_law(pts);
        const double a = fit_sqrt_law(pts);
        o.detail << "; exponent " << fit.exponent << ", R^2 " << fit.r_squared << ", a = " << a
                 << " ps/sqrt(km) (reported)";
        o.require(fit.exponent >= 0.45 && fit.exponent <= 0.55, "exponent in [0.45, 0.55]");
        o.require(fit.r_squared > 0.95, "R^2 > 0.95");
        return o;
    }

    // ---- 2 ----------------------------------------------------------------

    Outcome criterion_2()
    {
        Outcome o;
        const double tau = 67.0 * std::sqrt(1016.5);
        o.detail << " 67*sqrt(1016.5) = " << tau << " ps";
        o.require(std::abs(tau - 2136.0) < 0.5, "67 sqrt(1016.5) = 2136 ps");
        o.require(std::abs(tau / 2100.0 - 1.0) <= 0.03, "consistent with 2.1 ns within 3%");

        const double one = 31 * 14.69, nineteen = 31 * 12.55;
        o.detail << "; 31*14.69 = " << one << ", 31*12.55 = " << nineteen;
        o.require(std::abs(one / 455.4 - 1.0) <= 1e-3, "31 x 14.69 within 0.1% of 455.4");
        o.require(std::abs(nineteen / 389.3 - 1.0) <= 1e-3, "31 x 12.55 within 0.1% of 389.3");

        const double gross = 24 * 140e9 * 4.688 * 1e-12;
        o.detail << "; 24*140GBd*4.688 = " << gross << " Tb/s";
        o.require(std::abs(gross - 15.751) < 1e-3, "gross bound 15.751 Tb/s");
        // per-wavelength nets, and the achievable totals spread over 31 slots
        for (double v : {14.69, 12.55, 455.4 / 31, 389.3 / 31, 465.8 / 31, 409.0 / 31})
            o.require(v <= gross, "per-wavelength rate " + std::to_string(v) + " under the gross bound");
        return o;
    }

    // ---- 3 ----------------------------------------------------------------

    Outcome criterion_3()
    {
        Outcome o;
        const double sg = 0.35;
        const double fs = 280e9;
        const auto grid = fft_bin_frequencies(64, fs);
        std::vector<double> inband;
        for (double f : grid)
            if (std::abs(f) < 0.5 * 140e9 * 0.95)
                inband.push_back(f);

        // closed loop at S = 4
        const std::vector<int> ks{1, 4, 8, 19};
        const int trials = 60;
        std::vector<std::pair<int, double>> pts;
        for (int k : ks)
        {
            LinkConfig c;
            c.modes = 4;
            c.spans = k;
            c.sections_per_span = 10;
            c.sigma_g_db = sg;
            for (int t = 0; t < trials; ++t)
            {
                const auto link = build_link(c, Seed(303, {std::uint64_t(k), std::uint64_t(t)}));
                pts.emplace_back(k, rms_mdl(link_transfer(link, inband, 0.0, false)).sigma_rms_db);
            }
        }
        std::vector<double> sgrid;
        for (int i = 0; i <= 30; ++i)
            sgrid.push_back(0.05 * i);
        const auto curve = MdlAccumulationCurve::build(4, ks, sgrid, 200, Seed(304));
        const auto fit = fit_mdl_per_span(pts, curve, 1.5);
        o.detail << " fitted sigma_g " << fit.sigma_g_db << " dB (true " << sg << ")";
        o.require(std::abs(fit.sigma_g_db - sg) <= 0.05, "sigma_g recovered within 0.05 dB");

        // K = 19, S = 24 end to end
        LinkConfig c;
        c.modes = 24;
        c.spans = 19;
        c.sections_per_span = 10;
        c.sigma_g_db = sg;
        std::vector<double> eight;
        for (std::size_t i = 0; i < inband.size(); i += inband.size() / 8)
            eight.push_back(inband[i]);
        std::vector<double> sim;
        for (int t = 0; t < 100; ++t)
        {
            const auto link = build_link(c, Seed(305, {std::uint64_t(t)}));
            sim.push_back(rms_mdl(link_transfer(link, eight, 0.0, false)).sigma_rms_db);
        }
        const double m = mean_of(sim);
        const double ref = mean_of(oracle::mdl_product_samples(24, 19, sg, 500, 306));
        const double measured = 2.52;
        o.detail << "; K=19 S=24 mean " << m << " dB, oracle " << ref << " dB, sqrt(K)*sigma_g "
                 << sg * std::sqrt(19.0) << " dB, measured " << measured << " dB (deviation "
                 << 100.0 * (m / measured - 1.0) << "%)";
        o.require(std::abs(m / ref - 1.0) <= 0.05, "simulation agrees with the span-product oracle within 5%");
        o.require(std::abs(m / measured - 1.0) <= 0.30, "within 30% of the reported 2.52 dB");
        if (std::abs(m / measured - 1.0) > 0.30)
            o.detail << ". Span-only MDL accumulates as sigma_g sqrt(K); the reported 1.98 dB (8 spans) and"
                        " 2.52 dB (19 spans) need an extra distance-independent ~1.7-2.0 dB term that the"
                        " link model does not contain";
        return o;
    }

    // ---- 4 ----------------------------------------------------------------

    Outcome criterion_4()
    {
        Outcome o;
        const auto c = mb_shape(4.688);
        double h = 0.0, e = 0.0;
        for (std::size_t i = 0; i < c.points.size(); ++i)
        {
            h -= c.probs[i] * std::log2(c.probs[i]);
            e += c.probs[i] * std::norm(c.points[i]);
        }
        o.detail << " entropy " << std::setprecision(10) << h << ", energy " << e << ", nu " << c.nu
                 << " (oracle " << oracle::mb_nu_for_entropy(4.688) << ")";
        o.require(std::abs(h - 4.688) <= 1e-6, "entropy 4.688 +- 1e-6");
        o.require(std::abs(e - 1.0) <= 1e-9, "unit energy +- 1e-9");
        // equal raw energy => identical probability
        const auto raw = truncated_36qam_points();
        for (std::size_t i = 0; i < raw.size(); ++i)
            for (std::size_t j = 0; j < raw.size(); ++j)
                if (std::norm(raw[i]) == std::norm(raw[j]) && c.probs[i] != c.probs[j])
                    o.require(false, "ring symmetry");
        o.require(std::abs(c.nu / oracle::mb_nu_for_entropy(4.688) - 1.0) < 1e-6, "rate parameter matches oracle");
        return o;
    }

    // ---- 5 ----------------------------------------------------------------

    struct Backtoback
    {
        ShapedConstellation c = mb_shape(4.688);
        SymbolFrame frame;
        MultiChannelWaveform tx;
    };

    Backtoback b2b(std::size_t s, int log2_m, std::uint64_t seed)
    {
        Backtoback b;
        b.frame = draw_frame(Seed(seed), b.c, s, std::size_t(1) << log2_m, 1.0 / 64.0);
        b.tx = rrc_modulate(b.frame, 2, 0.05);
        return b;
    }

    Outcome criterion_5()
    {
        Outcome o;
        const auto c = mb_shape(4.688);
        const std::size_t m = std::size_t(1) << 20;
        std::mt19937_64 g(505);
        std::discrete_distribution<int> pick(c.probs.begin(), c.probs.end());
        std::normal_distribution<double> n01(0.0, 1.0);
        std::vector<int> idx(m);
        for (auto &v : idx)
            v = pick(g);
        const std::vector<cplx> pts(c.points.begin(), c.points.end());
        const std::vector<double> probs(c.probs.begin(), c.probs.end());
        for (double snr : {8.0, 11.0, 14.0, 17.0})
        {
            const double sd = std::sqrt(std::pow(10.0, -snr / 10.0) / 2.0);
            std::vector<cplx> y(m);
            for (std::size_t k = 0; k < m; ++k)
                y[k] = c.points[std::size_t(idx[k])] + cplx(sd * n01(g), sd * n01(g));
            const double est = gmi(idx, y, c);
            const double ref = oracle::awgn_mi(pts, probs, snr);
            o.detail << " " << snr << "dB: " << est << " vs " << ref << ";";
            o.require(std::abs(est - ref) <= 0.02, "GMI at " + std::to_string(snr) + " dB within 0.02 of the oracle");
        }
        // noiseless: full back-to-back chain through the equalizer
        auto b = b2b(2, 15, 506);
        auto rx = b.tx;
        rrc_filter_inplace(rx, 140e9, 0.05);
        const auto eq = fd_mimo_equalize(rx, b.frame, b.c, EqualizerConfig{});
        const double g0 = payload_gmi(eq, b.frame, b.c);
        o.detail << " noiseless " << std::setprecision(8) << g0;
        o.require(std::abs(g0 - 4.688) <= 1e-3, "noiseless GMI 4.688 +- 1e-3");
        return o;
    }

    // ---- 6 ----------------------------------------------------------------

    Outcome criterion_6()
    {
        Outcome o;
        const std::size_t s = 4;
        const int log2_m = 15;

        { // (a)
            auto b = b2b(s, log2_m, 601);
            auto rx = b.tx;
            rrc_filter_inplace(rx, 140e9, 0.05);
            const auto eq = fd_mimo_equalize(rx, b.frame, b.c, EqualizerConfig{});
            double worst = INFINITY;
            for (double v : eq.residual_snr_db)
                worst = std::min(worst, v);
            o.detail << " (a) identity min SNR " << worst << " dB;";
            o.require(worst > 40.0, "(a) identity > 40 dB");
        }
        { // (b)
            auto b = b2b(s, log2_m, 602);
            std::mt19937_64 g(603);
            const auto u1 = oracle::haar(g, int(s)), u2 = oracle::haar(g, int(s));
            std::uniform_real_distribution<double> ud(-60e-12, 60e-12);
            std::vector<double> tau(s);
            for (auto &t : tau)
                t = ud(g);
            auto h = [&](double f) {
                Eigen::VectorXcd d{Eigen::Index(s)};
                for (std::size_t i = 0; i < s; ++i)
                    d(Eigen::Index(i)) = std::polar(1.0, -2.0 * pi * f * tau[i]);
                return oracle::CMat(u2 * d.asDiagonal() * u1);
            };
            auto hinv = [&](double f) { return oracle::CMat(h(f).inverse()); };
            auto rx = apply_transfer(b.tx, h);
            add_awgn(rx, 18.0, 140e9, Seed(604));
            rrc_filter_inplace(rx, 140e9, 0.05);
            const auto eq = fd_mimo_equalize(rx, b.frame, b.c, EqualizerConfig{});
            const auto use = payload_mask(eq, b.frame);
            const auto zf = apply_transfer(rx, hinv);
            std::vector<double> zf_snr;
            for (std::size_t ch = 0; ch < s; ++ch)
            {
                CVector y(b.frame.length());
                for (std::size_t k = 0; k < y.size(); ++k)
                    y[k] = zf.samples[ch][2 * k];
                zf_snr.push_back(unbiased_snr_db(y, b.frame.symbols[ch], use));
            }
            const double got = mean_of(eq.residual_snr_db), ref = mean_of(zf_snr);
            o.detail << " (b) equalizer " << got << " dB vs zero-forcing " << ref << " dB;";
            o.require(std::abs(got - ref) <= 0.3, "(b) within 0.3 dB of zero forcing");
        }
        { // (c)
            auto b = b2b(s, log2_m, 605);
            std::mt19937_64 g(606);
            const auto u = oracle::haar(g, int(s));
            auto rx = b.tx;
            Eigen::VectorXcd x{Eigen::Index(s)};
            for (std::size_t k = 0; k < rx.length(); ++k)
            {
                for (std::size_t i = 0; i < s; ++i)
                    x(Eigen::Index(i)) = std::conj(rx.samples[i][k]);
                const Eigen::VectorXcd y = u * x;
                for (std::size_t i = 0; i < s; ++i)
                    rx.samples[i][k] = y(Eigen::Index(i));
            }
            add_awgn(rx, 18.0, 140e9, Seed(607));
            rrc_filter_inplace(rx, 140e9, 0.05);
            EqualizerConfig wl;
            wl.mode = EqualizerMode::widely_linear;
            const double g_sl = payload_gmi(fd_mimo_equalize(rx, b.frame, b.c, EqualizerConfig{}), b.frame, b.c);
            const double g_wl = payload_gmi(fd_mimo_equalize(rx, b.frame, b.c, wl), b.frame, b.c);
            o.detail << " (c) conjugating channel GMI widely-linear " << g_wl << ", strictly-linear " << g_sl;
            o.require(g_wl - g_sl > 1.0, "(c) GMI gap > 1 bit");
        }
        return o;
    }

    // ---- 7 ----------------------------------------------------------------

    Outcome criterion_7()
    {
        Outcome o;
        LinkConfig lc;
        lc.modes = 4;
        lc.spans = 4;
        lc.sections_per_span = 10;
        const auto link = build_link(lc, Seed(701));
        const double fs = 280e9;
        const auto grid = fft_bin_frequencies(256, fs);
        const auto weight = raised_cosine_weight(grid, 140e9, 0.05);
        const auto h = link_transfer(link, grid, 0.0, false);
        std::mt19937_64 g(702);
        const auto a = oracle::haar(g, 4), b = oracle::haar(g, 4);

        auto transformed = [&](auto &&fn) {
            SpectralTransfer t = h;
            for (std::size_t k = 0; k < t.bins(); ++k)
                t.matrices[k] = fn(k, h.matrices[k]);
            return t;
        };
        const double s0 = rms_mdl(h).sigma_rms_db;
        const double s_scalar =
            rms_mdl(transformed([](std::size_t, const CMatrix &m) { return CMatrix(cplx(0.3, -0.8) * m); })).sigma_rms_db;
        const double s_rot = rms_mdl(transformed([&](std::size_t, const CMatrix &m) { return CMatrix(a * m * b); })).sigma_rms_db;
        std::vector<CMatrix> pa, pb;
        for (std::size_t k = 0; k < h.bins(); ++k)
        {
            pa.push_back(oracle::haar(g, 4));
            pb.push_back(oracle::haar(g, 4));
        }
        const double s_perbin =
            rms_mdl(transformed([&](std::size_t k, const CMatrix &m) { return CMatrix(pa[k] * m * pb[k]); })).sigma_rms_db;
        o.detail << " sigma_rms " << s0 << " dB; max change "
                 << std::max({std::abs(s_scalar - s0), std::abs(s_rot - s0), std::abs(s_perbin - s0)}) << " dB;";
        o.require(std::abs(s_scalar - s0) < 1e-9, "sigma_rms scalar invariance");
        o.require(std::abs(s_rot - s0) < 1e-9, "sigma_rms two-sided unitary invariance");
        o.require(std::abs(s_perbin - s0) < 1e-9, "sigma_rms per-bin unitary invariance");

        const auto t0 = memory_length_samples(impulse_power_profile(h, weight));
        for (int d : {1, 37, 200})
        {
            const auto shifted = transformed([&](std::size_t k, const CMatrix &m) {
                return CMatrix(std::polar(1.0, -2.0 * pi * double(k) * d / double(h.bins())) * m);
            });
            o.require(memory_length_samples(impulse_power_profile(shifted, weight)) == t0,
                      "tau_m common delay " + std::to_string(d));
        }
        const auto rotated = transformed([&](std::size_t, const CMatrix &m) { return CMatrix(a * m * b); });
        o.require(memory_length_samples(impulse_power_profile(rotated, weight)) == t0, "tau_m basis rotation");
        o.detail << " tau_m " << t0 << " samples under delay/rotation;";

        std::mt19937_64 rg(703);
        std::uniform_int_distribution<int> sdist(2, 24);
        // mostly above the lowest code threshold (NGMI 0.6 at 2.62 bits) so both framings are usually decodable
        std::uniform_real_distribution<double> gdist(2.6, 4.688);
        int violations = 0, infeasible = 0;
        for (int t = 0; t < 1000; ++t)
        {
            std::vector<double> v(std::size_t(sdist(rg)));
            for (auto &x : v)
                x = gdist(rg);
            const auto pooled = net_rate(v, 140e9, 4.688, {}, Framing::joint_spatial);
            const auto per = net_rate(v, 140e9, 4.688, {}, Framing::per_channel_common_rate);
            if (pooled.net_bps < per.net_bps - 1e-3)
                ++violations;
            infeasible += per.infeasible;
        }
        o.detail << " pooled < per-channel net in " << violations << "/1000 vectors (" << infeasible
                 << " per-channel infeasible)";
        o.require(violations == 0, "pooled-FEC net >= per-channel-FEC net");
        return o;
    }

    // ---- 8 ----------------------------------------------------------------

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    Outcome criterion_8(const std::string &sim, const fs::path &work)
    {
        Outcome o;
        const std::vector<std::pair<std::string, int>> runs{{"run_a", 1}, {"run_b", 2}};
        for (const auto &[name, workers] : runs)
        {
            const auto dir = work / name;
            fs::remove_all(dir);
            const std::string cmd = "\"" + sim + "\" distance --seed 7 --workers " + std::to_string(workers) +
                                    " --out \"" + dir.string() + "\" > \"" + (work / (name + ".log")).string() +
                                    "\" 2>&1";
            const int rc = std::system(cmd.c_str());
            o.require(rc == 0, name + " exit status 0");
        }
        for (const char *f : {"distance.csv", "distance.json", "distance.dat"})
        {
            const auto a = slurp(work / "run_a" / f), b = slurp(work / "run_b" / f);
            o.require(!a.empty() && a == b, std::string(f) + " byte-identical");
            o.detail << " " << f << " " << a.size() << "B" << (a == b ? " identical;" : " differs;");
        }
        try
        {
            const auto j = nlohmann::json::parse(slurp(work / "run_a" / "distance.json"));
            const auto &sm = j.at("summary");
            o.detail << " tap-based a " << sm.value("a_taps_ps_per_sqrt_km", 0.0) << " ps/sqrt(km), exponent "
                     << sm.value("tau_exponent", 0.0) << ", sigma_g fit " << sm.value("sigma_g_fit_db", 0.0)
                     << " dB (informative)";
        }
        catch (const std::exception &e)
        {
            o.require(false, std::string("summary readable: ") + e.what());
        }
        return o;
    }
} // namespace

int main(int argc, char **argv)
{
    std::string sim;
    fs::path work = fs::temp_directory_path() / "ccmcf_acceptance";
    int only = 0;
    for (int i = 1; i + 1 < argc; i += 2)
    {
        const std::string k = argv[i];
        if (k == "--sim")
            sim = argv[i + 1];
        else if (k == "--work")
            work = argv[i + 1];
        else if (k == "--only")
            only = std::atoi(argv[i + 1]);
        else
        {
            std::cerr << "unknown option " << k << "\n";
            return 1;
        }
    }
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"sqrt(L) memory-length law", criterion_1},
        {"arithmetic cross-checks of reported figures", criterion_2},
        {"MDL closed loop", criterion_3},
        {"shaping", criterion_4},
        {"GMI oracle equivalence", criterion_5},
        {"equalizer correctness", criterion_6},
        {"metric invariances", criterion_7},
        {"determinism", [&] {
             if (sim.empty())
             {
                 Outcome o;
                 o.require(false, "--sim not given");
                 return o;
             }
             return criterion_8(sim, work);
         }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        if (only && int(i) + 1 != only)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = criteria[i].second();
        }
        catch (const std::exception &e)
        {
            o.pass = false;
            o.detail << " exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
                  << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::setprecision(6)
                  << " --" << o.detail.str() << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : "all criteria passed") << std::endl;
    return failed ? 1 : 0;
}
