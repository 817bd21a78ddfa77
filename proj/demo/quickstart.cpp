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

// One 4-mode, 4-span link through the whole chain.

#include <ccmcf/ccmcf.hpp>

#include <iostream>

int main()
{
    using namespace ccmcf;
    const Seed seed(7);
    const auto c = mb_shape(4.688);
    const std::size_t m = 1 << 15;

    LinkConfig lc;
    lc.modes = 4;
    lc.spans = 4;
    const auto link = build_link(lc, seed);

    const auto frame = draw_frame(seed, c, 4, m, 1.0 / 64);
    auto rx = apply_link(rrc_modulate(frame, 2, 0.05), link, seed);
    rx = cd_compensate(rx, link.beta2, link.total_length_km);
    rrc_filter_inplace(rx, default_symbol_rate, 0.05);

    const auto eq = fd_mimo_equalize(rx, frame, c, EqualizerConfig{});
    const auto grid = fft_bin_frequencies(2048, 2 * default_symbol_rate);
    const auto band = raised_cosine_weight(grid, default_symbol_rate, 0.05);
    const double dt = 1.0 / (2 * default_symbol_rate);

    std::cout << "entropy " << c.entropy_2d << " bits, " << link.total_length_km << " km\n";
    for (std::size_t ch = 0; ch < eq.residual_snr_db.size(); ++ch)
        std::cout << "channel " << ch << ": residual SNR " << eq.residual_snr_db[ch] << " dB\n";
    std::cout << "tau_m from taps    " << memory_length(tap_power_profile(eq.state, band), dt) * 1e9 << " ns\n";
    std::cout << "tau_m from channel "
              << memory_length(impulse_power_profile(link_transfer(link, grid, 0.0, false), band), dt) * 1e9
              << " ns\n";
}
