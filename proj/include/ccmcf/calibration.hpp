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

// Frozen Monte Carlo calibration constants. Regenerate with `ccmcf-sim calibrate`.
//
// section_delay_scale(S): factor k in sigma_section = k * smd_coeff * sqrt(section_length)
// such that a 100-section, 100-km link has an ensemble-mean rms intensity impulse
// response width of smd_coeff * sqrt(100 km). 1024 bins at 280 GS/s, 2-sps band weighting,
// back-to-back pulse width removed. Draws: 400 (S <= 8), 100 (S = 12), 40 (S = 24), seed 1.

namespace ccmcf::calibration
{
    struct DelayScaleEntry
    {
        int modes;
        double scale;
    };

    inline constexpr DelayScaleEntry section_delay_scale_table[] = {
        {2, 1.457629},
        {4, 1.164394},
        {8, 1.070964},
        {12, 1.044983},
        {24, 1.023419},
    };

    inline double section_delay_scale(int modes)
    {
        for (const auto &e : section_delay_scale_table)
            if (e.modes == modes)
                return e.scale;
        // Random-walk estimate for untabulated mode counts: mean removal leaves (S-1)/S of the variance.
        return std::sqrt(double(modes) / double(modes - 1));
    }
} // namespace ccmcf::calibration
