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

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

// Thin FFTW wrapper. Forward transform is unnormalized, inverse carries 1/n,
// so ifft(fft(x)) == x.

namespace ccmcf
{
    namespace detail
    {
        class FftPlanCache
        {
        public:
            static FftPlanCache &instance()
            {
                static FftPlanCache cache;
                return cache;
            }

            // FFTW planning is not thread-safe; execution with new-array API is.
            fftw_plan get(std::size_t n, int sign)
            {
                std::lock_guard<std::mutex> lock(mutex_);
                auto key = std::make_pair(n, sign);
                auto it = plans_.find(key);
                if (it != plans_.end())
                    return it->second;
                CVector tmp(n);
                auto *p = reinterpret_cast<fftw_complex *>(tmp.data());
                fftw_plan plan = fftw_plan_dft_1d(int(n), p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
                plans_.emplace(key, plan);
                return plan;
            }

            ~FftPlanCache()
            {
                for (auto &kv : plans_)
                    fftw_destroy_plan(kv.second);
            }

        private:
            FftPlanCache() = default;
            std::mutex mutex_;
            std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
        };

        inline void execute(std::span<cplx> x, int sign)
        {
            if (x.empty())
                return;
            auto plan = FftPlanCache::instance().get(x.size(), sign);
            auto *p = reinterpret_cast<fftw_complex *>(x.data());
            fftw_execute_dft(plan, p, p);
        }
    } // namespace detail

    inline void fft_inplace(std::span<cplx> x) { detail::execute(x, FFTW_FORWARD); }

    inline void ifft_inplace(std::span<cplx> x)
    {
        detail::execute(x, FFTW_BACKWARD);
        const double s = 1.0 / double(x.size());
        for (auto &v : x)
            v *= s;
    }

    inline CVector fft(std::span<const cplx> x)
    {
        CVector y(x.begin(), x.end());
        fft_inplace(y);
        return y;
    }

    inline CVector ifft(std::span<const cplx> x)
    {
        CVector y(x.begin(), x.end());
        ifft_inplace(y);
        return y;
    }

    /// Per-channel spectra of a waveform (same channel order).
    inline std::vector<CVector> to_spectrum(const MultiChannelWaveform &w)
    {
        std::vector<CVector> out;
        out.reserve(w.channels());
        for (const auto &ch : w.samples)
            out.push_back(fft(ch));
        return out;
    }

    inline void from_spectrum(MultiChannelWaveform &w, std::vector<CVector> spectra)
    {
        for (auto &s : spectra)
            ifft_inplace(s);
        w.samples = std::move(spectra);
    }

} // namespace ccmcf
