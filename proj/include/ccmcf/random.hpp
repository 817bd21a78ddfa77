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

#include <initializer_list>
#include <limits>

/*!SECTION
Seeded randomness

Every draw in the simulator comes from a counter-based generator keyed by a
(master seed, stream path) pair. The key is a hash of the path, the n-th output
is a mix of (key, n). Two generators with the same Seed produce the same
sequence regardless of which thread or in which order they are used.
SECTION!*/

namespace ccmcf
{
    namespace detail
    {
        // splitmix64 finalizer
        constexpr std::uint64_t mix64(std::uint64_t z)
        {
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            return z ^ (z >> 31);
        }
    } // namespace detail

    /// Hierarchical seed: master seed plus a stream path, e.g. {span, section}.
    struct Seed
    {
        std::uint64_t master_seed = 0;
        std::vector<std::uint64_t> stream_id;

        Seed() = default;
        explicit Seed(std::uint64_t master) : master_seed(master) {}
        Seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) : master_seed(master), stream_id(path) {}

        Seed child(std::uint64_t id) const
        {
            Seed s = *this;
            s.stream_id.push_back(id);
            return s;
        }

        std::uint64_t key() const
        {
            std::uint64_t h = detail::mix64(master_seed ^ 0x6a09e667f3bcc909ULL);
            for (auto id : stream_id)
                h = detail::mix64(h ^ detail::mix64(id + 0x9e3779b97f4a7c15ULL));
            return h;
        }

        bool operator==(const Seed &) const = default;
    };

    // Stream tags for the top level of the hierarchy
    namespace stream
    {
        inline constexpr std::uint64_t link = 1;
        inline constexpr std::uint64_t ase = 2;
        inline constexpr std::uint64_t frame = 3;
        inline constexpr std::uint64_t noise = 4;
        inline constexpr std::uint64_t phase_noise = 5;
        inline constexpr std::uint64_t dummy = 6;
        inline constexpr std::uint64_t trial = 7;
    } // namespace stream

    /// Counter-based generator satisfying UniformRandomBitGenerator.
    class CounterRng
    {
    public:
        using result_type = std::uint64_t;

        explicit CounterRng(const Seed &seed, std::uint64_t start = 0) : key_(seed.key()), counter_(start) {}

        // Skips hashing the stream path when the key was computed up front.
        static CounterRng from_key(std::uint64_t key, std::uint64_t start = 0)
        {
            CounterRng r(Seed{}, start);
            r.key_ = key;
            return r;
        }

        static constexpr result_type min() { return 0; }
        static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

        result_type operator()()
        {
            // Two rounds so neighbouring counters decorrelate fully.
            const auto x = detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * (counter_++ + 1));
            return detail::mix64(x ^ key_);
        }

        // Uniform in (0, 1)
        double uniform()
        {
            return (double((*this)() >> 11) + 0.5) * 0x1.0p-53;
        }

        // Box-Muller; portable across standard libraries, unlike std::normal_distribution.
        double normal()
        {
            if (has_spare_)
            {
                has_spare_ = false;
                return spare_;
            }
            const double u1 = uniform();
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            spare_ = r * std::sin(2.0 * pi * u2);
            has_spare_ = true;
            return r * std::cos(2.0 * pi * u2);
        }

        // Circular complex Gaussian with E|z|^2 = variance
        cplx complex_normal(double variance = 1.0)
        {
            const double s = std::sqrt(variance / 2.0);
            const double re = normal();
            const double im = normal();
            return {s * re, s * im};
        }

    private:
        std::uint64_t key_;
        std::uint64_t counter_;
        double spare_ = 0.0;
        bool has_spare_ = false;
    };

    /// Haar-distributed S x S unitary (QR of a complex Ginibre matrix with R-diagonal phase fix).
    inline CMatrix haar_unitary(CounterRng &rng, int s)
    {
        CMatrix z(s, s);
        for (int j = 0; j < s; ++j)
            for (int i = 0; i < s; ++i)
                z(i, j) = rng.complex_normal();
        Eigen::HouseholderQR<CMatrix> qr(z);
        CMatrix q = qr.householderQ();
        const CMatrix &r = qr.matrixQR();
        for (int j = 0; j < s; ++j)
        {
            const cplx d = r(j, j);
            const double a = std::abs(d);
            q.col(j) *= (a > 0.0) ? d / a : cplx(1.0);
        }
        return q;
    }

} // namespace ccmcf
