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
#include "calibration.hpp"
#include "channel_model.hpp"
#include "tx_dsp.hpp"
#include "rx_dsp.hpp"
#include "metrics.hpp"
#include "harness.hpp"
