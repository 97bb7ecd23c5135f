// Copyright (c) the jpegq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "jpegq/adam.hpp"
#include "jpegq/codec.hpp"
#include "jpegq/color.hpp"
#include "jpegq/common.hpp"
#include "jpegq/dct.hpp"
#include "jpegq/diffproxy.hpp"
#include "jpegq/entropy.hpp"
#include "jpegq/evaluation.hpp"
#include "jpegq/huffman.hpp"
#include "jpegq/ingest.hpp"
#include "jpegq/jfif.hpp"
#include "jpegq/optimizer.hpp"
#include "jpegq/quant.hpp"
#include "jpegq/serialization.hpp"
#include "jpegq/synth.hpp"
#include "jpegq/taskloss.hpp"
