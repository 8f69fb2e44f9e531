// Copyright (c) 2026 eend authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEND_EEND_HPP
#define EEND_EEND_HPP

#include "eend/autodiff.hpp"
#include "eend/checkpoint.hpp"
#include "eend/config.hpp"
#include "eend/datagen.hpp"
#include "eend/errors.hpp"
#include "eend/io.hpp"
#include "eend/kv.hpp"
#include "eend/loss.hpp"
#include "eend/matrix.hpp"
#include "eend/metrics.hpp"
#include "eend/model.hpp"
#include "eend/nncore.hpp"
#include "eend/params.hpp"
#include "eend/threading.hpp"
#include "eend/trainer.hpp"

#endif  // EEND_EEND_HPP
