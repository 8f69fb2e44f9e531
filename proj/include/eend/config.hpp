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

// Flat key=value run configuration covering model.*, train.*, sim.* and
// decode.* keys. Files and command-line overrides share one code path;
// unknown keys are rejected.

#ifndef EEND_CONFIG_HPP
#define EEND_CONFIG_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eend/datagen.hpp"
#include "eend/metrics.hpp"
#include "eend/model.hpp"
#include "eend/trainer.hpp"

namespace eend {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SimConfig sim;
  DecodeConfig decode;

  void validate() const {
    model.validate();
    train.validate();
    sim.validate();
    if (decode.threshold <= 0 || decode.threshold >= 1)
      throw ConfigError("decode.threshold must be in (0,1)");
    if (decode.median_frames < 1 || decode.median_frames % 2 == 0)
      throw ConfigError("decode.median_frames must be a positive odd integer");
    if (decode.collar < 0) throw ConfigError("decode.collar must be >= 0");
  }
};

inline void apply_run_key(RunConfig& c, const std::string& key, const std::string& value) {
  if (key.rfind("model.", 0) == 0) {
    apply_model_key(c.model, key, value);
  } else if (key.rfind("train.", 0) == 0) {
    apply_train_key(c.train, key, value);
  } else if (key.rfind("sim.", 0) == 0) {
    apply_sim_key(c.sim, key, value);
  } else if (key.rfind("decode.", 0) == 0) {
    apply_decode_key(c.decode, key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

inline std::string run_config_text(const RunConfig& c) {
  return model_config_text(c.model) + train_config_text(c.train) + sim_config_text(c.sim) +
         decode_config_text(c.decode);
}

inline RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  for (const auto& [key, value] : kv::parse_lines(text)) apply_run_key(c, key, value);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return parse_run_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct ConfigKeyHelp {
  const char* key;
  const char* type;
  const char* range;
  const char* help;
};

inline const std::vector<ConfigKeyHelp>& config_key_help() {
  static const std::vector<ConfigKeyHelp> table = {
      {"model.variant", "string", "eda|na", "attractor mechanism"},
      {"model.layers", "int", ">=1", "encoder layers"},
      {"model.dim", "int", ">=2, divisible by heads", "embedding width"},
      {"model.heads", "int", ">=1", "attention heads"},
      {"model.ff_dim", "int", ">=1", "feed-forward inner width"},
      {"model.speakers", "int", "1..8", "output speaker slots"},
      {"model.input_dim", "int", ">=1", "input feature rows"},
      {"model.inter_loss", "bool", "true|false", "tap intermediate layers during training"},
      {"model.self_cond", "bool", "true|false", "condition layers on previous-tap activity"},
      {"model.dropout", "real", "[0,1)", "encoder sublayer dropout"},
      {"model.seed", "uint", "", "parameter init seed"},
      {"model.tap_mask", "ints", "all or comma list in 1..L-1", "which layers are tapped"},
      {"train.batch_size", "int", ">=1", "windows per optimizer step"},
      {"train.segment_seconds", "real", ">0", "training window length"},
      {"train.warmup_steps", "int", ">=1", "learning-rate warmup steps"},
      {"train.epochs", "int", ">=0", "passes over the training windows"},
      {"train.adapt_lr", "real", ">0", "constant learning rate for adapt"},
      {"train.beta1", "real", "[0,1)", "Adam first-moment decay"},
      {"train.beta2", "real", "[0,1)", "Adam second-moment decay"},
      {"train.adam_eps", "real", ">0", "Adam denominator floor"},
      {"train.average_last_k", "int", ">=1, <=epochs", "checkpoints averaged after training"},
      {"train.seed", "uint", "", "shuffle and dropout seed"},
      {"train.grad_clip", "real", ">=0 (0 off)", "global gradient-norm limit"},
      {"train.inter_mix", "real", ">=0", "weight on averaged intermediate losses"},
      {"sim.speakers", "int", "2", "speakers per conversation"},
      {"sim.duration", "real", ">0", "target conversation seconds"},
      {"sim.mean_turn", "real", ">0", "mean speaking-turn seconds"},
      {"sim.mean_pause", "real", ">0", "mean silence-gap seconds"},
      {"sim.overlap", "real", "[0,1/3)", "target overlapped fraction of speech time"},
      {"sim.separation", "real", ">0", "speaker profile distance"},
      {"sim.noise_std", "real", ">0", "per-frame feature noise"},
      {"sim.seed", "uint", "", "conversation seed"},
      {"sim.base_dim", "int", ">=1", "base feature rows before stacking"},
      {"sim.stack", "int", "odd >=1", "stacked context frames"},
      {"decode.threshold", "real", "(0,1)", "posterior activity threshold"},
      {"decode.median_frames", "int", "odd >=1", "median smoothing window"},
      {"decode.collar", "real", ">=0", "scoring no-score collar seconds"},
  };
  return table;
}

}  // namespace eend

#endif  // EEND_CONFIG_HPP
