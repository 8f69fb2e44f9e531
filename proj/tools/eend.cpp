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

// Command-line front end: simulate, train, adapt, infer, score, params,
// bench. Exit codes: 0 ok, 2 config, 3 I/O, 4 divergence, 5 checkpoint
// mismatch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "eend/eend.hpp"

namespace {

using namespace eend;

struct CliState {
  std::string config_path;
  std::vector<std::string> sets;
  int threads = 0;

  std::string out_dir;
  std::string manifest_path;
  std::string ckpt_path;
  std::string init_ckpt;
  std::string ref_path;
  std::string hyp_path;
  int n_conversations = 10;
  uint64_t seed = 0;
  bool seed_given = false;
  bool per_layer = false;
  bool oracle = false;
  double collar = -1.0;  // <0: take decode.collar
  int bench_steps = 30;
  int bench_batch = 4;
  int bench_frames = 100;
};

/// Builds the run config from file + --set overrides; returns the model.*
/// pairs that were explicitly set so checkpoint consumers can cross-check.
RunConfig make_config(const CliState& st, std::vector<std::pair<std::string, std::string>>* model_kv) {
  RunConfig rc;
  auto track = [&](const std::string& k, const std::string& v) {
    if (model_kv != nullptr && k.rfind("model.", 0) == 0) model_kv->emplace_back(k, v);
  };
  if (!st.config_path.empty()) {
    std::ifstream is(st.config_path);
    if (!is) throw IoError("cannot open config file: " + st.config_path);
    std::ostringstream buf;
    buf << is.rdbuf();
    for (const auto& [k, v] : kv::parse_lines(buf.str())) {
      apply_run_key(rc, k, v);
      track(k, v);
    }
  }
  for (const auto& s : st.sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    const std::string k = kv::trim(s.substr(0, eq));
    const std::string v = kv::trim(s.substr(eq + 1));
    apply_run_key(rc, k, v);
    track(k, v);
  }
  return rc;
}

int resolve_threads(const CliState& st) { return st.threads > 0 ? st.threads : default_threads(); }

/// Every explicitly-set model.* key must agree with the checkpoint config.
void check_model_overrides(const Checkpoint<double>& ck,
                           const std::vector<std::pair<std::string, std::string>>& model_kv) {
  for (const auto& [k, v] : model_kv) {
    ModelConfig probe = ck.config;
    apply_model_key(probe, k, v);
    if (model_config_text(probe) != ck.config_text)
      throw CheckpointMismatchError("config sets " + k + "=" + v + " but the checkpoint was built with a different value");
  }
}

int cmd_simulate(const CliState& st) {
  RunConfig rc = make_config(st, nullptr);
  if (st.seed_given) rc.sim.seed = st.seed;
  rc.sim.validate();
  if (st.n_conversations < 0) throw ConfigError("--n must be >= 0");
  if (st.out_dir.empty()) throw ConfigError("simulate needs --out");
  std::filesystem::create_directories(st.out_dir);
  const int n = st.n_conversations;
  std::vector<ManifestEntry> manifest(static_cast<size_t>(n));
  std::vector<OverlapStats> stats(static_cast<size_t>(n));
  parallel_for(n, resolve_threads(st), [&](int i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sim_%04d", i);
    SimConfig sc = rc.sim;
    sc.seed = mix_seed(rc.sim.seed, static_cast<uint64_t>(i));
    auto [ann, feats] = simulate_conversation(sc, name);
    const std::string base = st.out_dir + "/" + name;
    write_features(base + ".feat", feats.data);
    rttm_write({ann}, base + ".rttm");
    manifest[static_cast<size_t>(i)] = ManifestEntry{name, base + ".feat", base + ".rttm"};
    stats[static_cast<size_t>(i)] = overlap_stats(ann);
  });
  manifest_write(manifest, st.out_dir + "/manifest.tsv");
  double speech = 0, overlap = 0, speaker_time = 0;
  for (const auto& s : stats) {
    speech += ms_to_seconds(s.speech_union_ms);
    overlap += ms_to_seconds(s.overlap_ms);
    speaker_time += ms_to_seconds(s.total_speaker_ms);
  }
  std::printf("conversations=%d speech_s=%.1f speaker_time_s=%.1f overlap_ratio=%.4f target=%.4f\n", n,
              speech, speaker_time, speech > 0 ? overlap / speech : 0.0, rc.sim.overlap_ratio_target);
  std::printf("manifest=%s\n", (st.out_dir + "/manifest.tsv").c_str());
  return 0;
}

int run_training(const CliState& st, bool adapt) {
  std::vector<std::pair<std::string, std::string>> model_kv;
  RunConfig rc = make_config(st, &model_kv);
  rc.validate();
  if (st.manifest_path.empty()) throw ConfigError("train/adapt needs --manifest");
  if (st.out_dir.empty()) throw ConfigError("train/adapt needs --out");
  if (adapt && st.init_ckpt.empty()) throw ConfigError("adapt needs --init <checkpoint>");

  ParameterStore<double> ps;
  ModelConfig mcfg = rc.model;
  if (!st.init_ckpt.empty()) {
    Checkpoint<double> ck = load_checkpoint<double>(st.init_ckpt);
    check_model_overrides(ck, model_kv);
    mcfg = ck.config;
    ps = std::move(ck.params);
  } else {
    ps = init_parameters<double>(mcfg);
  }

  const auto manifest = manifest_read(st.manifest_path);
  const auto items = load_training_windows<double>(manifest, mcfg, rc.train.segment_seconds);

  std::filesystem::create_directories(st.out_dir);
  std::ofstream log(st.out_dir + "/train.log");
  if (!log) throw IoError("cannot open log file: " + st.out_dir + "/train.log");
  TrainOptions opt;
  opt.adapt = adapt;
  opt.out_dir = st.out_dir;
  opt.log = &log;
  opt.threads = resolve_threads(st);
  TrainResult result = train(ps, mcfg, rc.train, items, opt);

  std::string averaged;
  if (!result.checkpoint_paths.empty()) {
    const size_t k = std::min(result.checkpoint_paths.size(),
                              static_cast<size_t>(rc.train.average_last_k));
    const std::vector<std::string> last(result.checkpoint_paths.end() - static_cast<long>(k),
                                        result.checkpoint_paths.end());
    Checkpoint<double> avg = average_checkpoints<double>(last);
    averaged = st.out_dir + "/averaged.ckpt";
    save_checkpoint(averaged, avg.params, avg.config);
  }
  const double last_loss = result.logs.empty() ? 0.0 : result.logs.back().total_loss;
  std::printf("steps=%lld epochs=%d windows=%zu last_loss=%.6f checkpoints=%zu\n",
              static_cast<long long>(result.steps), rc.train.epochs, items.size(), last_loss,
              result.checkpoint_paths.size());
  if (!averaged.empty()) std::printf("averaged=%s\n", averaged.c_str());
  return 0;
}

int cmd_infer(const CliState& st) {
  std::vector<std::pair<std::string, std::string>> model_kv;
  RunConfig rc = make_config(st, &model_kv);
  if (st.ckpt_path.empty()) throw ConfigError("infer needs --ckpt");
  if (st.manifest_path.empty()) throw ConfigError("infer needs --manifest");
  if (st.out_dir.empty()) throw ConfigError("infer needs --out");
  Checkpoint<double> ck = load_checkpoint<double>(st.ckpt_path);
  check_model_overrides(ck, model_kv);
  const ModelConfig& mcfg = ck.config;
  if (st.per_layer && !mcfg.inter_loss)
    throw ConfigError("--per-layer needs a model trained with model.inter_loss=true");
  const auto manifest = manifest_read(st.manifest_path);
  std::filesystem::create_directories(st.out_dir);
  const std::vector<int> taps = mcfg.taps();
  if (st.per_layer) {
    for (int l : taps) std::filesystem::create_directories(st.out_dir + "/tap_" + std::to_string(l));
    std::filesystem::create_directories(st.out_dir + "/final");
  }
  const int n = static_cast<int>(manifest.size());
  std::vector<std::string> lines(static_cast<size_t>(n));
  parallel_for(n, resolve_threads(st), [&](int i) {
    const ManifestEntry& entry = manifest[static_cast<size_t>(i)];
    Matrix<float> feats = read_features(entry.feature_path);
    if (feats.rows != mcfg.input_dim)
      throw ConfigError(entry.feature_path + ": feature dim " + std::to_string(feats.rows) +
                        " does not match checkpoint input_dim " + std::to_string(mcfg.input_dim));
    Graph<double> g;
    ForwardOutput<double> out = forward(g, ck.params, mcfg, feats.cast<double>(), false);
    SegmentAnnotation hyp = decode_posteriors(out.final_posteriors.value(), rc.decode.threshold,
                                              rc.decode.median_frames, entry.id);
    rttm_write({hyp}, st.out_dir + "/" + entry.id + ".rttm");
    if (st.per_layer) {
      rttm_write({hyp}, st.out_dir + "/final/" + entry.id + ".rttm");
      for (size_t ti = 0; ti < taps.size(); ++ti) {
        SegmentAnnotation tap_hyp = decode_posteriors(out.intermediate_posteriors[ti].value(),
                                                      rc.decode.threshold, rc.decode.median_frames, entry.id);
        rttm_write({tap_hyp}, st.out_dir + "/tap_" + std::to_string(taps[ti]) + "/" + entry.id + ".rttm");
      }
    }
    lines[static_cast<size_t>(i)] = entry.id + " frames=" + std::to_string(feats.cols) +
                                    " segments=" + std::to_string(hyp.entries.size());
  });
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return 0;
}

int cmd_score(const CliState& st) {
  RunConfig rc = make_config(st, nullptr);
  const double collar = st.collar >= 0 ? st.collar : rc.decode.collar;
  if (st.ref_path.empty() || st.hyp_path.empty()) throw ConfigError("score needs --ref and --hyp");
  const auto refs = rttm_read(st.ref_path);
  const auto hyps = rttm_read(st.hyp_path);
  if (refs.empty()) throw IoError(st.ref_path + ": no reference recordings");
  std::map<std::string, const SegmentAnnotation*> hyp_by_id;
  for (const auto& h : hyps) hyp_by_id[h.recording_id] = &h;
  for (const auto& h : hyps) {
    bool known = false;
    for (const auto& r : refs) known = known || r.recording_id == h.recording_id;
    if (!known) throw IoError(st.hyp_path + ": hypothesis recording '" + h.recording_id + "' not in reference");
  }
  const int n = static_cast<int>(refs.size());
  std::vector<DerReport> reports(static_cast<size_t>(n));
  std::vector<DerReport> oracle_reports(static_cast<size_t>(n));
  parallel_for(n, resolve_threads(st), [&](int i) {
    const SegmentAnnotation& ref = refs[static_cast<size_t>(i)];
    auto it = hyp_by_id.find(ref.recording_id);
    const SegmentAnnotation hyp =
        it != hyp_by_id.end() ? *it->second : SegmentAnnotation{ref.recording_id, {}};
    reports[static_cast<size_t>(i)] = der(ref, hyp, collar);
    if (st.oracle) oracle_reports[static_cast<size_t>(i)] = der_frame_oracle(ref, hyp, collar);
  });
  std::printf("%-16s %8s %8s %8s %8s %9s %8s %10s\n", "recording", "DER%", "MISS%", "FA%", "CONF%",
              "SADMISS%", "SADFA%", "scored_s");
  auto print_row = [](const std::string& id, const DerReport& r) {
    std::printf("%-16s %8.2f %8.2f %8.2f %8.2f %9.2f %8.2f %10.2f\n", id.c_str(), 100 * r.der,
                100 * r.miss, 100 * r.fa, 100 * r.confusion, 100 * r.sad_miss, 100 * r.sad_fa,
                r.scored_speech_seconds);
  };
  for (int i = 0; i < n; ++i) print_row(refs[static_cast<size_t>(i)].recording_id, reports[static_cast<size_t>(i)]);
  const DerReport total = combine_reports(reports);
  print_row("TOTAL", total);
  for (int i = 0; i < n; ++i) {
    const DerReport& r = reports[static_cast<size_t>(i)];
    std::printf("record id=%s der=%.6f miss=%.6f fa=%.6f conf=%.6f sad_miss=%.6f sad_fa=%.6f scored_s=%.3f\n",
                refs[static_cast<size_t>(i)].recording_id.c_str(), r.der, r.miss, r.fa, r.confusion,
                r.sad_miss, r.sad_fa, r.scored_speech_seconds);
  }
  std::printf("record id=TOTAL der=%.6f miss=%.6f fa=%.6f conf=%.6f sad_miss=%.6f sad_fa=%.6f scored_s=%.3f\n",
              total.der, total.miss, total.fa, total.confusion, total.sad_miss, total.sad_fa,
              total.scored_speech_seconds);
  if (st.oracle) {
    const DerReport ot = combine_reports(oracle_reports);
    std::printf("oracle_der=%.4f%% delta=%.6f%%\n", 100 * ot.der, 100 * std::abs(ot.der - total.der));
  }
  return 0;
}

int cmd_params(const CliState& st) {
  RunConfig rc = make_config(st, nullptr);
  rc.model.validate();
  std::printf("variant=%s layers=%d dim=%d inter_loss=%s self_cond=%s params=%lld\n",
              to_string(rc.model.variant).c_str(), rc.model.num_layers, rc.model.model_dim,
              kv::bool_text(rc.model.inter_loss).c_str(), kv::bool_text(rc.model.self_cond).c_str(),
              static_cast<long long>(param_count(rc.model)));
  return 0;
}

int cmd_bench(const CliState& st) {
  RunConfig rc = make_config(st, nullptr);
  rc.model.validate();
  if (st.bench_steps < 1 || st.bench_batch < 1 || st.bench_frames < 1)
    throw ConfigError("bench needs positive --steps/--batch/--frames");
  const int threads = resolve_threads(st);
  auto variant = [&](AttractorVariant v, bool inter, bool sc) {
    ModelConfig m = rc.model;
    m.variant = v;
    m.inter_loss = inter;
    m.self_cond = sc;
    return bench_throughput<double>(m, st.bench_batch, st.bench_frames, st.bench_steps, 3, threads,
                                    rc.train.seed);
  };
  const double eda = variant(AttractorVariant::kEda, false, false);
  const double eda_inter = variant(AttractorVariant::kEda, true, false);
  const double na_inter = variant(AttractorVariant::kNa, true, false);
  const double na_inter_sc = variant(AttractorVariant::kNa, true, true);
  std::printf("eda batches_per_sec=%.3f\n", eda);
  std::printf("eda_inter batches_per_sec=%.3f\n", eda_inter);
  std::printf("na_inter batches_per_sec=%.3f\n", na_inter);
  std::printf("na_inter_self_cond batches_per_sec=%.3f\n", na_inter_sc);
  std::printf("ratio_na_inter_vs_eda_inter=%.3f\n", na_inter / eda_inter);
  std::printf("ratio_eda_vs_eda_inter=%.3f\n", eda / eda_inter);
  return 0;
}

std::string registry_footer() {
  RunConfig defaults;
  std::map<std::string, std::string> default_of;
  for (const auto& [k, v] : kv::parse_lines(run_config_text(defaults))) default_of[k] = v;
  std::string out = "Config keys (settable in --config files or via --set key=value):\n";
  for (const auto& row : config_key_help()) {
    out += "  ";
    out += row.key;
    out += " (" + std::string(row.type);
    if (row.range[0] != '\0') out += ", " + std::string(row.range);
    out += ") default=" + default_of[row.key];
    out += "  " + std::string(row.help) + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end neural diarization with encoder-decoder and intermediate attractors"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(registry_footer());

  CliState st;
  app.add_option("--config", st.config_path, "flat key=value config file");
  app.add_option("--set", st.sets, "override one config key (repeatable)")->type_size(1);
  app.add_option("--threads", st.threads, "worker threads (default: EEND_THREADS or 1)");

  auto* sim = app.add_subcommand("simulate", "generate synthetic conversations + manifest");
  sim->add_option("--out", st.out_dir, "output directory")->required();
  sim->add_option("--n", st.n_conversations, "number of conversations");
  sim->add_option("--seed", st.seed, "overrides sim.seed")->each([&](const std::string&) { st.seed_given = true; });

  auto* tr = app.add_subcommand("train", "train a model from a manifest");
  tr->add_option("--manifest", st.manifest_path, "training manifest")->required();
  tr->add_option("--out", st.out_dir, "checkpoint/log directory")->required();
  tr->add_option("--init", st.init_ckpt, "start from this checkpoint");

  auto* ad = app.add_subcommand("adapt", "fine-tune a checkpoint at constant lr");
  ad->add_option("--manifest", st.manifest_path, "adaptation manifest")->required();
  ad->add_option("--out", st.out_dir, "checkpoint/log directory")->required();
  ad->add_option("--init", st.init_ckpt, "checkpoint to adapt")->required();

  auto* in = app.add_subcommand("infer", "write hypothesis RTTMs for a manifest");
  in->add_option("--ckpt", st.ckpt_path, "model checkpoint")->required();
  in->add_option("--manifest", st.manifest_path, "input manifest")->required();
  in->add_option("--out", st.out_dir, "output directory")->required();
  in->add_flag("--per-layer", st.per_layer, "also decode every intermediate tap");

  auto* sc = app.add_subcommand("score", "diarization error rate between two RTTMs");
  sc->add_option("--ref", st.ref_path, "reference RTTM")->required();
  sc->add_option("--hyp", st.hyp_path, "hypothesis RTTM")->required();
  sc->add_option("--collar", st.collar, "no-score collar seconds (default decode.collar)");
  sc->add_flag("--oracle", st.oracle, "cross-check with the frame-sampling scorer");

  auto* pa = app.add_subcommand("params", "closed-form learnable parameter count");
  (void)pa;

  auto* be = app.add_subcommand("bench", "training throughput for all variants");
  be->add_option("--steps", st.bench_steps, "measured steps per variant");
  be->add_option("--batch", st.bench_batch, "synthetic batch size");
  be->add_option("--frames", st.bench_frames, "frames per synthetic window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (st.threads < 0 || st.threads > 1024) throw ConfigError("--threads must be in [1,1024]");
    if (*sim) return cmd_simulate(st);
    if (*tr) return run_training(st, false);
    if (*ad) return run_training(st, true);
    if (*in) return cmd_infer(st);
    if (*sc) return cmd_score(st);
    if (*pa) return cmd_params(st);
    if (*be) return cmd_bench(st);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const CheckpointMismatchError& e) {
    std::fprintf(stderr, "checkpoint mismatch: %s\n", e.what());
    return 5;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
