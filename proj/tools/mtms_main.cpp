// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mtms/checkpoint.hpp"
#include "mtms/corpus.hpp"
#include "mtms/features.hpp"
#include "mtms/fusion.hpp"
#include "mtms/metrics.hpp"
#include "mtms/training.hpp"

namespace {

using namespace mtms;

std::string default_root(const std::string& manifest_path) {
  const auto parent = std::filesystem::path(manifest_path).parent_path();
  return parent.empty() ? "." : parent.string();
}

std::vector<FeatureBundle> load_bundles(const std::string& root,
                                        const std::vector<ManifestEntry>& entries,
                                        const std::string& split, const SnrStats& stats,
                                        const FrameConfig& cfg) {
  std::vector<FeatureBundle> bundles;
  for (const ManifestEntry& e : entries) {
    if (e.split != split) continue;
    const RealizedMixture mix = realize_mixture(root, e);
    bundles.push_back(build_feature_bundle(mix.clean, mix.scaled_noise, mix.noisy, stats, cfg));
  }
  return bundles;
}

int cmd_make_data(const std::string& out_dir, uint64_t seed, int speech, int noise,
                  double dur) {
  SynthSpec spec;
  spec.speech_files = speech;
  spec.noise_files = noise;
  spec.speech_dur_s = dur;
  spec.noise_dur_s = dur * 3.0;  // room for the 60/20/20 segments
  spec.seed = seed;
  const std::vector<SourceEntry> sources = synth_corpus(out_dir, spec);
  const std::vector<ManifestEntry> manifest = build_manifest(sources, seed);
  const std::string manifest_path =
      (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  write_manifest(manifest_path, manifest);
  std::cout << "wrote " << sources.size() << " source files and " << manifest.size()
            << " manifest entries under " << out_dir << "\n";
  return 0;
}

int cmd_fit_stats(const std::string& manifest_path, const std::string& root_flag,
                  const std::string& out_path) {
  const std::string root = root_flag.empty() ? default_root(manifest_path) : root_flag;
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
  const FrameConfig cfg;
  SnrStatsAccumulator acc(cfg.bins());
  int used = 0;
  for (const ManifestEntry& e : entries) {
    if (e.split != "train") continue;
    const RealizedMixture mix = realize_mixture(root, e);
    acc.add_pair(stft(mix.clean, cfg), stft(mix.scaled_noise, cfg));
    ++used;
  }
  if (used == 0) throw DataError("fit-stats: manifest has no train entries");
  const SnrStats stats = acc.finalize();
  save_stats(out_path, stats);
  std::cout << "fitted compression stats over " << stats.n_frames << " frames from "
            << used << " mixtures -> " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& root_flag,
              const std::string& stats_path, const std::string& config_arg,
              const std::string& out_path, const std::string& loss_csv, int64_t steps,
              int epochs, uint64_t seed) {
  const std::string root = root_flag.empty() ? default_root(manifest_path) : root_flag;
  const Config config = Config::preset_or_file(config_arg);
  const ModelSpec spec = ModelSpec::from_config(config);
  const FrameConfig cfg;
  if (spec.bins != cfg.bins() || spec.frame_len != cfg.frame_len) {
    throw ConfigError("train: config geometry (" + std::to_string(spec.bins) +
                      " bins) cannot process 16 kHz audio");
  }
  const SnrStats stats = load_stats(stats_path);
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
  const std::vector<FeatureBundle> train_b = load_bundles(root, entries, "train", stats, cfg);
  const std::vector<FeatureBundle> val_b = load_bundles(root, entries, "val", stats, cfg);
  if (train_b.empty()) throw DataError("train: manifest has no train entries");

  Model model(spec);
  model.init(seed);

  TrainOptions opts;
  opts.steps = steps;
  opts.max_epochs = epochs;
  opts.patience_epochs = config.get_int("train.patience_epochs");
  opts.batch_frames = config.get_int("train.batch_frames");
  opts.seed = seed;
  opts.adam.lr = config.get_double("train.lr");
  opts.alpha = config.get_double("train.alpha");
  opts.beta = config.get_double("train.beta");
  opts.detach_stage2 = config.get_flag("train.detach_stage2");

  const TrainResult result =
      train_loop(model, train_b, opts, val_b.empty() ? nullptr : &val_b);
  save_checkpoint(out_path, model.params(), &stats, config);
  const std::string csv = loss_csv.empty() ? out_path + ".loss.csv" : loss_csv;
  write_loss_csv(csv, result.history);
  const StepRecord& last = result.history.back();
  std::cout << "trained " << result.steps_run << " steps (" << result.epochs_run
            << " epochs); final loss " << last.total << " -> " << out_path << "\n";
  return 0;
}

int cmd_enhance(const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path, const std::string& mode_name) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  EnhanceOptions opts;
  opts.mode = parse_enhance_mode(mode_name);
  opts.prisnr_noisy_only = ckpt.config.get_flag("infer.prisnr_noisy_only");
  const Waveform noisy = read_wav(in_path);
  const SnrStats* stats = ckpt.stats.has_value() ? &ckpt.stats.value() : nullptr;
  const Waveform enhanced = enhance_utterance(noisy, *ckpt.model, stats, opts);
  write_wav(out_path, enhanced);
  std::cout << "enhanced " << in_path << " (" << mode_name << ") -> " << out_path << "\n";
  return 0;
}

int eval_threads() {
  const char* env = std::getenv("MTMS_THREADS");
  if (env != nullptr) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& root_flag, const std::string& report_path,
                 const std::string& modes_csv) {
  const std::string root = root_flag.empty() ? default_root(manifest_path) : root_flag;
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const SnrStats* stats = ckpt.stats.has_value() ? &ckpt.stats.value() : nullptr;
  const bool noisy_only = ckpt.config.get_flag("infer.prisnr_noisy_only");

  std::vector<std::string> modes;
  {
    std::istringstream in(modes_csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok != "noisy") parse_enhance_mode(tok);  // validate early
      modes.push_back(tok);
    }
  }
  if (modes.empty()) throw ConfigError("evaluate: empty mode list");

  std::vector<ManifestEntry> tests;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    if (e.split == "test") tests.push_back(e);
  }
  if (tests.empty()) throw DataError("evaluate: manifest has no test entries");

  const FrameConfig cfg;
  std::vector<EvalRow> rows(tests.size() * modes.size());
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tests.size() || failed.load()) return;
      try {
        const ManifestEntry& e = tests[i];
        const RealizedMixture mix = realize_mixture(root, e);
        const std::string utt =
            std::filesystem::path(e.speech).stem().string() + "+" +
            std::filesystem::path(e.noise).stem().string();
        for (size_t mi = 0; mi < modes.size(); ++mi) {
          Waveform processed;
          if (modes[mi] == "noisy") {
            processed = mix.noisy;
          } else {
            EnhanceOptions opts;
            opts.mode = parse_enhance_mode(modes[mi]);
            opts.prisnr_noisy_only = noisy_only;
            processed = enhance_utterance(mix.noisy, *ckpt.model, stats, opts, cfg);
          }
          Waveform clean_trim = mix.clean;
          clean_trim.samples.resize(processed.samples.size());
          EvalRow row;
          row.utt = utt;
          row.mode = modes[mi];
          row.snr_db = e.snr_db;
          row.stoi = stoi(clean_trim, processed);
          row.si_sdr = si_sdr(clean_trim, processed);
          row.seg_snr = segmental_snr(clean_trim, processed);
          rows[i * modes.size() + mi] = row;
        }
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(error_mutex);
        failed.store(true);
        if (error_message.empty()) error_message = ex.what();
        return;
      }
    }
  };

  const int n_threads = std::min<int>(eval_threads(), static_cast<int>(tests.size()));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failed.load()) throw DataError("evaluate: " + error_message);

  write_report(report_path, rows);
  std::cout << "evaluated " << tests.size() << " utterances x " << modes.size()
            << " modes -> " << report_path << "\n";
  return 0;
}

int cmd_inspect(const std::string& config_arg) {
  const Config config = Config::preset_or_file(config_arg);
  Model model(ModelSpec::from_config(config));
  model.init(0);
  const int64_t params = model.count_params();
  const int64_t flops = model.count_flops_per_frame();
  std::cout << "parameters:        " << params << " (" << params / 1e6 << " M)\n";
  std::cout << "flops per frame:   " << flops << " (" << flops / 1e6 << " M)\n";
  std::cout << "reference design:  4.8 M parameters / 9.6 M FLOPs per frame\n";
  std::cout << "deviation:         " << (params / 4.8e6 - 1.0) * 100.0 << " % params, "
            << (flops / 9.6e6 - 1.0) * 100.0 << " % flops\n";
  std::cout << "(sub-convolution group counts and branch head widths are "
               "configurable; see README \"Model accounting\" for why the totals "
               "differ from the reference design)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage multi-target speech enhancement toolkit"};
  app.require_subcommand(1);

  auto* make_data = app.add_subcommand("make-data", "generate a synthetic corpus");
  std::string md_out;
  uint64_t md_seed = 1;
  int md_speech = 8, md_noise = 3;
  double md_dur = 4.0;
  make_data->add_option("--out", md_out, "output directory")->required();
  make_data->add_option("--seed", md_seed, "generator seed");
  make_data->add_option("--speech", md_speech, "number of speech files");
  make_data->add_option("--noise", md_noise, "number of noise files");
  make_data->add_option("--dur", md_dur, "speech file duration in seconds");

  auto* fit_stats = app.add_subcommand("fit-stats", "fit SNR compression statistics");
  std::string fs_manifest, fs_root, fs_out;
  fit_stats->add_option("--manifest", fs_manifest, "mixing manifest")->required();
  fit_stats->add_option("--root", fs_root, "corpus root (default: manifest directory)");
  fit_stats->add_option("--out", fs_out, "output stats file")->required();

  auto* train = app.add_subcommand("train", "train the two-stage model");
  std::string tr_manifest, tr_root, tr_stats, tr_config = "default", tr_out, tr_loss;
  int64_t tr_steps = 0;
  int tr_epochs = 10;
  uint64_t tr_seed = 1;
  train->add_option("--manifest", tr_manifest, "mixing manifest")->required();
  train->add_option("--root", tr_root, "corpus root (default: manifest directory)");
  train->add_option("--stats", tr_stats, "fitted stats file")->required();
  train->add_option("--config", tr_config, "config preset name or file");
  train->add_option("--out", tr_out, "output checkpoint")->required();
  train->add_option("--loss-csv", tr_loss, "loss history csv (default: <out>.loss.csv)");
  train->add_option("--steps", tr_steps, "run exactly N steps (0: epoch mode)");
  train->add_option("--epochs", tr_epochs, "max epochs in epoch mode");
  train->add_option("--seed", tr_seed, "init + dropout seed");

  auto* enhance = app.add_subcommand("enhance", "enhance one wav file");
  std::string en_ckpt, en_in, en_out, en_mode = "fused";
  enhance->add_option("--ckpt", en_ckpt, "checkpoint")->required();
  enhance->add_option("--in", en_in, "input wav (16 kHz mono PCM16)")->required();
  enhance->add_option("--out", en_out, "output wav")->required();
  enhance->add_option("--mode", en_mode, "irm|ri|prisnr|fused");

  auto* evaluate = app.add_subcommand("evaluate", "run metrics over the test split");
  std::string ev_ckpt, ev_manifest, ev_root, ev_report;
  std::string ev_modes = "noisy,irm,ri,prisnr,fused";
  evaluate->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  evaluate->add_option("--manifest", ev_manifest, "mixing manifest")->required();
  evaluate->add_option("--root", ev_root, "corpus root (default: manifest directory)");
  evaluate->add_option("--report", ev_report, "output csv report")->required();
  evaluate->add_option("--modes", ev_modes, "comma-separated mode list");

  auto* inspect = app.add_subcommand("inspect", "print parameter and FLOPs accounting");
  std::string in_config = "default";
  inspect->add_option("--config", in_config, "config preset name or file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (make_data->parsed()) return cmd_make_data(md_out, md_seed, md_speech, md_noise, md_dur);
    if (fit_stats->parsed()) return cmd_fit_stats(fs_manifest, fs_root, fs_out);
    if (train->parsed()) {
      return cmd_train(tr_manifest, tr_root, tr_stats, tr_config, tr_out, tr_loss,
                       tr_steps, tr_epochs, tr_seed);
    }
    if (enhance->parsed()) return cmd_enhance(en_ckpt, en_in, en_out, en_mode);
    if (evaluate->parsed()) {
      return cmd_evaluate(ev_ckpt, ev_manifest, ev_root, ev_report, ev_modes);
    }
    if (inspect->parsed()) return cmd_inspect(in_config);
  } catch (const mtms::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
