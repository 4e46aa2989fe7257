#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bks/checkpoint.hpp"
#include "bks/deblur.hpp"
#include "bks/image_io.hpp"
#include "bks/run_config.hpp"
#include "bks/synthesis.hpp"

namespace bks::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int count = 0;
  int size = 0;
  int kernels = 0;
  std::uint64_t seed = 0;
  int channels = 3;
  int kernel_size = 9;
  int kernel_steps = 4;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.count < 1) throw UsageError("--count must be >= 1");
  if (a.kernels < 1) throw UsageError("--kernels must be >= 1");
  if (a.size < 8 || a.size % 4 != 0) throw UsageError("--size must be >= 8 and divisible by 4");
  if (a.channels != 1 && a.channels != 3) throw UsageError("--channels must be 1 or 3");
  if (a.kernel_size < 3 || a.kernel_size % 2 == 0 || a.kernel_size > a.size) {
    throw UsageError("--kernel-size must be odd, >= 3 and no larger than --size");
  }
  if (a.kernel_steps < 2) throw UsageError("--kernel-steps must be >= 2");

  std::vector<ImageTensor> sharps;
  for (int i = 0; i < a.count; ++i) {
    sharps.push_back(procedural_image(derive_seed(a.seed, 100 + static_cast<std::uint64_t>(i)),
                                      a.channels, a.size, a.size));
  }
  std::vector<ConvKernel> kernels;
  json kj = json::array();
  for (int k = 0; k < a.kernels; ++k) {
    const std::uint64_t ks = derive_seed(a.seed, 200 + static_cast<std::uint64_t>(k));
    kernels.push_back(generate_motion_kernel(ks, a.kernel_size, a.kernel_steps));
    kj.push_back({{"index", k},
                  {"seed", ks},
                  {"steps", a.kernel_steps},
                  {"height", kernels.back().height()},
                  {"width", kernels.back().width()},
                  {"weights", kernels.back().weights()}});
  }
  const PairedDataset data = synthesize_dataset(sharps, kernels, derive_seed(a.seed, 300));
  save_paired_dataset(data, a.out);

  json assignment = json::object();
  for (const ImagePair& p : data) assignment[p.id] = kernel_index_from_id(p.id);
  const json manifest{{"seed", a.seed}, {"kernels", kj}, {"assignment", assignment}};
  std::ofstream kf(fs::path(a.out) / "kernels.json");
  kf << manifest.dump(2) << '\n';
  if (!kf) throw std::runtime_error("cannot write kernels.json");
  out << "wrote " << data.size() << " pairs and " << kernels.size() << " kernels to " << a.out
      << '\n';
  return kOk;
}

// ---- shared helpers ---------------------------------------------------------

PairedDataset load_dataset_or_fail(const std::string& dir) {
  PairedDataset data = load_paired_dataset(dir);
  if (data.empty()) throw UsageError("dataset at " + dir + " contains no pairs");
  return data;
}

std::vector<ConvKernel> load_kernels(const fs::path& file) {
  std::ifstream in(file);
  const json j = json::parse(in);
  std::vector<ConvKernel> out;
  for (const json& k : j.at("kernels")) {
    out.emplace_back(k.at("height").get<int>(), k.at("width").get<int>(),
                     k.at("weights").get<std::vector<float>>());
  }
  return out;
}

LoadedModel load_model_or_fail(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw std::runtime_error("no checkpoint at " + dir);
  }
  return load_model(dir);
}

void require_model_image(const ArchConfig& arch, const ImageTensor& img, const std::string& what) {
  if (img.channels() != arch.image_channels) {
    throw std::runtime_error(what + " has " + std::to_string(img.channels()) +
                             " channels, the model expects " + std::to_string(arch.image_channels));
  }
  arch.require_image_size(img.height(), img.width());
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool resume = false;
  std::int64_t iters = 0;
};

constexpr const char* kLossHeader = "iteration,total,charbonnier,kernel_l2,hyper_laplacian";

std::string loss_row(std::int64_t it, const LossValue& lv) {
  return std::to_string(it) + "," + fmt(lv.value) + "," + fmt(lv.breakdown.at("charbonnier")) +
         "," + fmt(lv.breakdown.at("kernel_l2")) + "," + fmt(lv.breakdown.at("hyper_laplacian"));
}

// Keeps the header and the rows of iterations before `keep`.
void truncate_loss_csv(const fs::path& file, std::int64_t keep) {
  std::vector<std::string> lines;
  if (std::ifstream in(file); in) {
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  std::ofstream out(file, std::ios::trunc);
  out << kLossHeader << '\n';
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto comma = lines[i].find(',');
    if (comma == std::string::npos) continue;
    if (std::stoll(lines[i].substr(0, comma)) < keep) out << lines[i] << '\n';
  }
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path run_dir = a.out;
  RunConfig cfg;
  fs::path resume_from;
  if (a.resume) {
    resume_from = latest_checkpoint(run_dir);
    if (resume_from.empty()) throw std::runtime_error("--resume: no checkpoint under " + a.out);
    cfg = load_run_config(run_dir / "config.json");
    if (!a.config.empty() && load_run_config(a.config).arch != cfg.arch) {
      throw UsageError("--config architecture differs from the run being resumed");
    }
  } else if (!a.config.empty()) {
    cfg = load_run_config(a.config);
  }
  if (!a.data.empty()) cfg.paths.data = a.data;
  cfg.paths.out = a.out;
  if (a.iters > 0) cfg.optimizer.total_iters = a.iters;
  if (cfg.paths.data.empty()) throw UsageError("no dataset given (--data or paths.data)");
  cfg.threads = threads_from_env();
  cfg.validate();

  const PairedDataset data = load_dataset_or_fail(cfg.paths.data);
  for (const ImagePair& p : data) require_model_image(cfg.arch, p.sharp, "pair '" + p.id + "'");

  fs::create_directories(run_dir);
  save_run_config(cfg, run_dir / "config.json");

  KernelSpaceTrainer trainer(cfg.arch, cfg.optimizer, cfg.seed, cfg.weights.eps_charbonnier);
  const fs::path loss_file = run_dir / "loss.csv";
  if (a.resume) {
    restore_training_checkpoint(load_checkpoint(resume_from), trainer);
    truncate_loss_csv(loss_file, trainer.iteration());
    out << "resuming at iteration " << trainer.iteration() << '\n';
  } else {
    std::ofstream(loss_file, std::ios::trunc) << kLossHeader << '\n';
  }
  std::ofstream loss_csv(loss_file, std::ios::app);

  const auto save = [&] {
    save_checkpoint(make_training_checkpoint(trainer, cfg),
                    checkpoint_dir(run_dir, trainer.iteration()));
  };
  try {
    while (trainer.iteration() < cfg.optimizer.total_iters) {
      const std::int64_t it = trainer.iteration();
      const LossValue lv = trainer.step(data);
      loss_csv << loss_row(it, lv) << '\n';
      const std::int64_t done = trainer.iteration();
      if (done % cfg.checkpoint_every == 0 || done == cfg.optimizer.total_iters) {
        loss_csv.flush();
        save();
        out << "iteration " << done << "/" << cfg.optimizer.total_iters << " loss " << fmt(lv.value)
            << '\n';
      }
    }
  } catch (const NonFiniteLossError& e) {
    loss_csv.flush();
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}

// ---- deblur -----------------------------------------------------------------

struct DeblurArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string trace;
  std::string kernel_out;
  std::string config;
  std::int64_t outer = 0;
  std::int64_t inner_first = 0;
  std::int64_t inner_rest = 0;
  std::optional<std::uint64_t> seed;
};

DeblurConfig deblur_config_for(const LoadedModel& lm, const std::string& config_file) {
  RunConfig cfg = config_file.empty() ? lm.config : load_run_config(config_file);
  return cfg.deblur_config();
}

void write_trace(const DeblurTrace& trace, const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  std::vector<std::string> terms;
  if (!trace.empty()) {
    for (const auto& [name, v] : trace.front().loss.breakdown) terms.push_back(name);
  }
  out << "step,outer,inner,phase,total";
  for (const std::string& t : terms) out << ',' << t;
  out << ",best_seen\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const DeblurTraceEntry& e = trace[i];
    out << i << ',' << e.outer << ',' << e.inner << ','
        << (e.phase == DeblurPhase::kernel ? "kernel" : "image") << ',' << fmt(e.loss.value);
    for (const std::string& t : terms) out << ',' << fmt(e.loss.breakdown.at(t));
    out << ',' << fmt(e.best_seen) << '\n';
  }
  if (!out) throw std::runtime_error("cannot write trace " + file.string());
}

void save_kernel_json(const BlurKernel& k, const fs::path& file) {
  std::ofstream out(file);
  out << json{{"shape", k.shape()}, {"values", std::vector<float>(k.data(), k.data() + k.size())}}
             .dump()
      << '\n';
  if (!out) throw std::runtime_error("cannot write " + file.string());
}

int cmd_deblur(const DeblurArgs& a, std::ostream& out, std::ostream& err) {
  const LoadedModel lm = load_model_or_fail(a.checkpoint);
  DeblurConfig dc = deblur_config_for(lm, a.config);
  if (a.outer > 0) dc.outer_iters = a.outer;
  if (a.inner_first > 0) dc.inner_iters_first = a.inner_first;
  if (a.inner_rest > 0) dc.inner_iters_rest = a.inner_rest;
  if (a.seed) dc.seed = *a.seed;
  const ImageTensor y = load_image(a.input);
  require_model_image(lm.config.arch, y, "input image");

  Deblurrer deblurrer(lm.model.family, lm.model.family_params, dc);
  DeblurResult r;
  try {
    r = deblurrer.deblur(y);
  } catch (const DeblurAborted& e) {
    if (!a.trace.empty()) write_trace(e.trace(), a.trace);
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  save_image(r.image, a.output);
  if (!a.trace.empty()) write_trace(r.trace, a.trace);
  if (!a.kernel_out.empty()) save_kernel_json(r.kernel, a.kernel_out);
  out << "deblurred " << a.input << " -> " << a.output << " (" << r.trace.size()
      << " trace entries, final objective " << fmt(r.trace.back().loss.value) << ")\n";
  return kOk;
}

// ---- retrieve ---------------------------------------------------------------

struct RetrieveArgs {
  std::string checkpoint;
  std::string sharp;
  std::string blurry;
  std::string output;
  std::string kernel_out;
  std::string config;
  std::int64_t iters = 0;
};

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
  const LoadedModel lm = load_model_or_fail(a.checkpoint);
  DeblurConfig dc = deblur_config_for(lm, a.config);
  if (a.iters > 0) dc.retrieve_iters = a.iters;
  const ImageTensor x = load_image(a.sharp);
  const ImageTensor y = load_image(a.blurry);
  require_model_image(lm.config.arch, x, "sharp image");
  if (!x.same_shape(y)) throw std::runtime_error("sharp and blurry images differ in shape");
  const RetrieveResult r = retrieve_kernel(lm.model.family, lm.model.family_params, x, y, dc);
  if (!a.output.empty()) save_image(apply_blur(lm.model.family, lm.model.family_params, x, r.kernel), a.output);
  if (!a.kernel_out.empty()) save_kernel_json(r.kernel, a.kernel_out);
  out << "baseline_psnr," << fmt(psnr(x, y)) << "\nrecon_psnr," << fmt(r.recon_psnr) << '\n';
  return kOk;
}

// ---- transfer ---------------------------------------------------------------

struct TransferArgs {
  std::string checkpoint;
  std::string sharp;
  std::string blurry;
  std::vector<std::string> targets;
  std::string out;
  bool swap = false;
  std::string data;
  std::uint64_t seed = 0;
};

int cmd_transfer(const TransferArgs& a, std::ostream& out) {
  const LoadedModel lm = load_model_or_fail(a.checkpoint);
  const int threads = threads_from_env();
  if (a.swap) {
    if (a.data.empty()) throw UsageError("--swap needs --data");
    const PairedDataset data = load_dataset_or_fail(a.data);
    const PairedDataset swapped = swap_dataset(lm.model, data, a.seed, threads);
    save_paired_dataset(swapped, a.out);
    out << "wrote " << swapped.size() << " blur-swapped pairs to " << a.out << '\n';
    return kOk;
  }
  if (a.sharp.empty() || a.blurry.empty() || a.targets.empty()) {
    throw UsageError("transfer needs --sharp, --blurry and --targets (or --swap --data)");
  }
  TransferJob job{load_image(a.sharp), load_image(a.blurry), {}};
  require_model_image(lm.config.arch, job.source_sharp, "source sharp image");
  for (const std::string& t : a.targets) {
    job.targets.push_back(load_image(t));
    require_model_image(lm.config.arch, job.targets.back(), t);
  }
  const std::vector<ImageTensor> outs = transfer_blur(lm.model, job, threads);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    save_image(outs[i], fs::path(a.out) / fs::path(a.targets[i]).filename());
  }
  out << "wrote " << outs.size() << " transferred images to " << a.out << '\n';
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string csv = "eval.csv";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const LoadedModel lm = load_model_or_fail(a.checkpoint);
  const PairedDataset data = load_dataset_or_fail(a.data);
  const fs::path kernels_file = fs::path(a.data) / "kernels.json";
  std::vector<ConvKernel> kernels;
  if (fs::exists(kernels_file)) kernels = load_kernels(kernels_file);

  struct Row {
    std::string id;
    double base, recon;
    std::optional<double> tbase, tout;
  };
  std::vector<Row> rows;
  const std::size_t n = data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const ImagePair& p = data[i];
    require_model_image(lm.config.arch, p.sharp, "pair '" + p.id + "'");
    const BlurKernel k = lm.model.extract_kernel(p.sharp, p.blurry);
    Row r{p.id, psnr(p.sharp, p.blurry), psnr(lm.model.apply_blur(p.sharp, k), p.blurry), {}, {}};
    const int ki = kernel_index_from_id(p.id);
    if (!kernels.empty() && ki >= 0 && ki < static_cast<int>(kernels.size())) {
      // Transfer onto the next pair's sharp image, scored against the true kernel.
      const ImageTensor& target = data[(i + 1) % n].sharp;
      const ImageTensor truth = convolve_blur(target, kernels[static_cast<std::size_t>(ki)]);
      r.tbase = psnr(target, truth);
      r.tout = psnr(lm.model.apply_blur(target, k), truth);
    }
    rows.push_back(std::move(r));
  }

  const bool with_transfer = std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.tout.has_value(); });
  Row mean{"mean", 0, 0, with_transfer ? std::optional<double>(0.0) : std::nullopt,
           with_transfer ? std::optional<double>(0.0) : std::nullopt};
  for (const Row& r : rows) {
    mean.base += r.base / static_cast<double>(n);
    mean.recon += r.recon / static_cast<double>(n);
    if (with_transfer) {
      *mean.tbase += *r.tbase / static_cast<double>(n);
      *mean.tout += *r.tout / static_cast<double>(n);
    }
  }
  rows.push_back(mean);

  std::ofstream csv(a.csv, std::ios::trunc);
  csv << "id,baseline_psnr,recon_psnr" << (with_transfer ? ",transfer_baseline_psnr,transfer_psnr" : "")
      << '\n';
  std::size_t width = 4;
  for (const Row& r : rows) width = std::max(width, r.id.size());
  out << std::left << std::setw(static_cast<int>(width)) << "id" << std::right << std::setw(12)
      << "baseline" << std::setw(12) << "recon";
  if (with_transfer) out << std::setw(14) << "transfer_base" << std::setw(12) << "transfer";
  out << '\n';
  for (const Row& r : rows) {
    csv << r.id << ',' << fmt(r.base) << ',' << fmt(r.recon);
    out << std::left << std::setw(static_cast<int>(width)) << r.id << std::right << std::setw(12)
        << fmt2(r.base) << std::setw(12) << fmt2(r.recon);
    if (with_transfer) {
      csv << ',' << fmt(*r.tbase) << ',' << fmt(*r.tout);
      out << std::setw(14) << fmt2(*r.tbase) << std::setw(12) << fmt2(*r.tout);
    }
    csv << '\n';
    out << '\n';
  }
  if (!csv) throw std::runtime_error("cannot write " + a.csv);
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned blur-operator toolkit: synthesize, train, deblur, retrieve, transfer, eval"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a procedural paired dataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--count", sa.count, "Number of sharp images")->required();
  synth->add_option("--size", sa.size, "Image side length")->required();
  synth->add_option("--kernels", sa.kernels, "Number of motion kernels")->required();
  synth->add_option("--seed", sa.seed, "Random seed")->required();
  synth->add_option("--channels", sa.channels, "1 or 3")->capture_default_str();
  synth->add_option("--kernel-size", sa.kernel_size, "Odd kernel side")->capture_default_str();
  synth->add_option("--kernel-steps", sa.kernel_steps, "Trajectory points")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the operator family and kernel extractor");
  train->add_option("--config", ta.config, "RunConfig JSON");
  train->add_option("--data", ta.data, "Dataset directory");
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_flag("--resume", ta.resume, "Continue from the latest checkpoint");
  train->add_option("--iters", ta.iters, "Override optimizer.total_iters")->check(CLI::PositiveNumber);

  DeblurArgs da;
  auto* deblur_cmd = app.add_subcommand("deblur", "Blind deblurring of one image");
  deblur_cmd->add_option("--checkpoint", da.checkpoint, "Checkpoint directory")->required();
  deblur_cmd->add_option("--input", da.input, "Blurry PNG")->required();
  deblur_cmd->add_option("--output", da.output, "Deblurred PNG")->required();
  deblur_cmd->add_option("--trace", da.trace, "Trace CSV");
  deblur_cmd->add_option("--kernel-out", da.kernel_out, "Estimated kernel JSON");
  deblur_cmd->add_option("--config", da.config, "RunConfig JSON for deblur settings");
  deblur_cmd->add_option("--outer", da.outer, "Outer iterations")->check(CLI::PositiveNumber);
  deblur_cmd->add_option("--inner-first", da.inner_first, "Kernel steps in the first outer iteration")
      ->check(CLI::PositiveNumber);
  deblur_cmd->add_option("--inner-rest", da.inner_rest, "Kernel steps in later outer iterations")
      ->check(CLI::PositiveNumber);
  deblur_cmd->add_option("--seed", da.seed, "Generator seed");

  RetrieveArgs ra;
  auto* retrieve = app.add_subcommand("retrieve", "Recover the kernel of a sharp/blurry pair");
  retrieve->add_option("--checkpoint", ra.checkpoint, "Checkpoint directory")->required();
  retrieve->add_option("--sharp", ra.sharp, "Sharp PNG")->required();
  retrieve->add_option("--blurry", ra.blurry, "Blurry PNG")->required();
  retrieve->add_option("--output", ra.output, "Reconstructed blurry PNG");
  retrieve->add_option("--kernel-out", ra.kernel_out, "Kernel JSON");
  retrieve->add_option("--config", ra.config, "RunConfig JSON for deblur settings");
  retrieve->add_option("--iters", ra.iters, "Optimization steps")->check(CLI::PositiveNumber);

  TransferArgs xa;
  auto* transfer = app.add_subcommand("transfer", "Transfer a blur to new sharp images");
  transfer->add_option("--checkpoint", xa.checkpoint, "Checkpoint directory")->required();
  transfer->add_option("--sharp", xa.sharp, "Source sharp PNG");
  transfer->add_option("--blurry", xa.blurry, "Source blurry PNG");
  transfer->add_option("--targets", xa.targets, "Target sharp PNGs");
  transfer->add_option("--out", xa.out, "Output directory")->required();
  transfer->add_flag("--swap", xa.swap, "Blur-swap a whole dataset");
  transfer->add_option("--data", xa.data, "Dataset directory for --swap");
  transfer->add_option("--seed", xa.seed, "Donor assignment seed");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "PSNR table for a checkpoint on a dataset");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", ea.data, "Dataset directory")->required();
  eval->add_option("--csv", ea.csv, "CSV output file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*train) return cmd_train(ta, out, err);
    if (*deblur_cmd) return cmd_deblur(da, out, err);
    if (*retrieve) return cmd_retrieve(ra, out);
    if (*transfer) return cmd_transfer(xa, out);
    if (*eval) return cmd_eval(ea, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace bks::cli
