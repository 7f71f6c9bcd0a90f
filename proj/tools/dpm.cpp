// Command-line frontend over the dpm C API.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "dpm/dpm.h"

namespace {

struct Failure {
  int exit_code;
  std::string message;
};

void check(dpm_status status, const std::string& context) {
  if (status == DPM_OK) return;
  const int code = status == DPM_ERR_INTERNAL ? 1 : 2;
  throw Failure{code, context + ": " + dpm_last_error()};
}

[[noreturn]] void usage_error(const std::string& message) { throw Failure{2, message}; }

using DatasetPtr = std::unique_ptr<dpm_dataset, decltype(&dpm_dataset_free)>;
using BankPtr = std::unique_ptr<dpm_bank, decltype(&dpm_bank_free)>;
using InferencePtr = std::unique_ptr<dpm_inference, decltype(&dpm_inference_free)>;

const std::map<std::string, dpm_format> kFormats{
    {"csv", DPM_FORMAT_CSV}, {"idx", DPM_FORMAT_IDX}, {"pbm-dir", DPM_FORMAT_NETPBM_DIR}};
const std::map<std::string, dpm_model_kind> kKinds{{"bernoulli", DPM_BERNOULLI}, {"gaussian", DPM_GAUSSIAN}};

struct DataArgs {
  std::string path;
  dpm_format format = DPM_FORMAT_CSV;
  std::optional<double> binarize_at;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data", path, "Input data path")->required();
    cmd->add_option("--format", format, "Input format")
        ->required()
        ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));
    cmd->add_option("--binarize-at", binarize_at, "Threshold for binarizing grey-level data (Bernoulli models)")
        ->check(CLI::Range(0.0, 1.0));
  }

  // Loads the data in the representation `kind` expects. Grey-level data is
  // thresholded for Bernoulli models (0.5 unless --binarize-at is given).
  DatasetPtr load(dpm_model_kind kind) const {
    const dpm_data_kind want = kind == DPM_BERNOULLI ? DPM_BINARY : DPM_CONTINUOUS;
    const dpm_data_kind read_as = want == DPM_BINARY && binarize_at ? DPM_CONTINUOUS : want;
    dpm_dataset* raw = nullptr;
    check(dpm_dataset_read(path.c_str(), format, read_as, &raw), "reading " + path);
    DatasetPtr ds(raw, &dpm_dataset_free);
    const dpm_data_kind have = dpm_dataset_kind(ds.get());
    if (want == DPM_BINARY && have == DPM_CONTINUOUS) {
      check(dpm_dataset_binarize(ds.get(), binarize_at.value_or(0.5)), "binarizing " + path);
    } else if (want == DPM_CONTINUOUS && have == DPM_BINARY) {
      usage_error("data in " + path + " is binary; use --kind bernoulli");
    } else if (binarize_at) {
      usage_error("--binarize-at applies only to grey-level data with a Bernoulli model");
    }
    return ds;
  }
};

BankPtr load_bank(const std::string& path) {
  dpm_bank* raw = nullptr;
  check(dpm_bank_load(path.c_str(), &raw), "loading model " + path);
  return BankPtr(raw, &dpm_bank_free);
}

void require_dims(const dpm_bank* bank, const dpm_dataset* ds) {
  if (dpm_dataset_rows(ds) == 0) return;
  if (dpm_bank_num_dims(bank) != dpm_dataset_cols(ds)) {
    usage_error("model has " + std::to_string(dpm_bank_num_dims(bank)) + " dimensions but data has " +
                std::to_string(dpm_dataset_cols(ds)));
  }
}

struct InferArgs {
  uint32_t max_active = 0;
  double min_gain = 0.0;
  bool soft = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--max-active", max_active, "Activate exactly this many experts (capped at K)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--min-gain", min_gain, "Stop once the best log-likelihood gain is at most this");
    cmd->add_flag("--soft", soft, "Score activations with soft composition");
  }

  dpm_infer_options options(uint32_t threads) const {
    dpm_infer_options o;
    dpm_infer_options_init(&o);
    o.max_active = max_active;
    o.min_gain = min_gain;
    o.composition = soft ? DPM_SOFT : DPM_HARD;
    o.threads = threads;
    return o;
  }
};

void print_report(const dpm_iteration_report* r, void*) {
  std::printf("iter=%u ll=%.10g recon_err=%.10g avg_active=%.10g\n", r->iteration, r->mean_ll, r->recon_error,
              r->avg_active);
  std::fflush(stdout);
}

std::pair<std::size_t, std::size_t> parse_shape(const std::string& text) {
  const auto x = text.find_first_of("xX");
  std::size_t rows = 0, cols = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    rows = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    cols = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    usage_error("--shape must look like HxW, got '" + text + "'");
  }
  if (rows == 0 || cols == 0) usage_error("--shape dimensions must be positive");
  return {rows, cols};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic partition models: train, apply and inspect expert banks"};
  app.require_subcommand(1);
  uint32_t threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Write the 32-point synthetic dataset as CSV");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output CSV")->required();

  auto* train = app.add_subcommand("train", "Learn an expert bank");
  DataArgs train_data;
  train_data.add_to(train);
  dpm_model_kind kind = DPM_BERNOULLI;
  uint32_t experts = 0;
  dpm_train_options topts;
  dpm_train_options_init(&topts);
  std::string model_out;
  train->add_option("--kind", kind, "Observation model")
      ->required()
      ->transform(CLI::CheckedTransformer(kKinds, CLI::ignore_case));
  train->add_option("--experts", experts, "Number of experts K")->required()->check(CLI::PositiveNumber);
  train->add_option("--iters", topts.iterations, "Learning iterations")->capture_default_str();
  train->add_option("--seed", topts.seed, "Initialisation seed")->capture_default_str();
  train->add_option("--eps", topts.eps, "Shrinkage pseudo-count (default 0.01 N)")->check(CLI::NonNegativeNumber);
  train->add_option("--c", topts.c, "Expertise step factor")->capture_default_str();
  train->add_option("--train-max-active", topts.max_active,
                    "Fixed activation budget during learning (default: natural stop)");
  train->add_option("--out", model_out, "Output model file")->required();

  auto* infer = app.add_subcommand("infer", "Infer latent states for each point");
  std::string model_in;
  DataArgs infer_data;
  InferArgs infer_args;
  std::string infer_out;
  infer->add_option("--model", model_in, "Model file")->required();
  infer_data.add_to(infer);
  infer_args.add_to(infer);
  infer->add_option("--out", infer_out, "Per-point CSV (default stdout)");

  auto* eval = app.add_subcommand("eval", "Reconstruction error and log-likelihood");
  DataArgs eval_data;
  InferArgs eval_args;
  eval->add_option("--model", model_in, "Model file")->required();
  eval_data.add_to(eval);
  eval_args.add_to(eval);

  auto* exp = app.add_subcommand("export", "Write per-expert opinion and expertise images");
  std::string shape_text, out_dir;
  exp->add_option("--model", model_in, "Model file")->required();
  exp->add_option("--shape", shape_text, "Image shape HxW")->required();
  exp->add_option("--out-dir", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      dpm_dataset* raw = nullptr;
      check(dpm_dataset_synthetic(&raw), "generating data");
      DatasetPtr ds(raw, &dpm_dataset_free);
      check(dpm_dataset_write_csv(ds.get(), synth_out.c_str()), "writing " + synth_out);
    } else if (*train) {
      const auto ds = train_data.load(kind);
      topts.threads = threads;
      dpm_bank* raw = nullptr;
      check(dpm_train(ds.get(), kind, experts, &topts, &print_report, nullptr, &raw), "training");
      BankPtr bank(raw, &dpm_bank_free);
      check(dpm_bank_save(bank.get(), model_out.c_str()), "writing " + model_out);
    } else if (*infer) {
      const auto bank = load_bank(model_in);
      const auto ds = infer_data.load(dpm_bank_kind(bank.get()));
      require_dims(bank.get(), ds.get());
      const auto opts = infer_args.options(threads);
      dpm_inference* raw = nullptr;
      check(dpm_infer(bank.get(), ds.get(), &opts, &raw), "inference");
      InferencePtr inf(raw, &dpm_inference_free);

      std::ofstream file;
      if (!infer_out.empty()) {
        file.open(infer_out);
        if (!file) usage_error("cannot open " + infer_out + " for writing");
      }
      std::ostream& out = infer_out.empty() ? std::cout : file;
      const std::size_t n = dpm_inference_count(inf.get());
      std::size_t total = 0;
      out.precision(17);
      for (std::size_t i = 0; i < n; ++i) {
        const uint32_t* ids = nullptr;
        const std::size_t m = dpm_inference_experts(inf.get(), i, &ids);
        total += m;
        for (std::size_t j = 0; j < m; ++j) out << (j ? ";" : "") << ids[j];
        out << ',' << dpm_inference_log_likelihood(inf.get(), i) << '\n';
      }
      out.flush();
      if (!out) throw Failure{1, "failed writing inference output"};
      const double avg = n ? static_cast<double>(total) / static_cast<double>(n) : 0.0;
      std::fprintf(infer_out.empty() ? stderr : stdout, "points=%zu avg_active=%.10g\n", n, avg);
    } else if (*eval) {
      const auto bank = load_bank(model_in);
      const auto ds = eval_data.load(dpm_bank_kind(bank.get()));
      require_dims(bank.get(), ds.get());
      const auto opts = eval_args.options(threads);
      dpm_evaluation ev{};
      check(dpm_evaluate(bank.get(), ds.get(), &opts, &ev), "evaluation");
      const char* metric = dpm_bank_kind(bank.get()) == DPM_BERNOULLI ? "hamming_rate" : "mse";
      std::printf("%s=%.10g mean_ll=%.10g avg_active=%.10g\n", metric, ev.recon_error, ev.mean_ll, ev.avg_active);
    } else if (*exp) {
      const auto [rows, cols] = parse_shape(shape_text);
      const auto bank = load_bank(model_in);
      check(dpm_export_templates(bank.get(), rows, cols, out_dir.c_str()), "export");
    }
  } catch (const Failure& f) {
    std::cerr << "dpm: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "dpm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
