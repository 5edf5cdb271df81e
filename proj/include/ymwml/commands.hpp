#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "ymwml/config.hpp"
#include "ymwml/gradcheck.hpp"
#include "ymwml/model.hpp"
#include "ymwml/wme_loss.hpp"

// Command implementations behind the `ymwml` executable. Each returns a
// process exit code and writes human-readable progress to `log`.
namespace ymwml::commands {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,         // bad flags or config
  kData = 2,          // dataset or checkpoint problems
  kNumeric = 3,       // non-finite loss or activations
  kVerification = 4,  // a gradient or curvature check failed
};

/// Argmax over the class axis of logits [N, K, H, W]; ties go to the lower
/// class index.
LabelMask argmax_labels(const Tensor& logits);

int train(const TrainConfig& config, std::ostream& log);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset_root;
  std::string split = "test";
  /// Model settings; defaults to config.resolved beside the checkpoint.
  std::filesystem::path config;
  /// report.csv goes here; defaults to the checkpoint's directory.
  std::filesystem::path output_dir;
  /// Write <id>_image.pgm, <id>_gt.pgm, <id>_pred.pgm per sample.
  bool dump_predictions = false;
  std::size_t batch_size = 8;
};

int eval(const EvalOptions& options, std::ostream& log);

struct GradcheckOptions {
  std::string scope = "all";  // ops | loss | model | all
  /// Appended to the "ops" suite; lets tests plant a faulty backward.
  std::vector<gradcheck::Case> extra_op_cases;
};

int gradcheck(const GradcheckOptions& options, std::ostream& log);

struct GenDataOptions {
  std::filesystem::path out_dir;
  std::size_t n = 100;
  std::size_t size = 256;
  std::uint64_t seed = 1;
  std::array<double, 3> fractions{0.6, 0.1, 0.3};
};

int gen_data(const GenDataOptions& options, std::ostream& log);

struct InspectLossOptions {
  double beta1 = 2.0;
  double beta2 = 1.0;
  std::vector<double> cr;
  std::filesystem::path out_dir;
  std::size_t grid_points = 99;
};

/// lambda.csv ("class,cr,lambda") plus curve_class<k>.csv per class with
/// columns p,loss,t1,t2,dloss,d2loss.
int inspect_loss(const InspectLossOptions& options, std::ostream& log);

}  // namespace ymwml::commands
