#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "ymwml/wme_loss.hpp"

namespace ymwml {

struct ConfusionCounts {
  std::vector<std::uint64_t> tp;
  std::vector<std::uint64_t> fp;
  std::vector<std::uint64_t> fn;

  explicit ConfusionCounts(std::size_t num_classes = 0)
      : tp(num_classes), fp(num_classes), fn(num_classes) {}
  std::size_t num_classes() const { return tp.size(); }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
};

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt, std::size_t num_classes);

// A class absent from both prediction and ground truth scores 1.0.
double dice(const ConfusionCounts& counts, std::size_t k);
double iou(const ConfusionCounts& counts, std::size_t k);
/// Mean Dice over classes 1..K-1 (background excluded).
double mean_foreground_dice(const ConfusionCounts& counts, std::size_t num_classes);

struct EvalReport {
  std::vector<double> dice;  // per class, averaged over samples
  std::vector<double> iou;
  double mean_fg_dice = 0.0;
  double mean_fg_iou = 0.0;
  std::size_t samples = 0;
};

/// Scores each sample separately and averages the per-sample values.
/// `pred` and `gt` hold one or more samples each (batch-major).
class EvalAccumulator {
 public:
  explicit EvalAccumulator(std::size_t num_classes);

  void add(const LabelMask& pred, const LabelMask& gt);
  EvalReport report() const;

 private:
  std::size_t num_classes_;
  std::vector<double> dice_sum_;
  std::vector<double> iou_sum_;
  double fg_dice_sum_ = 0.0;
  double fg_iou_sum_ = 0.0;
  std::size_t samples_ = 0;
};

/// "class,dice,iou" rows then "mean_fg,<dice>,<iou>"; 9 significant digits.
void write_report_csv(std::ostream& os, const EvalReport& report);

}  // namespace ymwml
