#include "ymwml/metrics.hpp"

#include <iomanip>

namespace ymwml {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.num_classes() != num_classes()) {
    throw Error(Errc::shape_mismatch, "confusion counts over different class counts");
  }
  for (std::size_t k = 0; k < num_classes(); ++k) {
    tp[k] += other.tp[k];
    fp[k] += other.fp[k];
    fn[k] += other.fn[k];
  }
  return *this;
}

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt, std::size_t num_classes) {
  if (pred.batch != gt.batch || pred.height != gt.height || pred.width != gt.width ||
      pred.labels.size() != gt.labels.size()) {
    throw Error(Errc::shape_mismatch, "prediction and ground truth shapes differ");
  }
  pred.check_range(num_classes);
  gt.check_range(num_classes);
  ConfusionCounts c(num_classes);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const auto p = pred.labels[i], g = gt.labels[i];
    if (p == g) {
      ++c.tp[g];
    } else {
      ++c.fp[p];
      ++c.fn[g];
    }
  }
  return c;
}

double dice(const ConfusionCounts& counts, std::size_t k) {
  const auto denom = 2 * counts.tp.at(k) + counts.fp.at(k) + counts.fn.at(k);
  if (denom == 0) return 1.0;
  return 2.0 * double(counts.tp[k]) / double(denom);
}

double iou(const ConfusionCounts& counts, std::size_t k) {
  const auto denom = counts.tp.at(k) + counts.fp.at(k) + counts.fn.at(k);
  if (denom == 0) return 1.0;
  return double(counts.tp[k]) / double(denom);
}

double mean_foreground_dice(const ConfusionCounts& counts, std::size_t num_classes) {
  if (num_classes < 2) throw Error(Errc::invalid_argument, "mean foreground Dice needs K >= 2");
  double sum = 0.0;
  for (std::size_t k = 1; k < num_classes; ++k) sum += dice(counts, k);
  return sum / double(num_classes - 1);
}

EvalAccumulator::EvalAccumulator(std::size_t num_classes)
    : num_classes_(num_classes), dice_sum_(num_classes), iou_sum_(num_classes) {
  if (num_classes < 2) throw Error(Errc::invalid_argument, "evaluation needs K >= 2");
}

void EvalAccumulator::add(const LabelMask& pred, const LabelMask& gt) {
  if (pred.batch != gt.batch || pred.labels.size() != gt.labels.size()) {
    throw Error(Errc::shape_mismatch, "prediction and ground truth shapes differ");
  }
  const std::size_t per = gt.height * gt.width;
  for (std::size_t n = 0; n < gt.batch; ++n) {
    auto slice = [&](const LabelMask& m) {
      return LabelMask::single(m.height, m.width,
                               {m.labels.begin() + long(n * per), m.labels.begin() + long((n + 1) * per)});
    };
    const ConfusionCounts c = confusion(slice(pred), slice(gt), num_classes_);
    double fg_iou = 0.0;
    for (std::size_t k = 0; k < num_classes_; ++k) {
      dice_sum_[k] += dice(c, k);
      iou_sum_[k] += iou(c, k);
      if (k > 0) fg_iou += iou(c, k);
    }
    fg_dice_sum_ += mean_foreground_dice(c, num_classes_);
    fg_iou_sum_ += fg_iou / double(num_classes_ - 1);
    ++samples_;
  }
}

EvalReport EvalAccumulator::report() const {
  if (samples_ == 0) throw Error(Errc::empty_input, "no samples evaluated");
  EvalReport r;
  r.samples = samples_;
  const double n = double(samples_);
  for (std::size_t k = 0; k < num_classes_; ++k) {
    r.dice.push_back(dice_sum_[k] / n);
    r.iou.push_back(iou_sum_[k] / n);
  }
  r.mean_fg_dice = fg_dice_sum_ / n;
  r.mean_fg_iou = fg_iou_sum_ / n;
  return r;
}

void write_report_csv(std::ostream& os, const EvalReport& report) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(9);
  os << "class,dice,iou\n";
  for (std::size_t k = 0; k < report.dice.size(); ++k) {
    os << k << ',' << report.dice[k] << ',' << report.iou[k] << '\n';
  }
  os << "mean_fg," << report.mean_fg_dice << ',' << report.mean_fg_iou << '\n';
  os.flags(flags);
  os.precision(prec);
}

}  // namespace ymwml
