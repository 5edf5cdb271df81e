#include "ymwml/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ymwml/data.hpp"
#include "ymwml/metrics.hpp"
#include "ymwml/optim.hpp"
#include "ymwml/tape.hpp"

namespace ymwml::commands {

namespace fs = std::filesystem;

namespace {

std::vector<Sample> prepare(const Dataset& ds, std::string_view split, std::size_t size) {
  std::vector<Sample> out;
  for (const Sample* s : ds.subset(split)) {
    out.push_back(s->image.height == size && s->image.width == size ? *s : resize_nearest(*s, size));
  }
  return out;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& samples) {
  std::vector<const Sample*> out;
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot write " + path.string());
  return f;
}

// Runs the model over `samples` in fixed order and scores the predictions.
template <typename Visit>
EvalReport evaluate(const Model& model, const std::vector<const Sample*>& samples,
                    std::size_t batch_size, Visit visit) {
  NoGradGuard guard;
  EvalAccumulator acc(model.config().num_classes);
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    const std::size_t end = std::min(samples.size(), i + batch_size);
    const Batch batch = make_batch(std::span(samples).subspan(i, end - i));
    const LabelMask pred = argmax_labels(model.forward(batch.images));
    acc.add(pred, batch.masks);
    visit(batch, pred);
  }
  return acc.report();
}

}  // namespace

LabelMask argmax_labels(const Tensor& logits) {
  if (logits.dim() != 4) throw Error(Errc::shape_mismatch, "argmax expects [N,K,H,W]");
  const std::size_t n = logits.size(0), k = logits.size(1), hw = logits.size(2) * logits.size(3);
  LabelMask out;
  out.batch = n;
  out.height = logits.size(2);
  out.width = logits.size(3);
  out.labels.resize(n * hw);
  const auto d = logits.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (d[(s * k + c) * hw + i] > d[(s * k + best) * hw + i]) best = c;
      }
      out.labels[s * hw + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

int train(const TrainConfig& cfg, std::ostream& log) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    log << "config error: " << e.what() << '\n';
    return kUsage;
  }

  std::vector<Sample> train_set, val_set;
  try {
    const Dataset ds = load_dataset(cfg.dataset_root, cfg.num_classes);
    train_set = prepare(ds, "train", cfg.input_size);
    val_set = prepare(ds, "val", cfg.input_size);
    if (train_set.empty()) throw Error(Errc::empty_input, "training split is empty");
  } catch (const Error& e) {
    log << "dataset error: " << e.what() << '\n';
    return kData;
  }

  const fs::path out_dir = cfg.output_dir;
  std::ofstream csv;
  try {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    open_out(out_dir / "config.resolved") << cfg.resolved();
    csv = open_out(out_dir / "training.csv");
  } catch (const Error& e) {
    log << "output error: " << e.what() << '\n';
    return kData;
  }
  csv << "iter,lr,loss_sum,loss_per_pixel,val_mean_fg_dice\n" << std::setprecision(10);

  Rng rng(cfg.seed);
  Model model(cfg.model(), rng);
  Adam adam(model.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  const WmeParams loss_params{cfg.beta1, cfg.beta2};
  const Reduction reduction = cfg.reduction == "mean" ? Reduction::mean : Reduction::sum;
  const bool uniform_lambda = cfg.lambda == "uniform";

  std::vector<LabelMask> train_masks;
  for (const auto& s : train_set) train_masks.push_back(s.mask);
  const ClassWeights dataset_weights =
      uniform_lambda ? ClassWeights::uniform(cfg.num_classes)
                     : compute_class_rates(train_masks, cfg.num_classes);
  if (cfg.loss == "wme") {
    log << "lambda:";
    for (double l : dataset_weights.lambda) log << ' ' << l;
    log << (cfg.cr_scope == "batch" && !uniform_lambda ? " (dataset; per-batch in use)" : "") << '\n';
  }

  const auto train_ptrs = pointers(train_set);
  const auto val_ptrs = pointers(val_set);
  const std::size_t per_epoch = (train_ptrs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const PolySchedule schedule{cfg.lr0, cfg.power, *cfg.epochs * per_epoch};
  const auto started = std::chrono::steady_clock::now();

  Tape& tape = Tape::active();
  std::size_t iter = 0;
  double best_dice = -1.0;
  for (std::size_t epoch = 0; epoch < *cfg.epochs; ++epoch) {
    BatchIterator batches(train_ptrs, cfg.batch_size, cfg.seed, epoch);
    std::string pending;
    double epoch_loss = 0.0;
    while (auto batch = batches.next()) {
      const double lr = poly_lr(iter, schedule);
      double loss_value = 0.0;
      try {
        tape.reset();
        const Tensor logits = model.forward(batch->images);
        Tensor loss;
        if (cfg.loss == "cross-entropy") {
          loss = cross_entropy_loss(logits, batch->masks, reduction);
        } else if (cfg.cr_scope == "batch" && !uniform_lambda) {
          loss = wme_batch_loss(logits, batch->masks,
                                compute_class_rates(std::span(&batch->masks, 1), cfg.num_classes),
                                loss_params, reduction);
        } else {
          loss = wme_batch_loss(logits, batch->masks, dataset_weights, loss_params, reduction);
        }
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw Error(Errc::non_finite, "loss is not finite");
        backward(loss);
        adam.step(lr);
        tape.reset();
      } catch (const Error& e) {
        if (e.code() != Errc::non_finite) throw;
        log << "numeric failure at iteration " << iter << ": " << e.what() << '\n';
        return kNumeric;
      }
      const double pixels = double(batch->masks.pixels());
      const double loss_sum = reduction == Reduction::sum ? loss_value : loss_value * pixels;
      epoch_loss += loss_sum / pixels;
      if (!pending.empty()) csv << pending << '\n';
      std::ostringstream row;
      row << std::setprecision(10) << iter << ',' << lr << ',' << loss_sum << ',' << loss_sum / pixels
          << ',';
      pending = row.str();
      ++iter;
    }

    std::string val_cell;
    double val_dice = 0.0;
    if (!val_ptrs.empty()) {
      val_dice = evaluate(model, val_ptrs, cfg.batch_size, [](const Batch&, const LabelMask&) {})
                     .mean_fg_dice;
      std::ostringstream cell;
      cell << std::setprecision(10) << val_dice;
      val_cell = cell.str();
    }
    csv << pending << val_cell << '\n';
    csv.flush();

    try {
      // Strict improvement keeps the earlier epoch on ties; without a
      // validation split every epoch "improves" and best tracks last.
      if (val_ptrs.empty() || val_dice > best_dice) {
        best_dice = val_dice;
        save_checkpoint(model.parameters(), out_dir / "best.ckpt");
      }
      if (epoch + 1 == *cfg.epochs) save_checkpoint(model.parameters(), out_dir / "last.ckpt");
    } catch (const Error& e) {
      log << "checkpoint error: " << e.what() << '\n';
      return e.code() == Errc::non_finite ? kNumeric : kData;
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log << "epoch " << epoch + 1 << '/' << *cfg.epochs << "  iter " << iter << "  loss/pixel "
        << std::setprecision(5) << epoch_loss / double(per_epoch);
    if (!val_ptrs.empty()) log << "  val mean fg dice " << val_dice;
    log << "  " << std::setprecision(3) << secs << "s\n";
  }
  return kOk;
}

int eval(const EvalOptions& options, std::ostream& log) {
  const fs::path config_path =
      options.config.empty() ? options.checkpoint.parent_path() / "config.resolved" : options.config;
  TrainConfig cfg;
  try {
    cfg.load_file(config_path);
    cfg.model().validate();
    if (options.batch_size == 0) throw Error(Errc::config, "batch size must be at least 1");
  } catch (const Error& e) {
    log << "config error: " << e.what() << '\n';
    return kUsage;
  }

  Rng rng(cfg.seed);
  Model model(cfg.model(), rng);
  std::vector<Sample> samples;
  try {
    model.load_parameters(load_checkpoint(options.checkpoint));
    const Dataset ds = load_dataset(options.dataset_root, cfg.num_classes);
    samples = prepare(ds, options.split, cfg.input_size);
  } catch (const Error& e) {
    log << (e.code() == Errc::invalid_argument ? "usage error: " : "data error: ") << e.what() << '\n';
    return e.code() == Errc::invalid_argument ? kUsage : kData;
  }
  if (samples.empty()) {
    log << "usage error: split '" << options.split << "' is empty\n";
    return kUsage;
  }

  const fs::path out_dir =
      options.output_dir.empty() ? options.checkpoint.parent_path() : options.output_dir;
  try {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const EvalReport report = evaluate(
        model, pointers(samples), options.batch_size, [&](const Batch& batch, const LabelMask& pred) {
          if (!options.dump_predictions) return;
          const std::size_t hw = pred.height * pred.width;
          const auto pixels = batch.images.data();
          for (std::size_t n = 0; n < batch.ids.size(); ++n) {
            ByteGrid grid{pred.width, pred.height, std::vector<std::uint8_t>(hw)};
            for (std::size_t i = 0; i < hw; ++i) {
              grid.bytes[i] = static_cast<std::uint8_t>(
                  std::lround(std::clamp(pixels[n * hw + i], 0.0, 1.0) * 255.0));
            }
            write_pgm(grid, out_dir / (batch.ids[n] + "_image.pgm"));
            grid.bytes.assign(batch.masks.labels.begin() + long(n * hw),
                              batch.masks.labels.begin() + long((n + 1) * hw));
            write_pgm(grid, out_dir / (batch.ids[n] + "_gt.pgm"));
            grid.bytes.assign(pred.labels.begin() + long(n * hw), pred.labels.begin() + long((n + 1) * hw));
            write_pgm(grid, out_dir / (batch.ids[n] + "_pred.pgm"));
          }
        });
    auto f = open_out(out_dir / "report.csv");
    write_report_csv(f, report);
    log << "evaluated " << report.samples << " samples; mean foreground dice " << std::setprecision(6)
        << report.mean_fg_dice << '\n';
    write_report_csv(log, report);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return e.code() == Errc::non_finite ? kNumeric : kData;
  }
  return kOk;
}

int gradcheck(const GradcheckOptions& options, std::ostream& log) {
  const std::string& scope = options.scope;
  if (scope != "ops" && scope != "loss" && scope != "model" && scope != "all") {
    log << "usage error: unknown scope '" << scope << "' (ops, loss, model, all)\n";
    return kUsage;
  }
  const bool all = scope == "all";
  std::vector<gradcheck::Result> results;
  auto run = [&](const std::vector<gradcheck::Case>& cases) {
    for (const auto& c : cases) {
      gradcheck::Result r;
      try {
        r = gradcheck::check(c);
      } catch (const Error& e) {
        r = {c.name, INFINITY, 0, false};
        log << "  " << c.name << " threw: " << e.what() << '\n';
      }
      log << (r.passed ? "ok   " : "FAIL ") << std::left << std::setw(28) << r.name
          << " worst rel err " << std::scientific << std::setprecision(3) << r.worst
          << std::defaultfloat << "  (" << r.probes << " probes)\n";
      results.push_back(r);
    }
  };
  if (all || scope == "ops") {
    auto cases = gradcheck::op_cases();
    cases.insert(cases.end(), options.extra_op_cases.begin(), options.extra_op_cases.end());
    run(cases);
  }
  if (all || scope == "loss") {
    run(gradcheck::loss_cases());
    for (const auto& r : gradcheck::curvature_checks()) {
      log << (r.passed ? "ok   " : "FAIL ") << std::left << std::setw(28) << r.name
          << " worst abs err " << std::scientific << std::setprecision(3) << r.worst
          << std::defaultfloat << "  (" << r.probes << " grid points)\n";
      results.push_back(r);
    }
  }
  if (all || scope == "model") run({gradcheck::model_case()});

  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  if (failed > 0) {
    log << failed << " of " << results.size() << " checks failed:";
    for (const auto& r : results) {
      if (!r.passed) log << ' ' << r.name;
    }
    log << '\n';
    return kVerification;
  }
  log << "all " << results.size() << " checks passed\n";
  return kOk;
}

int gen_data(const GenDataOptions& options, std::ostream& log) {
  std::array<std::size_t, 3> counts{};
  try {
    if (options.n == 0) throw Error(Errc::invalid_argument, "n must be at least 1");
    if (options.size < 64) throw Error(Errc::invalid_argument, "phantom size must be at least 64");
    counts = split_counts(options.n, options.fractions);
  } catch (const Error& e) {
    log << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  const std::size_t digits = std::max<std::size_t>(4, std::to_string(options.n - 1).size());
  Rng rng(options.seed);
  std::vector<Sample> samples;
  DatasetSplit split;
  for (std::size_t i = 0; i < options.n; ++i) {
    std::ostringstream id;
    id << "phantom_" << std::setw(int(digits)) << std::setfill('0') << i;
    samples.push_back(generate_phantom(rng, options.size, 4, id.str()));
    auto& bucket = i < counts[0] ? split.train : i < counts[0] + counts[1] ? split.val : split.test;
    bucket.push_back(samples.back().id);
  }
  try {
    write_dataset(options.out_dir, samples, split);
  } catch (const Error& e) {
    log << "write error: " << e.what() << '\n';
    return kData;
  }
  log << "wrote " << options.n << " phantoms (" << counts[0] << " train, " << counts[1] << " val, "
      << counts[2] << " test) to " << options.out_dir.string() << '\n';
  return kOk;
}

int inspect_loss(const InspectLossOptions& options, std::ostream& log) {
  ClassWeights weights;
  try {
    weights = ClassWeights::from_rates(options.cr);
    if (options.grid_points == 0) throw Error(Errc::invalid_argument, "grid needs at least one point");
  } catch (const Error& e) {
    log << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  const WmeParams params{options.beta1, options.beta2};
  std::vector<double> grid;
  for (std::size_t i = 1; i <= options.grid_points; ++i) {
    grid.push_back(double(i) / double(options.grid_points + 1));
  }

  try {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    auto table = open_out(options.out_dir / "lambda.csv");
    table << std::setprecision(9) << "class,cr,lambda\n";
    for (std::size_t k = 0; k < weights.num_classes(); ++k) {
      table << k << ',' << weights.cr[k] << ',' << weights.lambda[k] << '\n';
    }
    for (std::size_t k = 0; k < weights.num_classes(); ++k) {
      auto f = open_out(options.out_dir / ("curve_class" + std::to_string(k) + ".csv"));
      f << std::setprecision(12) << "p,loss,t1,t2,dloss,d2loss\n";
      for (const auto& pt : loss_curve(weights, k, params, grid)) {
        const double t1 = weights.lambda[k] * params.beta1 * std::exp(-pt.p);
        const double t2 = params.beta2 * std::exp(1.0 - pt.p);
        f << pt.p << ',' << pt.loss << ',' << t1 << ',' << t2 << ',' << pt.dloss << ',' << pt.d2loss
          << '\n';
      }
    }
  } catch (const Error& e) {
    log << "write error: " << e.what() << '\n';
    return kData;
  }
  log << "lambda:";
  for (double l : weights.lambda) log << ' ' << std::setprecision(9) << l;
  log << "\nwrote lambda.csv and " << weights.num_classes() << " curve files to "
      << options.out_dir.string() << '\n';
  return kOk;
}

}  // namespace ymwml::commands
