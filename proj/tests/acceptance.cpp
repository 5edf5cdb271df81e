// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria not listed with --allow-fail (0 when everything
// else passes). Allowed failures are still printed as FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ymwml/commands.hpp"
#include "ymwml/data.hpp"
#include "ymwml/gradcheck.hpp"
#include "ymwml/metrics.hpp"
#include "ymwml/model.hpp"
#include "ymwml/optim.hpp"
#include "ymwml/wme_loss.hpp"

using namespace ymwml;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// report.csv -> per-class dice (the "mean_fg" row is stored at index K).
std::vector<double> read_report(const fs::path& p) {
  std::vector<double> dice;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    dice.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  return dice;
}

ClassWeights lambdas(std::vector<double> l) {
  ClassWeights w;
  w.cr.assign(l.size(), 0.0);
  w.lambda = std::move(l);
  return w;
}

Verdict gradient_oracle() {
  const auto t0 = Clock::now();
  Verdict v;
  double worst = 0.0;
  std::size_t cases = 0;
  auto run = [&](const gradcheck::Case& c) {
    const auto r = gradcheck::check(c);
    ++cases;
    worst = std::max(worst, r.worst);
    if (!r.passed) {
      v.pass = false;
      v.detail += " failed:" + r.name;
    }
  };
  for (const auto& c : gradcheck::op_cases()) run(c);
  for (const auto& c : gradcheck::loss_cases()) run(c);
  run(gradcheck::model_case());
  const double elapsed = seconds_since(t0);
  if (elapsed >= 300) v.pass = false;
  v.detail = std::to_string(cases) + " cases incl. full model, worst rel err " + fmt(worst, 3) +
             " (< 1e-4), " + fmt(elapsed, 3) + " s (< 300 s)" + v.detail;
  return v;
}

Verdict wme_fidelity() {
  const auto a = wme_pixel_loss(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 0, lambdas({1, 1, 1, 1}));
  const auto b = wme_pixel_loss(std::vector<double>{1, 0, 0, 0}, 0,
                                lambdas({std::exp(-1.0), 1, 1, 1}));
  const auto c = wme_pixel_loss(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 2, lambdas({1, 1, 1, 1}),
                                {0.0, 0.0});
  // Hand evaluation: 2 e^-0.25 + e^0.75 and 2 e^-1 e^-1 + e^0.
  const double ea = 2 * std::exp(-0.25) + std::exp(0.75);
  const double eb = 2 * std::exp(-2.0) + 1.0;
  const double da = std::abs(a.loss - 3.674601583), db = std::abs(b.loss - 1.270670566);
  Verdict v;
  v.pass = da < 1e-9 && db < 1e-9 && std::abs(a.loss - ea) < 1e-12 &&
           std::abs(b.loss - eb) < 1e-12 && c.loss == 0.0;
  v.detail = "uniform " + fmt(a.loss, 10) + ", perfect " + fmt(b.loss, 10) + ", beta=0 " +
             fmt(c.loss) + " (tol 1e-9)";
  return v;
}

Verdict convexity_witness() {
  Verdict v;
  double worst = 0.0;
  for (const auto& r : gradcheck::curvature_checks(1e-8)) {
    worst = std::max(worst, r.worst);
    if (!r.passed) {
      v.pass = false;
      v.detail += " failed:" + r.name;
    }
  }
  v.detail = "lambda in {e^-1, 0.8, 1}, 99-point grid, second differences > 0, worst |numeric - "
             "analytic| " + fmt(worst, 3) + " (< 1e-8)" + v.detail;
  return v;
}

Verdict lambda_law() {
  Verdict v;
  const double at0 = ClassWeights::from_rates({0.0, 1.0}).lambda[0];
  const double at1 = ClassWeights::from_rates({1.0, 0.0}).lambda[0];
  bool decreasing = true;
  double previous = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const double cr = i / 999.0;
    const double l = ClassWeights::from_rates({cr, 1.0 - cr}).lambda[0];
    decreasing = decreasing && l < previous;
    previous = l;
  }
  v.pass = at0 == 1.0 && decreasing && std::abs(at1 - std::exp(-1.0)) <= 1e-15;
  v.detail = "lambda(0)=" + fmt(at0, 17) + ", strictly decreasing on 1000 points: " +
             (decreasing ? "yes" : "no") + ", |lambda(1)-e^-1|=" + fmt(std::abs(at1 - std::exp(-1.0)), 3);
  return v;
}

Verdict shape_contract() {
  std::map<std::string, std::pair<std::size_t, std::size_t>> m;
  for (const auto& row : shape_report(ModelConfig{})) m[row.stage] = {row.spatial, row.channels};
  using P = std::pair<std::size_t, std::size_t>;
  Verdict v;
  v.pass = m["head/in8"] == P{32, 128} && m["head/in16"] == P{16, 256} &&
           m["head/in32"] == P{8, 512} && m["head/out"] == P{256, 4};
  auto show = [&](const char* k) {
    return std::to_string(m[k].first) + "x" + std::to_string(m[k].first) + "x" +
           std::to_string(m[k].second);
  };
  v.detail = "head inputs " + show("head/in8") + ", " + show("head/in16") + ", " + show("head/in32") +
             "; output " + show("head/out");
  return v;
}

Verdict schedule() {
  const PolySchedule s{0.01, 0.9, 999};
  double worst = 0.0;
  for (std::size_t i = 0; i <= 999; ++i) {
    const double expected = 0.01 * std::pow(1.0 - double(i) / 999.0, 0.9);
    worst = std::max(worst, std::abs(poly_lr(i, s) - expected));
  }
  Verdict v;
  v.pass = worst <= 1e-12 && poly_lr(0, s) == 0.01;
  v.detail = "1000 points, max |err| " + fmt(worst, 3) + ", lr(0)=" + fmt(poly_lr(0, s));
  return v;
}

Verdict metric_oracles() {
  double worst_identity = 0.0;
  std::size_t mismatches = 0, pairs = 0;
  for (unsigned ga = 0; ga < 512; ++ga) {
    std::vector<std::uint8_t> gt(9);
    for (int i = 0; i < 9; ++i) gt[i] = (ga >> i) & 1u;
    for (unsigned pb = 0; pb < 512; ++pb) {
      std::vector<std::uint8_t> pred(9);
      std::set<int> a, b;
      for (int i = 0; i < 9; ++i) {
        pred[i] = (pb >> i) & 1u;
        if (pred[i]) a.insert(i);
        if (gt[i]) b.insert(i);
      }
      std::set<int> both, either = a;
      for (int i : a) {
        if (b.count(i)) both.insert(i);
      }
      either.insert(b.begin(), b.end());
      const double sd = either.empty() ? 1.0 : 2.0 * double(both.size()) / double(a.size() + b.size());
      const double si = either.empty() ? 1.0 : double(both.size()) / double(either.size());
      const ConfusionCounts c = confusion(LabelMask::single(3, 3, pred), LabelMask::single(3, 3, gt), 2);
      ++pairs;
      if (dice(c, 1) != sd || iou(c, 1) != si) ++mismatches;
      const double d = dice(c, 1);
      worst_identity = std::max(worst_identity, std::abs(iou(c, 1) - d / (2 - d)));
    }
  }
  Verdict v;
  v.pass = mismatches == 0 && worst_identity <= 1e-12;
  v.detail = std::to_string(pairs) + " mask pairs vs set oracle, " + std::to_string(mismatches) +
             " mismatches, Dice-IoU identity err " + fmt(worst_identity, 3);
  return v;
}

Verdict checkpoint_round_trip(const fs::path& dir) {
  Verdict v;
  ModelConfig cfg;
  cfg.width = 0.125;
  cfg.input_size = 64;
  Rng rng(3);
  const Model model(cfg, rng);
  Rng xr(4);
  const Tensor x = Tensor::uniform({2, 1, 64, 64}, xr, 0, 1);
  const fs::path good = dir / "round_trip.ckpt", bad = dir / "corrupt.ckpt";
  save_checkpoint(model.parameters(), good);
  Rng other(99);
  Model restored(cfg, other);
  restored.load_parameters(load_checkpoint(good));
  NoGradGuard guard;
  const Tensor out0 = model.forward(x), out1 = restored.forward(x);
  const auto y0 = out0.data(), y1 = out1.data();
  const bool identical = std::equal(y0.begin(), y0.end(), y1.begin(), y1.end(),
                                    [](double a, double b) { return std::memcmp(&a, &b, 8) == 0; });

  const std::string bytes = slurp(good);
  auto kind_of = [&](const std::string& content) -> std::string {
    std::ofstream(bad, std::ios::binary) << content;
    try {
      load_checkpoint(bad);
    } catch (const Error& e) {
      return std::string(to_string(e.code()));
    }
    return "accepted";
  };
  std::string magic = bytes;
  magic[0] = 'X';
  const std::string k_magic = kind_of(magic);
  const std::string k_trunc = kind_of(bytes.substr(0, bytes.size() - 3));
  const std::string k_extra = kind_of(bytes + '\0');
  std::string k_missing = "accepted";
  try {
    load_checkpoint(dir / "absent.ckpt");
  } catch (const Error& e) {
    k_missing = std::string(to_string(e.code()));
  }
  v.pass = identical && k_magic == "format" && k_trunc == "truncated" && k_extra == "format" &&
           k_missing == "io";
  v.detail = std::string("forward after reload bitwise ") + (identical ? "identical" : "DIFFERENT") +
             "; bad magic->" + k_magic + ", truncated->" + k_trunc + ", trailing bytes->" + k_extra +
             ", missing->" + k_missing;
  return v;
}

// Desk-scale training run shared by the overfit, determinism and imbalance
// criteria: 64x64 phantoms, width 0.125, batch 8.
TrainConfig desk_config(const fs::path& data, const fs::path& out, std::size_t epochs,
                        std::uint64_t seed) {
  TrainConfig c;
  c.dataset_root = data.string();
  c.epochs = epochs;
  c.batch_size = 8;
  c.input_size = 64;
  c.width = 0.125;
  c.seed = seed;
  c.output_dir = out.string();
  return c;
}

struct OverfitRun {
  int status = -1;
  double seconds = 0;
  double mean_fg = 0;
  std::vector<double> dice;
};

OverfitRun overfit_run(const fs::path& data, const fs::path& out, std::ostream& log) {
  OverfitRun r;
  const auto t0 = Clock::now();
  // 16 training samples / batch 8 = 2 iterations per epoch -> 300 iterations.
  r.status = commands::train(desk_config(data, out, 150, 42), log);
  r.seconds = seconds_since(t0);
  if (r.status != 0) return r;
  commands::EvalOptions e;
  e.checkpoint = out / "best.ckpt";
  e.dataset_root = data;
  e.split = "train";
  r.status = commands::eval(e, log);
  if (r.status != 0) return r;
  r.dice = read_report(out / "report.csv");
  r.mean_fg = r.dice.back();
  return r;
}

struct ImbalanceRun {
  std::size_t smallest = 0;
  double wme = 0, uniform = 0;
  int status = 0;
};

// Paired runs for one seed: 32 phantoms, 16 train / 16 test, identical data,
// init and batch order; only lambda differs.
ImbalanceRun imbalance_pair(const fs::path& root, std::uint64_t seed, std::ostream& log) {
  ImbalanceRun r;
  const fs::path data = root / ("data_" + std::to_string(seed));
  commands::GenDataOptions g;
  g.out_dir = data;
  g.n = 32;
  g.size = 64;
  g.seed = seed;
  g.fractions = {0.5, 0.0, 0.5};
  if ((r.status = commands::gen_data(g, log)) != 0) return r;

  const Dataset ds = load_dataset(data, 4);
  std::vector<LabelMask> masks;
  for (const auto* s : ds.subset("train")) masks.push_back(s->mask);
  const ClassWeights w = compute_class_rates(masks, 4);
  r.smallest = std::size_t(std::min_element(w.cr.begin() + 1, w.cr.end()) - w.cr.begin());

  for (const bool uniform : {false, true}) {
    const fs::path out = root / ("run_" + std::to_string(seed) + (uniform ? "_uniform" : "_wme"));
    TrainConfig c = desk_config(data, out, 150, seed);
    if (uniform) c.lambda = "uniform";
    if ((r.status = commands::train(c, log)) != 0) return r;
    commands::EvalOptions e;
    e.checkpoint = out / "best.ckpt";
    e.dataset_root = data;
    e.split = "test";
    if ((r.status = commands::eval(e, log)) != 0) return r;
    (uniform ? r.uniform : r.wme) = read_report(out / "report.csv")[r.smallest];
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::string log_path;
  bool skip_training = false;
  std::vector<int> allowed;
  app.add_option("--workdir", workdir, "scratch directory for generated data and runs");
  app.add_option("--log", log_path, "training log file (default <workdir>/acceptance.log)");
  app.add_flag("--skip-training", skip_training, "only the fast criteria (1-6, 9, 10)");
  app.add_option("--allow-fail", allowed, "criteria whose failure is known and does not set the exit status");
  CLI11_PARSE(app, argc, argv);

  const fs::path root = workdir;
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream log(log_path.empty() ? root / "acceptance.log" : fs::path(log_path));

  int failures = 0;
  std::vector<int> tolerated;
  auto report = [&](int id, const std::string& name, const Verdict& v) {
    if (!v.pass) {
      if (std::find(allowed.begin(), allowed.end(), id) != allowed.end()) {
        tolerated.push_back(id);
      } else {
        ++failures;
      }
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name
              << "): " << v.detail << std::endl;
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Verdict()>& f) {
    try {
      report(id, name, f());
    } catch (const std::exception& e) {
      report(id, name, Verdict{false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "gradient oracle", gradient_oracle);
  guarded(2, "loss fidelity", wme_fidelity);
  guarded(3, "convexity witness", convexity_witness);
  guarded(4, "lambda law", lambda_law);
  guarded(5, "shape contract", shape_contract);
  guarded(6, "schedule", schedule);

  if (skip_training) {
    std::cout << "SKIP criteria 7, 8, 11 (--skip-training)" << std::endl;
  } else {
    const fs::path data = root / "overfit_data";
    OverfitRun first, second;
    guarded(7, "overfit sanity", [&] {
      commands::GenDataOptions g;
      g.out_dir = data;
      g.n = 16;
      g.size = 64;
      g.seed = 42;
      g.fractions = {1.0, 0.0, 0.0};
      if (commands::gen_data(g, log) != 0) return Verdict{false, "gen-data failed"};
      first = overfit_run(data, root / "overfit_a", log);
      if (first.status != 0) return Verdict{false, "train/eval exit " + std::to_string(first.status)};
      Verdict v;
      v.pass = first.mean_fg >= 0.90 && first.seconds < 600;
      v.detail = "16 phantoms 64x64, 300 iterations, training-set mean fg Dice " +
                 fmt(first.mean_fg, 4) + " (RV " + fmt(first.dice[1], 4) + ", Myo " +
                 fmt(first.dice[2], 4) + ", LV " + fmt(first.dice[3], 4) + ") >= 0.90, " +
                 fmt(first.seconds, 3) + " s (< 600 s)";
      return v;
    });

    guarded(8, "imbalance direction", [&] {
      int wins = 0;
      std::string detail;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ImbalanceRun r = imbalance_pair(root / "imbalance", seed, log);
        if (r.status != 0) return Verdict{false, "seed " + std::to_string(seed) + " exit " + std::to_string(r.status)};
        if (r.wme > r.uniform) ++wins;
        detail += " s" + std::to_string(seed) + ":" + fmt(r.wme, 4) + "/" + fmt(r.uniform, 4);
      }
      Verdict v;
      v.pass = wins >= 3;
      v.detail = "WME beats lambda=1 on smallest-class test Dice in " + std::to_string(wins) +
                 "/5 seeds (need >= 3); wme/uniform per seed:" + detail;
      return v;
    });

    guarded(11, "determinism", [&] {
      second = overfit_run(data, root / "overfit_b", log);
      if (first.status != 0 || second.status != 0) return Verdict{false, "overfit runs did not complete"};
      const bool csv = slurp(root / "overfit_a/training.csv") == slurp(root / "overfit_b/training.csv");
      const bool ckpt = slurp(root / "overfit_a/best.ckpt") == slurp(root / "overfit_b/best.ckpt");
      Verdict v;
      v.pass = csv && ckpt;
      v.detail = std::string("repeat of criterion 7: training.csv ") + (csv ? "identical" : "DIFFERS") +
                 ", best.ckpt " + (ckpt ? "identical" : "DIFFERS");
      return v;
    });
  }

  guarded(9, "metric oracles", metric_oracles);
  guarded(10, "checkpoint round trip", [&] { return checkpoint_round_trip(root); });

  std::string known;
  for (int id : tolerated) known += " " + std::to_string(id);
  if (failures == 0 && tolerated.empty()) {
    std::cout << "ALL PASS" << std::endl;
  } else {
    std::cout << failures << " unexpected failure(s); known failures:" << (known.empty() ? " none" : known)
              << std::endl;
  }
  return failures;
}
