#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ymwml/commands.hpp"
#include "ymwml/data.hpp"
#include "ymwml/ops.hpp"

using namespace ymwml;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ymwml_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(YMWML_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TrainConfig tiny_config(const fs::path& data, const fs::path& out) {
  TrainConfig c;
  c.dataset_root = data.string();
  c.epochs = 2;
  c.batch_size = 2;
  c.input_size = 64;
  c.width = 0.125;
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Config, PrecedenceDefaultFileFlag) {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "run.cfg") << "# comment\nlr0 = 0.02\nbatch_size = 4\n\nepochs = 3\n";
  TrainConfig c;
  EXPECT_EQ(c.lr0, 0.01);
  c.load_file(dir / "run.cfg");
  EXPECT_EQ(c.lr0, 0.02);
  EXPECT_EQ(c.batch_size, 4u);
  c.set("lr0", "0.05");  // flags are applied after the file
  EXPECT_EQ(c.lr0, 0.05);
  EXPECT_EQ(*c.epochs, 3u);
  const std::string r = c.resolved();
  EXPECT_NE(r.find("lr0 = 0.05"), std::string::npos);
  EXPECT_NE(r.find("batch_size = 4"), std::string::npos);
  EXPECT_NE(r.find("seed = 42"), std::string::npos);
  // the echo parses back to the same configuration
  std::ofstream(dir / "echo.cfg") << r;
  TrainConfig back;
  back.load_file(dir / "echo.cfg");
  EXPECT_EQ(back.resolved(), r);
  fs::remove_all(dir);
}

TEST(Config, Errors) {
  TrainConfig c;
  EXPECT_THROW(c.set("learning_rate", "1"), Error);
  EXPECT_THROW(c.set("epochs", "ten"), Error);
  EXPECT_THROW(c.set("cr_scope", "image"), Error);
  c.dataset_root = "x";
  try {
    c.validate();
    FAIL() << "epochs has no default";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
  }
}

TEST(Cli, MissingEpochsIsAUsageError) {
  const fs::path dir = scratch("noepochs");
  std::ostringstream log;
  TrainConfig c;
  c.dataset_root = dir.string();
  EXPECT_EQ(commands::train(c, log), commands::kUsage);
  EXPECT_EQ(run_binary("train --dataset-root " + dir.string()), 1);
  EXPECT_EQ(run_binary("frobnicate"), 1);
  fs::remove_all(dir);
}

TEST(Cli, GenDataIsDeterministicAndSplits) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  std::ostringstream log;
  commands::GenDataOptions o;
  o.n = 20;
  o.size = 64;
  o.seed = 5;
  o.out_dir = a;
  ASSERT_EQ(commands::gen_data(o, log), 0);
  EXPECT_EQ(run_binary("gen-data --out " + b.string() + " --n 20 --size 64 --seed 5"), 0);
  EXPECT_EQ(slurp(a / "split.txt"), slurp(b / "split.txt"));
  for (const auto& entry : fs::directory_iterator(a / "images")) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / "images" / entry.path().filename()));
  }
  const Dataset ds = load_dataset(a, 4);
  EXPECT_EQ(ds.split.train.size(), 12u);
  EXPECT_EQ(ds.split.val.size(), 2u);
  EXPECT_EQ(ds.split.test.size(), 6u);
  o.size = 50;
  EXPECT_EQ(commands::gen_data(o, log), commands::kUsage);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, InspectLossArtifacts) {
  const fs::path dir = scratch("inspect");
  std::ostringstream log;
  commands::InspectLossOptions o;
  o.cr = {1, 0, 0, 0};
  o.out_dir = dir;
  ASSERT_EQ(commands::inspect_loss(o, log), 0);
  const auto lambda = read_csv(dir / "lambda.csv");
  ASSERT_EQ(lambda.size(), 5u);
  EXPECT_EQ(lambda[0], (std::vector<std::string>{"class", "cr", "lambda"}));
  EXPECT_NEAR(std::stod(lambda[1][2]), 0.367879441, 1e-9);
  for (int k = 2; k <= 4; ++k) EXPECT_EQ(std::stod(lambda[k][2]), 1.0);

  for (int k = 0; k < 4; ++k) {
    const auto curve = read_csv(dir / ("curve_class" + std::to_string(k) + ".csv"));
    ASSERT_EQ(curve.size(), 100u);
    EXPECT_EQ(curve[0], (std::vector<std::string>{"p", "loss", "t1", "t2", "dloss", "d2loss"}));
    for (std::size_t i = 2; i < curve.size(); ++i) {
      EXPECT_LT(std::stod(curve[i][1]), std::stod(curve[i - 1][1]));
      EXPECT_GT(std::stod(curve[i][5]), 0.0);
    }
  }

  const fs::path zero = scratch("inspect_b0");
  o.beta1 = 0;
  o.out_dir = zero;
  ASSERT_EQ(commands::inspect_loss(o, log), 0);
  const auto curve = read_csv(zero / "curve_class1.csv");
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_EQ(std::stod(curve[i][2]), 0.0);

  o.cr = {0.5, 0.6};
  EXPECT_EQ(commands::inspect_loss(o, log), commands::kUsage);
  fs::remove_all(dir);
  fs::remove_all(zero);
}

TEST(Cli, GradcheckExitCodes) {
  std::ostringstream log;
  commands::GradcheckOptions o;
  o.scope = "loss";
  EXPECT_EQ(commands::gradcheck(o, log), 0);
  o.scope = "everything";
  EXPECT_EQ(commands::gradcheck(o, log), commands::kUsage);

  // A backward rule that is off by a factor of two must be caught.
  o.scope = "ops";
  Rng rng(3);
  gradcheck::Case bad;
  bad.name = "planted_bad_square";
  bad.inputs = {Tensor::uniform({3}, rng, -1, 1).set_requires_grad(true)};
  bad.fn = [](const std::vector<Tensor>& in) {
    // y = x^2 computed as x * detach(x): backward sees only half the slope.
    Tensor detached = Tensor::from(in[0].shape(), {in[0].data().begin(), in[0].data().end()});
    return ops::mul(in[0], detached);
  };
  o.extra_op_cases = {bad};
  std::ostringstream fail_log;
  EXPECT_EQ(commands::gradcheck(o, fail_log), commands::kVerification);
  EXPECT_NE(fail_log.str().find("planted_bad_square"), std::string::npos);
}

TEST(Cli, TrainIsDeterministicAndEvalChecksCompatibility) {
  const fs::path data = scratch("train_data");
  std::ostringstream log;
  commands::GenDataOptions g;
  g.out_dir = data;
  g.n = 6;
  g.size = 64;
  g.fractions = {0.5, 1.0 / 6, 2.0 / 6};
  ASSERT_EQ(commands::gen_data(g, log), 0);

  const fs::path a = scratch("train_a"), b = scratch("train_b");
  ASSERT_EQ(commands::train(tiny_config(data, a), log), 0) << log.str();
  ASSERT_EQ(commands::train(tiny_config(data, b), log), 0);
  EXPECT_EQ(slurp(a / "training.csv"), slurp(b / "training.csv"));
  EXPECT_EQ(slurp(a / "best.ckpt"), slurp(b / "best.ckpt"));
  EXPECT_EQ(slurp(a / "last.ckpt"), slurp(b / "last.ckpt"));

  const auto rows = read_csv(a / "training.csv");
  ASSERT_EQ(rows.size(), 1u + 2 * 2);  // 3 train samples, batch 2 -> 2 iters per epoch
  EXPECT_EQ(rows[0][0], "iter");
  EXPECT_EQ(std::stod(rows[1][1]), 0.01);
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LT(std::stod(rows[i][1]), std::stod(rows[i - 1][1]));
  EXPECT_TRUE(rows[1][4].empty());
  EXPECT_FALSE(rows[2][4].empty());

  commands::EvalOptions e;
  e.checkpoint = a / "best.ckpt";
  e.dataset_root = data;
  e.dump_predictions = true;
  ASSERT_EQ(commands::eval(e, log), 0);
  const auto report = read_csv(a / "report.csv");
  ASSERT_EQ(report.size(), 6u);
  EXPECT_EQ(report[5][0], "mean_fg");
  const Dataset ds = load_dataset(data, 4);
  for (const auto& id : ds.split.test) {
    EXPECT_TRUE(fs::exists(a / (id + "_pred.pgm")));
    EXPECT_EQ(read_pgm(a / (id + "_gt.pgm")).bytes, ds.find(id).mask.labels);
  }

  // A config that builds a different network cannot load the checkpoint.
  std::ofstream(a / "wide.cfg") << "width = 0.25\ninput_size = 64\n";
  e.config = a / "wide.cfg";
  EXPECT_EQ(commands::eval(e, log), commands::kData);

  e.config.clear();
  e.split = "val";
  fs::path empty_split = scratch("empty_split");
  fs::copy(data, empty_split, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  {
    std::ofstream f(empty_split / "split.txt");
    for (const auto& s : ds.samples) f << "train " << s.id << "\n";
  }
  e.dataset_root = empty_split;
  EXPECT_EQ(commands::eval(e, log), commands::kUsage);

  e.checkpoint = a / "missing.ckpt";
  e.dataset_root = data;
  EXPECT_EQ(commands::eval(e, log), commands::kData);

  for (const auto& p : {data, a, b, empty_split}) fs::remove_all(p);
}

TEST(Cli, ArgmaxTiesGoLow) {
  const Tensor logits = Tensor::from({1, 3, 1, 2}, {1, 5, 2, 5, 2, 0});
  const LabelMask m = commands::argmax_labels(logits);
  EXPECT_EQ(m.labels, (std::vector<std::uint8_t>{1, 0}));
}
