#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "ymwml/commands.hpp"

using namespace ymwml;

namespace {

std::string kebab(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation training with a weighted multi-class exponential loss"};
  app.require_subcommand(1);

  // train: every TrainConfig field is a --kebab-case flag layered over the
  // optional config file.
  auto* train = app.add_subcommand("train", "train a model and write checkpoints");
  std::string config_file;
  train->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
  for (const auto& key : TrainConfig::keys()) {
    flag_options[key] = train->add_option("--" + kebab(key), flag_values[key]);
  }

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  commands::EvalOptions eval_opts;
  std::string ckpt, eval_root, eval_cfg, eval_out;
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--dataset-root", eval_root)->required();
  eval->add_option("--split", eval_opts.split, "train, val or test")->capture_default_str();
  eval->add_option("--config", eval_cfg, "defaults to config.resolved beside the checkpoint");
  eval->add_option("--output-dir", eval_out, "defaults to the checkpoint's directory");
  eval->add_option("--batch-size", eval_opts.batch_size)->capture_default_str();
  eval->add_flag("--dump-predictions", eval_opts.dump_predictions,
                 "write image/ground-truth/prediction PGMs per sample");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference and curvature verification");
  commands::GradcheckOptions grad_opts;
  grad->add_option("--scope", grad_opts.scope, "ops, loss, model or all")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "write a synthetic phantom dataset");
  commands::GenDataOptions gen_opts;
  std::string gen_out, fractions = "0.6,0.1,0.3";
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--n", gen_opts.n)->capture_default_str();
  gen->add_option("--size", gen_opts.size)->capture_default_str();
  gen->add_option("--seed", gen_opts.seed)->capture_default_str();
  gen->add_option("--split", fractions, "train,val,test fractions")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect-loss", "tabulate lambda and per-class loss curves");
  commands::InspectLossOptions insp_opts;
  std::string cr_text, insp_out;
  inspect->add_option("--beta1", insp_opts.beta1)->capture_default_str();
  inspect->add_option("--beta2", insp_opts.beta2)->capture_default_str();
  inspect->add_option("--cr", cr_text, "comma-separated class rates summing to 1")->required();
  inspect->add_option("--out", insp_out)->required();
  inspect->add_option("--grid-points", insp_opts.grid_points)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? commands::kOk : commands::kUsage;
  }

  try {
    if (*train) {
      TrainConfig cfg;
      if (!config_file.empty()) cfg.load_file(config_file);
      for (const auto& key : TrainConfig::keys()) {
        if (flag_options[key]->count() > 0) cfg.set(key, flag_values[key]);
      }
      return commands::train(cfg, std::cout);
    }
    if (*eval) {
      eval_opts.checkpoint = ckpt;
      eval_opts.dataset_root = eval_root;
      eval_opts.config = eval_cfg;
      eval_opts.output_dir = eval_out;
      return commands::eval(eval_opts, std::cout);
    }
    if (*grad) return commands::gradcheck(grad_opts, std::cout);
    if (*gen) {
      const auto f = parse_list(fractions);
      if (f.size() != 3) throw Error(Errc::config, "--split takes three fractions");
      gen_opts.fractions = {f[0], f[1], f[2]};
      gen_opts.out_dir = gen_out;
      return commands::gen_data(gen_opts, std::cout);
    }
    if (*inspect) {
      insp_opts.cr = parse_list(cr_text);
      insp_opts.out_dir = insp_out;
      return commands::inspect_loss(insp_opts, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::non_finite ? commands::kNumeric : commands::kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: malformed number list\n";
    return commands::kUsage;
  }
  return commands::kUsage;
}
