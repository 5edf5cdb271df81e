#include "ymwml/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ymwml {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(Errc::config, "invalid value '" + std::string(value) + "' for " + std::string(key));
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) bad_value(key, value);
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  // from_chars for double is missing on older toolchains; istringstream is
  // fine for config-sized input.
  std::istringstream is{std::string(value)};
  double out = 0.0;
  if (!(is >> out) || !is.eof()) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string pick(std::string_view key, std::string_view value,
                 std::initializer_list<std::string_view> allowed) {
  for (auto a : allowed) {
    if (value == a) return std::string(value);
  }
  bad_value(key, value);
}

}  // namespace

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "dataset_root", "epochs", "batch_size", "input_size", "width",  "num_classes",
      "lr0",          "power",  "weight_decay", "beta1",    "beta2",  "cr_scope",
      "reduction",    "lambda", "loss",       "stem_skip",  "seed",   "output_dir"};
  return k;
}

void TrainConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  if (key == "dataset_root") dataset_root = value;
  else if (key == "epochs") epochs = parse_uint(key, value);
  else if (key == "batch_size") batch_size = parse_uint(key, value);
  else if (key == "input_size") input_size = parse_uint(key, value);
  else if (key == "width") width = parse_double(key, value);
  else if (key == "num_classes") num_classes = parse_uint(key, value);
  else if (key == "lr0") lr0 = parse_double(key, value);
  else if (key == "power") power = parse_double(key, value);
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "cr_scope") cr_scope = pick(key, value, {"dataset", "batch"});
  else if (key == "reduction") reduction = pick(key, value, {"sum", "mean"});
  else if (key == "lambda") lambda = pick(key, value, {"class-rate", "uniform"});
  else if (key == "loss") loss = pick(key, value, {"wme", "cross-entropy"});
  else if (key == "stem_skip") stem_skip = parse_bool(key, value);
  else if (key == "seed") seed = parse_uint(key, value);
  else if (key == "output_dir") output_dir = value;
  else throw Error(Errc::config, "unknown config key '" + std::string(key) + "'");
}

void TrainConfig::load_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::config, "cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::config, path.string() + ":" + std::to_string(line_no) +
                                    ": expected 'key = value'");
    }
    set(trim(view.substr(0, eq)), view.substr(eq + 1));
  }
}

void TrainConfig::validate() const {
  if (!epochs) throw Error(Errc::config, "epochs is required (the paper does not state it)");
  if (*epochs == 0) throw Error(Errc::config, "epochs must be at least 1");
  if (batch_size == 0) throw Error(Errc::config, "batch_size must be at least 1");
  if (dataset_root.empty()) throw Error(Errc::config, "dataset_root is required");
  if (!(lr0 > 0.0)) throw Error(Errc::config, "lr0 must be positive");
  if (!(power >= 0.0)) throw Error(Errc::config, "power must be non-negative");
  if (!(weight_decay >= 0.0)) throw Error(Errc::config, "weight_decay must be non-negative");
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) throw Error(Errc::config, "loss betas must be non-negative");
  model().validate();
}

std::string TrainConfig::resolved() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "dataset_root = " << dataset_root << '\n';
  os << "epochs = " << (epochs ? std::to_string(*epochs) : std::string()) << '\n';
  os << "batch_size = " << batch_size << '\n';
  os << "input_size = " << input_size << '\n';
  os << "width = " << width << '\n';
  os << "num_classes = " << num_classes << '\n';
  os << "lr0 = " << lr0 << '\n';
  os << "power = " << power << '\n';
  os << "weight_decay = " << weight_decay << '\n';
  os << "beta1 = " << beta1 << '\n';
  os << "beta2 = " << beta2 << '\n';
  os << "cr_scope = " << cr_scope << '\n';
  os << "reduction = " << reduction << '\n';
  os << "lambda = " << lambda << '\n';
  os << "loss = " << loss << '\n';
  os << "stem_skip = " << (stem_skip ? "true" : "false") << '\n';
  os << "seed = " << seed << '\n';
  os << "output_dir = " << output_dir << '\n';
  return os.str();
}

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.num_classes = num_classes;
  m.input_size = input_size;
  m.width = width;
  m.stem_skip = stem_skip;
  return m;
}

}  // namespace ymwml
