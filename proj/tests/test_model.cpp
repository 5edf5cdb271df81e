#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "test_util.hpp"
#include "ymwml/model.hpp"

using namespace ymwml;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::pair<std::size_t, std::size_t>> report_map(const ModelConfig& cfg) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> m;
  for (const auto& row : shape_report(cfg)) m[row.stage] = {row.spatial, row.channels};
  return m;
}

ModelConfig small(double width = 0.125, std::size_t size = 64) {
  ModelConfig cfg;
  cfg.width = width;
  cfg.input_size = size;
  return cfg;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("ymwml_model_" + name);
}

std::vector<char> read_all(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_all(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), std::streamsize(bytes.size()));
}

template <typename F>
Errc error_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::invalid_argument;
}

}  // namespace

TEST(ModelConfig, ChannelRule) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.channels(512), 512u);
  cfg.width = 0.25;
  EXPECT_EQ(cfg.channels(128), 32u);
  cfg.width = 0.125;
  EXPECT_EQ(cfg.channels(32), 8u);   // 4 -> raised to gn_groups
  EXPECT_EQ(cfg.channels(128), 16u);
  cfg.width = 0.3;
  EXPECT_EQ(cfg.channels(64), 24u);  // round(19.2) = 19 -> next multiple of 8
}

TEST(ModelConfig, Validation) {
  for (auto mutate : std::vector<std::function<void(ModelConfig&)>>{
           [](ModelConfig& c) { c.width = 0.0; }, [](ModelConfig& c) { c.width = 1.5; },
           [](ModelConfig& c) { c.input_size = 100; }, [](ModelConfig& c) { c.num_classes = 1; },
           [](ModelConfig& c) { c.width = 0.01; }}) {
    ModelConfig cfg;
    mutate(cfg);
    EXPECT_EQ(error_of([&] { cfg.validate(); }), Errc::config);
  }
}

TEST(ShapeReport, FullWidthMatchesArchitectureFigure) {
  auto m = report_map(ModelConfig{});
  EXPECT_EQ(m["head/in8"], std::make_pair(std::size_t(32), std::size_t(128)));
  EXPECT_EQ(m["head/in16"], std::make_pair(std::size_t(16), std::size_t(256)));
  EXPECT_EQ(m["head/in32"], std::make_pair(std::size_t(8), std::size_t(512)));
  EXPECT_EQ(m["backbone/32"], std::make_pair(std::size_t(8), std::size_t(512)));
  EXPECT_EQ(m["head/out"], std::make_pair(std::size_t(256), std::size_t(4)));
}

TEST(ShapeReport, ScalesWithWidthAndInput) {
  auto q = report_map(small(0.25, 256));
  EXPECT_EQ(q["head/in8"], std::make_pair(std::size_t(32), std::size_t(32)));
  EXPECT_EQ(q["head/in16"], std::make_pair(std::size_t(16), std::size_t(64)));
  EXPECT_EQ(q["head/in32"], std::make_pair(std::size_t(8), std::size_t(128)));
  auto r = report_map(small(1.0, 128));
  EXPECT_EQ(r["head/out"], std::make_pair(std::size_t(128), std::size_t(4)));
}

TEST(Model, ForwardShapesMatchReport) {
  Rng rng(1);
  const ModelConfig cfg = small(0.25, 64);
  const Model model(cfg, rng);
  ForwardTrace trace;
  const Tensor y = model.forward(Tensor::zeros({1, 1, 64, 64}), &trace);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 64, 64}));
  EXPECT_EQ(trace.head_inputs[0].shape(), (Shape{1, 32, 8, 8}));
  EXPECT_EQ(trace.head_inputs[1].shape(), (Shape{1, 64, 4, 4}));
  EXPECT_EQ(trace.head_inputs[2].shape(), (Shape{1, 128, 2, 2}));
  auto m = report_map(cfg);
  for (const auto& [stage, shape] : trace.stages) {
    ASSERT_TRUE(m.count(stage)) << stage;
    EXPECT_EQ(shape[1], m[stage].second) << stage;
    EXPECT_EQ(shape[2], m[stage].first) << stage;
  }
}

TEST(Model, ScaledConfigOutputAndBatch) {
  Rng rng(2);
  const Model model(small(), rng);
  EXPECT_EQ(model.forward(Tensor::zeros({2, 1, 64, 64})).shape(), (Shape{2, 4, 64, 64}));
  EXPECT_EQ(error_of([&] { model.forward(Tensor::zeros({1, 1, 32, 32})); }), Errc::shape_mismatch);
}

TEST(Model, ForwardIsPure) {
  Rng rng(3);
  const Model model(small(), rng);
  Rng data(4);
  const Tensor x = Tensor::uniform({1, 1, 64, 64}, data, 0, 1);
  const Tensor a = model.forward(x), b = model.forward(x);
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)));
}

TEST(Model, AttentionIsIdentityAtInit) {
  Rng rng(5);
  const Model model(small(), rng);
  Rng data(6);
  const Tensor x = Tensor::uniform({1, 1, 64, 64}, data, 0, 1);
  const Tensor a = model.forward(x);
  const Tensor b = model.forward(x, nullptr, {.bypass_head_attention = true});
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)));
}

TEST(Model, ParametersDependOnConfigNotSeed) {
  Rng r1(1), r2(99);
  const Model a(small(), r1), b(small(), r2);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  EXPECT_EQ(a.parameters().total_elements(), b.parameters().total_elements());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters().entries()[i].first, b.parameters().entries()[i].first);
    EXPECT_EQ(a.parameters().entries()[i].second.shape(), b.parameters().entries()[i].second.shape());
  }
}

TEST(Model, SameSeedSameBytes) {
  Rng r1(7), r2(7);
  const Model a(small(), r1), b(small(), r2);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& x = a.parameters().entries()[i].second;
    const auto& y = b.parameters().entries()[i].second;
    EXPECT_EQ(0, std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(double)));
  }
}

TEST(Model, InitializationFollowsScheme) {
  Rng rng(8);
  const Model model(small(), rng);
  for (const auto& [name, t] : model.parameters()) {
    EXPECT_TRUE(t.requires_grad()) << name;
    const auto d = t.data();
    if (name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with(".gain")) {
      for (double v : d) EXPECT_EQ(v, 0.0) << name;
    } else if (name.ends_with(".gamma")) {
      for (double v : d) EXPECT_EQ(v, 1.0) << name;
    } else {
      ASSERT_TRUE(name.ends_with(".weight")) << name;
      double bound = std::sqrt(6.0 / double(t.size(1) * t.size(2) * t.size(3)));
      if (name == "head.classifier.weight") bound *= 0.01;
      double peak = 0.0;
      for (double v : d) {
        EXPECT_LE(std::abs(v), bound) << name;
        peak = std::max(peak, std::abs(v));
      }
      if (d.size() >= 64) EXPECT_GT(peak, 0.5 * bound) << name;
    }
  }
}

TEST(Checkpoint, ByteLayout) {
  ParameterStore store;
  store.add("ab", Tensor::from({2}, {1.5, -2.0}));
  const fs::path p = temp_file("layout.ckpt");
  save_checkpoint(store, p);
  std::vector<char> want;
  auto put = [&](const void* src, std::size_t n) {
    const char* c = static_cast<const char*>(src);
    want.insert(want.end(), c, c + n);
  };
  put("YMWML001", 8);
  const std::uint32_t count = 1, len = 2, ndim = 1;
  const std::uint64_t dim = 2;
  const double vals[2] = {1.5, -2.0};
  put(&count, 4);
  put(&len, 4);
  put("ab", 2);
  put(&ndim, 4);
  put(&dim, 8);
  put(vals, 16);  // host is little-endian
  EXPECT_EQ(read_all(p), want);
  fs::remove(p);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Rng rng(9);
  const Model model(small(), rng);
  const fs::path p = temp_file("round.ckpt");
  save_checkpoint(model.parameters(), p);
  Rng other(10);
  Model copy(small(), other);
  copy.load_parameters(load_checkpoint(p));
  Rng data(11);
  const Tensor x = Tensor::uniform({1, 1, 64, 64}, data, 0, 1);
  const Tensor a = model.forward(x), b = copy.forward(x);
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)));
  fs::remove(p);
}

TEST(Checkpoint, CorruptFilesRaiseDocumentedKinds) {
  Rng rng(12);
  const Model model(small(), rng);
  const fs::path good = temp_file("good.ckpt"), bad = temp_file("bad.ckpt");
  save_checkpoint(model.parameters(), good);
  const auto bytes = read_all(good);

  auto magic = bytes;
  magic[0] = 'X';
  write_all(bad, magic);
  EXPECT_EQ(error_of([&] { load_checkpoint(bad); }), Errc::format);

  write_all(bad, {bytes.begin(), bytes.begin() + 5});
  EXPECT_EQ(error_of([&] { load_checkpoint(bad); }), Errc::format);

  write_all(bad, {bytes.begin(), bytes.end() - 3});
  EXPECT_EQ(error_of([&] { load_checkpoint(bad); }), Errc::truncated);

  auto extra = bytes;
  extra.push_back(0);
  write_all(bad, extra);
  EXPECT_EQ(error_of([&] { load_checkpoint(bad); }), Errc::format);

  EXPECT_EQ(error_of([&] { load_checkpoint(temp_file("missing.ckpt")); }), Errc::io);
  fs::remove(good);
  fs::remove(bad);
}

TEST(Checkpoint, MismatchedConfigNamesTheTensor) {
  Rng rng(13);
  const Model model(small(0.125), rng);
  const fs::path p = temp_file("mismatch.ckpt");
  save_checkpoint(model.parameters(), p);
  Rng other(14);
  Model wider(small(0.25), other);
  std::string first_diff;
  for (std::size_t i = 0; i < wider.parameters().size() && first_diff.empty(); ++i) {
    const auto& [name, t] = wider.parameters().entries()[i];
    if (t.shape() != model.parameters().at(name).shape()) first_diff = name;
  }
  ASSERT_FALSE(first_diff.empty());
  try {
    wider.load_parameters(load_checkpoint(p));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
    EXPECT_NE(std::string(e.what()).find(first_diff), std::string::npos) << e.what();
  }
  fs::remove(p);
}

TEST(Checkpoint, RefusesNonFiniteTensors) {
  ParameterStore store;
  store.add("w", Tensor::from({1}, {std::nan("")}));
  EXPECT_EQ(error_of([&] { save_checkpoint(store, temp_file("nan.ckpt")); }), Errc::non_finite);
}
