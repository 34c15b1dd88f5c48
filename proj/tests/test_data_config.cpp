#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>

#include "dropblock/error.hpp"
#include "dropblock/nn/config.hpp"
#include "dropblock/nn/dataset.hpp"

using namespace dropblock;
using namespace dropblock::nn;
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

// Hand-assembled IDX bytes, independent of encode_idx.
std::vector<std::uint8_t> idx_bytes(std::vector<std::uint32_t> dims, unsigned fill_mod) {
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
  std::size_t total = 1;
  for (auto d : dims) {
    put_u32(out, d);
    total *= d;
  }
  for (std::size_t i = 0; i < total; ++i) out.push_back(static_cast<std::uint8_t>(i % fill_mod));
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dropblock_test_data_config";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("IDX header and payload") {
  const auto bytes = idx_bytes({5, 28, 28}, 251);
  CHECK(bytes[3] == 3);  // magic 0x00000803
  const IdxArray a = parse_idx(bytes);
  CHECK(a.dims == std::vector<std::uint32_t>{5, 28, 28});
  REQUIRE(a.data.size() == 5u * 28 * 28);
  CHECK(a.data[300] == 300 % 251);
  CHECK(encode_idx(a) == bytes);
}

TEST_CASE("malformed IDX is rejected") {
  auto bytes = idx_bytes({2, 3}, 7);
  auto bad_magic = bytes;
  bad_magic[0] = 1;
  CHECK_THROWS_AS(parse_idx(bad_magic), FormatError);
  auto bad_type = bytes;
  bad_type[2] = 0x0D;
  CHECK_THROWS_AS(parse_idx(bad_type), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(parse_idx(truncated), FormatError);
  CHECK_THROWS_AS(parse_idx(std::span(bytes.data(), 6)), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_idx(trailing), FormatError);
  CHECK_THROWS_AS(read_idx_file(scratch("missing.idx")), Error);
}

TEST_CASE("IDX datasets load, validate and round-trip") {
  const fs::path img = scratch("img.idx"), lab = scratch("lab.idx");
  write_bytes(img, idx_bytes({6, 28, 28}, 256));
  std::vector<std::uint8_t> labels{0, 0, 8, 1};
  put_u32(labels, 6);
  for (std::uint8_t l : {0, 1, 2, 1, 0, 2}) labels.push_back(l);
  write_bytes(lab, labels);

  const Dataset ds = load_idx(img, lab);
  CHECK(ds.images.shape() == Shape{6, 1, 28, 28});
  CHECK(ds.classes == 3);
  CHECK(ds.labels[2] == 2);
  CHECK(ds.images[255] == 1.0);
  CHECK(ds.images[51] == doctest::Approx(51.0 / 255.0));

  const fs::path img2 = scratch("img2.idx"), lab2 = scratch("lab2.idx");
  save_idx(ds, img2, lab2);
  const auto a = read_idx_file(img2);
  CHECK(encode_idx(a) == idx_bytes({6, 28, 28}, 256));
  CHECK(load_idx(img2, lab2).images.vector() == ds.images.vector());

  // Label count disagreeing with the image count.
  std::vector<std::uint8_t> short_labels{0, 0, 8, 1};
  put_u32(short_labels, 5);
  for (int i = 0; i < 5; ++i) short_labels.push_back(0);
  const fs::path lab3 = scratch("lab3.idx");
  write_bytes(lab3, short_labels);
  CHECK_THROWS_AS(load_idx(img, lab3), FormatError);
}

TEST_CASE("synthetic data is reproducible and balanced") {
  const Dataset a = gen_synthetic(3, 10000, 4);
  const Dataset b = gen_synthetic(3, 10000, 4);
  CHECK(a.images.vector() == b.images.vector());
  CHECK(a.labels == b.labels);
  CHECK(gen_synthetic(4, 100, 4).labels != gen_synthetic(3, 100, 4).labels);
  CHECK(a.images.shape() == Shape{10000, 1, 16, 16});
  std::array<int, 4> counts{};
  for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
  for (int c : counts) CHECK(std::abs(c - 2500) <= 125);
  for (double v : a.images.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  a.validate();

  // The class blob sits in its quadrant: mean brightness there is highest.
  std::array<std::array<double, 4>, 4> quad{};
  for (int n = 0; n < 2000; ++n)
    for (int h = 0; h < 16; ++h)
      for (int w = 0; w < 16; ++w)
        quad[static_cast<std::size_t>(a.labels[n])][static_cast<std::size_t>((h / 8) * 2 + w / 8)] +=
            a.images.at(n, 0, h, w);
  for (int k = 0; k < 4; ++k)
    for (int q = 0; q < 4; ++q)
      if (q != k) CHECK(quad[k][k] > quad[k][q]);

  CHECK_THROWS(gen_synthetic(1, 3, 4));
  CHECK_THROWS(gen_synthetic(1, 10, 5));
  CHECK(gen_synthetic(1, 10, 2).classes == 2);
}

TEST_CASE("run config parses, formats and round-trips") {
  const std::string text = R"(# small net
input = 1x16x16
layer = conv out=8 kernel=3 stride=1 pad=1
layer = relu
layer = dropblock id=db1 block_size=3 per_channel=false gamma_multiplier=0.25
layer = residual_begin
layer = conv out=8 kernel=3 pad=1
layer = residual_end skip=drop_path skip_id=sk
layer = maxpool size=2 stride=2
layer = dense out=4
epochs = 5
batch_size = 16
learning_rate = 0.01
keep_prob = 0.9
schedule = fixed
seed = 11
train_samples = 200
val_samples = 100
)";
  const RunConfig c = parse_run_config(text);
  CHECK(c.network.layers.size() == 8);
  const auto& db = std::get<RegularizerSpec>(c.network.layers[2]);
  CHECK(db.block_size == 3);
  CHECK_FALSE(db.per_channel);
  CHECK(db.gamma_multiplier == 0.25);
  const auto& end = std::get<ResidualEndSpec>(c.network.layers[5]);
  REQUIRE(end.skip_regularizer.has_value());
  CHECK(end.skip_regularizer->kind == RegularizerKind::DropPath);
  CHECK(c.train.epochs == 5);
  CHECK(c.train.policy == KeepProbPolicy::Fixed);
  CHECK(c.train.seed == 11);
  CHECK(c.train.momentum == TrainConfig{}.momentum);
  CHECK(c.data.train_samples == 200);
  CHECK(c.network.placement_ids() == std::vector<std::string>{"db1", "sk"});

  CHECK(parse_run_config(format_run_config(c)) == c);
  CHECK(format_run_config(parse_run_config(format_run_config(c))) == format_run_config(c));

  const fs::path p = scratch("run.cfg");
  std::ofstream(p) << text;
  CHECK(load_run_config(p) == c);

  const auto [tr, va] = load_datasets(c.data);
  CHECK(tr.size() == 200);
  CHECK(va.size() == 100);
  CHECK(tr.images.vector() == gen_synthetic(c.data.data_seed, 200, 4).images.vector());
  CHECK(va.labels == gen_synthetic(c.data.data_seed + 1, 100, 4).labels);
}

TEST_CASE("config errors name the line") {
  const auto fails = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(fails("input = 1x16x16\nlayer = dense out=4\nbogus = 1\n").find("line 3") != std::string::npos);
  CHECK(fails("input = 1x16\nlayer = dense out=4\n").find("line 1") != std::string::npos);
  CHECK_FALSE(fails("input = 1x16x16\nlayer = conv out=x\n").empty());
  CHECK_FALSE(fails("input = 1x16x16\nlayer = frobnicate\n").empty());
  CHECK_FALSE(fails("input = 1x16x16\nlayer = dense out=4\nepochs = -2\n").empty());
  CHECK_FALSE(fails("input = 1x16x16\nlayer = dense out=4\nschedule = cubic\n").empty());
  CHECK_FALSE(fails("input = 1x16x16\nlayer = dense out=4 speed=3\n").empty());
  CHECK_FALSE(fails("no equals sign\n").empty());
  CHECK_THROWS_AS(load_run_config(scratch("nope.cfg")), ConfigError);
}
