#include <gtest/gtest.h>

#include <fstream>

#include "mdil/checkpoint.hpp"
#include "mdil/error.hpp"
#include "test_util.hpp"

namespace mdil {
namespace {

using test::bitwise_equal;
using test::TempDir;

Model sample_model() {
  Rng rng(12);
  Model m(test::tiny_model(), rng);
  m.add_domain({"A", LabelSpace({"background", "disk", "ring"}), "somewhere"}, InitMode::random, rng);
  m.add_domain({"B", LabelSpace({"background", "disk", "stripe", "ring"}), ""}, InitMode::init_wt, rng);
  // Give the running statistics non-trivial values.
  NoGradGuard guard;
  m.forward(test::random_input(1), 1, BnMode::train);
  m.forward(test::random_input(2), 2, BnMode::train);
  m.set_frozen("dec.dom1.cls.w", true);
  return m;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

TEST(Checkpoint, RoundtripIsBitwise) {
  TempDir dir("ckpt_roundtrip");
  Model m = sample_model();
  save_checkpoint(m, dir / "m.mdil");
  Model back = load_checkpoint(dir / "m.mdil");
  const auto a = m.state(), b = back.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(bitwise_equal(a[i].tensor, b[i].tensor)) << a[i].name;
  }
  EXPECT_EQ(back.num_domains(), 2);
  EXPECT_EQ(back.domain(2).labels, m.domain(2).labels);
  EXPECT_EQ(back.frozen(), m.frozen());
  const Tensor x = test::random_input(3);
  NoGradGuard guard;
  for (int t = 1; t <= 2; ++t) EXPECT_TRUE(bitwise_equal(m.forward(x, t, BnMode::infer), back.forward(x, t, BnMode::infer)));
}

TEST(Checkpoint, SaveIsByteStable) {
  TempDir dir("ckpt_stable");
  Model m = sample_model();
  save_checkpoint(m, dir / "a.mdil");
  save_checkpoint(load_checkpoint(dir / "a.mdil"), dir / "b.mdil");
  EXPECT_EQ(test::slurp(dir / "a.mdil"), test::slurp(dir / "b.mdil"));
}

TEST(Checkpoint, CorruptedMagic) {
  TempDir dir("ckpt_magic");
  save_checkpoint(sample_model(), dir / "m.mdil");
  std::string bytes = test::slurp(dir / "m.mdil");
  bytes[0] = 'X';
  write_bytes(dir / "bad.mdil", bytes);
  EXPECT_THROW(load_checkpoint(dir / "bad.mdil"), DataError);
}

TEST(Checkpoint, UnsupportedVersion) {
  TempDir dir("ckpt_version");
  save_checkpoint(sample_model(), dir / "m.mdil");
  std::string bytes = test::slurp(dir / "m.mdil");
  bytes[4] = 9;
  write_bytes(dir / "bad.mdil", bytes);
  EXPECT_THROW(read_tensor_file(dir / "bad.mdil"), DataError);
}

TEST(Checkpoint, Truncated) {
  TempDir dir("ckpt_trunc");
  save_checkpoint(sample_model(), dir / "m.mdil");
  const std::string bytes = test::slurp(dir / "m.mdil");
  write_bytes(dir / "bad.mdil", bytes.substr(0, bytes.size() - 7));
  EXPECT_THROW(load_checkpoint(dir / "bad.mdil"), DataError);
}

TEST(Checkpoint, MissingFile) {
  TempDir dir("ckpt_missing");
  EXPECT_THROW(load_checkpoint(dir / "nope.mdil"), DataError);
}

TEST(Checkpoint, UnknownTensorName) {
  TempDir dir("ckpt_unknown");
  save_checkpoint(sample_model(), dir / "m.mdil");
  TensorFile f = read_tensor_file(dir / "m.mdil");
  const std::vector<float> v{1.0f};
  f.records.push_back(TensorRecord::from_floats("enc.stage9.mystery", {1}, v));
  write_tensor_file(dir / "bad.mdil", f);
  EXPECT_THROW(load_checkpoint(dir / "bad.mdil"), DataError);
}

TEST(TensorFile, RecordRoundtrip) {
  TempDir dir("tensor_file");
  TensorFile f;
  f.metadata = "hello = world\n";
  const std::vector<float> v{1.5f, -2.0f, 0.0f, 3.25f};
  const std::vector<std::uint8_t> b{0, 255, 7};
  f.records.push_back(TensorRecord::from_floats("x", {2, 2}, v));
  f.records.push_back(TensorRecord::from_bytes("y", {3}, b));
  write_tensor_file(dir / "f.bin", f);
  const TensorFile g = read_tensor_file(dir / "f.bin");
  EXPECT_EQ(g.metadata, f.metadata);
  ASSERT_EQ(g.records.size(), 2u);
  EXPECT_EQ(g.records[0].shape, (Shape{2, 2}));
  EXPECT_EQ(g.records[0].floats(), v);
  EXPECT_EQ(g.records[1].dtype, DType::u8);
  EXPECT_EQ(g.records[1].payload, b);
  const std::string bytes = test::slurp(dir / "f.bin");
  EXPECT_EQ(bytes.substr(0, 4), "MDIL");
}

}  // namespace
}  // namespace mdil
