#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "mdil/model.hpp"
#include "mdil/synth.hpp"
#include "mdil/trainer.hpp"

namespace mdil::test {

inline bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && bitwise_equal(a.data(), b.data());
}

/// name -> copy of the values, for before/after comparisons.
inline std::map<std::string, std::vector<float>> capture(const std::vector<NamedTensor>& state) {
  std::map<std::string, std::vector<float>> out;
  for (const auto& nt : state) out[nt.name].assign(nt.tensor.data().begin(), nt.tensor.data().end());
  return out;
}

inline ModelConfig tiny_model(bool dau = true) {
  ModelConfig m = dau ? ModelConfig::dau() : ModelConfig::plain();
  m.encoder.widths = {4, 8};
  m.encoder.units_per_stage = 1;
  m.decoder_widths = {4, 4};
  return m;
}

inline Tensor random_input(std::uint64_t seed, std::int64_t n = 2, std::int64_t hw = 16) {
  Rng rng(seed, 7);
  std::vector<float> v(static_cast<std::size_t>(n * 3 * hw * hw));
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Tensor::from({n, 3, hw, hw}, std::move(v));
}

/// Small spec derived from a default domain: 16x16 images, few samples.
inline DomainGenSpec small_spec(std::size_t which, int train = 8, int val = 4, int size = 16) {
  DomainGenSpec s = default_domain_specs()[which];
  s.height = size;
  s.width = size;
  s.train_count = train;
  s.val_count = val;
  s.shapes_min = 1;
  s.shapes_max = 2;
  s.radius_min = 0.25;
  s.radius_max = 0.4;
  return s;
}

inline DomainData small_domain(std::size_t which, int train = 8, int val = 4, int size = 16) {
  const DomainGenSpec s = small_spec(which, train, val, size);
  return in_memory_domain(generate_domain(s, Split::train), generate_domain(s, Split::val));
}

inline TrainConfig quick_train(int epochs = 1) {
  TrainConfig c;
  c.epochs = epochs;
  c.first_epochs = epochs;
  c.batch_size = 4;
  c.first_batch_size = 4;
  c.seed = 5;
  return c;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("mdil_test_" + tag);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace mdil::test
