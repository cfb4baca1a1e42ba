#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdil/model.hpp"
#include "mdil/synth.hpp"

namespace mdil {

/// C x C pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * classes_ + pred); }
  std::uint64_t counted() const;
  std::uint64_t ignored() const { return ignored_; }
  std::uint64_t evaluated() const { return counted() + ignored_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1);
  void add_ignored(std::uint64_t n) { ignored_ += n; }
  void merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

/// Adds one prediction map. Pixels whose truth is ignore_index are counted
/// as ignored; any other label or prediction outside [0, C) is an error.
void accumulate_confusion(ConfusionMatrix& cm, std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> truth,
                          std::uint8_t ignore_index = kIgnoreLabel);

struct IouResult {
  std::vector<std::optional<double>> per_class;  // empty when the class has zero union
  double miou = 0;                               // fraction in [0, 1]
};

/// Classes absent from both truth and prediction are left out of the mean.
IouResult miou(const ConfusionMatrix& cm);

/// Average relative mIoU drop in percent over tasks; positive means worse
/// than the baseline.
double delta_m(std::span<const double> model, std::span<const double> baseline);

/// Signed change of one domain's mIoU: after - before.
inline double forgetting_delta(double before, double after) { return after - before; }

/// "(-0.00)" style, the sign of zero printed as a drop.
std::string format_delta(double delta);

/// Validation confusion matrix of domain t over a whole dataset.
ConfusionMatrix evaluate(Model& model, const Dataset& ds, int t, std::size_t batch_size = 25);

struct DomainScore {
  std::string domain;
  double miou = 0;                 // percent
  std::optional<double> delta;     // vs reference, percentage points
};

/// One method's final-step results over the sequence.
struct MethodRow {
  std::string method;
  int step = 0;
  std::vector<DomainScore> scores;
  std::optional<double> delta_m;  // percent
};

struct Report {
  std::vector<std::string> echo;  // "key = value" lines of the producing config
  std::vector<MethodRow> rows;
};

/// Fills delta and delta_m of every row from a reference row (by domain name).
void apply_reference(Report& report, const MethodRow& reference);

std::string render_table(const Report& report);
/// Stable schema `method,step,domain,miou,delta,delta_m`, preceded by "# "
/// config echo lines. Empty cells for missing references.
std::string render_csv(const Report& report);
Report parse_csv(const std::string& text);

/// Writes the last encoder stage features of one image plus its labels in
/// the checkpoint tensor-record format (records "features" and "labels").
void export_latents(Model& model, const Sample& sample, int height, int width, int t,
                    const std::filesystem::path& path);

}  // namespace mdil
