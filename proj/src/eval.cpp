#include "mdil/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mdil/checkpoint.hpp"
#include "mdil/error.hpp"

namespace mdil {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw Error("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::counted() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t n) {
  if (truth >= classes_ || pred >= classes_) {
    throw Error("confusion entry (" + std::to_string(truth) + ", " + std::to_string(pred) +
                ") outside " + std::to_string(classes_) + " classes");
  }
  counts_[truth * classes_ + pred] += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw Error("cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

void accumulate_confusion(ConfusionMatrix& cm, std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> truth, std::uint8_t ignore_index) {
  if (pred.size() != truth.size()) {
    throw Error("prediction has " + std::to_string(pred.size()) + " pixels, truth has " +
                std::to_string(truth.size()));
  }
  const std::size_t c = cm.classes();
  // Validate first so a bad map leaves the matrix untouched.
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_index) continue;
    if (truth[i] >= c) throw Error("label " + std::to_string(truth[i]) + " out of range");
    if (pred[i] >= c) throw Error("prediction " + std::to_string(pred[i]) + " out of range");
  }
  std::uint64_t ignored = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_index) {
      ++ignored;
    } else {
      cm.add(truth[i], pred[i]);
    }
  }
  cm.add_ignored(ignored);
}

IouResult miou(const ConfusionMatrix& cm) {
  const std::size_t c = cm.classes();
  if (c == 0) throw Error("miou of an empty confusion matrix");
  IouResult r;
  r.per_class.resize(c);
  double sum = 0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t inter = cm.at(k, k);
    const std::uint64_t uni = row + col - inter;
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter) / static_cast<double>(uni);
    r.per_class[k] = iou;
    sum += iou;
    ++present;
  }
  if (present == 0) throw Error("miou: every class has zero union");
  r.miou = sum / static_cast<double>(present);
  return r;
}

double delta_m(std::span<const double> model, std::span<const double> baseline) {
  if (model.size() != baseline.size()) throw Error("delta_m: model and baseline task counts differ");
  if (model.empty()) throw Error("delta_m: no tasks");
  double sum = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (baseline[i] == 0) throw Error("delta_m: zero baseline mIoU for task " + std::to_string(i + 1));
    sum += (model[i] - baseline[i]) / baseline[i];
  }
  return -100.0 * sum / static_cast<double>(model.size());
}

std::string format_delta(double delta) {
  char buf[32];
  const double r = std::round(delta * 100.0) / 100.0;
  std::snprintf(buf, sizeof buf, "(%c%.2f)", r > 0 ? '+' : '-', std::fabs(r));
  return buf;
}

ConfusionMatrix evaluate(Model& model, const Dataset& ds, int t, std::size_t batch_size) {
  if (ds.samples.empty()) throw Error("evaluate: empty dataset");
  if (batch_size == 0) throw Error("evaluate: batch size must be positive");
  const auto& spec = model.domain(t);
  if (!(spec.labels == ds.labels)) {
    throw Error("dataset '" + ds.domain + "' label space does not match domain '" + spec.name + "'");
  }
  ConfusionMatrix cm(ds.labels.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.samples.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(ds, idx);
    accumulate_confusion(cm, model.predict(b.images, t), b.labels);
  }
  return cm;
}

void apply_reference(Report& report, const MethodRow& reference) {
  for (auto& row : report.rows) {
    std::vector<double> model, base;
    for (auto& s : row.scores) {
      s.delta.reset();
      for (const auto& r : reference.scores) {
        if (r.domain == s.domain) {
          s.delta = forgetting_delta(r.miou, s.miou);
          model.push_back(s.miou);
          base.push_back(r.miou);
        }
      }
    }
    row.delta_m.reset();
    if (!model.empty() && model.size() == row.scores.size()) row.delta_m = delta_m(model, base);
  }
}

std::string render_table(const Report& report) {
  std::ostringstream out;
  for (const auto& e : report.echo) out << "# " << e << '\n';
  if (report.rows.empty()) return out.str();

  // Columns: method, step, then one per domain in first-seen order, then delta_m.
  std::vector<std::string> domains;
  for (const auto& row : report.rows) {
    for (const auto& s : row.scores) {
      if (std::find(domains.begin(), domains.end(), s.domain) == domains.end()) domains.push_back(s.domain);
    }
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"method", "step"};
  for (const auto& d : domains) header.push_back(d);
  header.push_back("dm%");
  cells.push_back(header);
  for (const auto& row : report.rows) {
    std::vector<std::string> line{row.method, std::to_string(row.step)};
    for (const auto& d : domains) {
      std::string cell = "-";
      for (const auto& s : row.scores) {
        if (s.domain != d) continue;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", s.miou);
        cell = buf;
        if (s.delta) cell += " " + format_delta(*s.delta);
      }
      line.push_back(cell);
    }
    if (row.delta_m) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", std::fabs(*row.delta_m) < 0.005 ? 0.0 : *row.delta_m);
      line.push_back(std::string(buf) + (*row.delta_m < -0.005 ? " (gain)" : ""));
    } else {
      line.push_back("-");
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      if (i) out << "  ";
      out << std::left << std::setw(static_cast<int>(width[i])) << cells[r][i];
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError("report CSV: bad number '" + s + "'");
  }
  if (used != s.size()) throw DataError("report CSV: bad number '" + s + "'");
  return v;
}

constexpr const char* kCsvHeader = "method,step,domain,miou,delta,delta_m";

}  // namespace

std::string render_csv(const Report& report) {
  std::ostringstream out;
  for (const auto& e : report.echo) out << "# " << e << '\n';
  out << kCsvHeader << '\n';
  for (const auto& row : report.rows) {
    for (const auto& s : row.scores) {
      out << row.method << ',' << row.step << ',' << s.domain << ',' << fixed2(s.miou) << ','
          << (s.delta ? fixed2(*s.delta) : "") << ',' << (row.delta_m ? fixed2(*row.delta_m) : "") << '\n';
    }
  }
  return out.str();
}

Report parse_csv(const std::string& text) {
  Report report;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      report.echo.push_back(line.substr(2));
      continue;
    }
    if (!header) {
      if (line != kCsvHeader) throw DataError("report CSV: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw DataError("report CSV: expected 6 fields in '" + line + "'");
    const int step = static_cast<int>(parse_number(f[1]));
    if (report.rows.empty() || report.rows.back().method != f[0] || report.rows.back().step != step) {
      report.rows.push_back({f[0], step, {}, std::nullopt});
    }
    auto& row = report.rows.back();
    DomainScore s{f[2], parse_number(f[3]), std::nullopt};
    if (!f[4].empty()) s.delta = parse_number(f[4]);
    if (!f[5].empty()) row.delta_m = parse_number(f[5]);
    row.scores.push_back(std::move(s));
  }
  if (!header) throw DataError("report CSV: missing header");
  return report;
}

void export_latents(Model& model, const Sample& sample, int height, int width, int t,
                    const std::filesystem::path& path) {
  const auto& spec = model.domain(t);
  Tensor x = Tensor::from({1, 3, height, width}, sample.image);
  Tensor features;
  {
    NoGradGuard guard;
    features = model.encode(x, t, BnMode::infer);
  }
  TensorFile file;
  file.metadata = "kind latents\ndomain " + spec.name + "\n";
  file.records.push_back(TensorRecord::from_floats("features", features.shape(), features.data()));
  file.records.push_back(TensorRecord::from_bytes("labels", {height, width}, sample.labels));
  try {
    write_tensor_file(path, file);
  } catch (const DataError& e) {
    throw Error(std::string("export_latents: ") + e.what());
  }
}

}  // namespace mdil
