#include "mdil/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace mdil {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written by memcpy of little-endian values");

namespace {

constexpr char kMagic[4] = {'M', 'D', 'I', 'L'};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw DataError("unknown dtype code " + std::to_string(static_cast<int>(d)));
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> buf) : buf_(std::move(buf)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    auto b = bytes(n);
    return {b.begin(), b.end()};
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError("tensor file is truncated");
  }
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::string join(const std::vector<std::int64_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

TensorRecord TensorRecord::from_floats(std::string name, const Shape& shape,
                                       std::span<const float> v) {
  TensorRecord r{std::move(name), DType::f32, shape, {}};
  r.payload.resize(v.size() * sizeof(float));
  std::memcpy(r.payload.data(), v.data(), r.payload.size());
  return r;
}

TensorRecord TensorRecord::from_bytes(std::string name, const Shape& shape,
                                      std::span<const std::uint8_t> v) {
  return {std::move(name), DType::u8, shape, {v.begin(), v.end()}};
}

std::vector<float> TensorRecord::floats() const {
  if (dtype != DType::f32) throw DataError("tensor '" + name + "' is not float32");
  std::vector<float> out(payload.size() / sizeof(float));
  std::memcpy(out.data(), payload.data(), out.size() * sizeof(float));
  return out;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put(kTensorFileVersion);
  w.str(file.metadata);
  w.put(static_cast<std::uint32_t>(file.records.size()));
  for (const auto& r : file.records) {
    const auto expected = static_cast<std::size_t>(shape_numel(r.shape)) * dtype_size(r.dtype);
    if (r.payload.size() != expected) throw Error("tensor record '" + r.name + "' has wrong payload size");
    w.str(r.name);
    w.put(static_cast<std::uint8_t>(r.dtype));
    w.put(static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) w.put(static_cast<std::uint64_t>(e));
    w.bytes(r.payload.data(), r.payload.size());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf));
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DataError("'" + path.string() + "' is not an MDIL file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kTensorFileVersion) {
    throw DataError("'" + path.string() + "' has format version " + std::to_string(version) +
                    ", expected " + std::to_string(kTensorFileVersion));
  }
  TensorFile file;
  file.metadata = r.str();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    rec.name = r.str();
    rec.dtype = static_cast<DType>(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DataError("tensor '" + rec.name + "' has implausible rank");
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto e = r.get<std::uint64_t>();
      if (e == 0 || e > (1ULL << 40)) throw DataError("tensor '" + rec.name + "' has bad extent");
      rec.shape.push_back(static_cast<std::int64_t>(e));
    }
    rec.payload = r.bytes(static_cast<std::size_t>(shape_numel(rec.shape)) * dtype_size(rec.dtype));
    file.records.push_back(std::move(rec));
  }
  if (!r.done()) throw DataError("'" + path.string() + "' has trailing bytes");
  return file;
}

std::string model_metadata(const Model& model) {
  const auto& c = model.config();
  std::ostringstream os;
  os << "kind checkpoint\n";
  os << "in_channels " << c.encoder.in_channels << "\n";
  os << "widths " << join(c.encoder.widths) << "\n";
  os << "units_per_stage " << c.encoder.units_per_stage << "\n";
  os << "decoder_widths " << join(c.decoder_widths) << "\n";
  os << "tconv_kernel " << c.tconv_kernel << "\n";
  os << "adapters " << c.adapters << "\n";
  os << "domain_bn " << c.domain_bn << "\n";
  os << "single_head " << c.single_head << "\n";
  os << "bn_momentum " << fmt_double(c.bn.momentum) << "\n";
  os << "bn_eps " << fmt_double(c.bn.eps) << "\n";
  os << "adapter_init_std " << fmt_double(c.adapter_init_std) << "\n";
  for (const auto& d : model.domains()) {
    os << "domain " << d.name;
    for (const auto& n : d.labels.names()) os << ' ' << n;
    os << "\n";
  }
  for (const auto& f : model.frozen()) os << "frozen " << f << "\n";
  return os.str();
}

namespace {

Model model_from_metadata(const std::string& meta) {
  ModelConfig cfg;
  std::vector<DomainSpec> domains;
  std::vector<std::string> frozen;
  std::istringstream is(meta);
  std::string line;
  auto ints = [](std::istringstream& ls) {
    std::vector<std::int64_t> v;
    std::int64_t x;
    while (ls >> x) v.push_back(x);
    return v;
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") {
      std::string kind;
      ls >> kind;
      if (kind != "checkpoint") throw DataError("tensor file is a '" + kind + "', not a checkpoint");
    } else if (key == "in_channels") {
      ls >> cfg.encoder.in_channels;
    } else if (key == "widths") {
      cfg.encoder.widths = ints(ls);
    } else if (key == "units_per_stage") {
      ls >> cfg.encoder.units_per_stage;
    } else if (key == "decoder_widths") {
      cfg.decoder_widths = ints(ls);
    } else if (key == "tconv_kernel") {
      ls >> cfg.tconv_kernel;
    } else if (key == "adapters") {
      ls >> cfg.adapters;
    } else if (key == "domain_bn") {
      ls >> cfg.domain_bn;
    } else if (key == "single_head") {
      ls >> cfg.single_head;
    } else if (key == "bn_momentum") {
      ls >> cfg.bn.momentum;
    } else if (key == "bn_eps") {
      ls >> cfg.bn.eps;
    } else if (key == "adapter_init_std") {
      ls >> cfg.adapter_init_std;
    } else if (key == "domain") {
      DomainSpec d;
      ls >> d.name;
      std::vector<std::string> names;
      std::string n;
      while (ls >> n) names.push_back(n);
      d.labels = LabelSpace(std::move(names));
      domains.push_back(std::move(d));
    } else if (key == "frozen") {
      std::string n;
      ls >> n;
      frozen.push_back(n);
    } else {
      throw DataError("unknown checkpoint metadata key '" + key + "'");
    }
    if (ls.fail() && !ls.eof()) throw DataError("malformed checkpoint metadata line: " + line);
  }
  try {
    Rng rng(0);
    Model m(cfg, rng);
    for (const auto& d : domains) m.add_domain(d, InitMode::random, rng);
    for (const auto& f : frozen) m.set_frozen(f, true);
    return m;
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint metadata describes an invalid model: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  TensorFile file;
  file.metadata = model_metadata(model);
  for (const auto& nt : model.state()) {
    file.records.push_back(TensorRecord::from_floats(nt.name, nt.tensor.shape(), nt.tensor.data()));
  }
  write_tensor_file(path, file);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  Model model = model_from_metadata(file.metadata);
  std::map<std::string, Tensor> slots;
  for (auto& nt : model.state()) slots.emplace(nt.name, nt.tensor);
  std::set<std::string> restored;
  for (const auto& rec : file.records) {
    auto it = slots.find(rec.name);
    if (it == slots.end()) throw DataError("checkpoint has unknown tensor '" + rec.name + "'");
    if (rec.shape != it->second.shape()) {
      throw DataError("checkpoint tensor '" + rec.name + "' has shape " + shape_str(rec.shape) +
                      ", model expects " + shape_str(it->second.shape()));
    }
    const auto v = rec.floats();
    std::copy(v.begin(), v.end(), it->second.data().begin());
    restored.insert(rec.name);
  }
  for (const auto& [name, t] : slots) {
    if (!restored.count(name)) throw DataError("checkpoint is missing tensor '" + name + "'");
  }
  return model;
}

}  // namespace mdil
