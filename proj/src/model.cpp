#include "mdil/model.hpp"

#include <cmath>

namespace mdil {

namespace {

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
  return Tensor::from(shape, std::move(v));
}

// He (fan-in) initialisation for a conv weight [out, in, k, k].
Tensor he_conv(std::int64_t out, std::int64_t in, std::int64_t k, Rng& rng) {
  return normal_tensor({out, in, k, k}, std::sqrt(2.0 / static_cast<double>(in * k * k)), rng);
}

// Each stride-2 transposed-conv output pixel receives in * (k/2)^2 terms.
Tensor he_tconv(std::int64_t in, std::int64_t out, std::int64_t k, Rng& rng) {
  const double fan = static_cast<double>(in * k * k) / 4.0;
  return normal_tensor({in, out, k, k}, std::sqrt(2.0 / fan), rng);
}

std::string idx(const char* tag, std::size_t i) { return tag + std::to_string(i + 1); }

void push_bn(const std::string& prefix, const BatchNorm& bn, GroupKind kind, int domain,
             std::vector<ParamRef>& out) {
  out.push_back({prefix + ".scale", bn.scale, kind, domain});
  out.push_back({prefix + ".shift", bn.shift, kind, domain});
}

void push_bn_stats(const std::string& prefix, const BatchNorm& bn, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".running_mean", bn.stats.mean});
  out.push_back({prefix + ".running_var", bn.stats.var});
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder.in_channels <= 0) throw Error("model: input channels must be positive");
  if (encoder.widths.empty()) throw Error("model: need at least one encoder stage");
  if (encoder.units_per_stage < 0) throw Error("model: negative units per stage");
  std::int64_t prev = 0;
  for (auto w : encoder.widths) {
    if (w <= 0 || w < prev) throw Error("model: stage widths must be positive and nondecreasing");
    prev = w;
  }
  if (decoder_widths.size() != encoder.widths.size()) {
    throw Error("model: need one decoder width per encoder stage");
  }
  for (auto w : decoder_widths) {
    if (w <= 0) throw Error("model: decoder widths must be positive");
  }
  if (tconv_kernel != 2 && tconv_kernel != 4) throw Error("model: tconv kernel must be 2 or 4");
  if (adapters && !domain_bn) throw Error("model: adapters require domain-specific BN");
  if (!(bn.eps > 0) || bn.momentum < 0 || bn.momentum > 1) throw Error("model: invalid BN options");
}

// ---------------------------------------------------------------------------
// DauUnit

DauUnit::DauUnit(std::int64_t channels, Rng& rng)
    : w1(he_conv(channels, channels, 3, rng)), w2(he_conv(channels, channels, 3, rng)) {}

void DauUnit::add_slot(bool with_adapters, double adapter_std, Rng& rng, const Slot* copy_from) {
  const std::int64_t c = channels();
  if (copy_from) {
    slots.push_back({copy_from->aw1.defined() ? copy_from->aw1.clone() : Tensor{},
                     copy_from->aw2.defined() ? copy_from->aw2.clone() : Tensor{},
                     copy_from->bn1.clone(), copy_from->bn2.clone()});
    return;
  }
  Slot s{Tensor{}, Tensor{}, BatchNorm::fresh(c), BatchNorm::fresh(c)};
  if (with_adapters) {
    s.aw1 = normal_tensor({c, c, 1, 1}, adapter_std, rng);
    s.aw2 = normal_tensor({c, c, 1, 1}, adapter_std, rng);
  }
  slots.push_back(std::move(s));
}

Tensor DauUnit::forward(const Tensor& x, std::size_t slot, BnMode mode, const BnOptions& opts) {
  auto& s = slots.at(slot);
  const DauPath<float> path{w1, w2, s.aw1, s.aw2, &s.bn1, &s.bn2};
  return dau_residual(x, path, mode, opts);
}

void DauUnit::collect(const std::string& prefix, bool shared_slots,
                      std::vector<ParamRef>& out) const {
  out.push_back({prefix + ".w1", w1, GroupKind::shared, 0});
  out.push_back({prefix + ".w2", w2, GroupKind::shared, 0});
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    const GroupKind kind = shared_slots ? GroupKind::shared : GroupKind::domain;
    const int dom = shared_slots ? 0 : static_cast<int>(i + 1);
    const std::string p = shared_slots ? prefix : prefix + "." + idx("dom", i);
    if (s.aw1.defined()) out.push_back({p + ".aw1", s.aw1, kind, dom});
    if (s.aw2.defined()) out.push_back({p + ".aw2", s.aw2, kind, dom});
    push_bn(p + ".bn1", s.bn1, kind, dom, out);
    push_bn(p + ".bn2", s.bn2, kind, dom, out);
  }
}

void DauUnit::collect_buffers(const std::string& prefix, bool shared_slots,
                              std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const std::string p = shared_slots ? prefix : prefix + "." + idx("dom", i);
    push_bn_stats(p + ".bn1", slots[i].bn1, out);
    push_bn_stats(p + ".bn2", slots[i].bn2, out);
  }
}

DauUnit DauUnit::clone() const {
  DauUnit u;
  u.w1 = w1.clone();
  u.w2 = w2.clone();
  Rng unused(0);
  for (const auto& s : slots) u.add_slot(false, 0.0, unused, &s);
  return u;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::int64_t in = cfg_.encoder.in_channels;
  for (auto width : cfg_.encoder.widths) {
    down_.push_back({he_conv(width, in, 3, rng), {}});
    std::vector<DauUnit> units;
    for (int u = 0; u < cfg_.encoder.units_per_stage; ++u) units.emplace_back(width, rng);
    stages_.push_back(std::move(units));
    in = width;
  }
  sync_trainability();
}

Model Model::clone() const {
  Model m;
  m.cfg_ = cfg_;
  for (const auto& d : down_) {
    Downsampler c{d.w.clone(), {}};
    for (const auto& bn : d.bn) c.bn.push_back(bn.clone());
    m.down_.push_back(std::move(c));
  }
  for (const auto& stage : stages_) {
    std::vector<DauUnit> units;
    for (const auto& u : stage) units.push_back(u.clone());
    m.stages_.push_back(std::move(units));
  }
  for (const auto& h : heads_) {
    DecoderHead c;
    for (const auto& up : h.ups) c.ups.push_back({up.w.clone(), up.bn.clone()});
    c.classifier = h.classifier.clone();
    m.heads_.push_back(std::move(c));
  }
  m.domains_ = domains_;
  m.union_ = union_;
  m.frozen_ = frozen_;
  m.sync_trainability();
  return m;
}

const DomainSpec& Model::domain(int t) const {
  check_domain(t);
  return domains_[static_cast<std::size_t>(t - 1)];
}

int Model::domain_index(const std::string& name) const {
  for (std::size_t i = 0; i < domains_.size(); ++i) {
    if (domains_[i].name == name) return static_cast<int>(i + 1);
  }
  throw Error("unknown domain '" + name + "'");
}

bool Model::has_domain(const std::string& name) const {
  for (const auto& d : domains_) {
    if (d.name == name) return true;
  }
  return false;
}

void Model::check_domain(int t) const {
  if (t < 1 || t > num_domains()) {
    throw Error("domain " + std::to_string(t) + " is not registered (model has " +
                std::to_string(num_domains()) + ")");
  }
}

std::size_t Model::slot_of(int t) const {
  return cfg_.domain_bn ? static_cast<std::size_t>(t - 1) : 0;
}

DecoderHead& Model::head_of(int t) {
  return heads_.at(cfg_.single_head ? 0 : static_cast<std::size_t>(t - 1));
}

DecoderHead Model::make_head(std::int64_t classes, Rng& rng) const {
  DecoderHead h;
  std::int64_t in = cfg_.encoder.widths.back();
  for (auto out : cfg_.decoder_widths) {
    h.ups.push_back({he_tconv(in, out, cfg_.tconv_kernel, rng), BatchNorm::fresh(out)});
    in = out;
  }
  h.classifier = he_conv(classes, in, 1, rng);
  return h;
}

void Model::add_domain(const DomainSpec& spec, InitMode init, Rng& rng) {
  if (has_domain(spec.name)) throw Error("domain '" + spec.name + "' is already registered");
  if (spec.labels.empty()) throw Error("domain '" + spec.name + "' has an empty label space");
  if (!is_plain_token(spec.name)) throw Error("invalid domain name '" + spec.name + "'");

  const bool copy = init == InitMode::init_wt && !domains_.empty();
  const std::size_t prev = domains_.empty() ? 0 : domains_.size() - 1;

  if (cfg_.domain_bn || domains_.empty()) {
    for (auto& d : down_) {
      const auto width = d.w.dim(0);
      d.bn.push_back(copy && cfg_.domain_bn ? d.bn[prev].clone() : BatchNorm::fresh(width));
    }
    for (auto& stage : stages_) {
      for (auto& unit : stage) {
        const DauUnit::Slot* src = copy && cfg_.domain_bn ? &unit.slots[prev] : nullptr;
        unit.add_slot(cfg_.adapters, cfg_.adapter_init_std, rng, src);
      }
    }
  }

  if (cfg_.single_head) {
    const std::size_t before = union_.size();
    union_.add(spec.name, spec.labels);
    const auto classes = static_cast<std::int64_t>(union_.size());
    if (heads_.empty()) {
      heads_.push_back(make_head(classes, rng));
    } else if (union_.size() > before) {
      // Grow the shared classifier: old rows kept, new rows drawn fresh.
      auto& cls = heads_[0].classifier;
      const std::int64_t width = cls.dim(1);
      auto extra = he_conv(classes - static_cast<std::int64_t>(before), width, 1, rng);
      std::vector<float> v(cls.vec());
      v.insert(v.end(), extra.vec().begin(), extra.vec().end());
      cls = Tensor::from({classes, width, 1, 1}, std::move(v));
    }
  } else if (copy) {
    DecoderHead h;
    for (const auto& up : heads_[prev].ups) h.ups.push_back({up.w.clone(), up.bn.clone()});
    h.classifier = he_conv(static_cast<std::int64_t>(spec.labels.size()),
                           heads_[prev].classifier.dim(1), 1, rng);
    heads_.push_back(std::move(h));
  } else {
    heads_.push_back(make_head(static_cast<std::int64_t>(spec.labels.size()), rng));
  }

  domains_.push_back(spec);
  sync_trainability();
}

ForwardOutput Model::forward_full(const Tensor& x, int t, BnMode encoder_mode, BnMode head_mode) {
  check_domain(t);
  if (x.rank() != 4 || x.dim(1) != cfg_.encoder.in_channels) {
    throw Error("model input must be [N, " + std::to_string(cfg_.encoder.in_channels) +
                ", H, W], got " + shape_str(x.shape()));
  }
  const std::size_t slot = slot_of(t);
  Tensor h = x;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    h = relu(down_[s].bn[slot](conv2d(h, down_[s].w, 2, 1), encoder_mode, cfg_.bn));
    for (auto& unit : stages_[s]) h = unit.forward(h, slot, encoder_mode, cfg_.bn);
  }
  ForwardOutput out;
  out.features = h;
  auto& head = head_of(t);
  // The last block feeds the classifier directly. A ReLU there can switch off
  // every channel on small objects, and those pixels then never recover.
  for (std::size_t k = 0; k < head.ups.size(); ++k) {
    h = head.ups[k].bn(transposed_conv2d(h, head.ups[k].w), head_mode, cfg_.bn);
    if (k + 1 < head.ups.size()) h = relu(h);
  }
  out.logits = conv2d(h, head.classifier, 1, 0);
  return out;
}

Tensor Model::forward(const Tensor& x, int t, BnMode mode) {
  return forward_full(x, t, mode, mode).logits;
}

Tensor Model::encode(const Tensor& x, int t, BnMode mode) {
  check_domain(t);
  const std::size_t slot = slot_of(t);
  Tensor h = x;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    h = relu(down_[s].bn[slot](conv2d(h, down_[s].w, 2, 1), mode, cfg_.bn));
    for (auto& unit : stages_[s]) h = unit.forward(h, slot, mode, cfg_.bn);
  }
  return h;
}

std::vector<std::uint8_t> Model::class_channels(int t) const {
  const auto& d = domain(t);
  if (cfg_.single_head) return union_.table(d.name);
  std::vector<std::uint8_t> ident(d.labels.size());
  for (std::size_t i = 0; i < ident.size(); ++i) ident[i] = static_cast<std::uint8_t>(i);
  return ident;
}

std::vector<std::uint8_t> Model::predict(const Tensor& x, int t) {
  NoGradGuard guard;
  const Tensor logits = forward(x, t, BnMode::infer);
  const auto channels = class_channels(t);
  const std::int64_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const auto d = logits.data();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n * hw));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      float bv = d[(b * c + channels[0]) * hw + p];
      for (std::size_t k = 1; k < channels.size(); ++k) {
        const float v = d[(b * c + channels[k]) * hw + p];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      out[static_cast<std::size_t>(b * hw + p)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

std::vector<ParamRef> Model::parameters() const {
  std::vector<ParamRef> out;
  const bool shared_bn = !cfg_.domain_bn;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string sp = "enc." + idx("stage", s);
    out.push_back({sp + ".down.w", down_[s].w, GroupKind::shared, 0});
    for (std::size_t i = 0; i < down_[s].bn.size(); ++i) {
      if (shared_bn) {
        push_bn(sp + ".down.bn", down_[s].bn[i], GroupKind::shared, 0, out);
      } else {
        push_bn(sp + ".down." + idx("dom", i) + ".bn", down_[s].bn[i], GroupKind::domain,
                static_cast<int>(i + 1), out);
      }
    }
    for (std::size_t u = 0; u < stages_[s].size(); ++u) {
      stages_[s][u].collect(sp + "." + idx("unit", u), shared_bn, out);
    }
  }
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const bool shared = cfg_.single_head;
    const std::string hp = shared ? "dec.union" : "dec." + idx("dom", h);
    const GroupKind kind = shared ? GroupKind::shared : GroupKind::decoder;
    const int dom = shared ? 0 : static_cast<int>(h + 1);
    for (std::size_t k = 0; k < heads_[h].ups.size(); ++k) {
      const std::string up = hp + "." + idx("up", k);
      out.push_back({up + ".w", heads_[h].ups[k].w, kind, dom});
      push_bn(up + ".bn", heads_[h].ups[k].bn, kind, dom, out);
    }
    out.push_back({hp + ".cls.w", heads_[h].classifier, kind, dom});
  }
  return out;
}

std::vector<NamedTensor> Model::buffers() const {
  std::vector<NamedTensor> out;
  const bool shared_bn = !cfg_.domain_bn;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string sp = "enc." + idx("stage", s);
    for (std::size_t i = 0; i < down_[s].bn.size(); ++i) {
      push_bn_stats(shared_bn ? sp + ".down.bn" : sp + ".down." + idx("dom", i) + ".bn",
                    down_[s].bn[i], out);
    }
    for (std::size_t u = 0; u < stages_[s].size(); ++u) {
      stages_[s][u].collect_buffers(sp + "." + idx("unit", u), shared_bn, out);
    }
  }
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const std::string hp = cfg_.single_head ? "dec.union" : "dec." + idx("dom", h);
    for (std::size_t k = 0; k < heads_[h].ups.size(); ++k) {
      push_bn_stats(hp + "." + idx("up", k) + ".bn", heads_[h].ups[k].bn, out);
    }
  }
  return out;
}

std::vector<NamedTensor> Model::state() const {
  std::vector<NamedTensor> out;
  for (auto& p : parameters()) out.push_back({p.name, p.tensor});
  for (auto& b : buffers()) out.push_back(std::move(b));
  return out;
}

void Model::set_frozen(const std::string& name, bool frozen) {
  bool found = false;
  for (const auto& p : parameters()) found = found || p.name == name;
  if (!found) throw Error("set_frozen: unknown parameter '" + name + "'");
  if (frozen) {
    frozen_.insert(name);
  } else {
    frozen_.erase(name);
  }
  sync_trainability();
}

void Model::freeze_all() {
  for (const auto& p : parameters()) frozen_.insert(p.name);
  sync_trainability();
}

void Model::sync_trainability() {
  for (auto& p : parameters()) p.tensor.set_requires_grad(frozen_.count(p.name) == 0);
}

Model build_model(const ModelConfig& cfg, const DomainSpec& first_domain, Rng& rng) {
  Model m(cfg, rng);
  m.add_domain(first_domain, InitMode::random, rng);
  return m;
}

std::size_t ParamPartition::size() const {
  std::size_t n = shared.size();
  for (const auto& [t, names] : domain) n += names.size();
  return n;
}

ParamPartition param_partition(const Model& model) {
  ParamPartition part;
  for (const auto& p : model.parameters()) {
    if (p.kind == GroupKind::shared) {
      part.shared.insert(p.name);
    } else {
      part.domain[p.domain].insert(p.name);
    }
  }
  part.frozen = model.frozen();
  return part;
}

std::int64_t parameter_count(const std::vector<ParamRef>& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

double sharing_ratio(const std::vector<ParamRef>& params) {
  std::int64_t shared = 0, total = 0;
  for (const auto& p : params) {
    total += p.tensor.numel();
    if (p.kind == GroupKind::shared) shared += p.tensor.numel();
  }
  if (total == 0) throw Error("sharing_ratio: no parameters");
  return static_cast<double>(shared) / static_cast<double>(total);
}

double sharing_ratio(const Model& model) { return sharing_ratio(model.parameters()); }

// ---------------------------------------------------------------------------
// Snapshot

Snapshot::Snapshot(const Model& model) : model_(model.clone()) { model_.freeze_all(); }

Tensor Snapshot::forward(const Tensor& x, int t) const {
  NoGradGuard guard;
  return model_.forward(x, t, BnMode::infer);
}

Tensor Snapshot::encode(const Tensor& x, int t) const {
  NoGradGuard guard;
  return model_.encode(x, t, BnMode::infer);
}

}  // namespace mdil
