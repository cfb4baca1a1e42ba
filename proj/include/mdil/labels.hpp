#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mdil {

/// Ordered class names of one domain; a class id is its position.
/// The reserved id 255 marks ignored pixels, so at most 254 classes.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::optional<std::uint8_t> id_of(const std::string& name) const;
  bool contains(const std::string& name) const { return id_of(name).has_value(); }

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> names_;
};

/// Names used in checkpoints and config files must be plain tokens.
bool is_plain_token(const std::string& s);

/// Identity of one incremental-learning domain.
struct DomainSpec {
  std::string name;
  LabelSpace labels;
  std::string location;  // dataset root, informational
};

/// Global class registry for single-head training: classes are appended in
/// first-seen order and each domain gets a local -> global table.
class UnionLabelSpace {
 public:
  /// Registers a domain's label space; returns its local -> global table.
  const std::vector<std::uint8_t>& add(const std::string& domain, const LabelSpace& local);

  const LabelSpace& global() const { return global_; }
  std::size_t size() const { return global_.size(); }
  const std::vector<std::uint8_t>& table(const std::string& domain) const;
  bool has_domain(const std::string& domain) const;
  const std::vector<std::string>& domains() const { return domain_names_; }

 private:
  LabelSpace global_;
  std::vector<std::string> domain_names_;
  std::vector<std::vector<std::uint8_t>> tables_;
};

}  // namespace mdil
