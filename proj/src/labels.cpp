#include "mdil/labels.hpp"

#include <algorithm>
#include <set>

#include "mdil/error.hpp"

namespace mdil {

bool is_plain_token(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() > 254) throw Error("label space has more than 254 classes");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (!is_plain_token(n)) throw Error("invalid class name '" + n + "'");
    if (!seen.insert(n).second) throw Error("duplicate class name '" + n + "'");
  }
}

std::optional<std::uint8_t> LabelSpace::id_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::uint8_t>(it - names_.begin());
}

const std::vector<std::uint8_t>& UnionLabelSpace::add(const std::string& domain,
                                                      const LabelSpace& local) {
  if (has_domain(domain)) throw Error("domain '" + domain + "' already in union label space");
  auto names = global_.names();
  std::vector<std::uint8_t> table;
  for (const auto& n : local.names()) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) {
      names.push_back(n);
      it = names.end() - 1;
    }
    table.push_back(static_cast<std::uint8_t>(it - names.begin()));
  }
  global_ = LabelSpace(std::move(names));
  domain_names_.push_back(domain);
  tables_.push_back(std::move(table));
  return tables_.back();
}

bool UnionLabelSpace::has_domain(const std::string& domain) const {
  return std::find(domain_names_.begin(), domain_names_.end(), domain) != domain_names_.end();
}

const std::vector<std::uint8_t>& UnionLabelSpace::table(const std::string& domain) const {
  auto it = std::find(domain_names_.begin(), domain_names_.end(), domain);
  if (it == domain_names_.end()) throw Error("domain '" + domain + "' not in union label space");
  return tables_[static_cast<std::size_t>(it - domain_names_.begin())];
}

}  // namespace mdil
