#include "pacg/params.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pacg/text.hpp"

namespace pacg {

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  auto [it, inserted] = items_.emplace(name, std::move(t));
  if (!inserted) throw std::invalid_argument("parameter registered twice: " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

long long ParameterSet::scalar_count() const {
  long long total = 0;
  for (const auto& [name, t] : items_) total += t.numel();
  return total;
}

void ParameterSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << "pacg-ckpt v1\n";
  for (const auto& [name, t] : items_) {
    const Shape& s = t.shape();
    out << name << ' ' << s.n << ' ' << s.c << ' ' << s.h << ' ' << s.w << '\n';
    const auto& v = t.values();
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) out << ' ';
      out << fmt_double(v[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void ParameterSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "pacg-ckpt v1")
    throw std::runtime_error("bad checkpoint header: '" + header + "'");

  std::set<std::string> loaded;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream hs{line};
    std::string name;
    Shape s;
    if (!(hs >> name >> s.n >> s.c >> s.h >> s.w))
      throw std::runtime_error("malformed checkpoint record: '" + line + "'");
    auto it = items_.find(name);
    if (it == items_.end())
      throw std::runtime_error("checkpoint has unknown parameter: " + name);
    if (it->second.shape() != s)
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": file has " +
                               s.str() + ", model has " + it->second.shape().str());
    std::string values_line;
    if (!std::getline(in, values_line))
      throw std::runtime_error("checkpoint truncated at " + name);
    auto& dst = it->second.mutable_values();
    std::istringstream vs{values_line};
    std::string tok;
    size_t i = 0;
    while (vs >> tok) {
      if (i >= dst.size())
        throw std::runtime_error("checkpoint has too many values for " + name);
      dst[i++] = parse_double(tok);
    }
    if (i != dst.size())
      throw std::runtime_error("checkpoint has too few values for " + name);
    loaded.insert(name);
  }
  if (loaded.size() != items_.size()) {
    for (const auto& [name, t] : items_)
      if (!loaded.count(name))
        throw std::runtime_error("checkpoint missing parameter: " + name);
  }
}

}  // namespace pacg
