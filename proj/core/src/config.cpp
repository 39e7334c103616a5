// SPDX-License-Identifier: Apache-2.0
#include "hflab/config.hpp"

#include <fstream>
#include <sstream>

#include "hflab/error.hpp"
#include "kv.hpp"

namespace hflab::config {

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = kv::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') raise(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": unterminated section");
      section = kv::trim(std::string_view(t).substr(1, t.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      raise(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = kv::trim(std::string_view(t).substr(0, eq));
    if (key.empty()) raise(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": empty key");
    cfg.sections_[section][key] = kv::trim(std::string_view(t).substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> ConfigFile::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void ConfigFile::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

}  // namespace hflab::config
