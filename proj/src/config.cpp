#include "pace/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pace/errors.hpp"
#include "pace/util.hpp"

namespace pace {

namespace {

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

std::string unquote(const std::string& v, std::size_t line_no) {
  if (v.size() >= 2 && v.front() == '"') {
    const auto close = v.find('"', 1);
    if (close == std::string::npos) throw ParseError("config line " + std::to_string(line_no) + ": unterminated string");
    const auto rest = trim(v.substr(close + 1));
    if (!rest.empty() && rest.front() != '#')
      throw ParseError("config line " + std::to_string(line_no) + ": text after closing quote");
    return v.substr(1, close - 1);
  }
  const auto hash = v.find('#');
  return trim(hash == std::string::npos ? v : v.substr(0, hash));
}

}  // namespace

ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::string section;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) throw ParseError("config line " + std::to_string(line_no) + ": bad section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ParseError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
    out[section.empty() ? key : section + "." + key] = unquote(trim(line.substr(eq + 1)), line_no);
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::optional<std::string> Settings::lookup(const std::optional<std::string>& flag, const char* env,
                                            const std::string& key) const {
  if (flag) return flag;
  if (env) {
    if (const char* v = std::getenv(env); v && *v) return std::string(v);
  }
  if (auto it = file_.find(key); it != file_.end()) return it->second;
  return std::nullopt;
}

std::string Settings::get(const std::optional<std::string>& flag, const char* env, const std::string& key,
                          const std::string& fallback) const {
  return lookup(flag, env, key).value_or(fallback);
}

long long Settings::get_int(const std::optional<std::string>& flag, const char* env, const std::string& key,
                            long long fallback) const {
  const auto v = lookup(flag, env, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long n = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return n;
  } catch (const std::exception&) {
    throw std::invalid_argument("setting " + key + " must be an integer, got '" + *v + "'");
  }
}

}  // namespace pace
