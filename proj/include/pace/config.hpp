#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace pace {

// TOML-style key/value file: `key = value` lines, `#` comments, optional
// double-quoted values, and `[section]` headers that prefix later keys as
// "section.key". Throws ParseError with the line number on bad syntax.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(std::string_view text);
ConfigMap load_config(const std::filesystem::path& path);

// Resolution order: explicit flag, then environment variable, then config
// file, then the built-in default.
class Settings {
 public:
  Settings() = default;
  explicit Settings(ConfigMap file) : file_(std::move(file)) {}

  std::optional<std::string> lookup(const std::optional<std::string>& flag, const char* env,
                                    const std::string& key) const;
  std::string get(const std::optional<std::string>& flag, const char* env, const std::string& key,
                  const std::string& fallback) const;
  long long get_int(const std::optional<std::string>& flag, const char* env, const std::string& key,
                    long long fallback) const;

  const ConfigMap& file() const { return file_; }

 private:
  ConfigMap file_;
};

}  // namespace pace
