#include "pace/prompts.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pace/errors.hpp"
#include "pace/util.hpp"

#ifndef PACE_SOURCE_TEMPLATE_DIR
#define PACE_SOURCE_TEMPLATE_DIR "templates"
#endif

namespace pace {

namespace {

bool slot_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_slot(begin, end, name) for each well-formed {{name}} marker.
template <typename F>
void for_each_slot(const std::string& body, F&& on_slot) {
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string::npos) {
    std::size_t i = pos + 2;
    while (i < body.size() && slot_char(body[i])) ++i;
    if (i > pos + 2 && body.compare(i, 2, "}}") == 0) {
      on_slot(pos, i + 2, body.substr(pos + 2, i - pos - 2));
      pos = i + 2;
    } else {
      pos += 2;
    }
  }
}

}  // namespace

std::set<std::string> scan_slots(const std::string& body) {
  std::set<std::string> out;
  for_each_slot(body, [&](std::size_t, std::size_t, std::string name) { out.insert(std::move(name)); });
  return out;
}

PromptTemplate PromptLibrary::parse_file(const std::string& id, const std::string& content) {
  const auto nl = content.find('\n');
  const std::string header = trim(content.substr(0, nl));
  constexpr std::string_view kPrefix = "version:";
  if (header.compare(0, kPrefix.size(), kPrefix) != 0)
    throw ParseError("template '" + id + "': first line must be 'version: <v>'");
  PromptTemplate t;
  t.id = id;
  t.version = trim(header.substr(kPrefix.size()));
  if (t.version.empty()) throw ParseError("template '" + id + "': empty version");
  t.body = nl == std::string::npos ? std::string() : content.substr(nl + 1);
  while (!t.body.empty() && (t.body.back() == '\n' || t.body.back() == '\r')) t.body.pop_back();
  t.required_slots = scan_slots(t.body);
  return t;
}

PromptLibrary PromptLibrary::load_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("template directory not found: " + dir.string());
  PromptLibrary lib;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string id = entry.path().filename().string();
    if (id.empty() || id.front() == '.') continue;
    if (entry.path().extension() == ".txt") id = entry.path().stem().string();
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in) throw IoError("cannot read template: " + entry.path().string());
    std::stringstream buf;
    buf << in.rdbuf();
    lib.add(parse_file(id, buf.str()));
  }
  return lib;
}

std::filesystem::path PromptLibrary::default_directory() {
  if (const char* env = std::getenv("PACE_TEMPLATES"); env && *env) return env;
  return PACE_SOURCE_TEMPLATE_DIR;
}

PromptLibrary PromptLibrary::load_default() { return load_directory(default_directory()); }

void PromptLibrary::add(PromptTemplate t) {
  t.required_slots = scan_slots(t.body);
  const std::string id = t.id;
  templates_[id] = std::move(t);
}

const PromptTemplate& PromptLibrary::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw UnknownTemplate(id);
  return it->second;
}

std::string PromptLibrary::render(const std::string& id, const Bindings& bindings, bool strict) const {
  const auto& t = get(id);
  for (const auto& slot : t.required_slots)
    if (!bindings.count(slot)) throw MissingBinding(slot);
  if (strict)
    for (const auto& [name, _] : bindings)
      if (!t.required_slots.count(name)) throw ExtraBinding(name);

  std::string out;
  out.reserve(t.body.size());
  std::size_t last = 0;
  for_each_slot(t.body, [&](std::size_t b, std::size_t e, const std::string& name) {
    out.append(t.body, last, b - last);
    out += bindings.at(name);
    last = e;
  });
  out.append(t.body, last, std::string::npos);
  return out;
}

std::vector<TemplateInfo> PromptLibrary::list_templates() const {
  std::vector<TemplateInfo> out;
  out.reserve(templates_.size());
  for (const auto& [id, t] : templates_) out.push_back({id, t.version, t.required_slots});
  return out;
}

std::map<std::string, std::string> PromptLibrary::versions() const {
  std::map<std::string, std::string> out;
  for (const auto& [id, t] : templates_) out[id] = t.version;
  return out;
}

}  // namespace pace
