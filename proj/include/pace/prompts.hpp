#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace pace {

struct PromptTemplate {
  std::string id;
  std::string version;
  std::string body;
  // Derived from the `{{slot}}` markers in body; always equal to that set.
  std::set<std::string> required_slots;
};

struct TemplateInfo {
  std::string id;
  std::string version;
  std::set<std::string> required_slots;
};

using Bindings = std::map<std::string, std::string>;

// Slot names referenced by `{{name}}` markers. Names are [A-Za-z0-9_].
std::set<std::string> scan_slots(const std::string& body);

// Templates keyed by id. Loaded once, then read-only: concurrent render() calls
// are safe.
class PromptLibrary {
 public:
  PromptLibrary() = default;

  // One file per template: filename is the id (a trailing ".txt" is
  // ignored), first line `version: <v>`, remainder is the body.
  static PromptLibrary load_directory(const std::filesystem::path& dir);

  // Directory from $PACE_TEMPLATES, falling back to the templates shipped with
  // the source tree.
  static PromptLibrary load_default();
  static std::filesystem::path default_directory();

  static PromptTemplate parse_file(const std::string& id, const std::string& content);

  void add(PromptTemplate t);
  bool contains(const std::string& id) const { return templates_.count(id) != 0; }
  const PromptTemplate& get(const std::string& id) const;

  // Substitutes every slot. Throws UnknownTemplate, MissingBinding, and (when
  // strict) ExtraBinding for bindings the template does not use.
  std::string render(const std::string& id, const Bindings& bindings, bool strict = true) const;

  std::vector<TemplateInfo> list_templates() const;
  // id -> version, recorded as transcript provenance.
  std::map<std::string, std::string> versions() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

namespace template_ids {
inline constexpr const char* style_simulation = "style_simulation";
inline constexpr const char* style_format_reminder = "style_format_reminder";
inline constexpr const char* strategy_conceptualization = "strategy_conceptualization";
inline constexpr const char* socratic_teacher_system = "socratic_teacher_system";
inline constexpr const char* teacher_opening = "teacher_opening";
inline constexpr const char* student_system = "student_system";
inline constexpr const char* judge_pairwise = "judge_pairwise";
inline constexpr const char* resolution_judge = "resolution_judge";
inline constexpr const char* judge_format_reminder = "judge_format_reminder";
inline constexpr const char* training_instruction = "training_instruction";
}  // namespace template_ids

}  // namespace pace
