#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pace/util.hpp"

namespace pace {

enum class KnowledgeLevel { low, medium, high };

struct PersonaProfile {
  std::string id;
  std::string name;
  std::string gender;
  int age_years = 0;
  std::vector<std::string> interests;
  std::vector<std::string> traits;
  std::vector<std::string> experiences;
  KnowledgeLevel knowledge_level = KnowledgeLevel::medium;

  bool operator==(const PersonaProfile&) const = default;
};

// Felder-Silverman axes used for text tutoring. The Input axis (visual vs.
// auditory) is deliberately absent: it has no type and no parser path.
enum class Perception { sensory, intuitive };
enum class Processing { active, reflective };
enum class Understanding { sequential, global };

struct LearningStyle {
  Perception perception = Perception::sensory;
  Processing processing = Processing::active;
  Understanding understanding = Understanding::sequential;
  // Axis name ("perception", "processing", "understanding") -> justification.
  std::map<std::string, std::string> rationale;

  bool operator==(const LearningStyle&) const = default;
};

struct TeachingStrategy {
  std::string persona_id;
  LearningStyle style;
  std::vector<std::string> guidelines;
  Timestamp created_at{};

  bool operator==(const TeachingStrategy&) const = default;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationResult validate_profile(const PersonaProfile& p);

// Extracts the three style axes from provider output. Accepts `key = value` or
// `key: value` pairs (case-insensitive), preferring the contents of a
// <learning_style>...</learning_style> block when one is present. A value may
// carry a rationale after a `|`. Throws ParseError on a missing axis, a value
// outside the axis enum, or conflicting duplicate assignments.
LearningStyle parse_learning_style(std::string_view raw);

// Canonical block form accepted by parse_learning_style.
std::string format_learning_style(const LearningStyle& style);

// Reads a JSON array of profile records. Throws IoError when unreadable and
// SchemaError (with the array index) on malformed, invalid, or duplicate records.
std::vector<PersonaProfile> load_profiles(const std::filesystem::path& source);

// One-paragraph description used to fill persona slots in prompts.
std::string describe_persona(const PersonaProfile& p);

std::string_view to_string(KnowledgeLevel v);
std::string_view to_string(Perception v);
std::string_view to_string(Processing v);
std::string_view to_string(Understanding v);
std::optional<KnowledgeLevel> knowledge_level_from(std::string_view s);
std::optional<Perception> perception_from(std::string_view s);
std::optional<Processing> processing_from(std::string_view s);
std::optional<Understanding> understanding_from(std::string_view s);

void to_json(nlohmann::json& j, const PersonaProfile& p);
void from_json(const nlohmann::json& j, PersonaProfile& p);
void to_json(nlohmann::json& j, const LearningStyle& s);
void from_json(const nlohmann::json& j, LearningStyle& s);
void to_json(nlohmann::json& j, const TeachingStrategy& s);
void from_json(const nlohmann::json& j, TeachingStrategy& s);

}  // namespace pace
