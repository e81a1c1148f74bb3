#include "pace/persona.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "pace/errors.hpp"

namespace pace {

using nlohmann::json;

std::string_view to_string(KnowledgeLevel v) {
  switch (v) {
    case KnowledgeLevel::low: return "low";
    case KnowledgeLevel::medium: return "medium";
    case KnowledgeLevel::high: return "high";
  }
  return "medium";
}
std::string_view to_string(Perception v) { return v == Perception::sensory ? "sensory" : "intuitive"; }
std::string_view to_string(Processing v) { return v == Processing::active ? "active" : "reflective"; }
std::string_view to_string(Understanding v) { return v == Understanding::sequential ? "sequential" : "global"; }

std::optional<KnowledgeLevel> knowledge_level_from(std::string_view s) {
  const auto v = to_lower(s);
  if (v == "low") return KnowledgeLevel::low;
  if (v == "medium") return KnowledgeLevel::medium;
  if (v == "high") return KnowledgeLevel::high;
  return std::nullopt;
}
std::optional<Perception> perception_from(std::string_view s) {
  const auto v = to_lower(s);
  if (v == "sensory") return Perception::sensory;
  if (v == "intuitive") return Perception::intuitive;
  return std::nullopt;
}
std::optional<Processing> processing_from(std::string_view s) {
  const auto v = to_lower(s);
  if (v == "active") return Processing::active;
  if (v == "reflective") return Processing::reflective;
  return std::nullopt;
}
std::optional<Understanding> understanding_from(std::string_view s) {
  const auto v = to_lower(s);
  if (v == "sequential") return Understanding::sequential;
  if (v == "global") return Understanding::global;
  return std::nullopt;
}

ValidationResult validate_profile(const PersonaProfile& p) {
  ValidationResult r;
  if (trim(p.id).empty()) r.violations.emplace_back("id empty");
  if (trim(p.name).empty()) r.violations.emplace_back("name empty");
  if (p.interests.empty()) r.violations.emplace_back("interests empty");
  if (p.traits.empty()) r.violations.emplace_back("traits empty");
  if (p.age_years < 5 || p.age_years > 100) r.violations.emplace_back("age out of range");
  for (const auto& s : p.interests)
    if (trim(s).empty()) {
      r.violations.emplace_back("blank interest");
      break;
    }
  for (const auto& s : p.traits)
    if (trim(s).empty()) {
      r.violations.emplace_back("blank trait");
      break;
    }
  return r;
}

namespace {

constexpr std::string_view kBlockOpen = "<learning_style>";
constexpr std::string_view kBlockClose = "</learning_style>";

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct AxisHit {
  std::string value;
  std::string rationale;
};

// All `key [=:] value` assignments of one axis within [begin, end) of `text`.
std::vector<AxisHit> find_assignments(const std::string& text, const std::string& lower, std::size_t begin,
                                      std::size_t end, std::string_view key) {
  std::vector<AxisHit> hits;
  std::size_t pos = begin;
  while ((pos = lower.find(key, pos)) != std::string::npos && pos < end) {
    const std::size_t after = pos + key.size();
    const bool left_ok = pos == 0 || !is_word(lower[pos - 1]);
    const bool right_ok = after >= lower.size() || !is_word(lower[after]);
    pos = after;
    if (!left_ok || !right_ok) continue;
    std::size_t i = after;
    auto skip = [&](bool quotes) {
      while (i < end && (lower[i] == ' ' || lower[i] == '\t' || (quotes && (lower[i] == '"' || lower[i] == '\''))))
        ++i;
    };
    skip(true);
    if (i >= end || (lower[i] != '=' && lower[i] != ':')) continue;
    ++i;
    skip(true);
    const std::size_t vstart = i;
    while (i < end && std::isalpha(static_cast<unsigned char>(lower[i]))) ++i;
    AxisHit hit;
    hit.value = lower.substr(vstart, i - vstart);
    skip(true);
    if (i < end && lower[i] == '|') {
      const std::size_t rstart = i + 1;
      std::size_t rend = text.find('\n', rstart);
      if (rend == std::string::npos || rend > end) rend = end;
      hit.rationale = trim(std::string_view(text).substr(rstart, rend - rstart));
    }
    hits.push_back(std::move(hit));
  }
  return hits;
}

template <typename Enum, typename From>
Enum bind_axis(const std::string& text, const std::string& lower, std::size_t begin, std::size_t end,
               std::string_view axis, From from, std::map<std::string, std::string>& rationale) {
  const auto hits = find_assignments(text, lower, begin, end, axis);
  if (hits.empty()) throw ParseError("learning style: missing axis '" + std::string(axis) + "'");
  std::optional<Enum> bound;
  for (const auto& h : hits) {
    const auto v = from(h.value);
    if (!v) throw ParseError("learning style: invalid " + std::string(axis) + " value '" + h.value + "'");
    if (bound && *bound != *v) throw ParseError("learning style: conflicting values for " + std::string(axis));
    bound = v;
    if (!h.rationale.empty() && !rationale.count(std::string(axis))) rationale[std::string(axis)] = h.rationale;
  }
  return *bound;
}

}  // namespace

LearningStyle parse_learning_style(std::string_view raw) {
  const std::string text(raw);
  const std::string lower = to_lower(text);
  std::size_t begin = 0, end = lower.size();
  if (const auto open = lower.find(kBlockOpen); open != std::string::npos) {
    begin = open + kBlockOpen.size();
    const auto close = lower.find(kBlockClose, begin);
    end = close == std::string::npos ? lower.size() : close;
  }
  LearningStyle s;
  s.perception = bind_axis<Perception>(text, lower, begin, end, "perception", perception_from, s.rationale);
  s.processing = bind_axis<Processing>(text, lower, begin, end, "processing", processing_from, s.rationale);
  s.understanding =
      bind_axis<Understanding>(text, lower, begin, end, "understanding", understanding_from, s.rationale);
  return s;
}

std::string format_learning_style(const LearningStyle& style) {
  std::ostringstream out;
  auto line = [&](std::string_view axis, std::string_view value) {
    out << axis << " = " << value;
    if (auto it = style.rationale.find(std::string(axis)); it != style.rationale.end() && !it->second.empty())
      out << " | " << it->second;
    out << '\n';
  };
  out << kBlockOpen << '\n';
  line("perception", to_string(style.perception));
  line("processing", to_string(style.processing));
  line("understanding", to_string(style.understanding));
  out << kBlockClose;
  return out.str();
}

std::string describe_persona(const PersonaProfile& p) {
  std::ostringstream out;
  out << "Name: " << p.name << "\n"
      << "Gender: " << p.gender << "\n"
      << "Age: " << p.age_years << "\n"
      << "Interests: " << join(p.interests, ", ") << "\n"
      << "Personality traits: " << join(p.traits, ", ") << "\n";
  if (!p.experiences.empty()) out << "Experiences: " << join(p.experiences, "; ") << "\n";
  out << "Math knowledge level: " << to_string(p.knowledge_level);
  return out.str();
}

std::vector<PersonaProfile> load_profiles(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw IoError("cannot read persona file: " + source.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  if (trim(content).empty()) return {};

  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw SchemaError(0, std::string("persona file is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError(0, "persona file must be a JSON array");

  std::vector<PersonaProfile> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    PersonaProfile p;
    try {
      p = doc[i].get<PersonaProfile>();
    } catch (const std::exception& e) {
      throw SchemaError(i, e.what());
    }
    if (auto v = validate_profile(p); !v.ok()) throw SchemaError(i, "invalid profile: " + join(v.violations, ", "));
    if (!seen.insert(p.id).second) throw SchemaError(i, "duplicate persona id '" + p.id + "'");
    out.push_back(std::move(p));
  }
  return out;
}

void to_json(json& j, const PersonaProfile& p) {
  j = json{{"id", p.id},
           {"name", p.name},
           {"gender", p.gender},
           {"age_years", p.age_years},
           {"interests", p.interests},
           {"traits", p.traits},
           {"experiences", p.experiences},
           {"knowledge_level", to_string(p.knowledge_level)}};
}

void from_json(const json& j, PersonaProfile& p) {
  if (!j.is_object()) throw std::invalid_argument("profile must be an object");
  p.id = j.at("id").get<std::string>();
  p.name = j.at("name").get<std::string>();
  p.gender = j.at("gender").get<std::string>();
  p.age_years = j.at("age_years").get<int>();
  p.interests = j.at("interests").get<std::vector<std::string>>();
  p.traits = j.at("traits").get<std::vector<std::string>>();
  p.experiences = j.at("experiences").get<std::vector<std::string>>();
  const auto level = j.at("knowledge_level").get<std::string>();
  const auto kl = knowledge_level_from(level);
  if (!kl) throw std::invalid_argument("knowledge_level must be low, medium or high, got '" + level + "'");
  p.knowledge_level = *kl;
}

void to_json(json& j, const LearningStyle& s) {
  j = json{{"perception", to_string(s.perception)},
           {"processing", to_string(s.processing)},
           {"understanding", to_string(s.understanding)},
           {"rationale", s.rationale}};
}

void from_json(const json& j, LearningStyle& s) {
  const auto pe = perception_from(j.at("perception").get<std::string>());
  const auto pr = processing_from(j.at("processing").get<std::string>());
  const auto un = understanding_from(j.at("understanding").get<std::string>());
  if (!pe || !pr || !un) throw std::invalid_argument("learning style axis value out of range");
  s.perception = *pe;
  s.processing = *pr;
  s.understanding = *un;
  s.rationale = j.value("rationale", std::map<std::string, std::string>{});
}

void to_json(json& j, const TeachingStrategy& s) {
  j = json{{"persona_id", s.persona_id},
           {"style", s.style},
           {"guidelines", s.guidelines},
           {"created_at", format_timestamp(s.created_at)}};
}

void from_json(const json& j, TeachingStrategy& s) {
  s.persona_id = j.at("persona_id").get<std::string>();
  s.style = j.at("style").get<LearningStyle>();
  s.guidelines = j.at("guidelines").get<std::vector<std::string>>();
  s.created_at = parse_timestamp(j.at("created_at").get<std::string>());
}

}  // namespace pace
