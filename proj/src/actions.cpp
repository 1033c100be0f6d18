#include "protoeval/actions.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "protoeval/embedded_data.hpp"
#include "protoeval/error.hpp"

namespace protoeval::actions {

namespace {

bool is_camel_identifier(std::string_view name) noexcept {
  if (name.empty() || !(name.front() >= 'A' && name.front() <= 'Z')) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
  });
}

}  // namespace

std::string_view to_string(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::basic: return "basic";
    case ActionKind::sentinel: return "sentinel";
    case ActionKind::coarse: return "coarse";
  }
  return "basic";
}

ActionKind action_kind_from_string(std::string_view text) {
  if (text == "basic") return ActionKind::basic;
  if (text == "sentinel") return ActionKind::sentinel;
  if (text == "coarse") return ActionKind::coarse;
  throw ConfigError(fmt::format("unknown action kind \"{}\" (expected basic, sentinel, coarse)", text));
}

bool is_sentinel_name(std::string_view name) noexcept {
  return name == "InvalidAction" || name == "OtherLanguage" || name == "NoAction";
}

ActionRegistry::ActionRegistry(std::vector<ActionSpec> actions) : actions_(std::move(actions)) {
  std::set<std::string_view> names;
  for (const auto& a : actions_) {
    if (!is_camel_identifier(a.name)) {
      throw ConfigError(fmt::format("action name \"{}\" is not a CamelCase identifier", a.name));
    }
    if (!names.insert(a.name).second) {
      throw ConfigError(fmt::format("duplicate action name \"{}\"", a.name));
    }
    if ((a.kind == ActionKind::sentinel) != is_sentinel_name(a.name)) {
      throw ConfigError(fmt::format(
          "action \"{}\": sentinel kind is reserved for InvalidAction, OtherLanguage, NoAction",
          a.name));
    }
  }
}

const ActionSpec* ActionRegistry::lookup(std::string_view name) const noexcept {
  for (const auto& a : actions_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

ActionRegistry ActionRegistry::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ConfigError("action registry must be a JSON array");
  std::vector<ActionSpec> specs;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw ConfigError("action registry entries need a string \"name\"");
    }
    ActionSpec spec;
    spec.name = entry["name"].get<std::string>();
    spec.description = entry.value("description", "");
    spec.kind = action_kind_from_string(entry.value("kind", "basic"));
    specs.push_back(std::move(spec));
  }
  return ActionRegistry(std::move(specs));
}

ActionRegistry ActionRegistry::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(fmt::format("cannot open action registry {}", file.string()));
  try {
    return from_json(nlohmann::json::parse(in, nullptr, true, true));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", file.string(), e.what()));
  }
}

nlohmann::json ActionRegistry::to_json() const {
  auto out = nlohmann::json::array();
  for (const auto& a : actions_) {
    out.push_back({{"name", a.name}, {"kind", to_string(a.kind)}, {"description", a.description}});
  }
  return out;
}

const ActionRegistry& default_registry() {
  static const ActionRegistry registry =
      ActionRegistry::from_json(nlohmann::json::parse(*embedded_file("actions.json")));
  return registry;
}

NameVerdict validate_name(const ActionRegistry& registry, std::string_view name) noexcept {
  if (const auto* spec = registry.lookup(name)) return {spec->kind};
  return {};
}

std::string render_action_block(const ActionRegistry& registry) {
  std::string out;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (i) out += '\n';
    const auto& a = registry.actions()[i];
    out += a.name;
    out += ": ";
    out += a.description;
  }
  return out;
}

}  // namespace protoeval::actions
