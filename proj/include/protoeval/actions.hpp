#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace protoeval::actions {

enum class ActionKind { basic, sentinel, coarse };

std::string_view to_string(ActionKind kind) noexcept;
ActionKind action_kind_from_string(std::string_view text);

struct ActionSpec {
  std::string name;
  std::string description;
  ActionKind kind = ActionKind::basic;

  bool operator==(const ActionSpec&) const = default;
};

/// Membership verdict of validate_name: kind is set iff the name is known.
struct NameVerdict {
  std::optional<ActionKind> kind;
  bool known() const noexcept { return kind.has_value(); }
};

/// The fixed pseudofunction vocabulary. Immutable once constructed.
///
/// Names are CamelCase identifiers (ASCII letters only, leading uppercase)
/// and unique. The three sentinel names InvalidAction, OtherLanguage and
/// NoAction are the only ones allowed, and required, to carry the sentinel kind.
class ActionRegistry {
 public:
  ActionRegistry() = default;
  /// Throws ConfigError when an invariant above does not hold.
  explicit ActionRegistry(std::vector<ActionSpec> actions);

  const std::vector<ActionSpec>& actions() const noexcept { return actions_; }
  std::size_t size() const noexcept { return actions_.size(); }
  bool empty() const noexcept { return actions_.empty(); }

  /// Exact, case-sensitive lookup.
  const ActionSpec* lookup(std::string_view name) const noexcept;

  static ActionRegistry from_json(const nlohmann::json& doc);
  static ActionRegistry load(const std::filesystem::path& file);
  nlohmann::json to_json() const;

 private:
  std::vector<ActionSpec> actions_;
};

/// The 17 laboratory actions (10 basic, 3 sentinel, 4 coarse-grained).
const ActionRegistry& default_registry();

NameVerdict validate_name(const ActionRegistry& registry, std::string_view name) noexcept;

/// One "Name: description" line per action, in registry order, joined by
/// '\n' without a trailing newline.
std::string render_action_block(const ActionRegistry& registry);

bool is_sentinel_name(std::string_view name) noexcept;

}  // namespace protoeval::actions
