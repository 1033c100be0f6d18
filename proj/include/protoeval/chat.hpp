#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protoeval {

enum class Role { system, user, assistant };

std::string_view to_string(Role role) noexcept;

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// Folds a leading system message into the first user message (system text,
/// blank line, user text) for backends without a system role.
std::vector<ChatMessage> merge_system_into_user(const std::vector<ChatMessage>& messages);

}  // namespace protoeval
