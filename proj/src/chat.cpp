#include "protoeval/chat.hpp"

namespace protoeval {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::vector<ChatMessage> merge_system_into_user(const std::vector<ChatMessage>& messages) {
  std::string system;
  std::vector<ChatMessage> rest;
  for (const auto& m : messages) {
    if (m.role == Role::system) {
      if (!system.empty()) system += "\n\n";
      system += m.content;
    } else {
      rest.push_back(m);
    }
  }
  if (system.empty()) return rest;
  for (auto& m : rest) {
    if (m.role == Role::user) {
      m.content = system + "\n\n" + m.content;
      return rest;
    }
  }
  rest.insert(rest.begin(), ChatMessage{Role::user, system});
  return rest;
}

}  // namespace protoeval
