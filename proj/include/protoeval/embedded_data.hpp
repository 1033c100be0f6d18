#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace protoeval {

/// Shipped default data files (action table, templates, eval steps, ...),
/// keyed by their path relative to the repository's data/ directory.
std::optional<std::string_view> embedded_file(std::string_view name);
std::vector<std::string_view> embedded_file_names();

}  // namespace protoeval
