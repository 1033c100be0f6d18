#pragma once

#include <atomic>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "protoeval/http_provider.hpp"
#include "protoeval/transport.hpp"

namespace protoeval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

struct CliContext {
  std::ostream& out;
  std::ostream& err;
  providers::EnvLookup env = providers::process_env();
  /// Null means the real HTTP transport.
  std::shared_ptr<providers::Transport> transport;
  const std::atomic<bool>* cancel = nullptr;
};

/// `args` excludes the program name. Returns the process exit code: 0 on
/// success, 1 on configuration errors, 2 on runtime failures.
int run_cli(const std::vector<std::string>& args, CliContext& ctx);

}  // namespace protoeval::cli
