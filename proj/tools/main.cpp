#include <atomic>
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "protoeval/cli.hpp"

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  std::vector<std::string> args(argv + 1, argv + argc);
  protoeval::cli::CliContext ctx{std::cout, std::cerr, protoeval::providers::process_env(), nullptr};
  ctx.cancel = &g_cancel;
  return protoeval::cli::run_cli(args, ctx);
}
