#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <unistd.h>
#include <string>
#include <vector>

#include "protoeval/corpus.hpp"
#include "protoeval/mock_provider.hpp"
#include "protoeval/transport.hpp"

namespace protoeval::testing {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(PROTOEVAL_FIXTURES_DIR) / rel;
}

inline std::filesystem::path data_file(const std::string& rel) {
  return std::filesystem::path(PROTOEVAL_DATA_DIR) / rel;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("protoeval-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Replays canned responses and records every request.
class FakeTransport final : public providers::Transport {
 public:
  explicit FakeTransport(std::vector<providers::HttpResponse> script = {}) : script_(script.begin(), script.end()) {}

  providers::HttpResponse send(const providers::HttpRequest& request) override {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (script_.empty()) return {0, "", {}, "fake transport exhausted", false};
    auto r = script_.front();
    script_.pop_front();
    return r;
  }

  void push(providers::HttpResponse r) {
    std::lock_guard lock(mu_);
    script_.push_back(std::move(r));
  }
  std::vector<providers::HttpRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<providers::HttpResponse> script_;
  std::vector<providers::HttpRequest> requests_;
};

inline providers::HttpResponse ok_json(const std::string& body) { return {200, body, {}, "", false}; }
inline providers::HttpResponse status(int code, std::string body = "{}") { return {code, std::move(body), {}, "", false}; }

/// Text between the last `label` and the following `next`.
inline std::string block_after(const std::string& prompt, const std::string& label, const std::string& next) {
  auto a = prompt.rfind(label);
  if (a == std::string::npos) return {};
  a += label.size();
  auto b = prompt.find(next, a);
  return prompt.substr(a, b == std::string::npos ? std::string::npos : b - a);
}

/// Faithful judge written independently of the library's simulators: 5
/// when the Source and Target blocks are identical, 1 otherwise. Generation
/// prompts get a fixed two-call program.
inline std::shared_ptr<providers::MockChatProvider> faithful_judge(std::string name = "faithful") {
  return std::make_shared<providers::MockChatProvider>(
      providers::mock_config(std::move(name)), [](const providers::ChatRequest& req, int) {
        const std::string& text = req.messages.back().content;
        if (text.find("Evaluation Form (scores ONLY):") == std::string::npos) {
          // Echo the steps so distinct protocols give distinct programs.
          auto steps = block_after(text, "steps:\n", "\x01");
          std::string out = "```python\n";
          std::istringstream in(steps);
          std::string line;
          int i = 0;
          while (std::getline(in, line)) {
            if (line.empty()) continue;
            out += (i++ % 2 ? "Centrifuge" : "Transfer");
            out += "(step=" + std::to_string(i) + ", text=\"" + std::to_string(line.size()) + "\")\n";
          }
          return providers::MockReply{out + "```", std::nullopt, std::nullopt};
        }
        bool protocol = text.find("Target Pseudocode:") != std::string::npos &&
                        text.find("Source Protocol:") != std::string::npos;
        auto source = protocol ? block_after(text, "Source Protocol:", "Target Pseudocode:")
                               : block_after(text, "Source Pseudocode:", "Target Pseudocode:");
        auto target = block_after(text, "Target Pseudocode:", "Evaluation Form (scores ONLY):");
        return providers::MockReply{source == target ? "5" : "1", std::nullopt, std::nullopt};
      });
}

inline std::vector<corpus::Protocol> fixture_corpus() {
  auto loaded = corpus::load_records(fixture("corpus"));
  return corpus::curate(loaded.records, corpus::CurationConfig{}).protocols;
}

}  // namespace protoeval::testing
