#include "protoeval/mock_provider.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "protoeval/actions.hpp"
#include "protoeval/error.hpp"
#include "protoeval/prompts.hpp"
#include "protoeval/pseudocode.hpp"
#include "text_util.hpp"

namespace protoeval::providers {
namespace {

std::uint64_t mix(std::uint64_t h, std::string_view part) { return fnv1a64(part, h ^ 0x9e3779b97f4a7c15ULL); }

std::uint64_t mix(std::uint64_t h, std::int64_t v) { return mix(h, std::to_string(v)); }

const ChatMessage* last_with_role(const ChatRequest& req, Role role) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == role) return &*it;
  }
  return nullptr;
}

std::string prompt_text(const ChatRequest& req) {
  std::string all;
  for (const auto& m : req.messages) {
    all += to_string(m.role);
    all += '\x1f';
    all += m.content;
    all += '\x1e';
  }
  return all;
}

std::string snake_case(std::string_view camel) {
  std::string out;
  for (char c : camel) {
    if (std::isupper(static_cast<unsigned char>(c))) {
      if (!out.empty()) out += '_';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      out += c;
    }
  }
  return out;
}

std::string arg_words(std::string_view step) {
  std::vector<std::string> words;
  for (const auto& w : detail::split_whitespace(step)) {
    std::string clean;
    for (char c : w) {
      if (std::isalnum(static_cast<unsigned char>(c))) clean += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (!clean.empty()) words.push_back(clean);
    if (words.size() == 5) break;
  }
  return detail::join(words, " ");
}

struct GenerationInput {
  std::vector<std::string> action_names;
  bool actions_given = false;
  std::vector<std::string> steps;
};

GenerationInput read_generation_prompt(const ChatRequest& req) {
  GenerationInput in;
  std::string all;
  for (const auto& m : req.messages) all += m.content + "\n";
  in.actions_given = all.find("You must ONLY use these functions.") != std::string::npos;
  bool in_steps = false;
  for (auto line : detail::split_lines(all)) {
    if (in.actions_given) {
      auto colon = line.find(": ");
      if (colon != std::string_view::npos && colon > 0) {
        auto name = line.substr(0, colon);
        bool camel = std::isupper(static_cast<unsigned char>(name[0])) &&
                     std::all_of(name.begin(), name.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
        if (camel && !actions::is_sentinel_name(name)) in.action_names.emplace_back(name);
      }
    }
    if (line == "steps:") {
      in_steps = true;
      continue;
    }
    if (in_steps) {
      std::size_t i = 0;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i > 0 && i + 1 < line.size() && line[i] == '.' && line[i + 1] == ' ') {
        in.steps.emplace_back(line.substr(i + 2));
      }
    }
  }
  if (in.action_names.empty()) {
    for (const auto& a : actions::default_registry().actions()) {
      if (a.kind != actions::ActionKind::sentinel) in.action_names.push_back(a.name);
    }
  }
  return in;
}

std::string simulate_generation(const ProviderConfig& cfg, const GeneratorParams& params, const ChatRequest& req,
                                int index) {
  auto in = read_generation_prompt(req);
  std::uint64_t model_key = mix(fnv1a64(cfg.name), req.seed.value_or(0));
  model_key = mix(model_key, index);

  std::vector<std::string> declared;
  std::vector<std::string> calls;
  auto use = [&](std::string name, std::size_t step_no, std::string_view step) {
    if (std::find(declared.begin(), declared.end(), name) == declared.end()) declared.push_back(name);
    calls.push_back(fmt::format("{}(step={}, detail=\"{}\")", name, step_no, arg_words(step)));
  };

  for (std::size_t i = 0; i < in.steps.size(); ++i) {
    const auto& step = in.steps[i];
    std::size_t canonical = fnv1a64(step) % in.action_names.size();
    SplitMix64 rng(mix(mix(model_key, static_cast<std::int64_t>(i)), step));
    std::size_t chosen = canonical;
    double u = rng.uniform();
    if (u >= params.fidelity) {
      double v = rng.uniform();
      if (v < 0.4) continue;  // dropped
      if (v < 0.8 && in.action_names.size() > 1) {
        chosen = (canonical + 1 + rng.below(in.action_names.size() - 1)) % in.action_names.size();
      }
    }
    std::string name = in.action_names[chosen];
    if (!in.actions_given && rng.uniform() < params.naming_drift) name = snake_case(name);
    use(name, i + 1, step);
  }

  std::string out = "```python\n";
  for (const auto& d : declared) out += fmt::format("def {}(*args, **kwargs):\n    pass\n\n", d);
  for (const auto& c : calls) out += c + "\n";
  out += "```";
  return out;
}

struct EvalInput {
  std::string criterion;
  std::string source;
  std::string target;
  bool parsed = false;
};

std::string block_between(std::string_view text, std::string_view begin, std::string_view end, bool& ok) {
  auto b = text.find(begin);
  if (b == std::string_view::npos) {
    ok = false;
    return {};
  }
  b += begin.size();
  auto e = text.find(end, b);
  if (e == std::string_view::npos) {
    ok = false;
    return {};
  }
  return std::string(detail::trim(text.substr(b, e - b)));
}

EvalInput read_eval_prompt(const ChatRequest& req) {
  EvalInput in;
  const ChatMessage* user = last_with_role(req, Role::user);
  if (!user) return in;
  std::string_view text = user->content;
  bool ok = true;
  std::string_view src_label = text.find("\nSource Protocol:\n") != std::string_view::npos ? "\nSource Protocol:\n"
                                                                                            : "\nSource Pseudocode:\n";
  in.source = block_between(text, src_label, "\nTarget Pseudocode:\n", ok);
  in.target = block_between(text, "\nTarget Pseudocode:\n", std::string("\n") + std::string(prompts::kEvalFormMarker), ok);
  auto dash = text.rfind("\n- ");
  if (dash != std::string_view::npos) {
    std::string line(text.substr(dash + 3));
    in.criterion = line.substr(0, line.find(':'));
  }
  in.parsed = ok;
  return in;
}

double levenshtein_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) / static_cast<double>(std::max(a.size(), b.size()));
}

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : a) inter += b.count(w);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<double> score_distribution(const EvalInput& in, const JudgeParams& params) {
  std::vector<double> p(5, 0.0);
  if (in.source == in.target) {
    p[4] = 1.0;
    return p;
  }
  auto src_doc = pseudocode::parse_pseudocode(in.source);
  auto tgt_doc = pseudocode::parse_pseudocode(in.target);
  double structural = levenshtein_similarity(pseudocode::extract_call_sequence(src_doc),
                                             pseudocode::extract_call_sequence(tgt_doc));
  double lexical = jaccard(word_set(in.source), word_set(in.target));
  double sim = src_doc.calls.empty() ? lexical : 0.6 * structural + 0.4 * lexical;
  double offset = (static_cast<double>(fnv1a64(in.criterion) % 61) - 30.0) / 100.0;
  double mean = std::clamp(1.0 + 4.0 * sim + offset, 1.0, 5.0);
  double sigma = std::max(0.05, params.noise);
  double total = 0.0;
  for (int s = 1; s <= 5; ++s) {
    double d = (s - mean) / sigma;
    p[s - 1] = std::exp(-0.5 * d * d);
    total += p[s - 1];
  }
  for (auto& v : p) v /= total;
  return p;
}

MockReply simulate_judgment(const JudgeParams& params, const ChatRequest& req, int index) {
  auto in = read_eval_prompt(req);
  if (!in.parsed) return {"I am unable to find the pseudocode to rate.", std::nullopt, std::nullopt};
  auto p = score_distribution(in, params);
  SplitMix64 rng(mix(mix(fnv1a64(prompt_text(req)), req.seed.value_or(0)), index));
  if (params.garbage_rate > 0 && rng.uniform() < params.garbage_rate) {
    return {"The target pseudocode follows the ground truth closely.", std::nullopt, std::nullopt};
  }
  double u = rng.uniform();
  int score = 5;
  double acc = 0.0;
  for (int s = 1; s <= 5; ++s) {
    acc += p[s - 1];
    if (u < acc) {
      score = s;
      break;
    }
  }
  // The chosen score must have positive mass even under rounding at the top.
  while (p[score - 1] <= 0.0) --score;
  MockReply reply;
  reply.text = std::to_string(score);
  TokenLogprob tl;
  tl.token = reply.text;
  tl.logprob = std::log(p[score - 1]);
  for (int s = 1; s <= 5; ++s) {
    if (p[s - 1] > 0.0) tl.alternatives.emplace_back(std::to_string(s), std::log(p[s - 1]));
  }
  std::stable_sort(tl.alternatives.begin(), tl.alternatives.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  reply.logprobs = std::vector<TokenLogprob>{tl};
  return reply;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t SplitMix64::next() noexcept {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::size_t SplitMix64::below(std::size_t n) noexcept {
  return n == 0 ? 0 : static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

ProviderConfig mock_config(std::string name, bool supports_logprobs) {
  ProviderConfig c;
  c.name = std::move(name);
  c.model_id = c.name;
  c.dialect = "mock";
  c.requests_per_minute = 1e9;
  c.supports_logprobs = supports_logprobs;
  return c;
}

MockChatProvider::MockChatProvider(ProviderConfig cfg, Responder responder)
    : cfg_(std::move(cfg)), responder_(std::move(responder)) {
  if (!responder_) throw ConfigError("mock provider needs a responder");
}

std::shared_ptr<MockChatProvider> MockChatProvider::scripted(std::vector<MockReply> script, ProviderConfig cfg) {
  auto state = std::make_shared<std::pair<std::vector<MockReply>, std::size_t>>(std::move(script), 0);
  return std::make_shared<MockChatProvider>(std::move(cfg), [state](const ChatRequest&, int) {
    if (state->second >= state->first.size()) throw ProviderError("mock script exhausted");
    return state->first[state->second++];
  });
}

std::shared_ptr<MockChatProvider> MockChatProvider::scripted_texts(const std::vector<std::string>& texts,
                                                                   ProviderConfig cfg) {
  std::vector<MockReply> script;
  for (const auto& t : texts) script.push_back({t, std::nullopt, std::nullopt});
  return scripted(std::move(script), std::move(cfg));
}

std::shared_ptr<MockChatProvider> MockChatProvider::echo(ProviderConfig cfg) {
  return std::make_shared<MockChatProvider>(std::move(cfg), [](const ChatRequest& req, int) {
    const ChatMessage* user = last_with_role(req, Role::user);
    return MockReply{user ? user->content : std::string(), std::nullopt, std::nullopt};
  });
}

ChatResponse MockChatProvider::complete(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  ChatResponse out;
  bool keep_logprobs = request.want_logprobs && cfg_.supports_logprobs;
  if (request.want_logprobs && !cfg_.supports_logprobs) {
    out.notices.push_back(fmt::format("{} does not support logprobs; samples returned without them", cfg_.name));
  }
  for (int i = 0; i < request.n_samples; ++i) {
    MockReply r = responder_(request, i);
    if (r.error_status) {
      int st = *r.error_status;
      if (st == 401 || st == 403) throw AuthError(fmt::format("mock auth failure ({})", st), st);
      throw ProviderError(fmt::format("mock failure ({})", st), st, st == 429 || st >= 500);
    }
    Sample s;
    s.text = std::move(r.text);
    if (keep_logprobs) s.logprobs = std::move(r.logprobs);
    out.samples.push_back(std::move(s));
  }
  out.provider_meta = {{"provider", cfg_.name}, {"mock", true}};
  return out;
}

std::vector<ChatRequest> MockChatProvider::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t MockChatProvider::call_count() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::shared_ptr<MockChatProvider> make_simulated_generator(ProviderConfig cfg, GeneratorParams params) {
  if (params.fidelity < 0 || params.fidelity > 1) throw ConfigError("fidelity must lie in [0, 1]");
  ProviderConfig copy = cfg;
  return std::make_shared<MockChatProvider>(std::move(cfg), [copy, params](const ChatRequest& req, int index) {
    return MockReply{simulate_generation(copy, params, req, index), std::nullopt, std::nullopt};
  });
}

std::shared_ptr<MockChatProvider> make_simulated_judge(ProviderConfig cfg, JudgeParams params) {
  if (params.garbage_rate < 0 || params.garbage_rate > 1) throw ConfigError("garbage_rate must lie in [0, 1]");
  return std::make_shared<MockChatProvider>(
      std::move(cfg), [params](const ChatRequest& req, int index) { return simulate_judgment(params, req, index); });
}

std::shared_ptr<MockChatProvider> make_simulated_model(ProviderConfig cfg, GeneratorParams gen, JudgeParams judge) {
  if (gen.fidelity < 0 || gen.fidelity > 1) throw ConfigError("fidelity must lie in [0, 1]");
  if (judge.garbage_rate < 0 || judge.garbage_rate > 1) throw ConfigError("garbage_rate must lie in [0, 1]");
  ProviderConfig copy = cfg;
  return std::make_shared<MockChatProvider>(std::move(cfg), [copy, gen, judge](const ChatRequest& req, int index) {
    if (read_eval_prompt(req).parsed) return simulate_judgment(judge, req, index);
    return MockReply{simulate_generation(copy, gen, req, index), std::nullopt, std::nullopt};
  });
}

std::shared_ptr<ChatProvider> make_mock_provider(const ProviderConfig& cfg) {
  const auto& m = cfg.mock;
  std::string kind = m.is_object() ? m.value("kind", "echo") : "echo";
  try {
    if (kind == "echo") return MockChatProvider::echo(cfg);
    if (kind == "script") return MockChatProvider::scripted_texts(m.value("script", std::vector<std::string>{}), cfg);
    if (kind == "generator") {
      GeneratorParams p;
      p.fidelity = m.value("fidelity", p.fidelity);
      p.naming_drift = m.value("naming_drift", p.naming_drift);
      return make_simulated_generator(cfg, p);
    }
    if (kind == "judge") {
      JudgeParams p;
      p.noise = m.value("noise", p.noise);
      p.garbage_rate = m.value("garbage_rate", p.garbage_rate);
      return make_simulated_judge(cfg, p);
    }
    if (kind == "model") {
      GeneratorParams g;
      g.fidelity = m.value("fidelity", g.fidelity);
      g.naming_drift = m.value("naming_drift", g.naming_drift);
      JudgeParams j;
      j.noise = m.value("noise", j.noise);
      j.garbage_rate = m.value("garbage_rate", j.garbage_rate);
      return make_simulated_model(cfg, g, j);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("provider {}: bad mock settings: {}", cfg.name, e.what()));
  }
  throw ConfigError(fmt::format("provider {}: unknown mock kind '{}'", cfg.name, kind));
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<std::vector<double>> HashEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<double> v(dim_, 0.0);
    for (const auto& tok : detail::split_whitespace(t)) {
      std::uint64_t h = fnv1a64(detail::ascii_lower(tok));
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashEmbedder::name() const { return fmt::format("hash:{}", dim_); }

}  // namespace protoeval::providers
