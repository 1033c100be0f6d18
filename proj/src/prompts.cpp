#include "protoeval/prompts.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "protoeval/embedded_data.hpp"
#include "protoeval/error.hpp"
#include "text_util.hpp"

namespace protoeval::prompts {
namespace {

std::string embedded_or_throw(std::string_view name) {
  auto text = embedded_file(name);
  if (!text) throw Error(fmt::format("missing embedded data file {}", name));
  return std::string(*text);
}

std::string strip_final_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CriteriaData {
  std::vector<std::pair<std::string, std::string>> definitions;
  std::vector<std::pair<std::string, std::string>> substitutions;
};

const CriteriaData& criteria_data() {
  static const CriteriaData data = [] {
    CriteriaData d;
    auto doc = nlohmann::json::parse(embedded_or_throw("criteria.json"));
    for (const auto& c : doc.at("criteria")) {
      d.definitions.emplace_back(c.at("name").get<std::string>(), c.at("definition").get<std::string>());
    }
    for (const auto& s : doc.at("protocol_baseline_substitutions")) {
      d.substitutions.emplace_back(s.at(0).get<std::string>(), s.at(1).get<std::string>());
    }
    return d;
  }();
  return data;
}

}  // namespace

std::string_view to_string(BaselineKind kind) noexcept {
  return kind == BaselineKind::pseudocode_baseline ? "pseudocode_baseline" : "protocol_baseline";
}

BaselineKind baseline_kind_from_string(std::string_view text) {
  if (text == "pseudocode_baseline" || text == "pseudocode") return BaselineKind::pseudocode_baseline;
  if (text == "protocol_baseline" || text == "protocol") return BaselineKind::protocol_baseline;
  throw ConfigError(fmt::format("unknown baseline kind '{}'", text));
}

const std::vector<std::string>& criterion_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, def] : criteria_data().definitions) out.push_back(name);
    return out;
  }();
  return names;
}

std::string to_protocol_wording(std::string_view definition) {
  std::string out(definition);
  for (const auto& [from, to] : criteria_data().substitutions) out = detail::replace_all(std::move(out), from, to);
  return out;
}

std::vector<CriterionDef> default_criteria_without_steps(BaselineKind kind) {
  std::vector<CriterionDef> out;
  for (const auto& [name, def] : criteria_data().definitions) {
    CriterionDef c;
    c.name = name;
    c.definition = kind == BaselineKind::pseudocode_baseline ? def : to_protocol_wording(def);
    c.baseline_kind = kind;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CriterionDef> default_criteria(BaselineKind kind) {
  auto out = default_criteria_without_steps(kind);
  attach_eval_steps(out, std::nullopt);
  return out;
}

PromptTemplates PromptTemplates::defaults() {
  static const PromptTemplates t = [] {
    PromptTemplates p;
    p.generation_system = strip_final_newline(embedded_or_throw("templates/generation_system.txt"));
    p.generation_system_no_actions = strip_final_newline(embedded_or_throw("templates/generation_system_no_actions.txt"));
    p.generation_user = strip_final_newline(embedded_or_throw("templates/generation_user.txt"));
    p.eval_pseudocode_baseline = strip_final_newline(embedded_or_throw("templates/eval_pseudocode_baseline.txt"));
    p.eval_protocol_baseline = strip_final_newline(embedded_or_throw("templates/eval_protocol_baseline.txt"));
    return p;
  }();
  return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t = defaults();
  auto override_from = [&](std::string& slot, const char* file) {
    if (auto text = read_file(dir / file)) slot = strip_final_newline(std::move(*text));
  };
  override_from(t.generation_system, "generation_system.txt");
  override_from(t.generation_system_no_actions, "generation_system_no_actions.txt");
  override_from(t.generation_user, "generation_user.txt");
  override_from(t.eval_pseudocode_baseline, "eval_pseudocode_baseline.txt");
  override_from(t.eval_protocol_baseline, "eval_protocol_baseline.txt");
  return t;
}

const std::string& PromptTemplates::eval_template(BaselineKind kind) const {
  return kind == BaselineKind::pseudocode_baseline ? eval_pseudocode_baseline : eval_protocol_baseline;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto key = std::string(tmpl.substr(i + 1, close - i - 1));
        if (auto it = values.find(key); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string render_steps(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '\n';
    out += fmt::format("{}. {}", i + 1, steps[i]);
  }
  return out;
}

std::vector<ChatMessage> build_generation_prompt(const GenerationPromptInput& input,
                                                 const PromptTemplates& templates) {
  std::string system;
  if (input.registry) {
    system = render_template(templates.generation_system, {{"actions", actions::render_action_block(*input.registry)}});
  } else {
    system = templates.generation_system_no_actions;
  }
  std::string user = render_template(templates.generation_user, {{"title", input.protocol.title},
                                                                 {"description", input.protocol.description},
                                                                 {"steps", render_steps(input.protocol.steps)}});
  return {{Role::system, std::move(system)}, {Role::user, std::move(user)}};
}

std::vector<ChatMessage> build_eval_prompt(const CriterionDef& criterion, std::string_view baseline,
                                           std::string_view target, const PromptTemplates& templates) {
  if (detail::trim(criterion.eval_steps).empty()) {
    throw ConfigError(fmt::format("criterion {} has no evaluation steps; run generate_eval_steps first",
                                  criterion.name));
  }
  std::string text = render_template(templates.eval_template(criterion.baseline_kind),
                                     {{"definition", criterion.definition},
                                      {"eval_steps", strip_final_newline(criterion.eval_steps)},
                                      {"baseline", std::string(baseline)},
                                      {"target", std::string(target)},
                                      {"criterion", criterion.name}});
  return {{Role::user, std::move(text)}};
}

std::vector<ChatMessage> build_eval_steps_request(const CriterionDef& criterion, const PromptTemplates& templates) {
  const std::string& tmpl = templates.eval_template(criterion.baseline_kind);
  auto cut = tmpl.find("{eval_steps}");
  std::string head = cut == std::string::npos ? tmpl : tmpl.substr(0, cut);
  while (!head.empty() && detail::is_space(head.back())) head.pop_back();
  std::string text = render_template(head, {{"definition", criterion.definition}, {"criterion", criterion.name}});
  return {{Role::user, std::move(text)}};
}

std::string eval_steps_file_name(const CriterionDef& criterion) {
  return fmt::format("{}.{}.txt", detail::ascii_lower(criterion.name), to_string(criterion.baseline_kind));
}

std::string generate_eval_steps(providers::ChatProvider* helper, const CriterionDef& criterion,
                                const EvalStepsOptions& options) {
  std::optional<std::filesystem::path> cache_file;
  if (options.cache_dir) cache_file = *options.cache_dir / eval_steps_file_name(criterion);
  if (cache_file && !options.regenerate) {
    if (auto text = read_file(*cache_file)) return strip_final_newline(std::move(*text));
  }
  if (!helper) throw ConfigError(fmt::format("no cached evaluation steps for {} and no helper provider", criterion.name));

  providers::ChatRequest req;
  req.messages = build_eval_steps_request(criterion, options.templates);
  if (!helper->config().supports_system_role) req.messages = merge_system_into_user(req.messages);
  req.temperature = 0.0;
  auto resp = providers::chat_complete(*helper, req);
  std::string steps = resp.samples.front().text;
  if (detail::trim(steps).empty()) throw ProviderError("empty evaluation steps response");
  steps = strip_final_newline(std::move(steps));

  if (cache_file) {
    std::filesystem::create_directories(cache_file->parent_path());
    std::ofstream out(*cache_file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", cache_file->string()));
    out << steps << '\n';
  }
  return steps;
}

void attach_eval_steps(std::vector<CriterionDef>& criteria, const std::optional<std::filesystem::path>& dir) {
  for (auto& c : criteria) {
    auto file = eval_steps_file_name(c);
    std::optional<std::string> text;
    if (dir) text = read_file(*dir / file);
    if (!text) {
      if (auto e = embedded_file("eval_steps/" + file)) text = std::string(*e);
    }
    if (!text) throw ConfigError(fmt::format("no evaluation steps file {}", file));
    c.eval_steps = strip_final_newline(std::move(*text));
  }
}

}  // namespace protoeval::prompts
