#include "coi/chain.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace coi {

using json = nlohmann::json;

std::string_view to_string(StageId s) noexcept {
    switch (s) {
        case StageId::InteractionDefinition: return "interaction_definition";
        case StageId::InvolvementAssessment: return "involvement_assessment";
        case StageId::ValenceAnalysis: return "valence_analysis";
        case StageId::ZeroShotDirect: return "zero_shot";
        case StageId::ZeroCoTStep: return "zero_cot";
        case StageId::FewShotBlock: break;
    }
    return "few_shot";
}

namespace {

bool ident_char(char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
           c == '_';
}

// Calls on_text for literal runs and on_placeholder for each {identifier}.
template <typename OnText, typename OnPlaceholder>
void scan_template(std::string_view text, OnText on_text, OnPlaceholder on_placeholder) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find('{', pos);
        if (open == std::string_view::npos) break;
        auto close = open + 1;
        while (close < text.size() && ident_char(text[close])) ++close;
        if (close < text.size() && text[close] == '}' && close > open + 1) {
            on_text(text.substr(pos, open - pos));
            on_placeholder(text.substr(open + 1, close - open - 1));
            pos = close + 1;
        } else {
            on_text(text.substr(pos, open + 1 - pos));
            pos = open + 1;
        }
    }
    on_text(text.substr(std::min(pos, text.size())));
}

std::string collapse_blank_runs(std::string s) {
    std::string out;
    out.reserve(s.size());
    std::size_t newlines = 0;
    for (char c : s) {
        newlines = c == '\n' ? newlines + 1 : 0;
        if (newlines <= 2) out.push_back(c);
    }
    return out;
}

}  // namespace

std::set<std::string> placeholders_in(std::string_view text) {
    std::set<std::string> out;
    scan_template(text, [](std::string_view) {}, [&](std::string_view name) { out.emplace(name); });
    return out;
}

// ---------------------------------------------------------------------------

TemplateLibrary TemplateLibrary::from_json(std::string_view text) {
    const json j = json::parse(text, nullptr, false);
    if (!j.is_object()) throw ConfigError("template library must be a JSON object of strings");
    std::map<std::string, std::string> entries;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_string()) throw ConfigError("template '" + key + "' is not a string");
        entries.emplace(key, value.get<std::string>());
    }
    return TemplateLibrary(std::move(entries));
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template library " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string TemplateLibrary::to_json() const {
    json j = json::object();
    for (const auto& [k, v] : entries_) j[k] = v;
    return j.dump(2) + "\n";
}

void TemplateLibrary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write template library " + path.string());
    out << to_json();
}

const std::string& TemplateLibrary::get(std::string_view key) const {
    const auto it = entries_.find(std::string(key));
    if (it == entries_.end()) throw MissingTemplate(std::string(key));
    return it->second;
}

const std::vector<std::string>& TemplateLibrary::required_keys() {
    static const std::vector<std::string> keys = {
        std::string(to_string(StageId::InteractionDefinition)),
        std::string(to_string(StageId::InvolvementAssessment)),
        std::string(to_string(StageId::ValenceAnalysis)),
        std::string(kGeneralSentimentKey),
        std::string(to_string(StageId::ZeroShotDirect)),
        std::string(to_string(StageId::ZeroCoTStep)),
        std::string(to_string(StageId::FewShotBlock)),
    };
    return keys;
}

// ---------------------------------------------------------------------------

namespace {

StageTemplate stage_from(const TemplateLibrary& lib, StageId id) {
    return StageTemplate(id, lib.get(to_string(id)));
}

StageTemplate valence_stage(const TemplateLibrary& lib, bool with_sentiment) {
    const std::string& base = lib.get(to_string(StageId::ValenceAnalysis));
    const std::string slot = "{" + std::string(kSentimentStep) + "}";
    const auto at = base.find(slot);
    if (at == std::string::npos) {
        throw ConfigError("valence_analysis template lacks the " + slot + " slot");
    }
    std::string text = base;
    text.replace(at, slot.size(), with_sentiment ? lib.get(kGeneralSentimentKey) : std::string());
    if (!with_sentiment) text = collapse_blank_runs(std::move(text));
    return StageTemplate(StageId::ValenceAnalysis, std::move(text));
}

}  // namespace

ChainSpec build_chain(MethodId method, const TemplateLibrary& lib, const ChainOptions& options) {
    ChainSpec spec{method, {}, 0, lib.contains(kSystemKey) ? lib.get(kSystemKey) : std::string()};
    using S = StageId;
    switch (method) {
        case MethodId::CoI:
            spec.stages = {stage_from(lib, S::InteractionDefinition), stage_from(lib, S::InvolvementAssessment),
                           valence_stage(lib, true)};
            break;
        case MethodId::CoI_wo_ID:
            spec.stages = {stage_from(lib, S::InvolvementAssessment), valence_stage(lib, true)};
            break;
        case MethodId::CoI_wo_IA:
            spec.stages = {stage_from(lib, S::InteractionDefinition), valence_stage(lib, true)};
            break;
        case MethodId::CoI_wo_VA:
            spec.stages = {stage_from(lib, S::InteractionDefinition), stage_from(lib, S::InvolvementAssessment),
                           valence_stage(lib, false)};
            break;
        case MethodId::ZeroShot:
            spec.stages = {stage_from(lib, S::ZeroShotDirect)};
            break;
        case MethodId::ZeroCoT:
            spec.stages = {stage_from(lib, S::ZeroCoTStep)};
            break;
        case MethodId::FewShot:
            if (options.fewshot_n == 0) throw ConfigError("few-shot prompting needs fewshot_n >= 1");
            spec.stages = {stage_from(lib, S::FewShotBlock)};
            spec.fewshot_n = options.fewshot_n;
            break;
    }
    return spec;
}

// ---------------------------------------------------------------------------

std::string render_window(const Window& window) {
    std::string out;
    for (const auto& u : window.utterances) {
        if (!out.empty()) out.push_back('\n');
        out += to_string(u.speaker);
        out += ": ";
        out += u.text;
    }
    return out;
}

std::string render_prior_outputs(std::span<const StageOutput> outputs) {
    if (outputs.empty()) return "(none)";
    std::string out;
    for (const auto& o : outputs) {
        if (!out.empty()) out += "\n\n";
        out += "[";
        out += to_string(o.stage);
        out += " output]\n";
        out += o.text;
    }
    return out;
}

std::string render_fewshot_examples(std::span<const FewShotExample> examples) {
    std::string out;
    for (const auto& e : examples) {
        if (!out.empty()) out += "\n\n";
        out += render_window(e.window);
        out += "\ngold valence: ";
        out += to_string(e.gold);
    }
    return out;
}

std::string render_stage(const StageTemplate& tmpl, const ChainContext& ctx) {
    std::string out;
    out.reserve(tmpl.text.size() + 1024);
    scan_template(
        tmpl.text, [&](std::string_view lit) { out += lit; },
        [&](std::string_view name) {
            if (name == kWindowTranscript && ctx.window) {
                out += render_window(*ctx.window);
            } else if (name == kMiscDefinitions && !ctx.misc_definitions.empty()) {
                out += ctx.misc_definitions;
            } else if (name == kPriorStageOutputs) {
                out += render_prior_outputs(ctx.stage_outputs);
            } else if (name == kFewshotExample && !ctx.fewshot_examples.empty()) {
                out += render_fewshot_examples(ctx.fewshot_examples);
            } else {
                throw UnboundPlaceholder(std::string(name));
            }
        });
    return out;
}

// ---------------------------------------------------------------------------

void check_disjoint(std::span<const Window> support, std::span<const Window> eval) {
    std::unordered_set<WindowId> eval_ids;
    for (const auto& w : eval) eval_ids.insert(w.id);
    for (const auto& w : support) {
        if (eval_ids.count(w.id)) {
            throw PreconditionError("support window " + w.id.to_string() + " is also an evaluation window");
        }
    }
}

std::vector<FewShotExample> select_fewshot_examples(std::span<const Window> support, std::size_t n, Rng& rng) {
    if (n == 0) return {};
    if (support.size() < n) {
        throw InsufficientSupport("need " + std::to_string(n) + " support windows, have " +
                                  std::to_string(support.size()));
    }
    // Partial Fisher-Yates over indices.
    std::vector<std::size_t> idx(support.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<FewShotExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
        const Window& w = support[idx[i]];
        out.push_back({w, valence_of(w.gold_label)});
    }
    return out;
}

std::size_t ChainTranscript::assistant_turns() const {
    return static_cast<std::size_t>(std::count_if(messages.begin(), messages.end(),
                                                  [](const ChatMessage& m) { return m.role == Role::Assistant; }));
}

ChainTranscript run_chain(const ChainSpec& spec, const Window& window, const ChainRuntime& runtime,
                          std::span<const Window> support, Rng& rng) {
    ChainTranscript t;
    t.method = spec.method;
    t.window = window.id;
    t.model_id = runtime.model_id;
    t.sampling = runtime.sampling;

    ChainContext ctx;
    ctx.window = &window;
    ctx.misc_definitions = runtime.misc_definitions;
    ctx.fewshot_examples = select_fewshot_examples(support, spec.fewshot_n, rng);
    for (const auto& e : ctx.fewshot_examples) t.fewshot_windows.push_back(e.window.id);

    if (!spec.system_prompt.empty()) t.messages.push_back({Role::System, spec.system_prompt});

    bool all_hits = !spec.stages.empty();
    for (std::size_t i = 0; i < spec.stages.size(); ++i) {
        t.messages.push_back({Role::User, render_stage(spec.stages[i], ctx)});
        CompletionResponse resp;
        try {
            resp = runtime.backend.complete({runtime.model_id, t.messages, runtime.sampling});
        } catch (const BackendError& e) {
            throw StageFailure(i, e.what());
        }
        all_hits = all_hits && resp.cache_hit;
        t.messages.push_back({Role::Assistant, resp.text});
        ctx.stage_outputs.push_back({spec.stages[i].stage, std::move(resp.text)});
        if (resp.refusal) {
            t.refused = true;
            t.refused_stage = i;
            break;
        }
    }
    t.cache_hit = all_hits;
    if (!t.messages.empty() && t.messages.back().role == Role::Assistant) t.final_text = t.messages.back().content;
    return t;
}

}  // namespace coi
