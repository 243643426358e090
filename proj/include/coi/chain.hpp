#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coi/backend.hpp"
#include "coi/method.hpp"
#include "coi/random.hpp"
#include "coi/transcript.hpp"

namespace coi {

enum class StageId {
    InteractionDefinition,
    InvolvementAssessment,
    ValenceAnalysis,
    ZeroShotDirect,
    ZeroCoTStep,
    FewShotBlock,
};

/// Library key of the stage ("interaction_definition", "zero_shot", ...).
/// The same name appears in the stage marker line of the default templates.
std::string_view to_string(StageId s) noexcept;

// Runtime placeholders.
inline constexpr std::string_view kWindowTranscript = "window_transcript";
inline constexpr std::string_view kMiscDefinitions = "misc_definitions";
inline constexpr std::string_view kPriorStageOutputs = "prior_stage_outputs";
inline constexpr std::string_view kFewshotExample = "fewshot_example";

// Build-time slot in the valence-analysis template that receives the
// general-sentiment sub-stage (dropped by the w/o VA ablation).
inline constexpr std::string_view kSentimentStep = "sentiment_step";

// Extra library keys besides the stage names.
inline constexpr std::string_view kSystemKey = "system";
inline constexpr std::string_view kGeneralSentimentKey = "general_sentiment";

class MissingTemplate : public Error {
public:
    explicit MissingTemplate(const std::string& key) : Error("missing template '" + key + "'") {}
};

class UnboundPlaceholder : public Error {
public:
    explicit UnboundPlaceholder(std::string name)
        : Error("no binding for placeholder {" + name + "}"), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class InsufficientSupport : public Error {
public:
    using Error::Error;
};

/// Names of every {identifier} occurring in text.
std::set<std::string> placeholders_in(std::string_view text);

struct StageTemplate {
    StageId stage;
    std::string text;

    StageTemplate(StageId s, std::string t) : stage(s), text(std::move(t)) {}

    /// Placeholders that must be bindable for render_stage to succeed.
    std::set<std::string> requires_bindings() const { return placeholders_in(text); }
};

/// Keyed template texts. Loaded from and saved to a JSON object file; the
/// texts survive a save/load cycle byte for byte.
class TemplateLibrary {
public:
    TemplateLibrary() = default;
    explicit TemplateLibrary(std::map<std::string, std::string> entries) : entries_(std::move(entries)) {}

    static TemplateLibrary load(const std::filesystem::path& path);
    static TemplateLibrary from_json(std::string_view text);
    void save(const std::filesystem::path& path) const;
    std::string to_json() const;

    bool contains(std::string_view key) const { return entries_.find(std::string(key)) != entries_.end(); }
    const std::string& get(std::string_view key) const;
    void set(std::string key, std::string text) { entries_[std::move(key)] = std::move(text); }
    const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

    /// Keys every complete library must provide.
    static const std::vector<std::string>& required_keys();

private:
    std::map<std::string, std::string> entries_;
};

struct ChainSpec {
    MethodId method;
    std::vector<StageTemplate> stages;
    std::size_t fewshot_n = 0;
    std::string system_prompt;  // empty: no system message
};

struct ChainOptions {
    std::size_t fewshot_n = 1;
};

/// Assembles the stage list of a method from the library.
ChainSpec build_chain(MethodId method, const TemplateLibrary& library, const ChainOptions& options = {});

struct StageOutput {
    StageId stage;
    std::string text;
};

struct FewShotExample {
    Window window;
    Valence gold;
};

struct ChainContext {
    const Window* window = nullptr;
    std::string_view misc_definitions;
    std::vector<StageOutput> stage_outputs;
    std::vector<FewShotExample> fewshot_examples;  // empty: {fewshot_example} is unbound
};

/// "therapist: ..." / "patient: ..." lines in order.
std::string render_window(const Window& window);
std::string render_prior_outputs(std::span<const StageOutput> outputs);
std::string render_fewshot_examples(std::span<const FewShotExample> examples);

/// Substitutes placeholders in a single pass. Throws UnboundPlaceholder.
std::string render_stage(const StageTemplate& tmpl, const ChainContext& ctx);

/// Throws PreconditionError if any support window is also an eval window.
void check_disjoint(std::span<const Window> support, std::span<const Window> eval);

/// Uniform sample of n windows without replacement. Throws InsufficientSupport.
std::vector<FewShotExample> select_fewshot_examples(std::span<const Window> support, std::size_t n, Rng& rng);

struct ChainTranscript {
    MethodId method = MethodId::CoI;
    WindowId window;
    std::vector<ChatMessage> messages;
    std::string final_text;
    std::string model_id;
    SamplingParams sampling;
    bool cache_hit = false;  // every stage was served from cache
    bool refused = false;
    std::optional<std::size_t> refused_stage;
    std::vector<WindowId> fewshot_windows;

    std::size_t assistant_turns() const;
};

/// What a chain needs besides its spec and window.
struct ChainRuntime {
    const ChatBackend& backend;
    std::string model_id;
    SamplingParams sampling;
    std::string_view misc_definitions;
};

/// Thrown when a stage's completion fails; wraps the backend error.
class StageFailure : public BackendError {
public:
    StageFailure(std::size_t stage_index, const std::string& what)
        : BackendError("stage " + std::to_string(stage_index) + ": " + what), stage_index_(stage_index) {}
    std::size_t stage_index() const noexcept { return stage_index_; }

private:
    std::size_t stage_index_;
};

/// Runs the stages in order as one growing conversation. Stops at the first
/// refusal.
ChainTranscript run_chain(const ChainSpec& spec, const Window& window, const ChainRuntime& runtime,
                          std::span<const Window> support, Rng& rng);

}  // namespace coi
