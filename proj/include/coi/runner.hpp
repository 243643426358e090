#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coi/assets.hpp"
#include "coi/backend.hpp"
#include "coi/chain.hpp"
#include "coi/extraction.hpp"
#include "coi/metrics.hpp"
#include "coi/transcript.hpp"

namespace coi {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
    std::string model_id;
    std::string provider = "mock";  // "mock" | "openai"
    std::string endpoint;           // base URL for "openai"
    std::string api_key_env = "OPENAI_API_KEY";
    SamplingParams sampling;
    double mock_noise = 0.0;
    int max_retries = 5;
    double requests_per_minute = 0.0;
    double timeout_seconds = 60.0;
};

struct ExperimentConfig {
    std::filesystem::path corpus;
    std::size_t window_size = 10;
    std::vector<MethodId> methods;
    std::vector<ModelConfig> models;
    std::uint64_t global_seed = 0;
    std::size_t fewshot_n = 1;
    double support_fraction = 0.2;
    std::optional<std::filesystem::path> support_path;  // overrides support_fraction
    std::size_t max_in_flight = 1;
    std::optional<std::filesystem::path> cache_dir;
    std::filesystem::path output_dir = "runs/default";
    std::filesystem::path assets_dir;  // empty: default_asset_dir()
    std::optional<std::filesystem::path> template_library;
    std::optional<std::filesystem::path> definitions;
    std::vector<std::string> refusal_phrases;  // empty: defaults
    ExtractionConfig extraction;

    /// Throws ConfigError on empty methods/models, bad fractions and the like.
    void validate() const;
};

/// Reads a JSON config. Relative paths resolve against the config's directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);

// ---------------------------------------------------------------------------
// Support / evaluation split
// ---------------------------------------------------------------------------

struct Split {
    std::vector<Window> support;
    std::vector<Window> eval;
    std::vector<std::string> support_sessions;
    bool floored_to_empty = false;  // fraction > 0 but no whole session fits
};

/// Seeded session-level split: floor(fraction * n_sessions) sessions, chosen
/// by a Fisher-Yates shuffle, contribute all their windows to support.
Split split_support_eval(const std::vector<Window>& windows, double support_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// Label proportions from the study corpus statistics (patient code counts
/// 13,298 / 29,025 / 6,026), in PatientCode order.
inline constexpr std::array<double, 3> kStudyLabelMix = {
    13298.0 / 48349.0, 29025.0 / 48349.0, 6026.0 / 48349.0};

struct SynthParams {
    std::uint64_t seed = 0;
    std::size_t n_sessions = 50;
    std::size_t utterances_per_session = 200;
    std::array<double, 3> label_mix = kStudyLabelMix;  // PatientCode order
    double cue_rate = 1.0;

    void validate() const;
};

/// Alternating therapist/patient sessions. Each patient utterance gets a gold
/// code drawn from label_mix and, with probability cue_rate, a cue phrase
/// consistent with that code.
std::vector<Session> generate_synthetic_corpus(const SynthParams& params, const CueTable& cues);

void write_synthetic_corpus(const std::filesystem::path& out, const SynthParams& params, const CueTable& cues);

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

using BackendFactory =
    std::function<std::shared_ptr<const ChatBackend>(const ModelConfig&, const ExperimentConfig&)>;

/// Mock or HTTP backend per the model config, wrapped in the response cache
/// when cache_dir is set.
std::shared_ptr<const ChatBackend> make_backend(const ModelConfig& model, const ExperimentConfig& config);

struct RunOptions {
    /// Replaces config.methods (the ablation suite uses this).
    std::vector<MethodId> methods;
    /// Base name of the output artifacts: <name>.txt, <name>.jsonl,
    /// <name>.predictions.jsonl, <name>.transcripts.jsonl.
    std::string report_name = "report";
    /// Stop after this many newly completed cells, as if interrupted.
    std::optional<std::size_t> stop_after;
    BackendFactory backend_factory;  // empty: make_backend
};

struct RunResult {
    bool complete = false;
    std::vector<EvalReport> reports;
    FormattedReport formatted;
    std::size_t cells_total = 0;
    std::size_t cells_resumed = 0;
    std::size_t cells_run = 0;
    std::size_t support_windows = 0;
    std::size_t eval_windows = 0;
    std::vector<std::string> warnings;
};

/// Runs every (method, model, eval window) cell not already recorded in
/// <output_dir>/run_state.jsonl, then scores and writes reports once the
/// grid is complete.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// The four CoI variants in ablation-table order.
std::vector<MethodId> ablation_methods();

/// Recomputes reports from <run_dir>/<name>.predictions.jsonl.
FormattedReport report_from_run_dir(const std::filesystem::path& run_dir, const std::string& name = "report");

}  // namespace coi
