#include "coi/runner.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "coi/random.hpp"

namespace coi {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("config lists no methods");
    if (models.empty()) throw ConfigError("config lists no models");
    if (window_size == 0) throw ConfigError("window_size must be positive");
    if (!support_path && !(support_fraction >= 0.0 && support_fraction < 1.0)) {
        throw ConfigError("support_fraction must lie in [0, 1)");
    }
    if (max_in_flight == 0) throw ConfigError("max_in_flight must be positive");
    std::set<std::string> ids;
    for (const auto& m : models) {
        if (m.model_id.empty()) throw ConfigError("model without model_id");
        if (!ids.insert(m.model_id).second) throw ConfigError("duplicate model_id " + m.model_id);
        if (m.provider != "mock" && m.provider != "openai") {
            throw ConfigError("unknown provider '" + m.provider + "' for " + m.model_id);
        }
        if (m.provider == "openai" && m.endpoint.empty()) throw ConfigError("no endpoint for " + m.model_id);
        if (!(m.mock_noise >= 0.0 && m.mock_noise <= 1.0)) throw ConfigError("mock_noise must lie in [0, 1]");
        m.sampling.validate();
    }
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

SamplingParams parse_sampling(const json& j) {
    reject_unknown_keys(j, {"strategy", "temperature", "top_p", "max_tokens"}, "sampling");
    const std::string strategy = j.value("strategy", std::string("greedy"));
    SamplingParams s;
    if (strategy == "greedy") {
        s = SamplingParams::greedy();
    } else if (strategy == "nucleus") {
        s = SamplingParams::nucleus();
    } else {
        throw ConfigError("unknown sampling strategy '" + strategy + "'");
    }
    s.temperature = j.value("temperature", s.temperature);
    s.top_p = j.value("top_p", s.top_p);
    s.max_tokens = j.value("max_tokens", s.max_tokens);
    return s;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
    const json j = json::parse(text, nullptr, false);
    if (!j.is_object()) throw ConfigError("config is not a JSON object");

    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };

    ExperimentConfig c;
    try {
        reject_unknown_keys(j,
                            {"corpus", "window_size", "methods", "models", "global_seed", "fewshot_n",
                             "support_fraction", "support_set", "max_in_flight", "cache_dir", "output_dir",
                             "assets_dir", "template_library", "definitions", "refusal_phrases", "extraction"},
                            "config");
        c.corpus = resolve(j.at("corpus").get<std::string>());
        c.window_size = j.value("window_size", c.window_size);
        for (const auto& m : j.at("methods")) c.methods.push_back(parse_method_id(m.get<std::string>()));
        for (const auto& m : j.at("models")) {
            reject_unknown_keys(m,
                                {"model_id", "provider", "endpoint", "api_key_env", "sampling", "mock_noise",
                                 "max_retries", "requests_per_minute", "timeout_seconds"},
                                "model");
            ModelConfig mc;
            mc.model_id = m.at("model_id").get<std::string>();
            mc.provider = m.value("provider", mc.provider);
            mc.endpoint = m.value("endpoint", mc.endpoint);
            mc.api_key_env = m.value("api_key_env", mc.api_key_env);
            if (m.contains("sampling")) mc.sampling = parse_sampling(m["sampling"]);
            mc.mock_noise = m.value("mock_noise", mc.mock_noise);
            mc.max_retries = m.value("max_retries", mc.max_retries);
            mc.requests_per_minute = m.value("requests_per_minute", mc.requests_per_minute);
            mc.timeout_seconds = m.value("timeout_seconds", mc.timeout_seconds);
            c.models.push_back(std::move(mc));
        }
        c.global_seed = j.value("global_seed", c.global_seed);
        c.fewshot_n = j.value("fewshot_n", c.fewshot_n);
        c.support_fraction = j.value("support_fraction", c.support_fraction);
        if (j.contains("support_set")) c.support_path = resolve(j["support_set"].get<std::string>());
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        if (j.contains("cache_dir")) c.cache_dir = resolve(j["cache_dir"].get<std::string>());
        c.output_dir = resolve(j.value("output_dir", c.output_dir.string()));
        if (j.contains("assets_dir")) c.assets_dir = resolve(j["assets_dir"].get<std::string>());
        if (j.contains("template_library")) c.template_library = resolve(j["template_library"].get<std::string>());
        if (j.contains("definitions")) c.definitions = resolve(j["definitions"].get<std::string>());
        if (j.contains("refusal_phrases")) c.refusal_phrases = j["refusal_phrases"].get<std::vector<std::string>>();
        if (j.contains("extraction")) {
            const json& e = j["extraction"];
            reject_unknown_keys(e, {"accept_code_names", "extra_synonyms"}, "extraction");
            c.extraction.accept_code_names = e.value("accept_code_names", true);
            if (e.contains("extra_synonyms")) {
                for (const auto& [phrase, label] : e["extra_synonyms"].items()) {
                    c.extraction.extra_synonyms.emplace_back(phrase, parse_valence(label.get<std::string>()));
                }
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    } catch (const UnrecognizedLabel& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

Split split_support_eval(const std::vector<Window>& windows, double support_fraction, std::uint64_t seed) {
    if (!(support_fraction >= 0.0 && support_fraction < 1.0)) {
        throw PreconditionError("support_fraction must lie in [0, 1)");
    }
    std::vector<std::string> sessions;
    std::unordered_set<std::string> seen;
    for (const auto& w : windows) {
        if (seen.insert(w.id.session_id).second) sessions.push_back(w.id.session_id);
    }

    Rng rng(seed);
    for (std::size_t i = sessions.size(); i > 1; --i) {
        std::swap(sessions[i - 1], sessions[static_cast<std::size_t>(rng.below(i))]);
    }
    const auto n_support =
        static_cast<std::size_t>(std::floor(support_fraction * static_cast<double>(sessions.size())));

    Split out;
    out.support_sessions.assign(sessions.begin(), sessions.begin() + static_cast<std::ptrdiff_t>(n_support));
    out.floored_to_empty = support_fraction > 0.0 && n_support == 0;
    const std::unordered_set<std::string> chosen(out.support_sessions.begin(), out.support_sessions.end());
    for (const auto& w : windows) {
        (chosen.count(w.id.session_id) ? out.support : out.eval).push_back(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

std::shared_ptr<const ChatBackend> make_backend(const ModelConfig& model, const ExperimentConfig& config) {
    std::shared_ptr<ChatBackend> backend;
    if (model.provider == "mock") {
        backend = std::make_shared<MockBackend>(MockOptions{model.mock_noise, derive_seed(config.global_seed, "mock-noise")});
    } else {
        HttpOptions opts;
        opts.base_url = model.endpoint;
        if (const char* key = std::getenv(model.api_key_env.c_str())) opts.api_key = key;
        opts.max_retries = model.max_retries;
        opts.requests_per_minute = model.requests_per_minute;
        opts.timeout = std::chrono::milliseconds(static_cast<long long>(model.timeout_seconds * 1000.0));
        opts.max_in_flight = static_cast<int>(config.max_in_flight);
        backend = std::make_shared<HttpBackend>(std::move(opts));
    }
    if (config.cache_dir) {
        backend = std::make_shared<CachingBackend>(std::move(backend), std::make_shared<ResponseCache>(*config.cache_dir));
    }
    if (!config.refusal_phrases.empty()) backend->set_refusal_phrases(config.refusal_phrases);
    return backend;
}

std::vector<MethodId> ablation_methods() {
    return {MethodId::CoI_wo_ID, MethodId::CoI_wo_IA, MethodId::CoI_wo_VA, MethodId::CoI};
}

// ---------------------------------------------------------------------------
// Run state
// ---------------------------------------------------------------------------

namespace {

std::string cell_key(MethodId method, const std::string& model, const WindowId& w) {
    return std::string(to_string(method)) + "|" + model + "|" + w.to_string();
}

json transcript_json(const ChainTranscript& t) {
    json messages = json::array();
    for (const auto& m : t.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    json fewshot = json::array();
    for (const auto& w : t.fewshot_windows) fewshot.push_back(w.to_string());
    return {
        {"method", to_string(t.method)},
        {"model", t.model_id},
        {"session_id", t.window.session_id},
        {"window_index", t.window.window_index},
        {"messages", std::move(messages)},
        {"final_text", t.final_text},
        {"sampling",
         {{"strategy", to_string(t.sampling.strategy)},
          {"temperature", t.sampling.effective_temperature()},
          {"top_p", t.sampling.top_p},
          {"max_tokens", t.sampling.max_tokens}}},
        {"refused", t.refused},
        {"refused_stage", t.refused_stage ? json(*t.refused_stage) : json(nullptr)},
        {"fewshot_windows", std::move(fewshot)},
        {"cache_hit", t.cache_hit},
    };
}

struct CellResult {
    PredictionRecord record;
    std::string transcript_line;
};

/// Append-only log of completed cells. One JSON object per line; a torn
/// final line is ignored and sealed off on open.
class RunState {
public:
    explicit RunState(fs::path file) : file_(std::move(file)) {
        std::ifstream in(file_);
        std::string line;
        while (std::getline(in, line)) {
            const json j = json::parse(line, nullptr, false);
            if (!j.is_object() || !j.contains("key") || !j.contains("record") || !j.contains("transcript")) continue;
            try {
                CellResult c{parse_record(j["record"].dump()), j["transcript"].dump()};
                cells_.emplace(j["key"].get<std::string>(), std::move(c));
            } catch (const Error&) {
                continue;
            }
        }
        in.close();
        terminate_torn_line(file_);
        out_.open(file_, std::ios::app | std::ios::binary);
        if (!out_) throw IoError("cannot append to " + file_.string());
    }

    bool done(const std::string& key) const {
        std::lock_guard lock(mutex_);
        return cells_.count(key) > 0;
    }

    void record(const std::string& key, const PredictionRecord& r, const ChainTranscript& t) {
        json line = {{"key", key}, {"record", json::parse(to_record(r))}, {"transcript", transcript_json(t)}};
        std::lock_guard lock(mutex_);
        out_ << line.dump() << '\n';
        out_.flush();
        cells_.emplace(key, CellResult{r, line["transcript"].dump()});
    }

    const CellResult& get(const std::string& key) const { return cells_.at(key); }

private:
    fs::path file_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, CellResult> cells_;
    std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

std::vector<Window> windows_of(const fs::path& corpus, std::size_t window_size, std::vector<std::string>& warnings) {
    const ParsedCorpus parsed = parse_corpus(corpus);
    if (parsed.rejected_count() > 0) {
        warnings.push_back(std::to_string(parsed.rejected_count()) + " session(s) rejected in " + corpus.string());
    }
    if (parsed.sessions.empty()) throw ConfigError("no accepted sessions in " + corpus.string());
    std::size_t skipped = 0;
    auto windows = segment_corpus(parsed.sessions, window_size, &skipped);
    if (skipped > 0) warnings.push_back(std::to_string(skipped) + " window group(s) without a gold patient code skipped");
    return windows;
}

struct Cell {
    std::size_t method_index;
    std::size_t model_index;
    std::size_t window_index;
    std::string key;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    config.validate();
    RunResult result;
    const std::vector<MethodId> methods = options.methods.empty() ? config.methods : options.methods;

    // Assets and chains.
    const fs::path asset_dir = config.assets_dir.empty() ? default_asset_dir() : config.assets_dir;
    Assets assets = load_assets(asset_dir);
    if (config.template_library) assets.templates = TemplateLibrary::load(*config.template_library);
    if (config.definitions) {
        std::ifstream in(*config.definitions, std::ios::binary);
        if (!in) throw IoError("cannot open definitions " + config.definitions->string());
        std::ostringstream ss;
        ss << in.rdbuf();
        assets.misc_definitions = ss.str();
    }
    std::vector<ChainSpec> chains;
    for (MethodId m : methods) chains.push_back(build_chain(m, assets.templates, {config.fewshot_n}));

    // Windows and split.
    std::vector<Window> windows = windows_of(config.corpus, config.window_size, result.warnings);
    Split split;
    if (config.support_path) {
        split.support = windows_of(*config.support_path, config.window_size, result.warnings);
        split.eval = std::move(windows);
    } else {
        split = split_support_eval(windows, config.support_fraction, derive_seed(config.global_seed, "split"));
        if (split.floored_to_empty) {
            result.warnings.push_back("support_fraction selects no whole session; support set is empty");
        }
    }
    check_disjoint(split.support, split.eval);
    result.support_windows = split.support.size();
    result.eval_windows = split.eval.size();
    for (const auto& c : chains) {
        if (c.fewshot_n > split.support.size()) {
            throw InsufficientSupport(std::string(display_name(c.method)) + " needs " + std::to_string(c.fewshot_n) +
                                      " support window(s), have " + std::to_string(split.support.size()));
        }
    }

    // Backends.
    std::vector<std::shared_ptr<const ChatBackend>> backends;
    for (const auto& m : config.models) {
        backends.push_back(options.backend_factory ? options.backend_factory(m, config) : make_backend(m, config));
    }

    // Pending cells.
    fs::create_directories(config.output_dir);
    RunState state(config.output_dir / "run_state.jsonl");
    std::vector<Cell> all;
    std::vector<Cell> pending;
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
        for (std::size_t ci = 0; ci < config.models.size(); ++ci)
            for (std::size_t wi = 0; wi < split.eval.size(); ++wi) {
                Cell c{mi, ci, wi, cell_key(methods[mi], config.models[ci].model_id, split.eval[wi].id)};
                if (!state.done(c.key)) pending.push_back(c);
                all.push_back(std::move(c));
            }
    result.cells_total = all.size();
    result.cells_resumed = all.size() - pending.size();

    const std::uint64_t fewshot_seed = derive_seed(config.global_seed, "fewshot");
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> finished{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            if (failed) return;
            const std::size_t i = next++;
            if (i >= pending.size()) return;
            if (options.stop_after && i >= *options.stop_after) return;
            const Cell& cell = pending[i];
            const Window& window = split.eval[cell.window_index];
            const ModelConfig& model = config.models[cell.model_index];
            try {
                Rng rng(mix64(fewshot_seed ^ fnv1a64(window.id.to_string())));
                const ChainRuntime runtime{*backends[cell.model_index], model.model_id, model.sampling,
                                           assets.misc_definitions};
                const ChainTranscript t = run_chain(chains[cell.method_index], window, runtime, split.support, rng);
                const PredictionRecord r = make_prediction(t, window.gold_label, config.global_seed, config.extraction);
                state.record(cell.key, r, t);
                ++finished;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
                return;
            }
        }
    };

    const std::size_t n_threads = std::min(config.max_in_flight, std::max<std::size_t>(pending.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
    result.cells_run = finished;
    if (result.cells_resumed + result.cells_run < result.cells_total) return result;

    // Aggregate in canonical order so reports do not depend on scheduling.
    std::map<WindowId, PatientCode> golds;
    for (const auto& w : split.eval) golds.emplace(w.id, w.gold_label);
    std::string predictions_text;
    std::string transcripts_text;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        for (std::size_t ci = 0; ci < config.models.size(); ++ci) {
            std::vector<PredictionRecord> records;
            for (const auto& w : split.eval) {
                const CellResult& c = state.get(cell_key(methods[mi], config.models[ci].model_id, w.id));
                records.push_back(c.record);
                predictions_text += to_record(c.record) + "\n";
                transcripts_text += c.transcript_line + "\n";
            }
            EvalReport report = score(records, golds);
            report.method = methods[mi];
            report.model_id = config.models[ci].model_id;
            result.reports.push_back(std::move(report));
        }
    }
    result.formatted = format_report(result.reports);
    result.complete = true;

    const fs::path base = config.output_dir / options.report_name;
    write_text(fs::path(base.string() + ".txt"), result.formatted.table);
    write_text(fs::path(base.string() + ".jsonl"), result.formatted.records);
    write_text(fs::path(base.string() + ".predictions.jsonl"), predictions_text);
    write_text(fs::path(base.string() + ".transcripts.jsonl"), transcripts_text);
    return result;
}

FormattedReport report_from_run_dir(const fs::path& run_dir, const std::string& name) {
    const fs::path path = run_dir / (name + ".predictions.jsonl");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            records.push_back(parse_record(line));
        } catch (const FormatError& e) {
            throw FormatError(line_number, e.reason());
        }
    }
    const auto reports = score_grouped(records);
    return format_report(reports);
}

}  // namespace coi
