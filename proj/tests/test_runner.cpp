#include <doctest.h>

#include <atomic>
#include <set>

#include <nlohmann/json.hpp>

#include "coi/runner.hpp"
#include "support.hpp"

using namespace coi;
namespace fs = std::filesystem;

namespace {

const CueTable& cues() {
    static const CueTable t = load_assets(default_asset_dir()).cues;
    return t;
}

struct Fixture {
    fs::path dir = testing::temp_dir("runner");
    ~Fixture() { fs::remove_all(dir); }

    ExperimentConfig config(std::size_t sessions = 12, double noise = 0.0) {
        SynthParams p;
        p.seed = 17;
        p.n_sessions = sessions;
        p.utterances_per_session = 40;
        write_synthetic_corpus(dir / "corpus.jsonl", p, cues());
        ExperimentConfig c;
        c.corpus = dir / "corpus.jsonl";
        c.methods = {MethodId::ZeroShot, MethodId::FewShot, MethodId::ZeroCoT, MethodId::CoI};
        ModelConfig m;
        m.model_id = "mock-a";
        m.mock_noise = noise;
        c.models = {m};
        c.global_seed = 3;
        c.support_fraction = 0.25;
        c.output_dir = dir / "out";
        return c;
    }
};

std::vector<Window> windows_for(std::size_t sessions, std::size_t per_session) {
    std::vector<Window> out;
    for (std::size_t s = 0; s < sessions; ++s)
        for (std::size_t w = 0; w < per_session; ++w)
            out.push_back(testing::window_of("s" + std::to_string(s), w, {}, PatientCode::FollowNeutral));
    return out;
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("config parsing") {
    const fs::path base = "/cfg";
    const auto c = parse_config(R"({"corpus":"data/c.jsonl","methods":["CoI","zero_shot"],
        "models":[{"model_id":"m","mock_noise":0.1,"sampling":{"strategy":"nucleus","top_p":0.9}}],
        "global_seed":5,"cache_dir":"cache","extraction":{"extra_synonyms":{"upbeat":"positive"}}})", base);
    CHECK(c.corpus == base / "data/c.jsonl");
    CHECK(c.methods == std::vector<MethodId>{MethodId::CoI, MethodId::ZeroShot});
    CHECK(c.models[0].mock_noise == 0.1);
    CHECK(c.models[0].sampling.strategy == SamplingStrategy::Nucleus);
    CHECK(c.models[0].sampling.top_p == 0.9);
    CHECK(c.global_seed == 5);
    CHECK(*c.cache_dir == base / "cache");
    CHECK(c.output_dir == base / "runs/default");
    CHECK(c.window_size == 10);
    CHECK(c.fewshot_n == 1);
    REQUIRE(c.extraction.extra_synonyms.size() == 1);

    const std::string ok_models = R"("models":[{"model_id":"m"}])";
    CHECK_THROWS_AS(parse_config("[]", base), ConfigError);
    CHECK_THROWS_AS(parse_config("not json", base), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"methods":["coi"],)" + ok_models + "}", base), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":[],)" + ok_models + "}", base), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"models":[]})", base), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["magic"],)" + ok_models + "}", base), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"typo":1,)" + ok_models + "}", base), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"support_fraction":1.0,)" + ok_models + "}", base),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"models":[{"model_id":"m"},{"model_id":"m"}]})", base),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"models":[{"model_id":"m","provider":"openai"}]})", base),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"models":[{"model_id":"m","mock_noise":2}]})", base),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus":"c","methods":["coi"],"window_size":0,)" + ok_models + "}", base),
                    ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), IoError);
}

TEST_CASE("split examples") {
    SUBCASE("10 sessions at 0.2 -> 2 sessions") {
        const auto ws = windows_for(10, 3);
        const auto sp = split_support_eval(ws, 0.2, 99);
        CHECK(sp.support_sessions.size() == 2);
        CHECK(sp.support.size() == 6);
        CHECK(sp.eval.size() == 24);
        CHECK_FALSE(sp.floored_to_empty);

        // oracle: seeded Fisher-Yates over sessions in order of first appearance
        std::vector<std::string> order;
        for (int i = 0; i < 10; ++i) order.push_back("s" + std::to_string(i));
        Rng rng(99);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        CHECK(sp.support_sessions == std::vector<std::string>(order.begin(), order.begin() + 2));
        CHECK(split_support_eval(ws, 0.2, 99).support_sessions == sp.support_sessions);
    }
    SUBCASE("fraction 0") {
        const auto sp = split_support_eval(windows_for(4, 2), 0.0, 1);
        CHECK(sp.support.empty());
        CHECK(sp.eval.size() == 8);
        CHECK_FALSE(sp.floored_to_empty);
    }
    SUBCASE("one session at 0.5 floors to empty") {
        const auto sp = split_support_eval(windows_for(1, 5), 0.5, 1);
        CHECK(sp.support.empty());
        CHECK(sp.floored_to_empty);
    }
    SUBCASE("bad fraction") { CHECK_THROWS_AS(split_support_eval(windows_for(2, 1), 1.0, 1), PreconditionError); }
    SUBCASE("session level and disjoint") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto sp = split_support_eval(windows_for(13, 4), 0.3, seed);
            std::set<std::string> s, e;
            for (const auto& w : sp.support) s.insert(w.id.session_id);
            for (const auto& w : sp.eval) e.insert(w.id.session_id);
            for (const auto& id : s) CHECK(e.count(id) == 0);
            CHECK(s.size() == 3);
            CHECK(sp.support.size() + sp.eval.size() == 52);
        }
    }
}

TEST_CASE("synthetic corpus") {
    SynthParams p;
    p.seed = 1;
    p.n_sessions = 3;
    p.utterances_per_session = 11;
    const auto a = generate_synthetic_corpus(p, cues());
    const auto b = generate_synthetic_corpus(p, cues());
    REQUIRE(a.size() == 3);
    std::ostringstream sa, sb;
    write_corpus(sa, a);
    write_corpus(sb, b);
    CHECK(sa.str() == sb.str());
    for (const auto& s : a) {
        CHECK(s.utterances.size() == 11);
        for (std::size_t i = 0; i < s.utterances.size(); ++i) {
            const auto& u = s.utterances[i];
            CHECK(u.speaker == (i % 2 == 0 ? Speaker::Therapist : Speaker::Patient));
            if (u.speaker == Speaker::Patient) {
                REQUIRE(u.gold_patient_code.has_value());
                // cue_rate 1: the utterance carries a cue of its own code
                bool found = false;
                for (const auto* e : cues().entries_for(*u.gold_patient_code))
                    found = found || u.text.find(e->cue_text) != std::string::npos;
                CHECK(found);
            }
        }
    }

    p.seed = 2;
    std::ostringstream sc;
    write_corpus(sc, generate_synthetic_corpus(p, cues()));
    CHECK(sc.str() != sa.str());

    const Fixture f;
    SynthParams zero;
    zero.n_sessions = 0;
    write_synthetic_corpus(f.dir / "empty.jsonl", zero, cues());
    CHECK(fs::exists(f.dir / "empty.jsonl"));
    CHECK(fs::file_size(f.dir / "empty.jsonl") == 0);

    SynthParams bad;
    bad.label_mix = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.label_mix = {0.274, 0.598, 0.124};
    CHECK_NOTHROW(bad.validate());
    bad.cue_rate = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("synthetic corpus parses back cleanly") {
    const Fixture f;
    SynthParams p;
    p.n_sessions = 5;
    p.utterances_per_session = 31;
    p.cue_rate = 0.5;
    write_synthetic_corpus(f.dir / "c.jsonl", p, cues());
    const auto pc = parse_corpus(f.dir / "c.jsonl");
    CHECK(pc.sessions.size() == 5);
    CHECK(pc.rejected_count() == 0);
}

TEST_CASE("full grid with the mock backend") {
    Fixture f;
    auto c = f.config();
    c.max_in_flight = 3;
    const auto r = run_experiment(c);
    REQUIRE(r.complete);
    CHECK(r.reports.size() == 4);
    CHECK(r.cells_total == 4 * r.eval_windows);
    CHECK(r.cells_run == r.cells_total);
    CHECK(r.support_windows > 0);
    for (const auto& rep : r.reports) {
        CHECK(rep.n_scored == r.eval_windows);
        CHECK(*rep.micro_f1 == 1.0);
        CHECK(*rep.macro_f1 == 1.0);
    }
    for (const char* suffix : {".txt", ".jsonl", ".predictions.jsonl", ".transcripts.jsonl"})
        CHECK(fs::exists(c.output_dir / (std::string("report") + suffix)));

    // one prediction per (method, model, window)
    std::set<std::string> keys;
    std::set<WindowId> eval_ids;
    std::ifstream in(c.output_dir / "report.predictions.jsonl");
    std::size_t n = 0;
    for (std::string line; std::getline(in, line); ++n) {
        const auto rec = parse_record(line);
        keys.insert(std::string(to_string(rec.method)) + rec.window.to_string());
        eval_ids.insert(rec.window);
    }
    CHECK(n == r.cells_total);
    CHECK(keys.size() == n);

    // leakage guard: no few-shot example is an evaluation window
    std::ifstream tin(c.output_dir / "report.transcripts.jsonl");
    std::size_t fewshot_seen = 0;
    for (std::string line; std::getline(tin, line);) {
        const auto j = nlohmann::json::parse(line);
        if (!j.contains("fewshot_windows")) continue;
        for (const auto& id : j["fewshot_windows"]) {
            ++fewshot_seen;
            const std::string s = id.get<std::string>();
            for (const auto& e : eval_ids) CHECK(e.to_string() != s);
        }
    }
    CHECK(fewshot_seen == r.eval_windows);

    // the report command re-derives the same table
    CHECK(report_from_run_dir(c.output_dir).table == r.formatted.table);

    // a second run resumes everything
    const auto again = run_experiment(c);
    CHECK(again.cells_resumed == again.cells_total);
    CHECK(again.cells_run == 0);
    CHECK(again.formatted.table == r.formatted.table);
}

TEST_CASE("interrupted run resumes to identical artifacts, torn line included") {
    Fixture f;
    auto c = f.config(10, 0.3);
    c.output_dir = f.dir / "straight";
    REQUIRE(run_experiment(c).complete);
    const auto expected_table = testing::slurp(c.output_dir / "report.txt");
    const auto expected_preds = testing::slurp(c.output_dir / "report.predictions.jsonl");
    const auto expected_trans = testing::slurp(c.output_dir / "report.transcripts.jsonl");

    c.output_dir = f.dir / "interrupted";
    c.max_in_flight = 2;
    RunOptions stop;
    stop.stop_after = 7;
    const auto partial = run_experiment(c, stop);
    CHECK_FALSE(partial.complete);
    CHECK(partial.cells_run == 7);
    CHECK_FALSE(fs::exists(c.output_dir / "report.txt"));
    {
        std::ofstream torn(c.output_dir / "run_state.jsonl", std::ios::app | std::ios::binary);
        torn << "{\"key\":\"coi|mock-a|synth";
    }
    const auto resumed = run_experiment(c);
    CHECK(resumed.complete);
    CHECK(resumed.cells_resumed == 7);
    CHECK(testing::slurp(c.output_dir / "report.txt") == expected_table);
    CHECK(testing::slurp(c.output_dir / "report.predictions.jsonl") == expected_preds);
    CHECK(testing::slurp(c.output_dir / "report.transcripts.jsonl") == expected_trans);
}

TEST_CASE("few-shot needs support") {
    Fixture f;
    auto c = f.config();
    c.support_fraction = 0.0;
    CHECK_THROWS_AS(run_experiment(c), InsufficientSupport);
    c.methods = {MethodId::ZeroShot};
    CHECK(run_experiment(c).complete);
}

TEST_CASE("floored support warns") {
    Fixture f;
    auto c = f.config(1);
    c.support_fraction = 0.5;
    c.methods = {MethodId::ZeroShot};
    const auto r = run_experiment(c);
    CHECK(r.support_windows == 0);
    bool warned = false;
    for (const auto& w : r.warnings) warned = warned || w.find("support") != std::string::npos;
    CHECK(warned);
}

TEST_CASE("explicit support set must be disjoint") {
    Fixture f;
    auto c = f.config();
    c.support_path = c.corpus;
    CHECK_THROWS_AS(run_experiment(c), PreconditionError);
}

TEST_CASE("seed sensitivity") {
    Fixture f;
    auto c = f.config(12);
    c.methods = {MethodId::ZeroShot};
    c.output_dir = f.dir / "s3";
    const auto a = run_experiment(c);
    c.global_seed = 4;
    c.output_dir = f.dir / "s4";
    const auto b = run_experiment(c);
    // matched extractions do not depend on the seed
    CHECK(*a.reports[0].micro_f1 == 1.0);
    CHECK(*b.reports[0].micro_f1 == 1.0);
    CHECK(testing::slurp(f.dir / "s3" / "report.predictions.jsonl") !=
          testing::slurp(f.dir / "s4" / "report.predictions.jsonl"));  // different split
}

TEST_CASE("backend errors halt the run with resumable state") {
    Fixture f;
    auto c = f.config(6);
    c.methods = {MethodId::ZeroShot};
    RunOptions o;
    auto count = std::make_shared<std::atomic<int>>(0);
    o.backend_factory = [count](const ModelConfig&, const ExperimentConfig&) {
        class FailAfter final : public ChatBackend {
        public:
            explicit FailAfter(std::shared_ptr<std::atomic<int>> n) : n_(std::move(n)) {}

        private:
            CompletionResponse do_complete(const CompletionRequest& req) const override {
                if (++*n_ > 5) throw RateLimitedExhausted("429");
                return {mock_complete(req)};
            }
            std::shared_ptr<std::atomic<int>> n_;
        };
        return std::make_shared<FailAfter>(count);
    };
    CHECK_THROWS_AS(run_experiment(c, o), StageFailure);
    const auto r = run_experiment(c);
    CHECK(r.complete);
    CHECK(r.cells_resumed == 5);
}

}
