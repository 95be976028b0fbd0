#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vidact/data/manifest.hpp"
#include "vidact/data/split.hpp"
#include "vidact/data/world.hpp"
#include "vidact/decode/decode.hpp"
#include "vidact/dmp/kitchen.hpp"
#include "vidact/metrics/metrics.hpp"
#include "vidact/model/checkpoint.hpp"
#include "vidact/training/training.hpp"

namespace vidact::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

/// Corpus generation and split settings for gen-data.
struct DatasetSpec {
    std::size_t videos = 60;
    std::size_t segments_per_video = 4;
    AnnotationMix mix;
    std::size_t folds = 5;
    std::size_t round = 0;
    double train_actions = 1.0;   // fraction of training segments keeping action labels
    double train_captions = 1.0;  // fraction of training segments keeping captions
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetSpec, videos, segments_per_video, mix, folds, round,
                                                train_actions, train_captions)

/// File inputs. Empty strings mean "not given".
struct Inputs {
    std::string data;        // gen-data output directory
    std::string init;        // checkpoint to start from
    std::string checkpoint;  // checkpoint to decode or evaluate
    std::string hyp, ref;    // evaluation text files
    std::string decoded;     // decode output (JSON lines)
    std::string library;     // DMP library document
    std::string task;        // task name or task document
    std::vector<std::string> compare;  // "Name=report.json" entries
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Inputs, data, init, checkpoint, hyp, ref, decoded, library, task, compare)

/// Everything a run depends on. Written verbatim to <out>/config.json.
struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    WorldSpec world = default_kitchen_world();
    DatasetSpec dataset;
    ModelConfig model;
    TrainConfig train;
    DecodeConfig decode;
    std::string phase = "multitask";
    std::string split = "test";
    std::string head = "action";
    std::string actions;  // exec-sim: "verb noun ...; verb noun ..."
    std::string video;    // exec-sim: video whose decoded steps to run
    double dt = 0.01;     // exec-sim integration step
    Inputs inputs;

    void validate() const {
        world.validate();
        train.validate();
        decode.validate();
        (void)phase_from_string(phase);
        require(split == "train" || split == "validation" || split == "test", ErrorKind::Config,
                "split must be train, validation or test");
        require(head == "action" || head == "caption", ErrorKind::Config, "head must be action or caption");
        require(dataset.folds >= 3 && dataset.round < dataset.folds, ErrorKind::Config,
                "dataset: need folds >= 3 and round < folds");
        require(dataset.videos >= dataset.folds && dataset.segments_per_video >= 1, ErrorKind::Config,
                "dataset: need at least one video per fold and one segment per video");
        for (double f : {dataset.train_actions, dataset.train_captions, dataset.mix.actions, dataset.mix.captions,
                         dataset.mix.subtitles})
            require(f >= 0.0 && f <= 1.0, ErrorKind::Config, "dataset: fractions must lie in [0, 1]");
        require(dt > 0.0, ErrorKind::Config, "dt must be positive");
    }
};

inline void to_json(json& j, const RunConfig& c) {
    j = {{"command", c.command}, {"seed", c.seed},   {"world", c.world},   {"dataset", c.dataset},
         {"model", c.model},     {"train", c.train}, {"decode", c.decode}, {"phase", c.phase},
         {"split", c.split},     {"head", c.head},   {"actions", c.actions}, {"video", c.video},
         {"dt", c.dt},           {"inputs", c.inputs}};
}

/// Rejects keys that have no counterpart in `known`, descending into objects.
inline void check_keys(const json& given, const json& known, const std::string& where) {
    for (const auto& [key, value] : given.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        require(known.contains(key), ErrorKind::Config, "unknown config key '" + path + "'");
        if (value.is_object() && known.at(key).is_object() && !known.at(key).empty())
            check_keys(value, known.at(key), path);
    }
}

/// Reads a config document. Missing keys keep their defaults, so a file may
/// set only what it changes.
inline RunConfig config_from_json(const json& j) {
    require(j.is_object(), ErrorKind::Config, "config must be a JSON object");
    json merged = RunConfig{};
    check_keys(j, merged, "");
    merged.merge_patch(j);
    RunConfig c;
    try {
        c.command = merged.at("command").get<std::string>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.world = merged.at("world").get<WorldSpec>();
        c.dataset = merged.at("dataset").get<DatasetSpec>();
        c.model = merged.at("model").get<ModelConfig>();
        c.train = merged.at("train").get<TrainConfig>();
        c.decode = merged.at("decode").get<DecodeConfig>();
        c.phase = merged.at("phase").get<std::string>();
        c.split = merged.at("split").get<std::string>();
        c.head = merged.at("head").get<std::string>();
        c.actions = merged.at("actions").get<std::string>();
        c.video = merged.at("video").get<std::string>();
        c.dt = merged.at("dt").get<double>();
        c.inputs = merged.at("inputs").get<Inputs>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("config: ") + e.what());
    }
    return c;
}

// ---- run bookkeeping -------------------------------------------------------

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(stable_hash(ss.str()));
}

/// Records the config, inputs and outputs of one run.
class RunRecord {
public:
    RunRecord(const RunConfig& cfg, fs::path out) : out_(std::move(out)), config_(cfg) {
        fs::create_directories(out_);
        const std::string text = json(cfg).dump(2) + "\n";
        config_hash_ = hex64(stable_hash(text));
        write_text("config.json", text);
    }

    const fs::path& dir() const { return out_; }
    fs::path path(const std::string& name) const { return out_ / name; }

    void input(const fs::path& p) { inputs_.push_back(p); }
    void output(const std::string& name) { outputs_.push_back(name); }

    void write_text(const std::string& name, const std::string& text) {
        const fs::path p = out_ / name;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        require(static_cast<bool>(f), ErrorKind::MissingFile, "cannot write " + p.string());
        f << text;
        if (name != "config.json") output(name);
    }

    void finish() {
        json in = json::array(), out = json::array();
        for (const auto& p : inputs_)
            in.push_back({{"path", p.string()}, {"hash", fs::is_regular_file(p) ? file_hash(p) : "directory"}});
        for (const auto& name : outputs_) out.push_back({{"path", name}, {"hash", file_hash(out_ / name)}});
        std::ofstream f(out_ / "run_manifest.json", std::ios::binary);
        f << json({{"command", config_.command}, {"config_hash", config_hash_}, {"inputs", in}, {"outputs", out}})
                 .dump(2)
          << "\n";
    }

private:
    fs::path out_;
    RunConfig config_;
    std::string config_hash_;
    std::vector<fs::path> inputs_;
    std::vector<std::string> outputs_;
};

inline fs::path default_out(const RunConfig& cfg) {
    const char* root = std::getenv("VIDACT_OUT_ROOT");
    const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
    return base / (cfg.command + "-" + hex64(stable_hash(json(cfg).dump())).substr(0, 8));
}

// ---- helpers ---------------------------------------------------------------

inline Dataset load_split(const std::string& data_dir, const std::string& split, RunRecord& rec) {
    require(!data_dir.empty(), ErrorKind::Config, "--data is required");
    const fs::path p = fs::path(data_dir) / split / "manifest.jsonl";
    rec.input(p);
    return load_manifest(p);
}

inline Head parse_head(const std::string& h) { return h == "caption" ? Head::Caption : Head::Action; }

/// "take cup; wash cup" -> two steps. The first word of each step is the verb.
inline ActionSequence parse_actions(const std::string& text) {
    ActionSequence seq;
    std::stringstream all(text);
    std::string part;
    while (std::getline(all, part, ';')) {
        std::istringstream words(part);
        ActionStep step;
        if (!(words >> step.verb)) continue;
        for (std::string n; words >> n;) step.nouns.push_back(n);
        seq.push_back(std::move(step));
    }
    return seq;
}

inline std::vector<DecodedSegment> read_decoded(const fs::path& p) {
    std::ifstream in(p);
    require(static_cast<bool>(in), ErrorKind::MissingFile, "decoded file not found: " + p.string());
    std::vector<DecodedSegment> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(decoded_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, p.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline std::string decoded_jsonl(const std::vector<DecodedSegment>& decoded) {
    std::string text;
    for (const auto& d : decoded) text += to_json(d).dump() + "\n";
    return text;
}

/// Scores decoded segments against the references of `ds` (matched by video id and segment).
inline metrics::EvalReport score_decoded(const std::vector<DecodedSegment>& decoded, const Dataset& ds, Head head) {
    std::map<std::pair<std::string, int>, const SegmentRecord*> refs;
    for (const auto& r : ds.records) refs[{r.video_id, r.segment}] = &r;
    std::vector<metrics::EvalRow> rows;
    for (const auto& d : decoded) {
        const auto it = refs.find({d.video_id, d.segment});
        require(it != refs.end(), ErrorKind::Data,
                "decoded segment " + d.video_id + "/" + std::to_string(d.segment) + " has no reference");
        const SegmentRecord& r = *it->second;
        if (head == Head::Action) {
            if (!r.actions) continue;
            rows.push_back(metrics::make_action_row(d.video_id, d.segment, d.steps, *r.actions));
        } else {
            if (!r.caption) continue;
            rows.push_back(metrics::make_row(d.video_id, d.segment, d.tokens, *r.caption));
        }
    }
    require(!rows.empty(), ErrorKind::Data, "no decoded segment has a reference to score against");
    return metrics::summarize(std::move(rows));
}

inline std::vector<metrics::Tokens> read_text_lines(const fs::path& p) {
    std::ifstream in(p);
    require(static_cast<bool>(in), ErrorKind::MissingFile, "file not found: " + p.string());
    std::vector<metrics::Tokens> out;
    for (std::string line; std::getline(in, line);) {
        std::istringstream words(line);
        metrics::Tokens t;
        for (std::string w; words >> w;) t.push_back(w);
        out.push_back(std::move(t));
    }
    return out;
}

inline metrics::EvalReport report_from_json(const json& j) {
    metrics::EvalReport r;
    r.bleu1 = j.at("bleu1").get<double>();
    r.bleu2 = j.at("bleu2").get<double>();
    r.meteor = j.at("meteor").get<double>();
    r.word_error = j.at("word_error").get<double>();
    if (!j.at("action_error").is_null()) r.action_error = j.at("action_error").get<double>();
    if (!j.at("task_success").is_null()) r.task_success = j.at("task_success").get<double>();
    return r;
}

inline dmp::TaskSpec resolve_task(const std::string& name_or_path) {
    for (const auto& t : dmp::default_tasks())
        if (t.name == name_or_path) return t;
    std::ifstream in(name_or_path);
    require(static_cast<bool>(in), ErrorKind::Config,
            "unknown task '" + name_or_path + "' (built-in: cereal, coffee, drinks; or a task file)");
    try {
        return dmp::task_from_json(json::parse(in));
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, name_or_path + ": " + e.what());
    }
}

// ---- commands --------------------------------------------------------------

inline int cmd_gen_data(const RunConfig& cfg, RunRecord& rec, std::ostream& out) {
    const DatasetSpec& d = cfg.dataset;
    const Dataset ds = generate_dataset(cfg.world, d.videos, d.segments_per_video, d.mix, cfg.seed);
    const SplitView view = cross_validation_round(split_dataset(ds, d.folds, cfg.seed), d.round);
    const Dataset train_set = thin_annotations(view.train, d.train_actions, d.train_captions, cfg.seed);
    for (const auto& [name, part] : {std::pair<std::string, const Dataset*>{"train", &train_set},
                                     {"validation", &view.validation},
                                     {"test", &view.test}}) {
        write_manifest(*part, rec.path(name));
        rec.output(name + "/manifest.jsonl");
        out << name << ": " << part->records.size() << " segments\n";
    }
    rec.write_text("world.json", json(cfg.world).dump(2) + "\n");
    return kExitOk;
}

inline int cmd_train(const RunConfig& cfg, Phase phase, RunRecord& rec, std::ostream& out) {
    const Dataset train_set = load_split(cfg.inputs.data, "train", rec);
    const Dataset validation = load_split(cfg.inputs.data, "validation", rec);
    TrainingState state = [&] {
        if (cfg.inputs.init.empty())
            return TrainingState{ActionTransformer(config_for(train_set, cfg.model), cfg.seed), Rng(cfg.seed), false, {}};
        rec.input(cfg.inputs.init);
        return from_checkpoint(load_checkpoint(cfg.inputs.init));
    }();
    require(state.model.config().word_vocab == train_set.words.size() &&
                state.model.config().action_vocab == train_set.actions.size(),
            ErrorKind::Config, "checkpoint vocabulary sizes do not match the dataset");
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    std::ostringstream log;
    const TrainResult r = train(std::move(state), train_set, validation, phase, tc, &log);
    rec.write_text("train_log.jsonl", log.str());
    save_checkpoint(to_checkpoint(r.best, train_metadata(r, phase)), rec.path("checkpoint.json"));
    rec.output("checkpoint.json");
    out << to_string(phase) << ": best epoch " << r.best_epoch << " of " << r.validation_meteor.size()
        << ", validation METEOR " << r.validation_meteor[r.best_epoch - 1] << "\n";
    return kExitOk;
}

inline int cmd_pretrain(const RunConfig& cfg, RunRecord& rec, std::ostream& out) {
    const Dataset train_set = load_split(cfg.inputs.data, "train", rec);
    const Dataset validation = load_split(cfg.inputs.data, "validation", rec);
    TrainingState state = [&] {
        if (cfg.inputs.init.empty())
            return TrainingState{ActionTransformer(config_for(train_set, cfg.model), cfg.seed), Rng(cfg.seed), false, {}};
        rec.input(cfg.inputs.init);
        return from_checkpoint(load_checkpoint(cfg.inputs.init));
    }();
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    std::ostringstream log;
    pretrain_classifier(state, train_set, tc, &log);
    rec.write_text("classifier_log.jsonl", log.str());
    const ClassifierEval e = evaluate_classifier(state.model, validation, cfg.seed);
    const json ej = {{"mean_positive", e.mean_positive}, {"mean_negative", e.mean_negative},
                     {"accuracy", e.accuracy},           {"ranking_accuracy", e.ranking_accuracy},
                     {"pairs", e.pairs}};
    rec.write_text("classifier_eval.json", ej.dump(2) + "\n");
    save_checkpoint(to_checkpoint(state, {{"classifier_eval", ej}}), rec.path("checkpoint.json"));
    rec.output("checkpoint.json");
    out << "classifier: mean S(y,c+) " << e.mean_positive << ", mean S(y,c-) " << e.mean_negative << ", accuracy "
        << e.accuracy << "\n";
    return kExitOk;
}

inline std::vector<DecodedSegment> decode_split(const RunConfig& cfg, RunRecord& rec, Dataset& ds) {
    require(!cfg.inputs.checkpoint.empty(), ErrorKind::Config, "--checkpoint is required");
    ds = load_split(cfg.inputs.data, cfg.split, rec);
    rec.input(cfg.inputs.checkpoint);
    const ActionTransformer model = load_checkpoint(cfg.inputs.checkpoint).model();
    return decode_dataset(model, ds, parse_head(cfg.head), cfg.decode);
}

inline int cmd_decode(const RunConfig& cfg, RunRecord& rec, std::ostream& out) {
    Dataset ds;
    const auto decoded = decode_split(cfg, rec, ds);
    rec.write_text("decoded.jsonl", decoded_jsonl(decoded));
    out << "decoded " << decoded.size() << " segments\n";
    return kExitOk;
}

inline int cmd_eval(const RunConfig& cfg, RunRecord& rec, std::ostream& out) {
    const Inputs& in = cfg.inputs;
    if (!in.compare.empty()) {
        std::vector<std::pair<std::string, metrics::EvalReport>> runs;
        for (const auto& entry : in.compare) {
            const auto eq = entry.find('=');
            require(eq != std::string::npos && eq > 0, ErrorKind::Config,
                    "--compare expects NAME=REPORT, got '" + entry + "'");
            const fs::path p = entry.substr(eq + 1);
            std::ifstream f(p);
            require(static_cast<bool>(f), ErrorKind::MissingFile, "report not found: " + p.string());
            rec.input(p);
            runs.emplace_back(entry.substr(0, eq), report_from_json(json::parse(f)));
        }
        const std::string table = metrics::format_table(runs);
        rec.write_text("table.txt", table);
        out << table;
        return kExitOk;
    }
    metrics::EvalReport report;
    if (!in.hyp.empty() || !in.ref.empty()) {
        require(!in.hyp.empty() && !in.ref.empty(), ErrorKind::Config, "--hyp and --ref go together");
        rec.input(in.hyp);
        rec.input(in.ref);
        const auto hyps = read_text_lines(in.hyp), refs = read_text_lines(in.ref);
        require(hyps.size() == refs.size(), ErrorKind::Data,
                "hypothesis and reference files differ in line count (" + std::to_string(hyps.size()) + " vs " +
                    std::to_string(refs.size()) + ")");
        std::vector<metrics::EvalRow> rows;
        for (std::size_t i = 0; i < hyps.size(); ++i)
            rows.push_back(metrics::make_row("line", static_cast<int>(i + 1), hyps[i], refs[i]));
        report = metrics::summarize(std::move(rows));
    } else if (!in.decoded.empty()) {
        rec.input(in.decoded);
        const Dataset ds = load_split(in.data, cfg.split, rec);
        report = score_decoded(read_decoded(in.decoded), ds, parse_head(cfg.head));
    } else {
        Dataset ds;
        const auto decoded = decode_split(cfg, rec, ds);
        rec.write_text("decoded.jsonl", decoded_jsonl(decoded));
        report = score_decoded(decoded, ds, parse_head(cfg.head));
    }
    rec.write_text("report.json", metrics::to_json(report).dump(2) + "\n");
    out << metrics::format_table({{cfg.head, report}});
    return kExitOk;
}

inline int cmd_exec_sim(const RunConfig& cfg, RunRecord& rec, std::ostream& out) {
    const Inputs& in = cfg.inputs;
    require(!in.task.empty(), ErrorKind::Config, "--task is required");
    const dmp::TaskSpec task = resolve_task(in.task);
    dmp::DmpLibrary library = dmp::default_library();
    if (!in.library.empty()) {
        std::ifstream f(in.library);
        require(static_cast<bool>(f), ErrorKind::MissingFile, "library not found: " + in.library);
        rec.input(in.library);
        library = dmp::library_from_json(json::parse(f));
    }
    ActionSequence actions = task.subtasks;
    if (!cfg.actions.empty()) {
        actions = parse_actions(cfg.actions);
    } else if (!in.decoded.empty()) {
        require(!cfg.video.empty(), ErrorKind::Config, "--decoded needs --video");
        rec.input(in.decoded);
        auto decoded = read_decoded(in.decoded);
        std::stable_sort(decoded.begin(), decoded.end(),
                         [](const DecodedSegment& a, const DecodedSegment& b) { return a.segment < b.segment; });
        actions.clear();
        for (const auto& d : decoded)
            if (d.video_id == cfg.video) actions.insert(actions.end(), d.steps.begin(), d.steps.end());
        require(!actions.empty(), ErrorKind::Data, "no decoded steps for video '" + cfg.video + "'");
    }
    dmp::ExecutionOptions opt;
    opt.dt = cfg.dt;
    std::vector<dmp::Trajectory> motions;
    opt.trajectories = &motions;
    const auto result = dmp::align_and_execute(actions, library, dmp::make_scene(task.objects), task, opt);
    rec.write_text("execution.json", dmp::to_json(result).dump(2) + "\n");
    rec.write_text("library.json", dmp::to_json(library).dump() + "\n");
    rec.write_text("task.json", dmp::to_json(task).dump(2) + "\n");
    std::size_t k = 0;
    for (const auto& m : motions) {
        char name[64];
        std::snprintf(name, sizeof name, "trajectories/%02zu.csv", k++);
        dmp::write_csv(m, rec.path(name));
        rec.output(name);
    }
    for (const auto& e : result.log) out << "  [" << e.step << "] " << e.primitive << ": " << e.message << "\n";
    out << "task " << task.name << ": " << (result.success ? "success" : "failure") << "\n";
    if (result.error) fail(*result.error, "execution halted; see execution.json");
    return kExitOk;
}

// ---- entry point -----------------------------------------------------------

/// Flag values that override the config file when given.
struct Overrides {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> videos, segments, folds, round, steps, batch_size, eval_every, classifier_steps,
        beam_width, max_length;
    std::optional<double> train_actions, train_captions, noise, lr, tau, dt;
    std::optional<std::string> phase, data, init, checkpoint, split, head, strategy, hyp, ref, decoded, library, task,
        actions, video;
    std::vector<std::string> compare;
    bool task_knowledge = false;
};

inline void apply(const Overrides& o, RunConfig& c) {
    auto set = [](auto& dst, const auto& src) {
        if (src) dst = *src;
    };
    set(c.seed, o.seed);
    set(c.dataset.videos, o.videos);
    set(c.dataset.segments_per_video, o.segments);
    set(c.dataset.folds, o.folds);
    set(c.dataset.round, o.round);
    set(c.dataset.train_actions, o.train_actions);
    set(c.dataset.train_captions, o.train_captions);
    set(c.world.noise, o.noise);
    set(c.train.steps, o.steps);
    set(c.train.batch_size, o.batch_size);
    set(c.train.eval_every, o.eval_every);
    set(c.train.classifier_steps, o.classifier_steps);
    set(c.train.lr, o.lr);
    set(c.train.tau, o.tau);
    set(c.decode.beam_width, o.beam_width);
    set(c.decode.max_length, o.max_length);
    if (o.strategy) c.decode.strategy = strategy_from_string(*o.strategy);
    if (o.task_knowledge) c.decode.use_task_knowledge = true;
    set(c.dt, o.dt);
    set(c.phase, o.phase);
    set(c.split, o.split);
    set(c.head, o.head);
    set(c.actions, o.actions);
    set(c.video, o.video);
    set(c.inputs.data, o.data);
    set(c.inputs.init, o.init);
    set(c.inputs.checkpoint, o.checkpoint);
    set(c.inputs.hyp, o.hyp);
    set(c.inputs.ref, o.ref);
    set(c.inputs.decoded, o.decoded);
    set(c.inputs.library, o.library);
    set(c.inputs.task, o.task);
    if (!o.compare.empty()) c.inputs.compare = o.compare;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"vidact: robot action sequences from instruction videos"};
    app.require_subcommand(1);
    Overrides o;

    struct Command {
        const char* name;
        const char* help;
    };
    const std::vector<Command> commands{
        {"gen-data", "generate a synthetic corpus and write train/validation/test manifests"},
        {"train", "train one phase (--phase baseline|multitask|finetune-weak)"},
        {"pretrain-classifier", "pre-train the semantic classifier on paired actions and captions"},
        {"finetune-weak", "weakly supervised fine-tuning (same as train --phase finetune-weak)"},
        {"eval", "score decoded output, text files, or a checkpoint; --compare prints a table"},
        {"decode", "decode a data split with a checkpoint"},
        {"exec-sim", "execute an action sequence with the DMP library in the kitchen simulator"},
    };
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", o.config, "JSON run config; flags override its values");
        sub->add_option("--out", o.out, "output directory (default $VIDACT_OUT_ROOT/<command>-<hash>)");
        sub->add_option("--seed", o.seed, "seed for data, initialization and training");
        const std::string name = c.name;
        if (name == "gen-data") {
            sub->add_option("--videos", o.videos);
            sub->add_option("--segments", o.segments, "segments per video");
            sub->add_option("--folds", o.folds);
            sub->add_option("--round", o.round, "cross-validation round");
            sub->add_option("--train-actions", o.train_actions, "fraction of training segments with action labels");
            sub->add_option("--train-captions", o.train_captions, "fraction of training segments with captions");
            sub->add_option("--noise", o.noise, "feature noise level");
        }
        if (name == "train" || name == "finetune-weak" || name == "pretrain-classifier") {
            sub->add_option("--data", o.data, "gen-data output directory");
            sub->add_option("--init", o.init, "checkpoint to start from");
            sub->add_option("--steps", o.steps);
            sub->add_option("--batch-size", o.batch_size);
            sub->add_option("--eval-every", o.eval_every);
            sub->add_option("--lr", o.lr);
            sub->add_option("--tau", o.tau, "Gumbel-softmax temperature");
            sub->add_option("--classifier-steps", o.classifier_steps);
        }
        if (name == "train") sub->add_option("--phase", o.phase)->check(CLI::IsMember({"baseline", "multitask", "finetune-weak"}));
        if (name == "decode" || name == "eval") {
            sub->add_option("--checkpoint", o.checkpoint);
            sub->add_option("--data", o.data, "gen-data output directory");
            sub->add_option("--split", o.split)->check(CLI::IsMember({"train", "validation", "test"}));
            sub->add_option("--head", o.head)->check(CLI::IsMember({"action", "caption"}));
            sub->add_option("--strategy", o.strategy)->check(CLI::IsMember({"greedy", "beam"}));
            sub->add_option("--beam-width", o.beam_width);
            sub->add_option("--max-length", o.max_length);
            sub->add_flag("--task-knowledge", o.task_knowledge, "restrict nouns to each clip's bench");
        }
        if (name == "eval") {
            sub->add_option("--hyp", o.hyp, "hypothesis text file, one segment per line");
            sub->add_option("--ref", o.ref, "reference text file, one segment per line");
            sub->add_option("--decoded", o.decoded, "decode output to score against --data");
            sub->add_option("--compare", o.compare, "NAME=report.json, repeatable");
        }
        if (name == "exec-sim") {
            sub->add_option("--task", o.task, "cereal, coffee, drinks, or a task file");
            sub->add_option("--library", o.library, "DMP library file (default: built-in)");
            sub->add_option("--actions", o.actions, "steps as 'verb noun ...; verb noun ...'");
            sub->add_option("--decoded", o.decoded, "decode output to take steps from");
            sub->add_option("--video", o.video, "video id within --decoded");
            sub->add_option("--dt", o.dt, "integration step (s)");
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg;
        if (!o.config.empty()) {
            std::ifstream f(o.config);
            require(static_cast<bool>(f), ErrorKind::Config, "config file not found: " + o.config);
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                fail(ErrorKind::Config, o.config + ": " + e.what());
            }
            cfg = config_from_json(j);
        }
        cfg.command = command;
        if (command == "finetune-weak") cfg.phase = "finetune-weak";
        apply(o, cfg);
        cfg.validate();
        RunRecord rec(cfg, o.out.empty() ? default_out(cfg) : fs::path(o.out));
        int code = kExitOk;
        if (command == "gen-data") code = cmd_gen_data(cfg, rec, out);
        else if (command == "train" || command == "finetune-weak") code = cmd_train(cfg, phase_from_string(cfg.phase), rec, out);
        else if (command == "pretrain-classifier") code = cmd_pretrain(cfg, rec, out);
        else if (command == "decode") code = cmd_decode(cfg, rec, out);
        else if (command == "eval") code = cmd_eval(cfg, rec, out);
        else if (command == "exec-sim") code = cmd_exec_sim(cfg, rec, out);
        rec.finish();
        out << "wrote " << rec.dir().string() << "\n";
        return code;
    } catch (const Error& e) {
        err << command << ": " << e.what() << "\n";
        if (e.kind() == ErrorKind::Config) return kExitConfig;
        if (e.kind() == ErrorKind::Usage) return kExitUsage;
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << command << ": " << e.what() << "\n";
        return kExitRuntime;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}

}  // namespace vidact::cli
