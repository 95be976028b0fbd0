#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/data/vocabulary.hpp"
#include "vidact/dmp/dmp.hpp"

namespace vidact::dmp {

inline constexpr const char* kLibrarySchema = "vidact-dmp-library";
inline constexpr const char* kTaskSchema = "vidact-task";
inline constexpr int kDmpSchemaVersion = 1;

enum class Effect { None, Grasp, Release, Pour };

inline std::string to_string(Effect e) {
    switch (e) {
        case Effect::None: return "none";
        case Effect::Grasp: return "grasp";
        case Effect::Release: return "release";
        case Effect::Pour: return "pour";
    }
    return "?";
}

inline Effect effect_from_string(const std::string& s) {
    if (s == "none") return Effect::None;
    if (s == "grasp") return Effect::Grasp;
    if (s == "release") return Effect::Release;
    if (s == "pour") return Effect::Pour;
    fail(ErrorKind::Parse, "unknown primitive effect '" + s + "'");
}

/// One motion of the arm. The goal is resolved at execution time from the
/// scene: the pose of `target` (an object, a named location, or "home:<obj>"
/// for an object's starting pose) plus `offset`. `effect` is applied once the
/// motion ends.
struct PrimitiveCall {
    DmpPrimitive motion;
    std::string target;
    Point offset{0.0, 0.0, 0.0};
    Effect effect = Effect::None;
};

inline void to_json(nlohmann::json& j, const PrimitiveCall& c) {
    j = {{"motion", c.motion}, {"target", c.target}, {"offset", c.offset}, {"effect", to_string(c.effect)}};
}
inline void from_json(const nlohmann::json& j, PrimitiveCall& c) {
    c.motion = j.at("motion").get<DmpPrimitive>();
    c.target = j.at("target").get<std::string>();
    c.offset = j.value("offset", Point{0.0, 0.0, 0.0});
    c.effect = effect_from_string(j.value("effect", "none"));
}

/// Lookup key of an action step: the verb plus its sorted noun multiset.
inline std::string library_key(const ActionStep& step) {
    std::vector<std::string> nouns = step.nouns;
    std::sort(nouns.begin(), nouns.end());
    std::string key = step.verb + "|";
    for (std::size_t i = 0; i < nouns.size(); ++i) key += (i ? "," : "") + nouns[i];
    return key;
}

struct LibraryEntry {
    ActionStep step;
    std::vector<PrimitiveCall> primitives;
};

class DmpLibrary {
public:
    void add(ActionStep step, std::vector<PrimitiveCall> primitives) {
        require(!primitives.empty(), ErrorKind::Config, "dmp library: empty primitive list for " + library_key(step));
        const std::string key = library_key(step);
        entries_[key] = LibraryEntry{std::move(step), std::move(primitives)};
    }

    const LibraryEntry* find(const ActionStep& step) const {
        auto it = entries_.find(library_key(step));
        return it == entries_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, LibraryEntry>& entries() const { return entries_; }

    /// Every key's verb and nouns must exist in the action vocabulary.
    void validate(const ActionVocabulary& vocab) const {
        for (const auto& [key, e] : entries_) {
            require(vocab.tokens().contains(e.step.verb) && vocab.is_verb(vocab.id(e.step.verb)), ErrorKind::Config,
                    "dmp library key '" + key + "': verb not in the action vocabulary");
            for (const auto& n : e.step.nouns)
                require(vocab.tokens().contains(n) && vocab.is_noun(vocab.id(n)), ErrorKind::Config,
                        "dmp library key '" + key + "': noun '" + n + "' not in the action vocabulary");
        }
    }

private:
    std::map<std::string, LibraryEntry> entries_;
};

inline nlohmann::json to_json(const DmpLibrary& lib) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [_, e] : lib.entries())
        entries.push_back({{"verb", e.step.verb}, {"nouns", e.step.nouns}, {"primitives", e.primitives}});
    return {{"schema", kLibrarySchema}, {"version", kDmpSchemaVersion}, {"entries", entries}};
}

inline DmpLibrary library_from_json(const nlohmann::json& j) {
    require(j.is_object() && j.value("schema", "") == kLibrarySchema, ErrorKind::Parse, "not a dmp library document");
    require(j.value("version", 0) == kDmpSchemaVersion, ErrorKind::Parse,
            "unsupported dmp library version " + j.value("version", nlohmann::json()).dump());
    DmpLibrary lib;
    try {
        for (const auto& e : j.at("entries"))
            lib.add({e.at("verb").get<std::string>(), e.at("nouns").get<std::vector<std::string>>()},
                    e.at("primitives").get<std::vector<PrimitiveCall>>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("malformed dmp library: ") + e.what());
    }
    return lib;
}

// ---- scene -----------------------------------------------------------------

struct KitchenObject {
    Point position{0.0, 0.0, 0.0};  // metres
    double yaw = 0.0;
    std::set<std::string> contents;  // what has been poured in
    std::optional<std::string> support;  // object it rests on, e.g. a tray

    bool operator==(const KitchenObject&) const = default;
};

/// Kinematic scene: object poses, a point gripper, and the objects on the bench.
struct KitchenState {
    std::map<std::string, KitchenObject> objects;
    std::map<std::string, Point> locations;  // named free positions, e.g. "work-spot"
    std::map<std::string, Point> home;       // starting position of every object
    Point gripper{0.0, 0.0, 0.4};
    bool gripper_closed = false;
    std::optional<std::string> held;

    std::vector<std::string> bench() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : objects) out.push_back(name);
        return out;
    }

    bool on_bench(const std::string& name) const { return objects.contains(name); }

    /// Held object at the gripper; no two objects at an identical position.
    void check_invariants() const {
        if (held) {
            require(objects.contains(*held) && gripper_closed, ErrorKind::Data, "scene: held object missing");
            require(objects.at(*held).position == gripper, ErrorKind::Data, "scene: held object detached from gripper");
        }
        for (auto a = objects.begin(); a != objects.end(); ++a)
            for (auto b = std::next(a); b != objects.end(); ++b)
                require(a->second.position != b->second.position, ErrorKind::Data,
                        "scene: objects '" + a->first + "' and '" + b->first + "' share a pose");
    }

    bool operator==(const KitchenState&) const = default;
};

inline constexpr double kGraspTolerance = 1e-3;  // metres

/// Lays the given objects out on a grid along the bench.
inline KitchenState make_scene(const std::vector<std::string>& objects) {
    KitchenState s;
    std::vector<std::string> sorted = objects;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const Point p{0.15 * static_cast<double>(i % 6) - 0.375, 0.35 + 0.15 * static_cast<double>(i / 6), 0.0};
        s.objects[sorted[i]].position = p;
        s.home[sorted[i]] = p;
    }
    s.locations["work-spot"] = {0.0, 0.1, 0.0};
    s.check_invariants();
    return s;
}

// ---- tasks -----------------------------------------------------------------

/// End-state fact: `item` inside `container` ("contains"), `item` resting on
/// `container` ("on"), or `item` at the work spot ("at-work-spot").
struct Predicate {
    std::string relation;
    std::string item;
    std::string container;
};

inline void to_json(nlohmann::json& j, const Predicate& p) {
    j = {{"relation", p.relation}, {"item", p.item}};
    if (!p.container.empty()) j["container"] = p.container;
}
inline void from_json(const nlohmann::json& j, Predicate& p) {
    p.relation = j.at("relation").get<std::string>();
    p.item = j.at("item").get<std::string>();
    p.container = j.value("container", "");
    require(p.relation == "contains" || p.relation == "on" || p.relation == "at-work-spot", ErrorKind::Parse,
            "unknown predicate relation '" + p.relation + "'");
}

inline bool holds(const Predicate& p, const KitchenState& s) {
    const auto it = s.objects.find(p.item);
    if (it == s.objects.end()) return false;
    if (p.relation == "contains") return s.objects.contains(p.container) && s.objects.at(p.container).contents.contains(p.item);
    if (p.relation == "on") return it->second.support == p.container && s.held != p.item;
    if (p.relation == "at-work-spot") {
        const Point& spot = s.locations.at("work-spot");
        double dist = 0.0;
        for (std::size_t d = 0; d < 3; ++d) dist = std::max(dist, std::abs(it->second.position[d] - spot[d]));
        return dist <= kGraspTolerance && s.held != p.item;
    }
    return false;
}

struct TaskSpec {
    std::string name;
    ActionSequence subtasks;
    std::vector<Predicate> goal;
    std::vector<std::string> objects;  // bench contents the task needs

    void validate() const {
        require(!subtasks.empty(), ErrorKind::Config, "task '" + name + "': no subtasks");
        require(!goal.empty(), ErrorKind::Config, "task '" + name + "': no goal predicate");
    }

    bool satisfied(const KitchenState& s) const {
        return std::all_of(goal.begin(), goal.end(), [&](const Predicate& p) { return holds(p, s); });
    }
};

inline nlohmann::json to_json(const TaskSpec& t) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : t.subtasks) steps.push_back({{"verb", s.verb}, {"nouns", s.nouns}});
    return {{"schema", kTaskSchema}, {"version", kDmpSchemaVersion}, {"name", t.name},
            {"subtasks", steps},     {"goal", t.goal},                 {"objects", t.objects}};
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
    require(j.is_object() && j.value("schema", "") == kTaskSchema, ErrorKind::Parse, "not a task document");
    require(j.value("version", 0) == kDmpSchemaVersion, ErrorKind::Parse, "unsupported task version");
    TaskSpec t;
    try {
        t.name = j.at("name").get<std::string>();
        for (const auto& s : j.at("subtasks"))
            t.subtasks.push_back({s.at("verb").get<std::string>(), s.at("nouns").get<std::vector<std::string>>()});
        t.goal = j.at("goal").get<std::vector<Predicate>>();
        t.objects = j.value("objects", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("malformed task: ") + e.what());
    }
    t.validate();
    return t;
}

// ---- execution -------------------------------------------------------------

struct ExecutionOptions {
    double dt = 0.01;
    double settle = 5.0;  // rollout length in multiples of the primitive's tau
    std::function<void(const KitchenState&)> observer;  // called after every integration sample
    std::vector<Trajectory>* trajectories = nullptr;     // receives each executed motion
};

struct ExecutionLogEntry {
    std::size_t step = 0;
    std::string primitive;
    std::string message;
};

struct ExecutionResult {
    KitchenState state;
    bool success = false;
    std::vector<ExecutionLogEntry> log;
    std::optional<ErrorKind> error;  // set when execution halted
    std::size_t steps_executed = 0;
};

inline nlohmann::json to_json(const ExecutionResult& r) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : r.log) log.push_back({{"step", e.step}, {"primitive", e.primitive}, {"message", e.message}});
    nlohmann::json objects = nlohmann::json::object();
    for (const auto& [name, o] : r.state.objects) {
        objects[name] = {{"position", o.position}, {"contents", o.contents}};
        if (o.support) objects[name]["support"] = *o.support;
    }
    return {{"success", r.success},
            {"error", r.error ? nlohmann::json(std::string(to_string(*r.error))) : nlohmann::json(nullptr)},
            {"steps_executed", r.steps_executed},
            {"objects", objects},
            {"log", log}};
}

namespace detail {

inline std::optional<Point> resolve_target(const KitchenState& s, const std::string& target) {
    if (target.rfind("home:", 0) == 0) {
        const auto it = s.home.find(target.substr(5));
        if (it != s.home.end()) return it->second;
        return std::nullopt;
    }
    if (const auto it = s.objects.find(target); it != s.objects.end()) return it->second.position;
    if (const auto it = s.locations.find(target); it != s.locations.end()) return it->second;
    return std::nullopt;
}

inline std::string referenced_object(const std::string& target) {
    return target.rfind("home:", 0) == 0 ? target.substr(5) : target;
}

/// Applies a primitive's effect at the end of its motion. Returns an error
/// message when the effect's preconditions fail.
inline std::optional<std::string> apply_effect(KitchenState& s, const PrimitiveCall& call) {
    switch (call.effect) {
        case Effect::None: return std::nullopt;
        case Effect::Grasp: {
            if (s.held) return "gripper already holds '" + *s.held + "'";
            auto it = s.objects.find(call.target);
            if (it == s.objects.end()) return "nothing named '" + call.target + "' to grasp";
            double dist = 0.0;
            for (std::size_t d = 0; d < 3; ++d) dist = std::max(dist, std::abs(it->second.position[d] - s.gripper[d]));
            if (dist > kGraspTolerance) return "gripper missed '" + call.target + "'";
            s.gripper_closed = true;
            s.held = call.target;
            it->second.position = s.gripper;
            it->second.support.reset();
            return std::nullopt;
        }
        case Effect::Release: {
            if (!s.held) return "release with an empty gripper";
            auto& obj = s.objects.at(*s.held);
            obj.position = s.gripper;
            const std::string support = referenced_object(call.target);
            if (s.objects.contains(support) && support != *s.held) obj.support = support;
            s.held.reset();
            s.gripper_closed = false;
            return std::nullopt;
        }
        case Effect::Pour: {
            if (!s.held) return "pour with an empty gripper";
            auto it = s.objects.find(call.target);
            if (it == s.objects.end()) return "nothing named '" + call.target + "' to pour into";
            it->second.contents.insert(*s.held);
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Executes an action sequence step by step. Each step is looked up in the
/// library; its primitives run in order with goals taken from the current
/// scene. Execution halts on the first step that is not covered (coverage
/// error), names an object that is not on the bench (grounding error, scene
/// untouched), or whose effect cannot be applied. Success means every step
/// ran and the task's end-state predicate holds.
inline ExecutionResult align_and_execute(const ActionSequence& actions, const DmpLibrary& library,
                                         const KitchenState& initial, const TaskSpec& task,
                                         const ExecutionOptions& opt = {}) {
    task.validate();
    ExecutionResult r;
    r.state = initial;
    auto halt = [&](std::size_t step, ErrorKind kind, const std::string& primitive, const std::string& msg) {
        r.error = kind;
        r.log.push_back({step, primitive, std::string(to_string(kind)) + ": " + msg});
    };

    for (std::size_t i = 0; i < actions.size(); ++i) {
        const ActionStep& step = actions[i];
        const LibraryEntry* entry = library.find(step);
        if (!entry) {
            halt(i, ErrorKind::Coverage, "", "no primitives for '" + library_key(step) + "'");
            break;
        }
        bool grounded = true;
        for (const auto& n : step.nouns)
            if (!r.state.on_bench(n)) {
                halt(i, ErrorKind::Grounding, "", "'" + n + "' is not on the bench");
                grounded = false;
                break;
            }
        if (!grounded) break;
        for (const auto& call : entry->primitives) {
            const auto target = detail::resolve_target(r.state, call.target);
            if (!target) {
                halt(i, ErrorKind::Grounding, call.motion.name, "target '" + call.target + "' is not in the scene");
                break;
            }
            Point goal = *target;
            for (std::size_t d = 0; d < 3; ++d) goal[d] += call.offset[d];
            const Trajectory traj =
                rollout(call.motion, r.state.gripper, goal, opt.dt, opt.settle * call.motion.tau);
            for (const auto& y : traj.y) {
                r.state.gripper = y;
                if (r.state.held) r.state.objects.at(*r.state.held).position = y;
                if (opt.observer) opt.observer(r.state);
            }
            if (opt.trajectories) opt.trajectories->push_back(traj);
            if (const auto problem = detail::apply_effect(r.state, call)) {
                halt(i, ErrorKind::Data, call.motion.name, *problem);
                break;
            }
            r.log.push_back({i, call.motion.name, "reached " + call.target});
        }
        if (r.error) break;
        ++r.steps_executed;
    }
    r.success = !r.error && r.steps_executed == actions.size() && task.satisfied(r.state);
    return r;
}

// ---- shipped library -------------------------------------------------------

/// Motion shapes demonstrated once and reused for every object.
struct MotionShapes {
    DmpPrimitive top_down, side, pour;
};

inline MotionShapes demonstrated_shapes() {
    const double dt = 0.01;
    const Point a{0.0, 0.0, 0.0}, b{0.3, 0.2, 0.0};
    return {fit_dmp(minimum_jerk(a, b, 1.0, dt, {0.0, 0.0, 0.15}), {}, 20, "top-down"),
            fit_dmp(minimum_jerk(a, b, 1.0, dt), {}, 20, "side"),
            fit_dmp(minimum_jerk(a, b, 1.2, dt, {0.0, 0.0, 0.25}), {}, 20, "pour")};
}

inline DmpPrimitive renamed(DmpPrimitive p, std::string name) {
    p.name = std::move(name);
    return p;
}

/// Library for the three demo tasks: a bowl of cereal, a cup of coffee, and
/// juice bottles served on a tray.
inline DmpLibrary default_library() {
    const MotionShapes m = demonstrated_shapes();
    const Point above{0.0, 0.0, 0.15};
    DmpLibrary lib;
    auto pick = [&](const std::string& obj) {
        return PrimitiveCall{renamed(m.top_down, "top-down pick " + obj), obj, {0.0, 0.0, 0.0}, Effect::Grasp};
    };
    for (const std::string obj : {"bowl", "cup"})
        lib.add({"place", {obj}},
                {pick(obj), {renamed(m.top_down, "top-down place " + obj), "work-spot", {0.0, 0.0, 0.0}, Effect::Release}});
    for (const std::string liquid : {"cereal", "milk", "coffee"})
        for (const std::string container : {"bowl", "cup"})
            lib.add({"pour", {liquid, container}},
                    {pick(liquid),
                     {renamed(m.pour, "pour " + liquid + " into " + container), container, above, Effect::Pour},
                     {renamed(m.side, "return " + liquid), "home:" + liquid, {0.0, 0.0, 0.0}, Effect::Release}});
    const std::map<std::string, Point> tray_slot{{"orange-juice", {-0.05, 0.0, 0.02}},
                                                 {"strawberry-juice", {0.05, 0.0, 0.02}},
                                                 {"milk", {0.0, 0.05, 0.02}}};
    for (const auto& [bottle, slot] : tray_slot)
        lib.add({"place", {bottle, "tray"}},
                {{renamed(m.side, "side pick " + bottle), bottle, {0.0, 0.0, 0.0}, Effect::Grasp},
                 {renamed(m.side, "side place " + bottle), "tray", slot, Effect::Release}});
    return lib;
}

inline std::vector<TaskSpec> default_tasks() {
    return {
        {"cereal",
         {{"place", {"bowl"}}, {"pour", {"cereal", "bowl"}}, {"pour", {"milk", "bowl"}}},
         {{"at-work-spot", "bowl", ""}, {"contains", "cereal", "bowl"}, {"contains", "milk", "bowl"}},
         {"bowl", "cereal", "milk"}},
        {"coffee",
         {{"pour", {"coffee", "cup"}}, {"pour", {"milk", "cup"}}},
         {{"contains", "coffee", "cup"}, {"contains", "milk", "cup"}},
         {"cup", "coffee", "milk"}},
        {"drinks",
         {{"place", {"orange-juice", "tray"}}, {"place", {"strawberry-juice", "tray"}}},
         {{"on", "orange-juice", "tray"}, {"on", "strawberry-juice", "tray"}},
         {"orange-juice", "strawberry-juice", "tray"}},
    };
}

}  // namespace vidact::dmp
