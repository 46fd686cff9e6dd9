// ============================================================================
// cpsp/export.hpp — bundle export: DOT graphs and the trace JSON schema
// ============================================================================
//
// Trace JSON (schema 1): verdict, goal, statistics, and on an attack the
// witness bundle: strands, nodes, both edge relations, the extracted
// constraints with their sources, and the satisfying model. Node keys are
// "<strand>:<position>". The DOT rendering groups nodes per strand,
// strand-order edges solid, message edges dashed.
//
// ============================================================================

#pragma once

#include <cpsp/search.hpp>

#include <json.hpp>

#include <sstream>
#include <string>

namespace cpsp {

class SchemaMismatch : public std::runtime_error {
public:
    explicit SchemaMismatch(const std::string& what) : std::runtime_error(what) {}
};

inline std::string node_key(const NodeId& id) {
    return std::to_string(id.strand) + ":" + pos_str(id.pos);
}

inline nlohmann::json bundle_json(const TimedBundle& b, const Topology& topo,
                                  const TimeModel& model) {
    nlohmann::json out;
    out["strands"] = nlohmann::json::array();
    for (size_t sid = 0; sid < b.strands().size(); ++sid) {
        const auto& s = b.strands()[sid];
        out["strands"].push_back({
            {"id", sid},
            {"agent", s.agent.name},
            {"kind", s.agent.kind == AgentKind::Participant ? "participant" : "intruder"},
            {"rule", s.intruder_rule},
        });
    }
    out["nodes"] = nlohmann::json::array();
    for (const auto& [id, n] : b.nodes()) {
        out["nodes"].push_back({
            {"id", node_key(id)},
            {"strand", id.strand},
            {"pos", pos_str(id.pos)},
            {"agent", n.agent.name},
            {"tvar", n.tvar},
            {"label", b.node_label(id)},
        });
    }
    auto edges = [&](const std::set<std::pair<NodeId, NodeId>>& es) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [x, y] : es) arr.push_back({node_key(x), node_key(y)});
        return arr;
    };
    out["seq_edges"] = edges(b.seq_edges());
    out["msg_edges"] = edges(b.msg_edges());

    out["constraints"] = nlohmann::json::array();
    for (const auto& t : extract_constraints(b)) {
        out["constraints"].push_back({
            {"text", t.constraint.str()},
            {"source", source_str(t.source)},
            {"node", node_key(t.node)},
        });
    }
    for (const auto& c : topo.user_constraints())
        out["constraints"].push_back({{"text", c.str()}, {"source", "topology"}, {"node", ""}});

    out["model"] = nlohmann::json::object();
    for (const auto& [sym, val] : model) out["model"][sym] = rat_str(val);
    return out;
}

inline nlohmann::json trace_json(const std::string& scenario_name, const SearchOutcome& outcome) {
    nlohmann::json out;
    out["schema"] = 1;
    out["scenario"] = scenario_name;
    switch (outcome.verdict) {
        case SearchVerdict::Attack: out["verdict"] = "attack"; break;
        case SearchVerdict::NoAttack: out["verdict"] = "no-attack"; break;
        case SearchVerdict::LimitExceeded: out["verdict"] = "limit-exceeded"; break;
    }
    out["stats"] = {
        {"states", outcome.stats.states},
        {"builtin_calls", outcome.stats.builtin_calls},
        {"smt_calls", outcome.stats.smt_calls},
        {"max_depth", outcome.stats.max_depth},
        {"wall_ms", outcome.stats.wall_ms},
    };
    if (outcome.trace) {
        const auto& t = *outcome.trace;
        std::string goal = t.goal.kind == GoalKind::Complete
                               ? "complete(" + t.goal.participant + ")"
                               : "reach(" + t.goal.participant + ", \"" + pos_str(t.goal.pos) +
                                     "\")";
        out["goal"] = goal;
        out["bundle"] = bundle_json(t.witness, t.topology, t.model);
    }
    return out;
}

inline std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

inline std::string bundle_dot(const TimedBundle& b) {
    std::ostringstream os;
    os << "digraph bundle {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n";
    for (size_t sid = 0; sid < b.strands().size(); ++sid) {
        bool any = false;
        for (const auto& [id, n] : b.nodes())
            if (id.strand == (int)sid) any = true;
        if (!any) continue;
        const auto& s = b.strands()[sid];
        os << "  subgraph cluster_s" << sid << " {\n";
        os << "    label=\"" << dot_escape(s.agent.name);
        if (!s.intruder_rule.empty()) os << " [" << s.intruder_rule << "]";
        os << "\";\n";
        for (const auto& [id, n] : b.nodes()) {
            if (id.strand != (int)sid) continue;
            os << "    \"" << node_key(id) << "\" [label=\"" << dot_escape(b.node_label(id))
               << "\"];\n";
        }
        os << "  }\n";
    }
    for (const auto& [x, y] : b.seq_edges())
        os << "  \"" << node_key(x) << "\" -> \"" << node_key(y) << "\";\n";
    for (const auto& [x, y] : b.msg_edges())
        os << "  \"" << node_key(x) << "\" -> \"" << node_key(y) << "\" [style=dashed];\n";
    os << "}\n";
    return os.str();
}

// DOT from an exported trace (the `export` subcommand): tolerates exactly
// the schema written by trace_json.
inline std::string dot_from_trace(const nlohmann::json& trace) {
    if (!trace.contains("schema") || trace["schema"] != 1)
        throw SchemaMismatch("expected trace schema 1");
    std::ostringstream os;
    os << "digraph bundle {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n";
    if (trace.contains("bundle")) {
        const auto& b = trace["bundle"];
        if (!b.contains("nodes") || !b.contains("seq_edges") || !b.contains("msg_edges"))
            throw SchemaMismatch("trace bundle lacks nodes or edges");
        std::map<int, std::vector<nlohmann::json>> per_strand;
        for (const auto& n : b["nodes"]) per_strand[n["strand"].get<int>()].push_back(n);
        for (const auto& [sid, nodes] : per_strand) {
            std::string agent = nodes[0]["agent"].get<std::string>();
            os << "  subgraph cluster_s" << sid << " {\n    label=\"" << dot_escape(agent)
               << "\";\n";
            for (const auto& n : nodes)
                os << "    \"" << n["id"].get<std::string>() << "\" [label=\""
                   << dot_escape(n["label"].get<std::string>()) << "\"];\n";
            os << "  }\n";
        }
        for (const auto& e : b["seq_edges"])
            os << "  \"" << e[0].get<std::string>() << "\" -> \"" << e[1].get<std::string>()
               << "\";\n";
        for (const auto& e : b["msg_edges"])
            os << "  \"" << e[0].get<std::string>() << "\" -> \"" << e[1].get<std::string>()
               << "\" [style=dashed];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace cpsp
