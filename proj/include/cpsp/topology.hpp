// ============================================================================
// cpsp/topology.hpp — symbolic network topology over td(a,b) atoms
// ============================================================================
//
// Distances are not numbers but constrained symbols: td(a,b) is the one-way
// travel time from a to b, asymmetric by default (td(a,b) and td(b,a) are
// distinct atoms). A topology contributes to every constraint store:
//   * nonnegativity for each ordered pair of registered agents,
//   * the triangle axiom td(a,c) <= td(a,b) + td(b,c) for each ordered
//     triple of distinct agents (length-2 paths; longer chains follow by
//     transitive accumulation),
//   * whatever the scenario asserts (td(p1,p2) > 4, ...).
//
// td(a,a) atoms are not pre-registered; they arise from self-delivery and
// stay merely nonnegative.
//
// ============================================================================

#pragma once

#include <cpsp/timealg.hpp>

#include <set>
#include <string>
#include <vector>

namespace cpsp {

class DuplicateAgent : public std::runtime_error {
public:
    explicit DuplicateAgent(const std::string& name)
        : std::runtime_error("duplicate agent: " + name) {}
};

enum class AgentKind { Participant, Intruder };

struct AgentId {
    std::string name;
    AgentKind kind = AgentKind::Participant;

    bool operator==(const AgentId& o) const { return name == o.name && kind == o.kind; }
    bool operator<(const AgentId& o) const { return name < o.name; }
};

inline std::string canonical_intruder_name(const std::string& participant) {
    return "ti_" + participant;
}

class Topology {
public:
    void add_agent(AgentId agent) {
        for (const auto& a : agents_)
            if (a.name == agent.name) throw DuplicateAgent(agent.name);
        agents_.push_back(std::move(agent));
    }

    void add_constraint(TimeConstraint c) { user_.push_back(std::move(c)); }

    const std::vector<AgentId>& agents() const { return agents_; }
    const std::vector<TimeConstraint>& user_constraints() const { return user_; }

    const AgentId* find(const std::string& name) const {
        for (const auto& a : agents_)
            if (a.name == name) return &a;
        return nullptr;
    }

    std::vector<AgentId> participants() const {
        std::vector<AgentId> out;
        for (const auto& a : agents_)
            if (a.kind == AgentKind::Participant) out.push_back(a);
        return out;
    }

    bool has_intruders() const {
        for (const auto& a : agents_)
            if (a.kind == AgentKind::Intruder) return true;
        return false;
    }

    // Ordered-pair atoms between distinct registered agents.
    std::set<std::string> dist_atoms() const {
        std::set<std::string> out;
        for (const auto& a : agents_)
            for (const auto& b : agents_)
                if (a.name != b.name) out.insert(TimeExpr::dist_symbol(a.name, b.name));
        return out;
    }

    // Nonnegativity for every pair atom plus the length-2 triangle axioms.
    std::vector<TimeConstraint> axioms() const {
        std::vector<TimeConstraint> out;
        const auto& ag = agents_;
        for (const auto& a : ag)
            for (const auto& b : ag)
                if (a.name != b.name)
                    out.push_back(tc(TimeExpr::dist(a.name, b.name), TimeRel::Ge, TimeExpr::num(0)));
        for (const auto& a : ag)
            for (const auto& b : ag)
                for (const auto& c : ag) {
                    if (a.name == b.name || b.name == c.name || a.name == c.name) continue;
                    out.push_back(tc(TimeExpr::dist(a.name, c.name), TimeRel::Le,
                                     TimeExpr::add(TimeExpr::dist(a.name, b.name),
                                                   TimeExpr::dist(b.name, c.name))));
                }
        return out;
    }

    std::vector<TimeConstraint> base_constraints() const {
        auto out = axioms();
        out.insert(out.end(), user_.begin(), user_.end());
        return out;
    }

    // A store whose satisfiability is judged against this topology.
    ConstraintStore fresh_store() const {
        ConstraintStore st;
        st.register_base(base_constraints(), dist_atoms());
        return st;
    }

    // Only the participant agents and their axioms; user constraints are kept
    // verbatim. The implicit intruder semantics emits participant atoms only,
    // so this is the store basis the search runs against.
    Topology participant_projection() const {
        Topology out;
        for (const auto& a : agents_)
            if (a.kind == AgentKind::Participant) out.agents_.push_back(a);
        out.user_ = user_;
        return out;
    }

private:
    std::vector<AgentId> agents_;
    std::vector<TimeConstraint> user_;
};

// One colluding intruder per participant: ti_p sits at distance 0 from p and
// the intruder mesh mirrors the participant distances.
inline Topology canonical_extension(const Topology& t) {
    for (const auto& a : t.agents())
        if (a.kind != AgentKind::Participant)
            throw std::invalid_argument("canonical_extension: topology already has intruders");
    Topology out = t;
    auto ps = t.participants();
    for (const auto& p : ps) out.add_agent({canonical_intruder_name(p.name), AgentKind::Intruder});
    for (const auto& p : ps) {
        std::string ti = canonical_intruder_name(p.name);
        out.add_constraint(tc(TimeExpr::dist(p.name, ti), TimeRel::Eq, TimeExpr::num(0)));
        out.add_constraint(tc(TimeExpr::dist(ti, p.name), TimeRel::Eq, TimeExpr::num(0)));
    }
    for (const auto& p : ps)
        for (const auto& q : ps) {
            if (p.name == q.name) continue;
            out.add_constraint(tc(TimeExpr::dist(canonical_intruder_name(p.name),
                                                 canonical_intruder_name(q.name)),
                                  TimeRel::Eq, TimeExpr::dist(p.name, q.name)));
        }
    return out;
}

}  // namespace cpsp
