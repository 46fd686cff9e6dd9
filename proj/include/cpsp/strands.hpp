// ============================================================================
// cpsp/strands.hpp — timed strand space graphs and bundles
// ============================================================================
//
// A bundle is a finite acyclic graph of nodes ⟨agent, strand, position⟩@tv
// with strand-order edges (⇒) and message edges (→). Each node's time
// variable is reserved eagerly when the strand is instantiated, so
// constraint extraction is independent of the order nodes were appended.
//
// Constraint extraction follows the three sources:
//   role-annotation : a timed command contributes its constraint with cur
//                     replaced by the node's time variable,
//   seq-edge        : n1 ⇒ n2 contributes tv2 >= tv1,
//   msg-edge        : n1 → n2 contributes tv2 >= tv1 + td(a1, a2).
//
// Intruder strands are linear send/receive traces; they are stored as
// synthesized roles so the same extraction and well-formedness machinery
// covers them, tagged with the rule that produced them.
//
// ============================================================================

#pragma once

#include <cpsp/lang.hpp>
#include <cpsp/smtlib.hpp>
#include <cpsp/terms.hpp>
#include <cpsp/timealg.hpp>
#include <cpsp/topology.hpp>

#include <algorithm>
#include <functional>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cpsp {

struct NodeId {
    int strand = -1;
    Position pos;

    bool operator==(const NodeId& o) const { return strand == o.strand && pos == o.pos; }
    bool operator<(const NodeId& o) const {
        if (strand != o.strand) return strand < o.strand;
        return pos < o.pos;
    }
    std::string str() const { return "s" + std::to_string(strand) + ":" + pos_str(pos); }
};

struct Node {
    NodeId id;
    AgentId agent;
    std::string tvar;
};

enum class ConstraintSource { RoleAnnotation, SeqEdge, MsgEdge };

inline const char* source_str(ConstraintSource s) {
    switch (s) {
        case ConstraintSource::RoleAnnotation: return "role-annotation";
        case ConstraintSource::SeqEdge: return "seq-edge";
        case ConstraintSource::MsgEdge: return "msg-edge";
    }
    return "?";
}

struct TaggedConstraint {
    TimeConstraint constraint;
    ConstraintSource source;
    NodeId node;  // the annotated node, or the edge target
};

struct StrandInfo {
    AgentId agent;
    Role role;                                  // instantiated body
    std::string intruder_rule;                  // empty for participant strands
    std::map<Position, std::string> tvar_at;    // eager reservation
    std::map<Position, Message> new_consts;     // New position -> fresh constant
};

class TimedBundle {
public:
    // Instantiates a role for an agent: run arguments close the parameters,
    // News become fresh constants, receive-bound variables and role time
    // variables are renamed apart per strand, and every position gets a
    // fresh time variable.
    int instantiate(const Role& role, const AgentId& agent, const std::vector<Message>& args,
                    FreshNames& fresh) {
        if (args.size() != role.params.size())
            throw UnboundParam("run of " + (role.name.empty() ? "role" : role.name) + " expects " +
                               std::to_string(role.params.size()) + " arguments, got " +
                               std::to_string(args.size()));
        int sid = (int)strands_.size();
        StrandInfo info;
        info.agent = agent;

        Substitution bind;
        for (size_t i = 0; i < role.params.size(); ++i) bind.bind(role.params[i], args[i]);

        // fresh constants for News, strand-local names for everything else
        std::map<Position, std::string> new_vars;
        std::set<std::string> msg_vars, time_vars;
        scan(role.body.get(), {}, new_vars, msg_vars, time_vars);
        for (const auto& [pos, var] : new_vars) {
            Message c = Message::nonce(fresh.fresh(var, sid));
            bind.bind(var, c);
            info.new_consts[pos] = c;
        }
        for (const auto& v : msg_vars)
            if (!bind.lookup(v)) bind.bind(v, Message::var(v + "#s" + std::to_string(sid)));
        std::map<std::string, std::string> tmap;
        for (const auto& t : time_vars) tmap[t] = t + "#s" + std::to_string(sid);

        info.role.name = role.name;
        info.role.body = rewrite(role.body.get(), bind, tmap);
        for (const auto& v : vars_of_body(info.role.body.get()))
            if (v.find("#s") == std::string::npos)
                throw UnboundParam("role " + role.name + " has unbound variable " + v);
        for (const auto& pos : positions(info.role)) info.tvar_at[pos] = fresh.fresh_tvar();
        strands_.push_back(std::move(info));
        return sid;
    }

    // A bare strand (used for intruder traces): the body is already closed.
    int add_strand(const AgentId& agent, Role body, std::string intruder_rule,
                   FreshNames& fresh) {
        int sid = (int)strands_.size();
        StrandInfo info;
        info.agent = agent;
        info.role = std::move(body);
        info.intruder_rule = std::move(intruder_rule);
        for (const auto& pos : positions(info.role)) info.tvar_at[pos] = fresh.fresh_tvar();
        strands_.push_back(std::move(info));
        return sid;
    }

    const Node& add_node(const NodeId& id) {
        const StrandInfo& s = strand(id.strand);
        auto it = s.tvar_at.find(id.pos);
        if (it == s.tvar_at.end()) throw InvalidPosition("no such position: " + id.str());
        auto [slot, fresh_insert] = nodes_.try_emplace(id, Node{id, s.agent, it->second});
        return slot->second;
    }

    // Appends the node and the strand-order edge from the previously
    // appended node of the same strand.
    const Node& append(const NodeId& id) {
        NodeId prev;
        bool have_prev = false;
        for (const auto& [nid, node] : nodes_) {
            if (nid.strand != id.strand) continue;
            if (!have_prev || prev < nid) prev = nid;
            have_prev = true;
        }
        const Node& n = add_node(id);
        if (have_prev) add_seq_edge(prev, id);
        return n;
    }

    void add_seq_edge(const NodeId& a, const NodeId& b) {
        require(a);
        require(b);
        seq_edges_.insert({a, b});
    }
    void add_msg_edge(const NodeId& a, const NodeId& b) {
        require(a);
        require(b);
        msg_edges_.insert({a, b});
    }

    const std::map<NodeId, Node>& nodes() const { return nodes_; }
    const std::set<std::pair<NodeId, NodeId>>& seq_edges() const { return seq_edges_; }
    const std::set<std::pair<NodeId, NodeId>>& msg_edges() const { return msg_edges_; }
    const std::vector<StrandInfo>& strands() const { return strands_; }
    const StrandInfo& strand(int sid) const { return strands_.at((size_t)sid); }
    bool has_node(const NodeId& id) const { return nodes_.count(id) > 0; }

    const Substitution& subst() const { return subst_; }
    void set_subst(Substitution s) { subst_ = std::move(s); }

    // Shares another bundle's strand instantiations (and their reserved time
    // variables) without taking any of its nodes or edges.
    void copy_strand_table(const TimedBundle& o) { strands_ = o.strands_; }

    const CommandNode* command(const NodeId& id) const {
        return command_at(strand(id.strand).role, id.pos);
    }

    // The message of a send/receive node under the bundle substitution.
    Message term(const NodeId& id) const {
        const CommandNode* c = command(id);
        if (c->kind != CmdKind::Send && c->kind != CmdKind::Recv)
            throw InvalidPosition("node has no message term: " + id.str());
        return apply(subst_, c->msg);
    }

    std::string node_label(const NodeId& id) const {
        const CommandNode* c = command(id);
        const Node& n = nodes_.at(id);
        std::string body;
        switch (c->kind) {
            case CmdKind::New: body = "new " + strand(id.strand).new_consts.at(id.pos).str(); break;
            case CmdKind::Send: body = "+" + term(id).str(); break;
            case CmdKind::Recv: body = "-" + term(id).str(); break;
            case CmdKind::Cond: body = "if"; break;
            case CmdKind::Nil: body = "nil"; break;
        }
        return n.agent.name + ": " + body + " @" + n.tvar;
    }

private:
    static void scan(const CommandNode* n, Position here, std::map<Position, std::string>& news,
                     std::set<std::string>& msg_vars, std::set<std::string>& time_vars) {
        auto collect_tc = [&](const TimeConstraint& c) {
            std::set<std::string> tv, dist;
            collect_symbols(c, tv, dist);
            time_vars.insert(tv.begin(), tv.end());
        };
        std::function<void(const BoolExpr&)> collect_guard = [&](const BoolExpr& b) {
            switch (b.kind()) {
                case BoolKind::UnifTest:
                    collect_vars(b.lhs_msg(), msg_vars);
                    collect_vars(b.rhs_msg(), msg_vars);
                    break;
                case BoolKind::TimeCmp: collect_tc(b.cmp()); break;
                case BoolKind::And:
                    collect_guard(b.lhs());
                    collect_guard(b.rhs());
                    break;
                case BoolKind::Not: collect_guard(b.lhs()); break;
            }
        };
        while (n && n->kind != CmdKind::Nil) {
            if (n->annotation) collect_tc(*n->annotation);
            switch (n->kind) {
                case CmdKind::New:
                    news[here] = n->new_var;
                    msg_vars.insert(n->new_var);
                    break;
                case CmdKind::Send:
                case CmdKind::Recv: collect_vars(n->msg, msg_vars); break;
                case CmdKind::Cond: {
                    collect_guard(n->guard);
                    Position t = here;
                    t.push_back(1);
                    scan(n->then_branch.get(), t, news, msg_vars, time_vars);
                    t.back() = 2;
                    scan(n->else_branch.get(), t, news, msg_vars, time_vars);
                    return;
                }
                default: return;
            }
            here.push_back(1);
            n = n->next.get();
        }
    }

    static std::set<std::string> vars_of_body(const CommandNode* n) {
        std::set<std::string> out;
        std::function<void(const BoolExpr&)> guard_vars = [&](const BoolExpr& b) {
            switch (b.kind()) {
                case BoolKind::UnifTest:
                    collect_vars(b.lhs_msg(), out);
                    collect_vars(b.rhs_msg(), out);
                    break;
                case BoolKind::And:
                    guard_vars(b.lhs());
                    guard_vars(b.rhs());
                    break;
                case BoolKind::Not: guard_vars(b.lhs()); break;
                default: break;
            }
        };
        std::function<void(const CommandNode*)> walk = [&](const CommandNode* c) {
            while (c && c->kind != CmdKind::Nil) {
                if (c->kind == CmdKind::Send || c->kind == CmdKind::Recv)
                    collect_vars(c->msg, out);
                if (c->kind == CmdKind::Cond) {
                    guard_vars(c->guard);
                    walk(c->then_branch.get());
                    walk(c->else_branch.get());
                    return;
                }
                c = c->next.get();
            }
        };
        walk(n);
        return out;
    }

    static BoolExpr rewrite_bool(const BoolExpr& b, const Substitution& bind,
                                 const std::map<std::string, std::string>& tmap);

    static TimeConstraint rename_tvars(const TimeConstraint& c,
                                       const std::map<std::string, std::string>& tmap) {
        std::function<TimeExpr(const TimeExpr&)> go = [&](const TimeExpr& e) -> TimeExpr {
            switch (e.kind()) {
                case TimeKind::Var: {
                    auto it = tmap.find(e.name());
                    return it == tmap.end() ? e : TimeExpr::var(it->second);
                }
                case TimeKind::Add: return TimeExpr::add(go(e.lhs()), go(e.rhs()));
                case TimeKind::Sub: return TimeExpr::sub(go(e.lhs()), go(e.rhs()));
                case TimeKind::Mul: return TimeExpr::mul(go(e.lhs()), go(e.rhs()));
                case TimeKind::Div: return TimeExpr::div(go(e.lhs()), go(e.rhs()));
                case TimeKind::Floor: return TimeExpr::floor(go(e.lhs()));
                case TimeKind::Ceil: return TimeExpr::ceil(go(e.lhs()));
                default: return e;
            }
        };
        return {go(c.lhs), c.rel, go(c.rhs)};
    }

    static CommandPtr rewrite(const CommandNode* n, const Substitution& bind,
                              const std::map<std::string, std::string>& tmap) {
        if (!n || n->kind == CmdKind::Nil) return nil_command();
        auto out = std::make_shared<CommandNode>();
        out->kind = n->kind;
        out->new_var = n->new_var;
        if (n->annotation) out->annotation = rename_tvars(*n->annotation, tmap);
        switch (n->kind) {
            case CmdKind::Send:
            case CmdKind::Recv:
                out->msg = apply(bind, n->msg);
                out->next = rewrite(n->next.get(), bind, tmap);
                break;
            case CmdKind::New:
                out->next = rewrite(n->next.get(), bind, tmap);
                break;
            case CmdKind::Cond:
                out->guard = rewrite_bool(n->guard, bind, tmap);
                out->then_branch = rewrite(n->then_branch.get(), bind, tmap);
                out->else_branch = rewrite(n->else_branch.get(), bind, tmap);
                break;
            default: break;
        }
        return out;
    }

    void require(const NodeId& id) const {
        if (!nodes_.count(id)) throw InvalidPosition("edge endpoint not in bundle: " + id.str());
    }

    std::vector<StrandInfo> strands_;
    std::map<NodeId, Node> nodes_;
    std::set<std::pair<NodeId, NodeId>> seq_edges_, msg_edges_;
    Substitution subst_;
};

inline BoolExpr TimedBundle::rewrite_bool(const BoolExpr& b, const Substitution& bind,
                                          const std::map<std::string, std::string>& tmap) {
    switch (b.kind()) {
        case BoolKind::UnifTest:
            return BoolExpr::unif_test(apply(bind, b.lhs_msg()), apply(bind, b.rhs_msg()));
        case BoolKind::TimeCmp: return BoolExpr::time_cmp(rename_tvars(b.cmp(), tmap));
        case BoolKind::And:
            return BoolExpr::conj(rewrite_bool(b.lhs(), bind, tmap),
                                  rewrite_bool(b.rhs(), bind, tmap));
        case BoolKind::Not: return BoolExpr::negate(rewrite_bool(b.lhs(), bind, tmap));
    }
    return b;
}

// ── Constraint extraction ───────────────────────────────────────────────────

inline std::vector<TaggedConstraint> extract_constraints(const TimedBundle& b) {
    std::vector<TaggedConstraint> out;
    for (const auto& [id, node] : b.nodes()) {
        const CommandNode* c = b.command(id);
        if (c->annotation)
            out.push_back({subst_cur(*c->annotation, node.tvar),
                           ConstraintSource::RoleAnnotation, id});
    }
    for (const auto& [a, bb] : b.seq_edges()) {
        const auto& na = b.nodes().at(a);
        const auto& nb = b.nodes().at(bb);
        out.push_back({tc(TimeExpr::var(nb.tvar), TimeRel::Ge, TimeExpr::var(na.tvar)),
                       ConstraintSource::SeqEdge, bb});
    }
    for (const auto& [a, bb] : b.msg_edges()) {
        const auto& na = b.nodes().at(a);
        const auto& nb = b.nodes().at(bb);
        out.push_back({tc(TimeExpr::var(nb.tvar), TimeRel::Ge,
                          TimeExpr::add(TimeExpr::var(na.tvar),
                                        TimeExpr::dist(na.agent.name, nb.agent.name))),
                       ConstraintSource::MsgEdge, bb});
    }
    return out;
}

// Def-style constraint set: annotations with cur replaced, strand order,
// hop delays; registered against the topology's axioms and scenario
// constraints.
inline ConstraintStore timed_constraint_set(const TimedBundle& b, const Topology& topo) {
    ConstraintStore store = topo.fresh_store();
    for (const auto& tc : extract_constraints(b)) store = store.add(tc.constraint);
    return store;
}

// ── Well-formedness ─────────────────────────────────────────────────────────

struct WellformedReport {
    std::vector<std::string> violations;
    Verdict store_verdict = Verdict::Unknown;
    TimeModel model;
    bool ok() const { return violations.empty() && store_verdict == Verdict::Sat; }
};

namespace detail {

enum class Tri { True, False, Open };

inline Tri eval_guard(const BoolExpr& g, const Substitution& s, const TimeModel& model,
                      const std::string& node_tvar) {
    switch (g.kind()) {
        case BoolKind::UnifTest: {
            Message a = apply(s, g.lhs_msg());
            Message b = apply(s, g.rhs_msg());
            if (a == b) return Tri::True;
            if (!unifiable(a, b)) return Tri::False;
            return Tri::Open;
        }
        case BoolKind::TimeCmp: {
            if (model.empty()) return Tri::Open;
            TimeConstraint c = subst_cur(g.cmp(), node_tvar);
            try {
                return holds(c, model) ? Tri::True : Tri::False;
            } catch (const std::out_of_range&) {
                return Tri::Open;
            }
        }
        case BoolKind::And: {
            Tri a = eval_guard(g.lhs(), s, model, node_tvar);
            Tri b = eval_guard(g.rhs(), s, model, node_tvar);
            if (a == Tri::False || b == Tri::False) return Tri::False;
            if (a == Tri::True && b == Tri::True) return Tri::True;
            return Tri::Open;
        }
        case BoolKind::Not: {
            Tri a = eval_guard(g.lhs(), s, model, node_tvar);
            if (a == Tri::True) return Tri::False;
            if (a == Tri::False) return Tri::True;
            return Tri::Open;
        }
    }
    return Tri::Open;
}

}  // namespace detail

// Checks the bundle conditions: acyclicity, unique incoming message edge per
// receive, strand-order closure, conditional branching against the guard,
// and satisfiability of the extracted constraint set. Message edges must
// also connect equal terms under the bundle substitution.
//
// `side` carries constraints the execution committed to beyond the
// extracted set (taken guard branches, goal conditions); they join the
// satisfiability check so the model used for guard evaluation respects
// them.
inline WellformedReport wellformed(const TimedBundle& b, const Topology& topo,
                                   const SatOracle& oracle,
                                   const std::vector<TimeConstraint>& side = {}) {
    WellformedReport rep;
    auto violation = [&](const std::string& v) { rep.violations.push_back(v); };

    // clause 1: finite and acyclic
    std::map<NodeId, int> indeg;
    std::map<NodeId, std::vector<NodeId>> out;
    for (const auto& [id, n] : b.nodes()) indeg[id] = 0;
    auto edge = [&](const NodeId& x, const NodeId& y) {
        out[x].push_back(y);
        indeg[y]++;
    };
    for (const auto& [x, y] : b.seq_edges()) edge(x, y);
    for (const auto& [x, y] : b.msg_edges()) edge(x, y);
    {
        std::deque<NodeId> q;
        size_t seen = 0;
        for (const auto& [id, d] : indeg)
            if (d == 0) q.push_back(id);
        auto work = indeg;
        while (!q.empty()) {
            NodeId u = q.front();
            q.pop_front();
            ++seen;
            for (const auto& v : out[u])
                if (--work[v] == 0) q.push_back(v);
        }
        if (seen != b.nodes().size()) violation("clause-1: cycle over the edge relation");
    }

    // clause 2: unique incoming message edge per receive
    for (const auto& [id, n] : b.nodes()) {
        const CommandNode* c = b.command(id);
        if (c->kind != CmdKind::Recv) continue;
        int in = 0;
        for (const auto& [x, y] : b.msg_edges())
            if (y == id) ++in;
        if (in != 1)
            violation("clause-2: receive " + id.str() + " has " + std::to_string(in) +
                      " incoming message edges");
    }

    // message edges connect a send to a receive of the same term
    for (const auto& [x, y] : b.msg_edges()) {
        const CommandNode* cx = b.command(x);
        const CommandNode* cy = b.command(y);
        if (cx->kind != CmdKind::Send || cy->kind != CmdKind::Recv) {
            violation("msg-edge: " + x.str() + " -> " + y.str() + " must run send to receive");
            continue;
        }
        if (b.term(x) != b.term(y))
            violation("msg-edge: term mismatch " + b.term(x).str() + " vs " + b.term(y).str());
    }

    // clause 3: strand-order closure
    for (const auto& [id, n] : b.nodes()) {
        if (id.pos.empty()) continue;
        NodeId parent{id.strand, Position(id.pos.begin(), id.pos.end() - 1)};
        if (!b.has_node(parent)) {
            violation("clause-3: " + id.str() + " lacks its strand predecessor");
            continue;
        }
        if (!b.seq_edges().count({parent, id}))
            violation("clause-3: missing strand edge " + parent.str() + " => " + id.str());
    }

    // clause 5: satisfiability (checked before clause 4 so guards with time
    // comparisons can be evaluated under the model)
    auto store = timed_constraint_set(b, topo);
    for (const auto& c : side) store = store.add(c);
    auto sat = oracle.check(store, Backend::Auto);
    rep.store_verdict = sat.verdict;
    rep.model = sat.model;
    if (sat.verdict == Verdict::Unsat)
        violation("clause-5: constraint set unsatisfiable");

    // clause 4: the chosen branch of every conditional matches its guard
    for (const auto& [id, n] : b.nodes()) {
        const CommandNode* c = b.command(id);
        if (c->kind != CmdKind::Cond) continue;
        std::vector<NodeId> succs;
        for (const auto& [x, y] : b.seq_edges())
            if (x == id) succs.push_back(y);
        if (succs.size() > 1) {
            violation("clause-4: conditional " + id.str() + " follows both branches");
            continue;
        }
        auto verdict = detail::eval_guard(c->guard, b.subst(), rep.model, n.tvar);
        bool then_empty = c->then_branch->kind == CmdKind::Nil;
        bool else_empty = c->else_branch->kind == CmdKind::Nil;
        if (succs.empty()) {
            bool vacuous = (verdict == detail::Tri::True && then_empty) ||
                           (verdict == detail::Tri::False && else_empty) ||
                           (verdict == detail::Tri::Open && then_empty && else_empty);
            if (!vacuous)
                violation("clause-4: conditional " + id.str() + " has no successor");
            continue;
        }
        uint8_t branch = succs[0].pos.back();
        if (verdict == detail::Tri::True && branch != 1)
            violation("clause-4: guard true but else-branch taken at " + id.str());
        if (verdict == detail::Tri::False && branch != 2)
            violation("clause-4: guard false but then-branch taken at " + id.str());
    }

    return rep;
}

// True iff every fresh constant's occurrences sit forward of its New node
// under the reflexive-transitive edge relation.
inline bool origination_ok(const TimedBundle& b) {
    std::map<NodeId, std::vector<NodeId>> out;
    for (const auto& [x, y] : b.seq_edges()) out[x].push_back(y);
    for (const auto& [x, y] : b.msg_edges()) out[x].push_back(y);
    auto reachable = [&](const NodeId& from, const NodeId& to) {
        std::set<NodeId> seen{from};
        std::deque<NodeId> q{from};
        while (!q.empty()) {
            NodeId u = q.front();
            q.pop_front();
            if (u == to) return true;
            for (const auto& v : out[u])
                if (seen.insert(v).second) q.push_back(v);
        }
        return false;
    };
    std::function<bool(const Message&, const Message&)> contains =
        [&](const Message& hay, const Message& needle) {
            if (hay == needle) return true;
            switch (hay.kind()) {
                case MsgKind::Const:
                case MsgKind::Var: return false;
                default:
                    for (const auto& a : hay.items())
                        if (contains(a, needle)) return true;
                    return false;
            }
        };

    for (int sid = 0; sid < (int)b.strands().size(); ++sid) {
        for (const auto& [pos, c] : b.strand(sid).new_consts) {
            NodeId origin{sid, pos};
            if (!b.has_node(origin)) {
                // the New never executed; the constant must not occur anywhere
                for (const auto& [id, n] : b.nodes()) {
                    const CommandNode* cmd = b.command(id);
                    if ((cmd->kind == CmdKind::Send || cmd->kind == CmdKind::Recv) &&
                        contains(b.term(id), c))
                        return false;
                }
                continue;
            }
            for (const auto& [id, n] : b.nodes()) {
                if (id == origin) continue;
                const CommandNode* cmd = b.command(id);
                if (cmd->kind != CmdKind::Send && cmd->kind != CmdKind::Recv) continue;
                if (contains(b.term(id), c) && !reachable(origin, id)) return false;
            }
        }
    }
    return true;
}

}  // namespace cpsp
