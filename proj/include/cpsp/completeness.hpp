// ============================================================================
// cpsp/completeness.hpp — restricted bundles and the canonical-intruder
// transformation
// ============================================================================
//
// restrict() projects a bundle onto its participant nodes: strand-order
// edges survive verbatim, and each receive gains one edge from every first
// participant node found walking backward through intruder nodes. A receive
// fed purely from intruder knowledge keeps no incoming edges.
//
// canonicalize() rebuilds a bundle over the one-intruder-per-participant
// configuration: participant strands and their node identities are kept
// untouched; every intruder-mediated delivery is replaced by the
// broadcast-then-compose pattern at the recipient's intruder, reproducing
// exactly the routing leaves the original bundle used. The two obligations
// that make this the completeness transformation:
//   (a) the restriction of the result is identical to the original's,
//   (b) any model of the original store, projected to participant time
//       variables, extends to a model of the canonical store.
//
// completeness_trial() is the randomized harness behind both the property
// suite and the check-completeness subcommand: random exchange patterns are
// routed through scattered intruders over a random metric topology, then
// canonicalized and checked for (a) and (b).
//
// ============================================================================

#pragma once

#include <cpsp/intruder.hpp>

#include <random>
#include <sstream>

namespace cpsp {

class NonCompliantBundle : public std::runtime_error {
public:
    explicit NonCompliantBundle(const std::string& what) : std::runtime_error(what) {}
};

struct RestrictedBundle {
    std::set<NodeId> nodes;
    std::set<std::pair<NodeId, NodeId>> seq_edges;
    std::set<std::pair<NodeId, NodeId>> msg_edges;  // receives may have several

    bool operator==(const RestrictedBundle& o) const {
        return nodes == o.nodes && seq_edges == o.seq_edges && msg_edges == o.msg_edges;
    }
};

namespace detail {

inline bool is_participant_node(const TimedBundle& b, const NodeId& id) {
    return b.nodes().at(id).agent.kind == AgentKind::Participant;
}

// The intruder strand shapes of the trace rules: sign patterns over the
// linear body.
inline void check_intruder_shape(const StrandInfo& s) {
    std::string signs;
    const CommandNode* n = s.role.body.get();
    while (n && n->kind != CmdKind::Nil) {
        if (n->kind == CmdKind::Cond || n->annotation)
            throw NonCompliantBundle("intruder strand with conditional or annotation");
        signs += n->kind == CmdKind::Send ? '+' : '-';
        n = n->next.get();
    }
    static const std::set<std::string> allowed{"+", "-", "-+", "--+", "-++"};
    if (!allowed.count(signs))
        throw NonCompliantBundle("intruder strand shape '" + signs + "' matches no trace rule");
}

// First participant nodes reached walking backward from `start` through
// intruder nodes only.
inline std::set<NodeId> participant_sources(const TimedBundle& b, const NodeId& start) {
    std::map<NodeId, std::vector<NodeId>> preds;
    for (const auto& [x, y] : b.seq_edges()) preds[y].push_back(x);
    for (const auto& [x, y] : b.msg_edges()) preds[y].push_back(x);

    std::set<NodeId> out, seen{start};
    std::deque<NodeId> q{start};
    while (!q.empty()) {
        NodeId u = q.front();
        q.pop_front();
        if (is_participant_node(b, u)) {
            out.insert(u);
            continue;  // stop at the first participant node on this path
        }
        check_intruder_shape(b.strand(u.strand));
        for (const auto& p : preds[u])
            if (seen.insert(p).second) q.push_back(p);
    }
    return out;
}

}  // namespace detail

// The bundle projected onto participants.
inline RestrictedBundle restrict(const TimedBundle& b) {
    RestrictedBundle out;
    for (const auto& [id, n] : b.nodes())
        if (n.agent.kind == AgentKind::Participant) out.nodes.insert(id);
    for (const auto& [x, y] : b.seq_edges())
        if (out.nodes.count(x) && out.nodes.count(y)) out.seq_edges.insert({x, y});
    for (const auto& [id, n] : b.nodes()) {
        if (!out.nodes.count(id)) continue;
        if (b.command(id)->kind != CmdKind::Recv) continue;
        for (const auto& [x, y] : b.msg_edges()) {
            if (!(y == id)) continue;
            if (detail::is_participant_node(b, x)) {
                out.msg_edges.insert({x, id});
            } else {
                for (const auto& src : detail::participant_sources(b, x))
                    out.msg_edges.insert({src, id});
            }
        }
    }
    return out;
}

// Equivalence of two bundles over possibly different intruder topologies:
// their participant restrictions are syntactically identical. Both bundles
// are expected to be well-formed over their own topologies.
inline bool equivalent(const TimedBundle& b1, const Topology&, const TimedBundle& b2,
                       const Topology&) {
    return restrict(b1) == restrict(b2);
}

// ── Canonicalization ────────────────────────────────────────────────────────

inline TimedBundle canonicalize(const TimedBundle& b1, const std::vector<Message>& kp,
                                FreshNames& fresh) {
    TimedBundle b2;
    // keep the strand table verbatim so participant node identities survive
    b2.copy_strand_table(b1);
    b2.set_subst(b1.subst());

    std::vector<NodeId> participant_recvs;
    for (const auto& [id, n] : b1.nodes()) {
        if (!detail::is_participant_node(b1, id)) continue;
        b2.add_node(id);
    }
    for (const auto& [x, y] : b1.seq_edges())
        if (b2.has_node(x) && b2.has_node(y)) b2.add_seq_edge(x, y);

    MaterializeContext ctx{&b2, &fresh, {}, nullptr, {}};

    for (const auto& [id, n] : b1.nodes()) {
        if (!b2.has_node(id) || b1.command(id)->kind != CmdKind::Recv) continue;
        std::vector<NodeId> sources;
        for (const auto& [x, y] : b1.msg_edges())
            if (y == id) sources.push_back(x);
        if (sources.size() != 1)
            throw NonCompliantBundle("receive " + id.str() + " lacks a unique incoming edge");
        NodeId src = sources[0];
        if (detail::is_participant_node(b1, src)) {
            b2.add_msg_edge(src, id);  // direct delivery stays direct
            continue;
        }

        // reproduce the intruder work from exactly the same routing leaves
        std::set<NodeId> preds = detail::participant_sources(b1, src);
        DeducibilityConstraint dc;
        for (const auto& p : preds)
            dc.pool.push_back(sent_entry(b1.term(p), b1.nodes().at(p).agent,
                                         b1.nodes().at(p).tvar, p));
        for (const auto& k : kp) dc.pool.push_back(kp_entry(k));
        dc.target = b1.term(id);
        dc.recipient = n.agent;
        dc.recv_tvar = n.tvar;
        dc.recv_node = id;

        auto sols = derive(dc, {}, fresh);
        const DeriveSolution* chosen = nullptr;
        for (const auto& s : sols) {
            std::set<NodeId> used;
            for (const auto& pr : s.used) used.insert(pr.node);
            if (used == preds && s.subst.empty()) { chosen = &s; break; }
        }
        if (!chosen)
            throw NonCompliantBundle("cannot reproduce the routing into " + id.str() +
                                     " from its participant sources");
        materialize(chosen->derivation, dc, b1.subst(), ctx);
    }
    return b2;
}

// ── Randomized completeness trials ──────────────────────────────────────────

struct TrialOutcome {
    bool pass = false;
    bool vacuous = false;  // original store unsatisfiable
    std::string detail;
};

struct TrialSetup {
    std::vector<std::string> participants;  // 2..3
    std::vector<std::string> intruders;     // 1..4 scattered
    uint64_t seed = 0;
    bool break_canonical = false;  // negative control for the harness itself
};

namespace detail {

inline Role ground_trace(const std::vector<std::pair<bool, Message>>& steps) {
    CommandPtr next = nil_command();
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        auto n = std::make_shared<CommandNode>();
        n->kind = it->first ? CmdKind::Send : CmdKind::Recv;
        n->msg = it->second;
        n->next = next;
        next = n;
    }
    Role r;
    r.body = next;
    return r;
}

}  // namespace detail

// One randomized trial: build a scattered-intruder bundle from random
// exchanges (forwards and compositions), canonicalize, then check
// restriction identity and model extension.
inline TrialOutcome completeness_trial(const TrialSetup& setup, const SatOracle& oracle) {
    std::mt19937_64 rng(setup.seed);
    TrialOutcome out;

    // random metric topology: L1 distances between random grid points
    std::vector<std::string> agents = setup.participants;
    agents.insert(agents.end(), setup.intruders.begin(), setup.intruders.end());
    std::map<std::string, std::pair<int, int>> at;
    for (const auto& a : agents) at[a] = {(int)(rng() % 12), (int)(rng() % 12)};
    auto dist_of = [&](const std::string& a, const std::string& b) {
        return Rat(std::abs(at[a].first - at[b].first) + std::abs(at[a].second - at[b].second));
    };

    Topology trial_topo;
    for (const auto& p : setup.participants) trial_topo.add_agent({p, AgentKind::Participant});
    for (const auto& i : setup.intruders) trial_topo.add_agent({i, AgentKind::Intruder});
    for (const auto& a : agents)
        for (const auto& b : agents)
            if (a != b)
                trial_topo.add_constraint(
                    tc(TimeExpr::dist(a, b), TimeRel::Eq, TimeExpr::num(dist_of(a, b))));

    // random exchange plan: sends of fresh constants, receives of either a
    // forwarded earlier message or a pair composed from two of them
    struct Sent {
        Message msg;
        std::string sender;
        NodeId node;
    };
    int n_sends = 2 + (int)(rng() % 3);
    int n_recvs = 1 + (int)(rng() % 2);

    struct Event {
        bool is_send;
        std::string agent;
        Message msg;
        std::vector<int> uses;  // indexes into sends, for receives
    };
    std::vector<Event> plan;
    std::vector<Message> send_msgs;
    for (int i = 0; i < n_sends; ++i) {
        Message m = Message::nonce("m" + std::to_string(i) + "x" + std::to_string(rng() % 1000));
        send_msgs.push_back(m);
        plan.push_back({true, setup.participants[rng() % setup.participants.size()], m, {}});
    }
    for (int i = 0; i < n_recvs; ++i) {
        Event e;
        e.is_send = false;
        e.agent = setup.participants[rng() % setup.participants.size()];
        if (send_msgs.size() >= 2 && !setup.intruders.empty() && rng() % 2 == 0) {
            int a = (int)(rng() % send_msgs.size());
            int b = (int)(rng() % send_msgs.size());
            if (a == b) b = (a + 1) % (int)send_msgs.size();
            e.msg = Message::tuple({send_msgs[(size_t)a], send_msgs[(size_t)b]});
            e.uses = {a, b};
        } else {
            int a = (int)(rng() % send_msgs.size());
            e.msg = send_msgs[(size_t)a];
            e.uses = {a};
        }
        plan.push_back(std::move(e));
    }

    // participant strands: one per participant, events in plan order
    FreshNames fresh;
    TimedBundle b1;
    std::map<std::string, std::vector<std::pair<bool, Message>>> bodies;
    for (const auto& e : plan) bodies[e.agent].push_back({e.is_send, e.msg});
    std::map<std::string, int> strand_of;
    std::map<std::string, int> step_of;
    for (const auto& p : setup.participants) {
        if (!bodies.count(p)) continue;
        strand_of[p] = b1.add_strand({p, AgentKind::Participant},
                                     detail::ground_trace(bodies[p]), "", fresh);
        step_of[p] = 0;
    }

    std::vector<Sent> sends;
    std::optional<std::pair<NodeId, NodeId>> annotated;  // recv node + a send it uses
    for (const auto& e : plan) {
        int sid = strand_of[e.agent];
        Position pos((size_t)step_of[e.agent], (uint8_t)1);
        b1.append({sid, pos});
        step_of[e.agent]++;
        NodeId here{sid, pos};
        if (e.is_send) {
            sends.push_back({e.msg, e.agent, here});
            continue;
        }
        // route each used send through a random chain of scattered intruders
        std::vector<NodeId> inputs;
        for (int use : e.uses) {
            NodeId from = sends[(size_t)use].node;
            int hops = setup.intruders.empty() ? 0 : 1 + (int)(rng() % 2);
            Message m = sends[(size_t)use].msg;
            for (int h = 0; h < hops; ++h) {
                const std::string& ti = setup.intruders[rng() % setup.intruders.size()];
                int fs = b1.add_strand({ti, AgentKind::Intruder},
                                       detail::ground_trace({{false, m}, {true, m}}), "forward",
                                       fresh);
                b1.append({fs, {}});
                b1.append({fs, {1}});
                b1.add_msg_edge(from, {fs, {}});
                from = {fs, {1}};
            }
            inputs.push_back(from);
        }
        NodeId feeder;
        if (inputs.size() == 1) {
            feeder = inputs[0];
        } else {
            const std::string& ti = setup.intruders[rng() % setup.intruders.size()];
            Message lm = sends[(size_t)e.uses[0]].msg;
            Message rm = sends[(size_t)e.uses[1]].msg;
            int cs = b1.add_strand(
                {ti, AgentKind::Intruder},
                detail::ground_trace({{false, lm}, {false, rm}, {true, e.msg}}), "concat", fresh);
            b1.append({cs, {}});
            b1.append({cs, {1}});
            b1.append({cs, {1, 1}});
            b1.add_msg_edge(inputs[0], {cs, {}});
            b1.add_msg_edge(inputs[1], {cs, {1}});
            feeder = {cs, {1, 1}};
        }
        b1.add_msg_edge(feeder, here);
        if (!annotated) annotated = {here, sends[(size_t)e.uses[0]].node};
    }

    // sometimes constrain a round: the receive must land within a random
    // deadline of the send it consumed, so some trials go unsatisfiable
    ConstraintStore store1 = timed_constraint_set(b1, trial_topo);
    if (annotated && rng() % 2 == 0) {
        Rat bound((long)(rng() % 20));
        store1 = store1.add(tc(TimeExpr::var(b1.nodes().at(annotated->first).tvar), TimeRel::Le,
                               TimeExpr::add(TimeExpr::var(b1.nodes().at(annotated->second).tvar),
                                             TimeExpr::num(bound))));
    }

    auto r1 = oracle.check(store1, Backend::Auto);
    if (r1.verdict == Verdict::Unsat) {
        out.pass = true;
        out.vacuous = true;
        out.detail = "original store unsatisfiable; nothing to preserve";
        return out;
    }
    if (r1.verdict != Verdict::Sat) {
        out.detail = "solver returned unknown on the original store";
        return out;
    }

    // canonical counterpart
    TimedBundle b2;
    try {
        b2 = canonicalize(b1, {}, fresh);
    } catch (const NonCompliantBundle& e) {
        out.detail = std::string("canonicalize: ") + e.what();
        return out;
    }

    if (setup.break_canonical) {
        // negative control: tamper with one delivery so the restriction
        // cannot match
        for (const auto& [id, n] : b2.nodes()) {
            if (b2.command(id)->kind != CmdKind::Recv || !detail::is_participant_node(b2, id))
                continue;
            TimedBundle tampered;
            tampered.copy_strand_table(b2);
            tampered.set_subst(b2.subst());
            for (const auto& [nid, nn] : b2.nodes()) tampered.add_node(nid);
            for (const auto& [x, y] : b2.seq_edges()) tampered.add_seq_edge(x, y);
            for (const auto& [x, y] : b2.msg_edges())
                if (!(y == id)) tampered.add_msg_edge(x, y);
            b2 = std::move(tampered);
            break;
        }
    }

    if (!(restrict(b1) == restrict(b2))) {
        out.detail = "restrictions differ";
        return out;
    }

    // canonical topology: participant pins, the canonical equalities, and
    // the scattered intruders' pins (their strands are gone, but keeping the
    // atoms constrained is harmless)
    Topology topo2 = trial_topo;
    for (const auto& p : setup.participants) {
        std::string ti = canonical_intruder_name(p);
        topo2.add_agent({ti, AgentKind::Intruder});
        topo2.add_constraint(tc(TimeExpr::dist(p, ti), TimeRel::Eq, TimeExpr::num(0)));
        topo2.add_constraint(tc(TimeExpr::dist(ti, p), TimeRel::Eq, TimeExpr::num(0)));
    }
    for (const auto& p : setup.participants)
        for (const auto& q : setup.participants)
            if (p != q)
                topo2.add_constraint(tc(
                    TimeExpr::dist(canonical_intruder_name(p), canonical_intruder_name(q)),
                    TimeRel::Eq, TimeExpr::dist(p, q)));

    ConstraintStore store2 = timed_constraint_set(b2, topo2);
    // model extension: pin every participant node time to its value in the
    // original model
    for (const auto& [id, n] : b1.nodes()) {
        if (!detail::is_participant_node(b1, id)) continue;
        auto it = r1.model.find(n.tvar);
        if (it == r1.model.end()) continue;
        store2 = store2.add(tc(TimeExpr::var(n.tvar), TimeRel::Eq, TimeExpr::num(it->second)));
    }
    auto r2 = oracle.check(store2, Backend::Auto);
    if (r2.verdict != Verdict::Sat) {
        out.detail = "canonical store does not extend the original model";
        return out;
    }

    out.pass = true;
    out.detail = "restriction identical; model extends";
    return out;
}

}  // namespace cpsp
