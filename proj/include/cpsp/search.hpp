// ============================================================================
// cpsp/search.hpp — forward symbolic reachability over scenario runs
// ============================================================================
//
// A state holds the bundle built so far, each strand's next position, the
// knowledge pool, the accumulated constraint store, the substitution, and
// the pending (deferred) deducibility constraints. Exploration:
//
//   * New and plain Send steps commute with everything that matters, so the
//     lowest-numbered strand's local step runs immediately without forking.
//     They add at most a fresh-variable strand-order bound, which cannot
//     make a satisfiable store unsatisfiable, so no solver call either.
//   * Receives fork over derive() solutions; a receive whose pattern is a
//     bare variable defers (the intruder can always supply a fresh text) and
//     is re-derived the moment a substitution binds it.
//   * Conditionals fork then/else; unification tests extend the substitution
//     (then) or record a disunification (else, rechecked on every extension);
//     time comparisons land in the store, negated on the else side.
//   * Timed sends, receives, conditionals and goal checks are the only
//     points that call the satisfiability oracle; Unsat prunes the branch.
//
// On a goal match the store plus the goal's extra constraints must be
// satisfiable; the witness bundle then gets explicit intruder strands for
// every receive, is checked well-formed, and its model is re-evaluated
// under exact arithmetic before the attack is reported.
//
// ============================================================================

#pragma once

#include <cpsp/completeness.hpp>
#include <cpsp/intruder.hpp>

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace cpsp {

struct SearchLimits {
    int max_depth = 64;       // total nodes in the bundle
    long max_states = 100000;
    int solver_timeout_ms = 20000;
    int workers = 1;
    uint64_t seed = 0;
};

struct SearchStats {
    long states = 0;
    uint64_t builtin_calls = 0;
    uint64_t smt_calls = 0;
    int max_depth = 0;
    long wall_ms = 0;
    long rejected_witnesses = 0;
};

enum class SearchVerdict { Attack, NoAttack, LimitExceeded };

struct AttackTrace {
    TimedBundle witness;
    TimeModel model;
    Goal goal;
    Topology topology;  // the full canonical topology the witness lives over
    SearchStats stats;
};

struct SearchOutcome {
    SearchVerdict verdict = SearchVerdict::NoAttack;
    std::optional<AttackTrace> trace;
    SearchStats stats;
};

namespace detail {

struct ResolvedRecv {
    DeducibilityConstraint dc;
    Derivation derivation;
    Substitution subst_at_discharge;
};

struct SearchState {
    TimedBundle bundle;
    std::vector<Position> frontier;  // per strand
    std::vector<bool> done;
    std::vector<KnowledgeEntry> pool;
    std::vector<DeducibilityConstraint> pending;
    ConstraintStore store;
    Substitution subst;
    std::vector<std::pair<Message, Message>> disunifs;
    std::vector<ResolvedRecv> resolved;
    int depth = 0;
};

struct SearchShared {
    const Scenario* scenario = nullptr;
    const SatOracle* oracle = nullptr;
    FreshNames* fresh = nullptr;
    SearchLimits limits;

    std::atomic<long> states{0};
    std::atomic<int> max_depth{0};
    std::atomic<bool> truncated{false};
    std::atomic<bool> found{false};
    std::atomic<long> rejected{0};
    std::mutex result_mu;
    std::optional<AttackTrace> result;
};

// ── guard solving ───────────────────────────────────────────────────────────

struct GuardResult {
    Substitution subst;
    ConstraintStore store;
    std::vector<std::pair<Message, Message>> new_disunifs;
    bool feasible = true;
};

inline std::vector<GuardResult> solve_guard(const BoolExpr& g, bool positive,
                                            const GuardResult& in, const std::string& node_tvar) {
    switch (g.kind()) {
        case BoolKind::UnifTest: {
            Message a = apply(in.subst, g.lhs_msg());
            Message b = apply(in.subst, g.rhs_msg());
            if (positive) {
                auto u = unify(a, b, in.subst);
                if (!u) return {};
                GuardResult out = in;
                out.subst = *u;
                return {out};
            }
            if (a == b) return {};  // already equal: the negation cannot hold
            GuardResult out = in;
            if (unifiable(a, b)) out.new_disunifs.push_back({a, b});
            return {out};
        }
        case BoolKind::TimeCmp: {
            TimeConstraint c = subst_cur(g.cmp(), node_tvar);
            GuardResult out = in;
            if (positive) {
                out.store = out.store.add(c);
            } else {
                TimeRel flipped;
                switch (c.rel) {
                    case TimeRel::Eq: {
                        // a != b forks into a < b and a > b
                        GuardResult lt = in, gt = in;
                        lt.store = lt.store.add(tc(c.lhs, TimeRel::Lt, c.rhs));
                        gt.store = gt.store.add(tc(c.lhs, TimeRel::Gt, c.rhs));
                        return {lt, gt};
                    }
                    case TimeRel::Ge: flipped = TimeRel::Lt; break;
                    case TimeRel::Gt: flipped = TimeRel::Le; break;
                    case TimeRel::Lt: flipped = TimeRel::Ge; break;
                    case TimeRel::Le: flipped = TimeRel::Gt; break;
                    default: return {};
                }
                out.store = out.store.add(tc(c.lhs, flipped, c.rhs));
            }
            return {out};
        }
        case BoolKind::And: {
            if (positive) {
                std::vector<GuardResult> out;
                for (auto& left : solve_guard(g.lhs(), true, in, node_tvar))
                    for (auto& both : solve_guard(g.rhs(), true, left, node_tvar))
                        out.push_back(both);
                return out;
            }
            // not (a && b): either not a, or (a and not b); disjoint cases
            std::vector<GuardResult> out = solve_guard(g.lhs(), false, in, node_tvar);
            for (auto& a_holds : solve_guard(g.lhs(), true, in, node_tvar))
                for (auto& not_b : solve_guard(g.rhs(), false, a_holds, node_tvar))
                    out.push_back(not_b);
            return out;
        }
        case BoolKind::Not: return solve_guard(g.lhs(), !positive, in, node_tvar);
    }
    return {};
}

// ── state bookkeeping ───────────────────────────────────────────────────────

// Applies the disunification ledger to a state whose substitution changed:
// a pair that became equal kills the state; a pair that can no longer unify
// is discharged for good.
inline bool recheck_disunifs(SearchState& st) {
    std::vector<std::pair<Message, Message>> keep;
    for (const auto& [a, b] : st.disunifs) {
        Message x = apply(st.subst, a);
        Message y = apply(st.subst, b);
        if (x == y) return false;
        if (unifiable(x, y)) keep.push_back({a, b});
    }
    st.disunifs = std::move(keep);
    return true;
}

inline void normalize_done(SearchState& st) {
    for (size_t sid = 0; sid < st.frontier.size(); ++sid) {
        if (st.done[sid]) continue;
        const CommandNode* c = command_at(st.bundle.strand((int)sid).role, st.frontier[sid]);
        if (c->kind == CmdKind::Nil) st.done[sid] = true;
    }
}

inline Position advance(const Position& p) {
    Position out = p;
    out.push_back(1);
    return out;
}

// Re-derives pending constraints whose target became bound. Cascades until
// every pending target is still a bare variable.
inline void discharge_pending(SearchShared& ctx, SearchState st, std::vector<SearchState>& out);

inline void after_subst_change(SearchShared& ctx, SearchState st, std::vector<SearchState>& out) {
    if (!recheck_disunifs(st)) return;
    st.bundle.set_subst(st.subst);
    discharge_pending(ctx, std::move(st), out);
}

inline void discharge_pending(SearchShared& ctx, SearchState st, std::vector<SearchState>& out) {
    for (size_t i = 0; i < st.pending.size(); ++i) {
        Message now = apply(st.subst, st.pending[i].target);
        if (now.is_var()) continue;
        DeducibilityConstraint dc = st.pending[i];
        st.pending.erase(st.pending.begin() + (long)i);
        auto sols = derive(dc, st.subst, *ctx.fresh);
        for (auto& sol : sols) {
            SearchState next = st;
            next.subst = sol.subst;
            for (const auto& c : sol.timing) next.store = next.store.add(c);
            // the substitution derive ran under, so materialization can
            // rebuild the same closure
            next.resolved.push_back({dc, sol.derivation, st.subst});
            after_subst_change(ctx, std::move(next), out);
        }
        return;  // the recursion handled the rest of the list
    }
    out.push_back(std::move(st));
}

// ── successors ──────────────────────────────────────────────────────────────

inline bool prune_unsat(SearchShared& ctx, const SearchState& st) {
    auto r = ctx.oracle->check(st.store, Backend::Auto);
    return r.verdict == Verdict::Unsat;
}

inline std::vector<SearchState> successors(SearchShared& ctx, const SearchState& st) {
    std::vector<SearchState> out;

    // local steps: the lowest strand at a New or plain Send advances alone
    for (size_t sid = 0; sid < st.frontier.size(); ++sid) {
        if (st.done[sid]) continue;
        const CommandNode* c = command_at(st.bundle.strand((int)sid).role, st.frontier[sid]);
        if (c->kind == CmdKind::New || (c->kind == CmdKind::Send && !c->annotation)) {
            SearchState next = st;
            NodeId id{(int)sid, st.frontier[sid]};
            const Node& node = next.bundle.append(id);
            if (c->kind == CmdKind::Send)
                next.pool.push_back(sent_entry(apply(next.subst, c->msg),
                                               next.bundle.strand((int)sid).agent, node.tvar, id));
            next.frontier[sid] = advance(st.frontier[sid]);
            next.depth = (int)next.bundle.nodes().size();
            normalize_done(next);
            out.push_back(std::move(next));
            return out;
        }
    }

    // choice steps: fork over every enabled strand
    for (size_t sid = 0; sid < st.frontier.size(); ++sid) {
        if (st.done[sid]) continue;
        const CommandNode* c = command_at(st.bundle.strand((int)sid).role, st.frontier[sid]);
        NodeId id{(int)sid, st.frontier[sid]};
        const AgentId& agent = st.bundle.strand((int)sid).agent;

        switch (c->kind) {
            case CmdKind::Send: {  // timed send
                SearchState next = st;
                const Node& node = next.bundle.append(id);
                next.store = next.store.add(subst_cur(*c->annotation, node.tvar));
                next.pool.push_back(
                    sent_entry(apply(next.subst, c->msg), agent, node.tvar, id));
                next.frontier[sid] = advance(st.frontier[sid]);
                next.depth = (int)next.bundle.nodes().size();
                normalize_done(next);
                if (!prune_unsat(ctx, next)) out.push_back(std::move(next));
                break;
            }
            case CmdKind::Recv: {
                SearchState base = st;
                const Node& node = base.bundle.append(id);
                if (c->annotation)
                    base.store = base.store.add(subst_cur(*c->annotation, node.tvar));
                base.frontier[sid] = advance(st.frontier[sid]);
                base.depth = (int)base.bundle.nodes().size();
                normalize_done(base);

                DeducibilityConstraint dc{base.pool, apply(base.subst, c->msg), agent,
                                          node.tvar, id};
                if (dc.target.is_var()) {
                    base.pending.push_back(dc);
                    if (!prune_unsat(ctx, base)) out.push_back(std::move(base));
                    break;
                }
                auto sols = derive(dc, base.subst, *ctx.fresh);
                for (auto& sol : sols) {
                    SearchState next = base;
                    next.subst = sol.subst;
                    for (const auto& cst : sol.timing) next.store = next.store.add(cst);
                    next.resolved.push_back({dc, sol.derivation, base.subst});
                    std::vector<SearchState> expanded;
                    after_subst_change(ctx, std::move(next), expanded);
                    for (auto& e : expanded)
                        if (!prune_unsat(ctx, e)) out.push_back(std::move(e));
                }
                break;
            }
            case CmdKind::Cond: {
                SearchState base = st;
                const Node& node = base.bundle.append(id);
                if (c->annotation)
                    base.store = base.store.add(subst_cur(*c->annotation, node.tvar));
                base.depth = (int)base.bundle.nodes().size();

                for (bool branch_then : {true, false}) {
                    GuardResult in{base.subst, base.store, {}, true};
                    for (auto& gr : solve_guard(c->guard, branch_then, in, node.tvar)) {
                        SearchState next = base;
                        next.subst = gr.subst;
                        next.store = gr.store;
                        for (auto& d : gr.new_disunifs) next.disunifs.push_back(d);
                        Position bp = st.frontier[sid];
                        bp.push_back(branch_then ? 1 : 2);
                        next.frontier[sid] = bp;
                        normalize_done(next);
                        std::vector<SearchState> expanded;
                        after_subst_change(ctx, std::move(next), expanded);
                        for (auto& e : expanded)
                            if (!prune_unsat(ctx, e)) out.push_back(std::move(e));
                    }
                }
                break;
            }
            default: break;
        }
    }
    return out;
}

// ── goal matching and witness construction ──────────────────────────────────

inline bool goal_matched(const SearchShared& ctx, const SearchState& st) {
    const Goal& goal = ctx.scenario->goal;
    if (goal.kind == GoalKind::Complete) {
        bool any = false;
        for (size_t sid = 0; sid < st.frontier.size(); ++sid) {
            if (st.bundle.strand((int)sid).agent.name != goal.participant) continue;
            any = true;
            if (!st.done[sid]) return false;
        }
        return any;
    }
    for (const auto& [id, n] : st.bundle.nodes())
        if (n.agent.name == goal.participant && id.pos == goal.pos) return true;
    return false;
}

inline std::optional<AttackTrace> try_accept(SearchShared& ctx, const SearchState& st) {
    ConstraintStore goal_store = st.store;
    for (const auto& c : ctx.scenario->goal.extra) goal_store = goal_store.add(c);
    if (ctx.oracle->check(goal_store, Backend::Auto).verdict != Verdict::Sat) return std::nullopt;

    // discharge leftovers: a pending variable target takes a fresh text
    SearchState fin = st;
    for (auto& dc : fin.pending) {
        Substitution before = fin.subst;
        auto sols = derive(dc, before, *ctx.fresh);
        if (sols.empty()) return std::nullopt;
        fin.subst = sols[0].subst;
        for (const auto& c : sols[0].timing) fin.store = fin.store.add(c);
        fin.resolved.push_back({dc, sols[0].derivation, before});
    }
    fin.pending.clear();
    fin.bundle.set_subst(fin.subst);

    // witness: materialize every receive's derivation
    TimedBundle witness = fin.bundle;
    MaterializeContext mat{&witness, ctx.fresh, {}, nullptr, {}};
    for (const auto& r : fin.resolved) materialize(r.derivation, r.dc, r.subst_at_discharge, mat);

    // the execution's own commitments (taken guard branches, derive timing,
    // goal conditions) join the extracted set, so the witness model honors
    // the branches actually taken
    std::vector<TimeConstraint> side = fin.store.constraints();
    for (const auto& c : ctx.scenario->goal.extra) side.push_back(c);

    auto rep = wellformed(witness, ctx.scenario->topology, *ctx.oracle, side);
    if (!rep.ok() || !origination_ok(witness)) {
        ++ctx.rejected;
        return std::nullopt;
    }
    // independent re-evaluation of the model, not trusting the solver
    ConstraintStore wstore = timed_constraint_set(witness, ctx.scenario->topology);
    for (const auto& c : side) wstore = wstore.add(c);
    for (const auto& c : wstore.solve_view())
        if (!holds(c, rep.model)) {
            ++ctx.rejected;
            return std::nullopt;
        }

    AttackTrace trace;
    trace.witness = std::move(witness);
    trace.model = std::move(rep.model);
    trace.goal = ctx.scenario->goal;
    trace.topology = ctx.scenario->topology;
    return trace;
}

// Depth-first exploration; returns true when an attack was found (stored in
// ctx.result by the first writer).
inline bool dfs(SearchShared& ctx, const SearchState& st, int depth_budget) {
    if (ctx.found.load(std::memory_order_relaxed)) return true;
    long n = ++ctx.states;
    if (n > ctx.limits.max_states) {
        ctx.truncated = true;
        return false;
    }
    int d = st.depth;
    int prev = ctx.max_depth.load();
    while (d > prev && !ctx.max_depth.compare_exchange_weak(prev, d)) {
    }

    if (goal_matched(ctx, st)) {
        if (auto trace = try_accept(ctx, st)) {
            std::lock_guard<std::mutex> g(ctx.result_mu);
            if (!ctx.found.exchange(true)) ctx.result = std::move(*trace);
            return true;
        }
    }
    if (st.depth >= depth_budget) {
        ctx.truncated = true;
        return false;
    }
    for (auto& next : successors(ctx, st)) {
        if (dfs(ctx, next, depth_budget)) return true;
        if (ctx.found.load(std::memory_order_relaxed)) return true;
    }
    return false;
}

}  // namespace detail

// ── find_attack ─────────────────────────────────────────────────────────────

inline SearchOutcome find_attack(const Scenario& sc, const SatOracle& oracle,
                                 const SearchLimits& limits = {}) {
    auto t0 = std::chrono::steady_clock::now();
    FreshNames fresh;
    detail::SearchShared ctx;
    ctx.scenario = &sc;
    ctx.oracle = &oracle;
    ctx.fresh = &fresh;
    ctx.limits = limits;

    uint64_t base_builtin = oracle.builtin_calls();
    uint64_t base_smt = oracle.smt_calls();

    detail::SearchState init;
    for (const auto& run : sc.runs) {
        const Role& role = sc.roles.at(run.role_name);
        const AgentId* agent = sc.topology.find(run.participant);
        init.bundle.instantiate(role, *agent, run.args, fresh);
        init.frontier.push_back({});
        init.done.push_back(false);
    }
    for (const auto& k : sc.kp) init.pool.push_back(kp_entry(k));
    init.store = sc.search_topology.fresh_store();
    detail::normalize_done(init);

    auto finish = [&](SearchVerdict v) {
        SearchOutcome out;
        out.verdict = v;
        out.stats.states = ctx.states.load();
        out.stats.max_depth = ctx.max_depth.load();
        out.stats.builtin_calls = oracle.builtin_calls() - base_builtin;
        out.stats.smt_calls = oracle.smt_calls() - base_smt;
        out.stats.rejected_witnesses = ctx.rejected.load();
        out.stats.wall_ms = (long)std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
        if (v == SearchVerdict::Attack) {
            out.trace = std::move(ctx.result);
            out.trace->stats = out.stats;
        }
        return out;
    };

    if (oracle.check(init.store, Backend::Auto).verdict == Verdict::Unsat)
        return finish(SearchVerdict::NoAttack);  // contradictory topology

    // iterative deepening on the node-count metric
    for (int budget = std::min(16, limits.max_depth);; budget = std::min(budget * 2, limits.max_depth)) {
        ctx.truncated = false;

        if (limits.workers <= 1) {
            detail::dfs(ctx, init, budget);
        } else {
            // expand a frontier wide enough to feed the workers
            std::vector<detail::SearchState> frontier{init};
            while ((int)frontier.size() < limits.workers * 4) {
                std::vector<detail::SearchState> next;
                bool grew = false;
                for (auto& st : frontier) {
                    if (goal_matched(ctx, st)) {
                        next.push_back(st);
                        continue;
                    }
                    auto succ = detail::successors(ctx, st);
                    if (succ.empty()) continue;
                    grew = true;
                    for (auto& s : succ) next.push_back(std::move(s));
                }
                if (!grew) break;
                frontier = std::move(next);
                if (frontier.empty()) break;
            }
            std::vector<std::thread> pool;
            std::atomic<size_t> cursor{0};
            std::mutex err_mu;
            std::exception_ptr err;
            for (int w = 0; w < limits.workers; ++w) {
                pool.emplace_back([&] {
                    try {
                        while (true) {
                            size_t i = cursor.fetch_add(1);
                            if (i >= frontier.size() || ctx.found.load()) return;
                            detail::dfs(ctx, frontier[i], budget);
                        }
                    } catch (...) {
                        std::lock_guard<std::mutex> g(err_mu);
                        if (!err) err = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            // an attack is a complete answer even if another subtree errored
            if (err && !ctx.found.load()) std::rethrow_exception(err);
        }

        if (ctx.found.load()) return finish(SearchVerdict::Attack);
        if (ctx.states.load() > limits.max_states)
            return finish(SearchVerdict::LimitExceeded);
        if (!ctx.truncated.load()) return finish(SearchVerdict::NoAttack);
        if (budget >= limits.max_depth) return finish(SearchVerdict::LimitExceeded);
    }
}

// True iff the state's store is unsatisfiable (the branch can be dropped).
inline bool prune(const ConstraintStore& store, const SatOracle& oracle) {
    return oracle.check(store, Backend::Auto).verdict == Verdict::Unsat;
}

}  // namespace cpsp
