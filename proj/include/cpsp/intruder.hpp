// ============================================================================
// cpsp/intruder.hpp — timed intruder deduction
// ============================================================================
//
// The eight intruder capabilities (emit a text, emit a known key, flush,
// forward, concatenate, decompose, encrypt, decrypt) are realized two ways:
//
//   * derive(): the implicit symbolic engine the search uses. Pool entries
//     carry provenance (which participant sent the message, at which time
//     variable); a solution is a unifier plus the timing obligations
//     recv_tv >= send_tv + td(sender, recipient) for every leaf used. Under
//     the one-intruder-per-participant configuration those obligations are
//     exactly the cost of routing source -> source's intruder -> recipient's
//     intruder -> recipient.
//
//   * materialize(): turns a derivation into explicit intruder strands and
//     message edges for witness bundles and the completeness harness.
//
// Derivation search is target-directed: the pool is first saturated under
// decomposition (contiguous tuple segments, decryption with an available
// inverse key), then the target is synthesized by unification against the
// closure, by tupling, by encryption, and (for text constants and
// variables) by the free text rule. Variable targets bind to fresh intruder texts, so a
// bare variable is always derivable without timing obligations.
//
// ============================================================================

#pragma once

#include <cpsp/strands.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace cpsp {

struct Provenance {
    std::string source_agent;
    std::string send_tvar;
    NodeId node;

    bool operator<(const Provenance& o) const {
        return std::tie(source_agent, send_tvar, node) <
               std::tie(o.source_agent, o.send_tvar, o.node);
    }
    bool operator==(const Provenance& o) const {
        return source_agent == o.source_agent && send_tvar == o.send_tvar && node == o.node;
    }
};

struct KnowledgeEntry {
    enum class Origin { Sent, Kp, IntruderText };

    Message msg;
    Origin origin = Origin::Kp;
    std::vector<Provenance> prov;  // empty for Kp/IntruderText entries
};

inline KnowledgeEntry sent_entry(Message m, const AgentId& from, const std::string& tvar,
                                 NodeId node) {
    return {std::move(m), KnowledgeEntry::Origin::Sent, {{from.name, tvar, node}}};
}

inline KnowledgeEntry kp_entry(Message m) { return {std::move(m), KnowledgeEntry::Origin::Kp, {}}; }

struct DeducibilityConstraint {
    std::vector<KnowledgeEntry> pool;  // snapshot at creation; only grows along a branch
    Message target;
    AgentId recipient;
    std::string recv_tvar;
    NodeId recv_node;
};

// ── Derivations ─────────────────────────────────────────────────────────────

struct Derivation {
    enum class Rule { Text, Key, Forward, Concat, Decompose, Encrypt, Decrypt };

    Rule rule = Rule::Text;
    Message produced;
    std::vector<Derivation> premises;
    int entry = -1;  // closure index for leaf-backed rules

    static const char* rule_name(Rule r) {
        switch (r) {
            case Rule::Text: return "text";
            case Rule::Key: return "key";
            case Rule::Forward: return "forward";
            case Rule::Concat: return "concat";
            case Rule::Decompose: return "decompose";
            case Rule::Encrypt: return "encrypt";
            case Rule::Decrypt: return "decrypt";
        }
        return "?";
    }

    void rules_used(std::set<Rule>& out) const {
        out.insert(rule);
        for (const auto& p : premises) p.rules_used(out);
    }
};

// ── Pool closure ────────────────────────────────────────────────────────────

// A closure entry remembers how it was obtained so materialization can spell
// the strand out again.
struct PoolEntry {
    enum class Via { Base, Split, Decrypt };

    Message msg;                    // under the substitution the closure saw
    KnowledgeEntry::Origin origin;
    std::vector<Provenance> prov;   // conjunction of the premises' provenance
    Via via = Via::Base;
    int base = -1;    // Base: index into the original pool
    int parent = -1;  // Split/Decrypt: closure index of the source entry
    int key = -1;     // Decrypt: closure index of the inverse-key entry
    size_t seg_begin = 0, seg_end = 0;  // Split: the contiguous segment taken
};

// Saturates the pool under decomposition: every contiguous segment of a
// tuple entry, and the payload of an encryption whose inverse key is itself
// in the closure. Derived entries conjoin the provenance of their premises.
inline std::vector<PoolEntry> decompose_closure(const std::vector<KnowledgeEntry>& pool,
                                                const Substitution& s) {
    std::vector<PoolEntry> closure;
    std::set<Message> seen;
    auto push = [&](PoolEntry e) {
        if (!seen.insert(e.msg).second) return false;
        closure.push_back(std::move(e));
        return true;
    };
    for (size_t i = 0; i < pool.size(); ++i) {
        PoolEntry e;
        e.msg = apply(s, pool[i].msg);
        e.origin = pool[i].origin;
        e.prov = pool[i].prov;
        e.via = PoolEntry::Via::Base;
        e.base = (int)i;
        push(std::move(e));
    }

    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < closure.size(); ++i) {
            Message m = closure[i].msg;
            if (m.kind() == MsgKind::Tuple) {
                size_t n = m.items().size();
                for (size_t b = 0; b < n; ++b) {
                    for (size_t e = b + 1; e <= n; ++e) {
                        if (b == 0 && e == n) continue;
                        PoolEntry seg;
                        seg.msg = Message::tuple({m.items().begin() + b, m.items().begin() + e});
                        seg.origin = closure[i].origin;
                        seg.prov = closure[i].prov;
                        seg.via = PoolEntry::Via::Split;
                        seg.parent = (int)i;
                        seg.seg_begin = b;
                        seg.seg_end = e;
                        if (push(std::move(seg))) changed = true;
                    }
                }
            }
            if (m.kind() == MsgKind::Enc && is_key_shape(m.key())) {
                Message needed = inverse_key(m.key());
                int key_idx = -1;
                for (size_t j = 0; j < closure.size(); ++j)
                    if (closure[j].msg == needed) { key_idx = (int)j; break; }
                if (key_idx < 0) continue;
                PoolEntry payload;
                payload.msg = m.payload();
                payload.origin = closure[i].origin;
                payload.prov = closure[i].prov;
                for (const auto& p : closure[(size_t)key_idx].prov) payload.prov.push_back(p);
                payload.via = PoolEntry::Via::Decrypt;
                payload.parent = (int)i;
                payload.key = key_idx;
                if (push(std::move(payload))) changed = true;
            }
        }
    }
    return closure;
}

// ── derive ──────────────────────────────────────────────────────────────────

struct DeriveSolution {
    Derivation derivation;
    Substitution subst;                    // extends the input substitution
    std::vector<TimeConstraint> timing;    // hop obligations for leaves used
    std::vector<Provenance> used;          // the leaves behind those obligations
    std::vector<std::string> fresh_texts;  // intruder text names consumed
};

namespace detail {

struct DeriveCtx {
    const std::vector<PoolEntry>* closure;
    FreshNames* fresh;
    int fanout_limit;
};

struct Partial {
    Derivation deriv;
    Substitution subst;
    std::set<Provenance> used;
    std::vector<std::string> fresh_texts;
};

inline Derivation leaf_derivation(const std::vector<PoolEntry>& closure, int idx) {
    const PoolEntry& e = closure[(size_t)idx];
    switch (e.via) {
        case PoolEntry::Via::Base: {
            Derivation d;
            d.rule = e.origin == KnowledgeEntry::Origin::Kp ? Derivation::Rule::Key
                                                            : Derivation::Rule::Forward;
            d.produced = e.msg;
            d.entry = idx;
            return d;
        }
        case PoolEntry::Via::Split: {
            Derivation d;
            d.rule = Derivation::Rule::Decompose;
            d.produced = e.msg;
            d.entry = idx;
            d.premises.push_back(leaf_derivation(closure, e.parent));
            return d;
        }
        case PoolEntry::Via::Decrypt: {
            Derivation d;
            d.rule = Derivation::Rule::Decrypt;
            d.produced = e.msg;
            d.entry = idx;
            d.premises.push_back(leaf_derivation(closure, e.key));
            d.premises.push_back(leaf_derivation(closure, e.parent));
            return d;
        }
    }
    return {};
}

// All ways to obtain `target`: the rule order is text, then pool matches
// (plain sends first, then decomposed, decrypted, finally kp keys), then
// tupling and encryption.
inline std::vector<Partial> synth(const Message& target, const Substitution& s, DeriveCtx& ctx,
                                  int depth) {
    std::vector<Partial> out;
    if (depth > 24) return out;
    Message t = apply(s, target);

    if (t.is_const(ConstKind::Text)) {
        Partial p{Derivation{Derivation::Rule::Text, t, {}, -1}, s, {}, {}};
        out.push_back(std::move(p));
    }
    if (t.is_var()) {
        std::string name = ctx.fresh->fresh_text();
        Substitution s2 = s;
        s2.bind(t.name(), Message::text(name));
        Partial p{Derivation{Derivation::Rule::Text, Message::text(name), {}, -1}, s2, {}, {name}};
        out.push_back(std::move(p));
    }

    auto match_pass = [&](auto&& keep) {
        for (size_t i = 0; i < ctx.closure->size(); ++i) {
            const PoolEntry& e = (*ctx.closure)[i];
            if (!keep(e)) continue;
            auto u = unify(t, e.msg, s);
            if (!u) continue;
            Partial p;
            p.deriv = leaf_derivation(*ctx.closure, (int)i);
            p.subst = *u;
            p.used.insert(e.prov.begin(), e.prov.end());
            out.push_back(std::move(p));
        }
    };
    match_pass([](const PoolEntry& e) {
        return e.via == PoolEntry::Via::Base && e.origin == KnowledgeEntry::Origin::Sent;
    });
    match_pass([](const PoolEntry& e) { return e.via == PoolEntry::Via::Split; });
    match_pass([](const PoolEntry& e) { return e.via == PoolEntry::Via::Decrypt; });
    match_pass([](const PoolEntry& e) {
        return e.via == PoolEntry::Via::Base && e.origin != KnowledgeEntry::Origin::Sent;
    });

    if (t.kind() == MsgKind::Tuple) {
        const auto& items = t.items();
        for (size_t split = 1; split < items.size(); ++split) {
            Message left = Message::tuple({items.begin(), items.begin() + split});
            Message right = Message::tuple({items.begin() + split, items.end()});
            for (auto& pl : synth(left, s, ctx, depth + 1)) {
                for (auto& pr : synth(right, pl.subst, ctx, depth + 1)) {
                    Partial p;
                    p.deriv = Derivation{Derivation::Rule::Concat, t, {pl.deriv, pr.deriv}, -1};
                    p.subst = pr.subst;
                    p.used = pl.used;
                    p.used.insert(pr.used.begin(), pr.used.end());
                    p.fresh_texts = pl.fresh_texts;
                    p.fresh_texts.insert(p.fresh_texts.end(), pr.fresh_texts.begin(),
                                         pr.fresh_texts.end());
                    out.push_back(std::move(p));
                    if ((int)out.size() > ctx.fanout_limit) return out;
                }
            }
        }
    }
    if (t.kind() == MsgKind::Enc) {
        for (auto& pk_ : synth(t.key(), s, ctx, depth + 1)) {
            for (auto& pm : synth(t.payload(), pk_.subst, ctx, depth + 1)) {
                Partial p;
                p.deriv = Derivation{Derivation::Rule::Encrypt, t, {pk_.deriv, pm.deriv}, -1};
                p.subst = pm.subst;
                p.used = pk_.used;
                p.used.insert(pm.used.begin(), pm.used.end());
                p.fresh_texts = pk_.fresh_texts;
                p.fresh_texts.insert(p.fresh_texts.end(), pm.fresh_texts.begin(),
                                     pm.fresh_texts.end());
                out.push_back(std::move(p));
                if ((int)out.size() > ctx.fanout_limit) return out;
            }
        }
    }
    return out;
}

}  // namespace detail

// Enumerates derivations of the target from the pool, each with its
// substitution extension and the timing obligations of the leaves it used.
// Duplicate (substitution, timing) solutions keep only the first derivation.
inline std::vector<DeriveSolution> derive(const DeducibilityConstraint& dc, const Substitution& s,
                                          FreshNames& fresh, int fanout_limit = 512) {
    auto closure = decompose_closure(dc.pool, s);
    detail::DeriveCtx ctx{&closure, &fresh, fanout_limit};
    auto partials = detail::synth(dc.target, s, ctx, 0);

    std::vector<DeriveSolution> out;
    std::set<std::string> dedupe;
    for (auto& p : partials) {
        DeriveSolution sol;
        sol.derivation = std::move(p.deriv);
        sol.subst = std::move(p.subst);
        sol.fresh_texts = std::move(p.fresh_texts);
        // canonicalize fresh text names so solutions differing only in the
        // chosen name collapse
        std::string key;
        for (const auto& [v, m] : sol.subst) {
            bool fresh_text = m.is_const(ConstKind::Text) && m.name().rfind("itext", 0) == 0;
            key += v + "=" + (fresh_text ? "itext*" : m.str()) + ";";
        }
        for (const auto& prov : p.used) {
            sol.used.push_back(prov);
            sol.timing.push_back(tc(
                TimeExpr::var(dc.recv_tvar), TimeRel::Ge,
                TimeExpr::add(TimeExpr::var(prov.send_tvar),
                              TimeExpr::dist(prov.source_agent, dc.recipient.name))));
            key += "|" + sol.timing.back().str();
        }
        if (!dedupe.insert(key).second) continue;
        out.push_back(std::move(sol));
    }
    return out;
}

// ── Materialization ─────────────────────────────────────────────────────────

// Shared bookkeeping for materializing several derivations into one witness
// bundle: each participant send grows at most one forwarding strand at the
// sender's intruder, fanning out to every consumer.
struct MaterializeContext {
    TimedBundle* bundle = nullptr;
    FreshNames* fresh = nullptr;
    std::map<NodeId, NodeId> source_forward;  // participant send node -> +m node

    // the closure the derivation indexes refer to, plus per-call memo
    const std::vector<PoolEntry>* closure = nullptr;
    std::map<int, NodeId> entry_out;
};

namespace detail {

inline Role linear_trace(const std::vector<std::pair<bool, Message>>& steps) {
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

inline NodeId trace_strand(MaterializeContext& ctx, const AgentId& owner, const char* rule,
                           const std::vector<std::pair<bool, Message>>& steps,
                           const std::vector<std::pair<int, NodeId>>& inputs) {
    int sid = ctx.bundle->add_strand(owner, linear_trace(steps), rule, *ctx.fresh);
    Position p;
    NodeId last{sid, p};
    for (size_t i = 0; i < steps.size(); ++i) {
        NodeId id{sid, p};
        ctx.bundle->append(id);
        p.push_back(1);
        last = id;
    }
    for (const auto& [step_idx, from] : inputs) {
        Position ip((size_t)step_idx, (uint8_t)1);
        ctx.bundle->add_msg_edge(from, NodeId{sid, ip});
    }
    // output node = the last send of the trace
    Position op((size_t)steps.size() - 1, (uint8_t)1);
    op.resize(steps.size() - 1);
    return NodeId{sid, op};
}

inline NodeId materialize_entry(MaterializeContext& ctx, const AgentId& ti_owner, int idx);

// Returns the node producing the message of closure entry idx, building the
// source-side forwarding strand for base sends on first use.
inline NodeId materialize_entry(MaterializeContext& ctx, const AgentId& ti_owner, int idx) {
    auto memo = ctx.entry_out.find(idx);
    if (memo != ctx.entry_out.end()) return memo->second;
    const PoolEntry& e = ctx.closure->at((size_t)idx);
    NodeId out;
    switch (e.via) {
        case PoolEntry::Via::Base: {
            if (e.origin == KnowledgeEntry::Origin::Sent) {
                const Provenance& prov = e.prov[0];
                auto fwd = ctx.source_forward.find(prov.node);
                if (fwd == ctx.source_forward.end()) {
                    AgentId src_ti{canonical_intruder_name(prov.source_agent),
                                   AgentKind::Intruder};
                    NodeId fan = trace_strand(ctx, src_ti, "forward",
                                              {{false, e.msg}, {true, e.msg}},
                                              {{0, prov.node}});
                    fwd = ctx.source_forward.emplace(prov.node, fan).first;
                }
                // recipient-side forward so the hop lands on ti_owner
                out = trace_strand(ctx, ti_owner, "forward", {{false, e.msg}, {true, e.msg}},
                                   {{0, fwd->second}});
            } else {
                out = trace_strand(ctx, ti_owner, "key", {{true, e.msg}}, {});
            }
            break;
        }
        case PoolEntry::Via::Split: {
            NodeId parent_out = materialize_entry(ctx, ti_owner, e.parent);
            const Message parent_msg = (*ctx.closure)[(size_t)e.parent].msg;
            const auto& items = parent_msg.items();
            // peel with paper-shaped splits: -whole, +prefix, +suffix
            size_t b = e.seg_begin, en = e.seg_end, n = items.size();
            Message current = parent_msg;
            NodeId current_out = parent_out;
            if (b > 0) {
                Message pre = Message::tuple({items.begin(), items.begin() + b});
                Message suf = Message::tuple({items.begin() + b, items.end()});
                int sid = ctx.bundle->add_strand(
                    ti_owner,
                    linear_trace({{false, current}, {true, pre}, {true, suf}}), "decompose",
                    *ctx.fresh);
                ctx.bundle->append({sid, {}});
                ctx.bundle->append({sid, {1}});
                ctx.bundle->append({sid, {1, 1}});
                ctx.bundle->add_msg_edge(current_out, {sid, {}});
                current = suf;
                current_out = {sid, {1, 1}};
            }
            if (en < n) {
                const auto& citems = current.kind() == MsgKind::Tuple
                                         ? current.items()
                                         : std::vector<Message>{current};
                size_t cut = en - b;
                Message pre = Message::tuple({citems.begin(), citems.begin() + cut});
                Message suf = Message::tuple({citems.begin() + cut, citems.end()});
                int sid = ctx.bundle->add_strand(
                    ti_owner,
                    linear_trace({{false, current}, {true, pre}, {true, suf}}), "decompose",
                    *ctx.fresh);
                ctx.bundle->append({sid, {}});
                ctx.bundle->append({sid, {1}});
                ctx.bundle->append({sid, {1, 1}});
                ctx.bundle->add_msg_edge(current_out, {sid, {}});
                current_out = {sid, {1}};
            }
            out = current_out;
            break;
        }
        case PoolEntry::Via::Decrypt: {
            NodeId key_out = materialize_entry(ctx, ti_owner, e.key);
            NodeId parent_out = materialize_entry(ctx, ti_owner, e.parent);
            const Message enc_msg = (*ctx.closure)[(size_t)e.parent].msg;
            const Message key_msg = (*ctx.closure)[(size_t)e.key].msg;
            out = trace_strand(ctx, ti_owner, "decrypt",
                               {{false, key_msg}, {false, enc_msg}, {true, e.msg}},
                               {{0, key_out}, {1, parent_out}});
            break;
        }
    }
    ctx.entry_out[idx] = out;
    return out;
}

inline NodeId materialize_node(MaterializeContext& ctx, const AgentId& ti_owner,
                               const Derivation& d, const Substitution& subst) {
    Message produced = apply(subst, d.produced);
    switch (d.rule) {
        case Derivation::Rule::Text:
            return trace_strand(ctx, ti_owner, "text", {{true, produced}}, {});
        case Derivation::Rule::Key:
        case Derivation::Rule::Forward:
        case Derivation::Rule::Decompose:
        case Derivation::Rule::Decrypt:
            return materialize_entry(ctx, ti_owner, d.entry);
        case Derivation::Rule::Concat: {
            NodeId left = materialize_node(ctx, ti_owner, d.premises[0], subst);
            NodeId right = materialize_node(ctx, ti_owner, d.premises[1], subst);
            Message lm = apply(subst, d.premises[0].produced);
            Message rm = apply(subst, d.premises[1].produced);
            return trace_strand(ctx, ti_owner, "concat",
                                {{false, lm}, {false, rm}, {true, produced}},
                                {{0, left}, {1, right}});
        }
        case Derivation::Rule::Encrypt: {
            NodeId key = materialize_node(ctx, ti_owner, d.premises[0], subst);
            NodeId payload = materialize_node(ctx, ti_owner, d.premises[1], subst);
            Message km = apply(subst, d.premises[0].produced);
            Message pm = apply(subst, d.premises[1].produced);
            return trace_strand(ctx, ti_owner, "encrypt",
                                {{false, km}, {false, pm}, {true, produced}},
                                {{0, key}, {1, payload}});
        }
    }
    throw std::logic_error("bad derivation");
}

}  // namespace detail

// Spells the derivation out as intruder strands owned by the recipient's
// canonical intruder, fed by forwarding strands at each source's intruder,
// and wires the final output into the receive node.
inline void materialize(const Derivation& d, const DeducibilityConstraint& dc,
                        const Substitution& subst, MaterializeContext& ctx) {
    auto closure = decompose_closure(dc.pool, subst);
    ctx.closure = &closure;
    ctx.entry_out.clear();
    AgentId ti_owner{canonical_intruder_name(dc.recipient.name), AgentKind::Intruder};
    NodeId out = detail::materialize_node(ctx, ti_owner, d, subst);
    ctx.bundle->add_msg_edge(out, dc.recv_node);
    ctx.closure = nullptr;
}

}  // namespace cpsp
