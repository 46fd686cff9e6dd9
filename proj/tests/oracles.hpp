// ============================================================================
// tests/oracles.hpp — independent reference procedures used only by tests
// ============================================================================
//
// These deliberately do not share solving code with the library:
//   * fm_feasible      — Fourier-Motzkin elimination over exact rationals,
//                        used to pin expected sat/unsat verdicts for linear
//                        constraint systems before trusting either backend.
//   * ClosureOracle    — exhaustive Dolev-Yao derivability on ground pools
//                        (analyze to fixpoint, then recursive synthesis).
//
// ============================================================================

#pragma once

#include <cpsp/terms.hpp>
#include <cpsp/timealg.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cpsp::testing {

// ── Fourier-Motzkin feasibility ─────────────────────────────────────────────

struct FmRow {
    std::map<std::string, Rat> coeffs;  // sum coeffs*sym + constant (<|<=) 0
    Rat constant = 0;
    bool strict = false;
};

inline bool fm_linearize(const TimeExpr& e, const Rat& scale, FmRow& row) {
    switch (e.kind()) {
        case TimeKind::Num: row.constant += scale * e.value(); return true;
        case TimeKind::Var:
        case TimeKind::Dist: row.coeffs[e.symbol()] += scale; return true;
        case TimeKind::Add:
            return fm_linearize(e.lhs(), scale, row) && fm_linearize(e.rhs(), scale, row);
        case TimeKind::Sub:
            return fm_linearize(e.lhs(), scale, row) && fm_linearize(e.rhs(), -scale, row);
        case TimeKind::Mul: {
            if (e.lhs().kind() == TimeKind::Num) return fm_linearize(e.rhs(), scale * e.lhs().value(), row);
            if (e.rhs().kind() == TimeKind::Num) return fm_linearize(e.lhs(), scale * e.rhs().value(), row);
            return false;
        }
        case TimeKind::Div:
            return fm_linearize(e.lhs(), scale / e.rhs().value(), row);
        default:
            return false;  // floor/ceil/cur not handled by this oracle
    }
}

// Feasibility of the conjunction over nonnegative rationals; nullopt when a
// constraint falls outside the linear fragment.
inline std::optional<bool> fm_feasible(const std::vector<TimeConstraint>& cs) {
    std::vector<FmRow> rows;
    std::set<std::string> syms;
    for (const auto& c : cs) {
        FmRow base;
        if (!fm_linearize(c.lhs, 1, base) || !fm_linearize(c.rhs, -1, base))
            return std::nullopt;
        for (auto it = base.coeffs.begin(); it != base.coeffs.end();) {
            syms.insert(it->first);
            it = it->second == 0 ? base.coeffs.erase(it) : std::next(it);
        }
        auto push = [&](bool negate, bool strict) {
            FmRow r = base;
            if (negate) {
                for (auto& [k, v] : r.coeffs) v = -v;
                r.constant = -r.constant;
            }
            r.strict = strict;
            rows.push_back(std::move(r));
        };
        switch (c.rel) {
            case TimeRel::Le: push(false, false); break;
            case TimeRel::Lt: push(false, true); break;
            case TimeRel::Ge: push(true, false); break;
            case TimeRel::Gt: push(true, true); break;
            case TimeRel::Eq: push(false, false); push(true, false); break;
        }
    }
    for (const auto& s : syms) {
        FmRow nonneg;
        nonneg.coeffs[s] = -1;
        rows.push_back(std::move(nonneg));
    }

    // Eliminate one symbol at a time.
    std::set<std::string> remaining = syms;
    while (!remaining.empty()) {
        std::string x = *remaining.begin();
        remaining.erase(remaining.begin());
        std::vector<FmRow> pos, neg, rest;
        for (auto& r : rows) {
            auto it = r.coeffs.find(x);
            if (it == r.coeffs.end() || it->second == 0) { rest.push_back(r); continue; }
            (it->second > 0 ? pos : neg).push_back(r);
        }
        for (const auto& p : pos) {
            for (const auto& q : neg) {
                Rat a = p.coeffs.at(x);        // a > 0
                Rat b = -q.coeffs.at(x);       // b > 0
                FmRow combo;
                combo.strict = p.strict || q.strict;
                combo.constant = b * p.constant + a * q.constant;
                for (const auto& [k, v] : p.coeffs)
                    if (k != x) combo.coeffs[k] += b * v;
                for (const auto& [k, v] : q.coeffs)
                    if (k != x) combo.coeffs[k] += a * v;
                for (auto it = combo.coeffs.begin(); it != combo.coeffs.end();)
                    it = it->second == 0 ? combo.coeffs.erase(it) : std::next(it);
                rest.push_back(std::move(combo));
            }
        }
        rows = std::move(rest);
    }
    for (const auto& r : rows) {
        if (!r.coeffs.empty()) continue;  // symbol eliminated later would have caught it
        if (r.strict ? !(r.constant < 0) : !(r.constant <= 0)) return false;
    }
    return true;
}

// ── Exhaustive Dolev-Yao derivability on ground terms ───────────────────────

class ClosureOracle {
public:
    ClosureOracle(std::vector<Message> pool, std::vector<Message> known_keys)
        : kp_(std::move(known_keys)) {
        for (auto& m : pool) knowledge_.insert(m);
        for (const auto& k : kp_) knowledge_.insert(k);
        analyze();
    }

    bool derivable(const Message& target) {
        memo_.clear();
        return synth(target);
    }

private:
    // Decompose everything decomposable: tuple splits and decryption with a
    // synthesizable inverse key, repeated to fixpoint.
    void analyze() {
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<Message> fresh;
            for (const auto& m : knowledge_) {
                if (m.kind() == MsgKind::Tuple) {
                    for (const auto& item : m.items())
                        if (!knowledge_.count(item)) fresh.push_back(item);
                    // every contiguous split is reachable via the two-output rule
                    const auto& it = m.items();
                    for (size_t i = 1; i + 1 <= it.size(); ++i) {
                        Message l = Message::tuple({it.begin(), it.begin() + i});
                        Message r = Message::tuple({it.begin() + i, it.end()});
                        if (!knowledge_.count(l)) fresh.push_back(l);
                        if (!knowledge_.count(r)) fresh.push_back(r);
                    }
                }
                if (m.kind() == MsgKind::Enc && is_key_shape(m.key())) {
                    memo_.clear();
                    if (synth(inverse_key(m.key())) && !knowledge_.count(m.payload()))
                        fresh.push_back(m.payload());
                }
            }
            for (auto& f : fresh) {
                if (knowledge_.insert(f).second) changed = true;
            }
        }
    }

    bool synth(const Message& t) {
        if (knowledge_.count(t)) return true;
        if (t.is_const(ConstKind::Text)) return true;  // text rule
        auto it = memo_.find(t);
        if (it != memo_.end()) return it->second;
        memo_[t] = false;  // cut cycles pessimistically
        bool ok = false;
        if (t.kind() == MsgKind::Enc) {
            ok = synth(t.payload()) && synth(t.key());
        } else if (t.kind() == MsgKind::Tuple) {
            const auto& items = t.items();
            for (size_t i = 1; i < items.size() && !ok; ++i) {
                Message l = Message::tuple({items.begin(), items.begin() + i});
                Message r = Message::tuple({items.begin() + i, items.end()});
                ok = synth(l) && synth(r);
            }
        }
        memo_[t] = ok;
        return ok;
    }

    std::set<Message> knowledge_;
    std::vector<Message> kp_;
    std::map<Message, bool> memo_;
};

}  // namespace cpsp::testing
