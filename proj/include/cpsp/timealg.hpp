// ============================================================================
// cpsp/timealg.hpp — time expressions, symbolic time constraints, and the
// builtin difference-logic satisfiability backend
// ============================================================================
//
// TimeExpr grammar: rationals, time variables, the reserved clock `cur`,
// td(a,b) distance atoms, + - * / and floor/ceil. Multiplication requires a
// numeric operand and division a nonzero numeric divisor, so every
// expression stays linear.
//
// ConstraintStore is persistent: add() returns a new store sharing the tail.
// The satisfiability cache lives in a per-value cell and is dropped on add.
// A store may carry a registered base set (network topology axioms and user
// constraints); solving always considers base + added constraints, plus
// nonnegativity of every symbol, while `constraints()` exposes only the
// added ones.
//
// The builtin backend decides exactly the difference-logic fragment
// (x ▷ y + c, x ▷ c with unit coefficients, no floor/ceil/*//) by
// Bellman-Ford negative-cycle detection over DeltaRat weights; anything
// outside the fragment yields Unknown, never a wrong verdict.
//
// ============================================================================

#pragma once

#include <cpsp/rational.hpp>
#include <cpsp/terms.hpp>

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cpsp {

enum class TimeKind { Num, Var, Cur, Dist, Add, Sub, Mul, Div, Floor, Ceil };

class TimeExpr;
struct TimeNode;
using TimePtr = std::shared_ptr<const TimeNode>;

struct TimeNode {
    TimeKind kind;
    Rat num;                      // Num
    std::string name;             // Var
    std::string from, to;         // Dist
    TimePtr lhs, rhs;             // binary ops; Floor/Ceil use lhs
};

class TimeExpr {
public:
    TimeExpr() = default;

    static TimeExpr num(Rat r) {
        auto n = std::make_shared<TimeNode>();
        n->kind = TimeKind::Num;
        n->num = std::move(r);
        return TimeExpr(std::move(n));
    }
    static TimeExpr num(long v) { return num(Rat(v)); }
    static TimeExpr var(std::string name) {
        auto n = std::make_shared<TimeNode>();
        n->kind = TimeKind::Var;
        n->name = std::move(name);
        return TimeExpr(std::move(n));
    }
    static TimeExpr cur() {
        auto n = std::make_shared<TimeNode>();
        n->kind = TimeKind::Cur;
        return TimeExpr(std::move(n));
    }
    static TimeExpr dist(std::string from, std::string to) {
        auto n = std::make_shared<TimeNode>();
        n->kind = TimeKind::Dist;
        n->from = std::move(from);
        n->to = std::move(to);
        return TimeExpr(std::move(n));
    }
    static TimeExpr add(TimeExpr a, TimeExpr b) { return binary(TimeKind::Add, a, b); }
    static TimeExpr sub(TimeExpr a, TimeExpr b) { return binary(TimeKind::Sub, a, b); }
    static TimeExpr mul(TimeExpr a, TimeExpr b) {
        if (a.kind() != TimeKind::Num && b.kind() != TimeKind::Num)
            throw std::invalid_argument("nonlinear product of time expressions");
        return binary(TimeKind::Mul, a, b);
    }
    static TimeExpr div(TimeExpr a, TimeExpr b) {
        if (b.kind() != TimeKind::Num)
            throw std::invalid_argument("division by a non-constant time expression");
        if (b.value() == 0) throw std::invalid_argument("division by zero");
        return binary(TimeKind::Div, a, b);
    }
    static TimeExpr floor(TimeExpr a) { return unary(TimeKind::Floor, std::move(a)); }
    static TimeExpr ceil(TimeExpr a) { return unary(TimeKind::Ceil, std::move(a)); }

    bool valid() const { return node_ != nullptr; }
    TimeKind kind() const { return node_->kind; }
    const Rat& value() const { return node_->num; }
    const std::string& name() const { return node_->name; }
    const std::string& dist_from() const { return node_->from; }
    const std::string& dist_to() const { return node_->to; }
    TimeExpr lhs() const { return TimeExpr(node_->lhs); }
    TimeExpr rhs() const { return TimeExpr(node_->rhs); }

    // Symbol a Dist or Var stands for in models and solver scripts.
    std::string symbol() const {
        if (node_->kind == TimeKind::Var) return node_->name;
        if (node_->kind == TimeKind::Dist) return dist_symbol(node_->from, node_->to);
        throw std::logic_error("symbol() on non-symbol expression");
    }

    static std::string dist_symbol(const std::string& from, const std::string& to) {
        return "td(" + from + "," + to + ")";
    }

    friend int compare(const TimeExpr& a, const TimeExpr& b) {
        if (a.node_ == b.node_) return 0;
        if (a.kind() != b.kind()) return a.kind() < b.kind() ? -1 : 1;
        switch (a.kind()) {
            case TimeKind::Num:
                return cmp(a.value(), b.value()) < 0 ? -1 : a.value() == b.value() ? 0 : 1;
            case TimeKind::Var:
                return a.name().compare(b.name()) < 0 ? -1 : a.name() == b.name() ? 0 : 1;
            case TimeKind::Cur: return 0;
            case TimeKind::Dist: {
                if (int c = a.dist_from().compare(b.dist_from())) return c < 0 ? -1 : 1;
                if (int c = a.dist_to().compare(b.dist_to())) return c < 0 ? -1 : 1;
                return 0;
            }
            case TimeKind::Floor:
            case TimeKind::Ceil:
                return compare(a.lhs(), b.lhs());
            default: {
                if (int c = compare(a.lhs(), b.lhs())) return c;
                return compare(a.rhs(), b.rhs());
            }
        }
    }
    bool operator==(const TimeExpr& o) const { return compare(*this, o) == 0; }
    bool operator<(const TimeExpr& o) const { return compare(*this, o) < 0; }

    std::string str() const {
        std::ostringstream os;
        print(os, 0);
        return os.str();
    }

    void print(std::ostream& os, int parent_prec) const {
        switch (kind()) {
            case TimeKind::Num: {
                if (value() < 0) { os << "(" << rat_str(value()) << ")"; }
                else os << rat_str(value());
                break;
            }
            case TimeKind::Var: os << name(); break;
            case TimeKind::Cur: os << "cur"; break;
            case TimeKind::Dist: os << "td(" << dist_from() << ", " << dist_to() << ")"; break;
            case TimeKind::Floor:
                os << "floor(";
                lhs().print(os, 0);
                os << ")";
                break;
            case TimeKind::Ceil:
                os << "ceil(";
                lhs().print(os, 0);
                os << ")";
                break;
            default: {
                int prec = (kind() == TimeKind::Add || kind() == TimeKind::Sub) ? 1 : 2;
                const char* op = kind() == TimeKind::Add   ? " + "
                                 : kind() == TimeKind::Sub ? " - "
                                 : kind() == TimeKind::Mul ? " * "
                                                           : " / ";
                if (prec < parent_prec) os << "(";
                lhs().print(os, prec);
                os << op;
                rhs().print(os, prec + 1);
                if (prec < parent_prec) os << ")";
            }
        }
    }

private:
    explicit TimeExpr(TimePtr n) : node_(std::move(n)) {}
    static TimeExpr binary(TimeKind k, TimeExpr a, TimeExpr b) {
        auto n = std::make_shared<TimeNode>();
        n->kind = k;
        n->lhs = a.node_;
        n->rhs = b.node_;
        return TimeExpr(std::move(n));
    }
    static TimeExpr unary(TimeKind k, TimeExpr a) {
        auto n = std::make_shared<TimeNode>();
        n->kind = k;
        n->lhs = a.node_;
        return TimeExpr(std::move(n));
    }
    TimePtr node_;
};

inline bool contains_cur(const TimeExpr& e) {
    switch (e.kind()) {
        case TimeKind::Cur: return true;
        case TimeKind::Num:
        case TimeKind::Var:
        case TimeKind::Dist: return false;
        case TimeKind::Floor:
        case TimeKind::Ceil: return contains_cur(e.lhs());
        default: return contains_cur(e.lhs()) || contains_cur(e.rhs());
    }
}

inline TimeExpr replace_cur(const TimeExpr& e, const TimeExpr& repl) {
    switch (e.kind()) {
        case TimeKind::Cur: return repl;
        case TimeKind::Num:
        case TimeKind::Var:
        case TimeKind::Dist: return e;
        case TimeKind::Floor: return TimeExpr::floor(replace_cur(e.lhs(), repl));
        case TimeKind::Ceil: return TimeExpr::ceil(replace_cur(e.lhs(), repl));
        case TimeKind::Add: return TimeExpr::add(replace_cur(e.lhs(), repl), replace_cur(e.rhs(), repl));
        case TimeKind::Sub: return TimeExpr::sub(replace_cur(e.lhs(), repl), replace_cur(e.rhs(), repl));
        case TimeKind::Mul: return TimeExpr::mul(replace_cur(e.lhs(), repl), replace_cur(e.rhs(), repl));
        case TimeKind::Div: return TimeExpr::div(replace_cur(e.lhs(), repl), replace_cur(e.rhs(), repl));
    }
    return e;
}

// ── TimeConstraint ──────────────────────────────────────────────────────────

enum class TimeRel { Eq, Ge, Gt, Lt, Le };

inline const char* rel_str(TimeRel r) {
    switch (r) {
        case TimeRel::Eq: return "=";
        case TimeRel::Ge: return ">=";
        case TimeRel::Gt: return ">";
        case TimeRel::Lt: return "<";
        case TimeRel::Le: return "<=";
    }
    return "?";
}

struct TimeConstraint {
    TimeExpr lhs;
    TimeRel rel;
    TimeExpr rhs;

    bool operator==(const TimeConstraint& o) const {
        return rel == o.rel && lhs == o.lhs && rhs == o.rhs;
    }
    bool operator<(const TimeConstraint& o) const {
        if (rel != o.rel) return rel < o.rel;
        if (int c = compare(lhs, o.lhs)) return c < 0;
        return compare(rhs, o.rhs) < 0;
    }
    std::string str() const {
        return lhs.str() + " " + rel_str(rel) + " " + rhs.str();
    }
};

inline TimeConstraint tc(TimeExpr l, TimeRel r, TimeExpr rr) { return {std::move(l), r, std::move(rr)}; }

inline bool contains_cur(const TimeConstraint& c) {
    return contains_cur(c.lhs) || contains_cur(c.rhs);
}

// Replaces every occurrence of cur by the given time variable.
inline TimeConstraint subst_cur(const TimeConstraint& c, const std::string& tvar) {
    TimeExpr tv = TimeExpr::var(tvar);
    return {replace_cur(c.lhs, tv), c.rel, replace_cur(c.rhs, tv)};
}

inline void collect_symbols(const TimeExpr& e, std::set<std::string>& tvars,
                            std::set<std::string>& dists) {
    switch (e.kind()) {
        case TimeKind::Var: tvars.insert(e.name()); return;
        case TimeKind::Dist: dists.insert(e.symbol()); return;
        case TimeKind::Num:
        case TimeKind::Cur: return;
        case TimeKind::Floor:
        case TimeKind::Ceil: collect_symbols(e.lhs(), tvars, dists); return;
        default:
            collect_symbols(e.lhs(), tvars, dists);
            collect_symbols(e.rhs(), tvars, dists);
    }
}

inline void collect_symbols(const TimeConstraint& c, std::set<std::string>& tvars,
                            std::set<std::string>& dists) {
    collect_symbols(c.lhs, tvars, dists);
    collect_symbols(c.rhs, tvars, dists);
}

// ── TimeModel ───────────────────────────────────────────────────────────────

// Witness assignment: symbol name (time variable or td atom) -> rational.
using TimeModel = std::map<std::string, Rat>;

inline Rat eval(const TimeExpr& e, const TimeModel& m) {
    switch (e.kind()) {
        case TimeKind::Num: return e.value();
        case TimeKind::Cur: throw std::logic_error("eval: cur outside role text");
        case TimeKind::Var:
        case TimeKind::Dist: {
            auto it = m.find(e.symbol());
            if (it == m.end()) throw std::out_of_range("eval: unassigned symbol " + e.symbol());
            return it->second;
        }
        case TimeKind::Add: return eval(e.lhs(), m) + eval(e.rhs(), m);
        case TimeKind::Sub: return eval(e.lhs(), m) - eval(e.rhs(), m);
        case TimeKind::Mul: return eval(e.lhs(), m) * eval(e.rhs(), m);
        case TimeKind::Div: return eval(e.lhs(), m) / eval(e.rhs(), m);
        case TimeKind::Floor: return rat_floor(eval(e.lhs(), m));
        case TimeKind::Ceil: return rat_ceil(eval(e.lhs(), m));
    }
    throw std::logic_error("eval: bad expression");
}

inline bool holds(const TimeConstraint& c, const TimeModel& m) {
    Rat l = eval(c.lhs, m), r = eval(c.rhs, m);
    switch (c.rel) {
        case TimeRel::Eq: return l == r;
        case TimeRel::Ge: return l >= r;
        case TimeRel::Gt: return l > r;
        case TimeRel::Lt: return l < r;
        case TimeRel::Le: return l <= r;
    }
    return false;
}

// ── ConstraintStore ─────────────────────────────────────────────────────────

enum class Verdict { Sat, Unsat, Unknown };

struct CheckResult {
    Verdict verdict = Verdict::Unknown;
    TimeModel model;  // populated on Sat
};

class CurLeak : public std::logic_error {
public:
    explicit CurLeak(const std::string& what) : std::logic_error(what) {}
};

class ConstraintStore {
    struct Node {
        TimeConstraint tc;
        std::shared_ptr<const Node> next;
    };
    struct Cache {
        std::mutex mu;
        bool filled = false;
        CheckResult result;
    };

public:
    ConstraintStore() : cache_(std::make_shared<Cache>()) {}

    // Topology axioms and user constraints; conjoined at solve time but not
    // part of constraints().
    void register_base(std::vector<TimeConstraint> base, std::set<std::string> dist_atoms) {
        base_ = std::make_shared<const std::vector<TimeConstraint>>(std::move(base));
        base_dists_ = std::make_shared<const std::set<std::string>>(std::move(dist_atoms));
        cache_ = std::make_shared<Cache>();
    }

    ConstraintStore add(const TimeConstraint& c) const {
        if (contains_cur(c)) throw CurLeak("constraint added with unresolved cur: " + c.str());
        if (contains(c)) return *this;
        ConstraintStore out = *this;
        auto n = std::make_shared<Node>();
        n->tc = c;
        n->next = head_;
        out.head_ = std::move(n);
        out.size_ = size_ + 1;
        out.cache_ = std::make_shared<Cache>();
        return out;
    }

    bool contains(const TimeConstraint& c) const {
        for (const Node* n = head_.get(); n; n = n->next.get())
            if (n->tc == c) return true;
        return false;
    }

    size_t size() const { return size_; }

    // Added constraints in insertion order.
    std::vector<TimeConstraint> constraints() const {
        std::vector<TimeConstraint> out(size_);
        size_t i = size_;
        for (const Node* n = head_.get(); n; n = n->next.get()) out[--i] = n->tc;
        return out;
    }

    std::vector<TimeConstraint> solve_view() const {
        std::vector<TimeConstraint> out;
        if (base_) out = *base_;
        auto added = constraints();
        out.insert(out.end(), added.begin(), added.end());
        return out;
    }

    // Every symbol mentioned anywhere plus registered distance atoms.
    void symbols(std::set<std::string>& tvars, std::set<std::string>& dists) const {
        if (base_dists_) dists.insert(base_dists_->begin(), base_dists_->end());
        for (const auto& c : solve_view()) collect_symbols(c, tvars, dists);
    }

    std::optional<CheckResult> cached() const {
        std::lock_guard<std::mutex> g(cache_->mu);
        if (cache_->filled) return cache_->result;
        return std::nullopt;
    }
    void fill_cache(const CheckResult& r) const {
        std::lock_guard<std::mutex> g(cache_->mu);
        cache_->filled = true;
        cache_->result = r;
    }

private:
    std::shared_ptr<const Node> head_;
    size_t size_ = 0;
    std::shared_ptr<const std::vector<TimeConstraint>> base_;
    std::shared_ptr<const std::set<std::string>> base_dists_;
    std::shared_ptr<Cache> cache_;
};

// ── Builtin difference-logic backend ────────────────────────────────────────

namespace detail {

// Linear normal form sum(coeff * symbol) + constant, or false when the
// expression falls outside the builtin fragment (floor/ceil/*//).
struct LinForm {
    std::map<std::string, Rat> coeffs;
    Rat constant = 0;
};

inline bool linearize(const TimeExpr& e, const Rat& scale, LinForm& out) {
    switch (e.kind()) {
        case TimeKind::Num: out.constant += scale * e.value(); return true;
        case TimeKind::Var:
        case TimeKind::Dist: {
            Rat& c = out.coeffs[e.symbol()];
            c += scale;
            if (c == 0) out.coeffs.erase(e.symbol());
            return true;
        }
        case TimeKind::Cur: throw std::logic_error("cur reached the solver");
        case TimeKind::Add:
            return linearize(e.lhs(), scale, out) && linearize(e.rhs(), scale, out);
        case TimeKind::Sub:
            return linearize(e.lhs(), scale, out) && linearize(e.rhs(), -scale, out);
        default:
            return false;  // Mul/Div/Floor/Ceil: outside the fragment
    }
}

// One "coeffs <= bound" row after relation normalization.
struct Row {
    std::map<std::string, Rat> coeffs;
    DeltaRat bound;
};

struct DiffEdge {
    int from, to;  // constraint value[to] - value[from] <= bound
    DeltaRat bound;
};

struct UnionFind {
    std::map<std::string, std::string> parent;
    const std::string& find(const std::string& x) {
        auto it = parent.find(x);
        if (it == parent.end()) { parent[x] = x; return parent[x]; }
        if (it->second == x) return it->second;
        it->second = find(it->second);
        return it->second;
    }
    void merge(const std::string& a, const std::string& b) {
        auto ra = find(a), rb = find(b);
        if (ra != rb) parent[ra] = rb;
    }
};

}  // namespace detail

// The builtin backend decides difference-logic over time variables plus the
// shapes the constraint extraction actually produces for td atoms: bounds on
// a single atom, equalities between two atoms, and delay rows where one atom
// tightens a variable difference (tv2 >= tv1 + td(a,b) + c). Every atom in a
// delay row sits on the tightening side and is otherwise only bounded, so
// substituting the atom's minimal feasible value is exact. Anything richer
// (triangle rows, floor/ceil, products) yields Unknown, never a wrong
// verdict.
inline CheckResult check_sat_builtin(const ConstraintStore& store) {
    if (auto c = store.cached()) {
        if (c->verdict != Verdict::Unknown) return *c;
    }

    std::set<std::string> tvar_syms, dist_syms;
    store.symbols(tvar_syms, dist_syms);
    auto is_atom = [&](const std::string& s) { return dist_syms.count(s) > 0; };

    // 1. Normalize every constraint to <=-rows.
    std::vector<detail::Row> rows;
    for (const auto& c : store.solve_view()) {
        detail::LinForm lf;
        if (!detail::linearize(c.lhs, 1, lf) || !detail::linearize(c.rhs, -1, lf))
            return {Verdict::Unknown, {}};
        auto emit = [&](bool negate, bool strict) {
            detail::Row row;
            row.bound = DeltaRat(negate ? lf.constant : -lf.constant, strict ? Rat(-1) : Rat(0));
            for (const auto& [k, v] : lf.coeffs) row.coeffs[k] = negate ? -v : v;
            rows.push_back(std::move(row));
        };
        switch (c.rel) {
            case TimeRel::Le: emit(false, false); break;
            case TimeRel::Lt: emit(false, true); break;
            case TimeRel::Ge: emit(true, false); break;
            case TimeRel::Gt: emit(true, true); break;
            case TimeRel::Eq: emit(false, false); emit(true, false); break;
        }
    }

    auto unsat = [&] {
        CheckResult r{Verdict::Unsat, {}};
        store.fill_cache(r);
        return r;
    };

    // 2. Classify rows; collect atom bounds and atom-atom identifications.
    detail::UnionFind classes;
    std::map<std::string, DeltaRat> lower, upper;  // per original atom
    std::map<std::pair<std::string, std::string>, int> pair_dirs;
    struct VarRow {
        std::map<std::string, Rat> tvars;  // unit coefficients, size 1..2
        std::string atom;                  // optional, coefficient +1
        DeltaRat bound;
    };
    std::vector<VarRow> var_rows;

    for (auto& row : rows) {
        std::map<std::string, Rat> atoms, tvars;
        bool unit = true;
        for (const auto& [sym, coeff] : row.coeffs) {
            if (coeff != 1 && coeff != -1) { unit = false; break; }
            (is_atom(sym) ? atoms : tvars)[sym] = coeff;
        }
        if (!unit) return {Verdict::Unknown, {}};

        if (tvars.empty() && atoms.empty()) {
            if (!(DeltaRat(0) <= row.bound)) return unsat();
            continue;
        }
        if (tvars.empty() && atoms.size() == 1) {
            const auto& [a, coeff] = *atoms.begin();
            if (coeff == 1) {  // a <= bound
                auto it = upper.find(a);
                if (it == upper.end() || row.bound < it->second) upper[a] = row.bound;
            } else {  // a >= -bound
                DeltaRat lo = -row.bound;
                auto it = lower.find(a);
                if (it == lower.end() || lo > it->second) lower[a] = lo;
            }
            continue;
        }
        if (tvars.empty() && atoms.size() == 2) {
            // only exact identifications a = b (two opposite rows, bound 0)
            if (row.bound != DeltaRat(0)) return {Verdict::Unknown, {}};
            auto it = atoms.begin();
            std::string pos = it->second == 1 ? it->first : std::next(it)->first;
            std::string neg = it->second == 1 ? std::next(it)->first : it->first;
            pair_dirs[{std::min(pos, neg), std::max(pos, neg)}] |= pos < neg ? 1 : 2;
            continue;
        }
        if (!atoms.empty()) {
            if (atoms.size() > 1) return {Verdict::Unknown, {}};
            if (atoms.begin()->second != 1) return {Verdict::Unknown, {}};
            if (tvars.size() > 2) return {Verdict::Unknown, {}};
            var_rows.push_back({tvars, atoms.begin()->first, row.bound});
            continue;
        }
        if (tvars.size() > 2) return {Verdict::Unknown, {}};
        var_rows.push_back({tvars, "", row.bound});
    }

    for (const auto& [pr, dirs] : pair_dirs) {
        if (dirs != 3) return {Verdict::Unknown, {}};  // one-sided atom ordering
        classes.merge(pr.first, pr.second);
    }

    // 3. Fold bounds per class; the class value is its lower bound.
    std::map<std::string, DeltaRat> class_lo, class_hi;
    std::set<std::string> all_atoms = dist_syms;
    for (const auto& [a, _] : lower) all_atoms.insert(a);
    for (const auto& [a, _] : upper) all_atoms.insert(a);
    for (const auto& a : all_atoms) {
        std::string r = classes.find(a);
        DeltaRat lo = lower.count(a) ? std::max(lower[a], DeltaRat(0)) : DeltaRat(0);
        auto itl = class_lo.find(r);
        if (itl == class_lo.end() || lo > itl->second) class_lo[r] = lo;
        if (upper.count(a)) {
            auto ith = class_hi.find(r);
            if (ith == class_hi.end() || upper[a] < ith->second) class_hi[r] = upper[a];
        }
    }
    for (const auto& [r, hi] : class_hi)
        if (!(class_lo[r] <= hi)) return unsat();
    auto atom_value = [&](const std::string& a) { return class_lo[classes.find(a)]; };

    // 4. Bellman-Ford over the time variables after substituting atom values.
    std::map<std::string, int> index;
    std::vector<std::string> names;
    auto intern = [&](const std::string& s) {
        auto [it, fresh] = index.try_emplace(s, (int)names.size());
        if (fresh) names.push_back(s);
        return it->second;
    };
    int zero = intern("0");
    for (const auto& s : tvar_syms) intern(s);

    std::vector<detail::DiffEdge> edges;
    for (const auto& vr : var_rows) {
        DeltaRat b = vr.bound;
        if (!vr.atom.empty()) b = b - atom_value(vr.atom);
        if (vr.tvars.size() == 1) {
            const auto& [x, coeff] = *vr.tvars.begin();
            if (coeff == 1) edges.push_back({zero, intern(x), b});
            else edges.push_back({intern(x), zero, b});
        } else {
            auto it = vr.tvars.begin();
            const auto& [s1, c1] = *it;
            const auto& [s2, c2] = *std::next(it);
            if (c1 + c2 != 0) return {Verdict::Unknown, {}};
            const std::string& pos = c1 == 1 ? s1 : s2;
            const std::string& neg = c1 == 1 ? s2 : s1;
            edges.push_back({intern(neg), intern(pos), b});
        }
    }
    for (const auto& sym : names)
        if (sym != "0") edges.push_back({index[sym], zero, DeltaRat(0)});  // sym >= 0

    const int n = (int)names.size();
    std::vector<DeltaRat> dist(n, DeltaRat(0));
    std::vector<int> relaxed(n, 0);
    std::vector<bool> inq(n, true);
    std::deque<int> queue;
    for (int i = 0; i < n; ++i) queue.push_back(i);
    std::vector<std::vector<std::pair<int, DeltaRat>>> out(n);
    for (const auto& e : edges) out[e.from].push_back({e.to, e.bound});

    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        inq[u] = false;
        for (const auto& [v, w] : out[u]) {
            DeltaRat cand = dist[u] + w;
            if (cand < dist[v]) {
                dist[v] = cand;
                if (++relaxed[v] > n) return unsat();
                if (!inq[v]) {
                    inq[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }

    // 5. Feasible: pick a concrete delta below every strict slack.
    Rat eps(1);
    bool bounded = false;
    auto consider = [&](const DeltaRat& val, const DeltaRat& bound) {
        if (val.r < bound.r && val.d > bound.d) {
            Rat cand = (bound.r - val.r) / (val.d - bound.d);
            if (!bounded || cand < eps) { eps = cand; bounded = true; }
        }
    };
    for (const auto& e : edges) consider(dist[e.to] - dist[e.from], e.bound);
    for (const auto& [r, hi] : class_hi) consider(class_lo[r], hi);
    Rat delta = bounded ? eps / 2 : Rat(1);

    TimeModel model;
    for (int i = 0; i < n; ++i) {
        if (i == zero) continue;
        model[names[i]] = (dist[i] - dist[zero]).eval(delta);
    }
    for (const auto& a : all_atoms) model[a] = atom_value(a).eval(delta);
    for (const auto& c : store.solve_view())
        if (!holds(c, model))
            throw std::logic_error("builtin backend produced a bad model for " + c.str());
    CheckResult r{Verdict::Sat, model};
    store.fill_cache(r);
    return r;
}

}  // namespace cpsp
