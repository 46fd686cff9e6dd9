// ============================================================================
// cpsp-smt — a small QF_LIRA satisfiability solver speaking SMT-LIB v2
// ============================================================================
//
// Reads a script from stdin and answers on stdout, enough of the standard to
// serve as the verifier's external solver when no full SMT solver is
// installed: set-logic, declare-const/declare-fun (Real or Int, zero-arity),
// assert over linear arithmetic atoms (=, <=, <, >=, >, and/not), check-sat,
// get-model, exit.
//
// Decision procedure: general simplex over exact rationals with delta-bounds
// for strict inequalities, plus branch-and-bound on integer variables.
// Branch-and-bound is capped; hitting the cap reports `unknown` rather than
// guessing.
//
// ============================================================================

#include <cpsp/rational.hpp>
#include <cpsp/smtlib.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

using cpsp::DeltaRat;
using cpsp::Rat;
using cpsp::SExpr;

namespace {

struct UnsupportedInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Sort { Real, Int };

struct LinTerm {
    std::map<int, Rat> coeffs;
    Rat constant = 0;
};

class Simplex {
public:
    int declare(const std::string& name, Sort sort) {
        auto it = index_.find(name);
        if (it != index_.end()) return it->second;
        int id = (int)names_.size();
        index_[name] = id;
        names_.push_back(name);
        sorts_.push_back(sort);
        lower_.push_back(std::nullopt);
        upper_.push_back(std::nullopt);
        beta_.push_back(DeltaRat(0));
        row_of_.push_back(-1);
        return id;
    }

    int id_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UnsupportedInput("undeclared symbol: " + name);
        return it->second;
    }

    void assert_upper_poly(const LinTerm& t, DeltaRat bound) {
        auto [x, b] = slackify(t, bound);
        assert_upper(x, b);
    }
    void assert_lower_poly(const LinTerm& t, DeltaRat bound) {
        auto [x, b] = slackify(t, bound);
        assert_lower(x, b);
    }

    enum class Outcome { Sat, Unsat, Unknown };

    Outcome solve() {
        if (conflict_) return Outcome::Unsat;
        int budget = 512;
        return solve_rec(0, budget);
    }

    std::string model_text() const {
        Rat delta = pick_delta();
        std::ostringstream os;
        os << "(\n";
        for (int v = 0; v < (int)names_.size(); ++v) {
            if (names_[v][0] == '$') continue;  // slack
            Rat val = beta_[v].eval(delta);
            os << "  (define-fun " << quoted(names_[v]) << " () "
               << (sorts_[v] == Sort::Int ? "Int" : "Real") << " " << literal(val, sorts_[v])
               << ")\n";
        }
        os << ")\n";
        return os.str();
    }

private:
    struct Row {
        int basic = -1;
        std::map<int, Rat> terms;  // over nonbasic variables
    };

    static std::string quoted(const std::string& s) {
        for (char c : s)
            if (!(isalnum((unsigned char)c) || c == '_' || c == '.')) return "|" + s + "|";
        return s;
    }

    static std::string literal(const Rat& q, Sort sort) {
        mpz_class num = q.get_num(), den = q.get_den();
        bool neg = num < 0;
        if (neg) num = -num;
        std::string body;
        if (sort == Sort::Int) body = num.get_str();
        else if (den == 1) body = num.get_str() + ".0";
        else body = "(/ " + num.get_str() + ".0 " + den.get_str() + ".0)";
        return neg ? "(- " + body + ")" : body;
    }

    // Bounds attach directly to plain variables; composite polynomials get a
    // slack variable defined by a tableau row (cached per polynomial).
    std::pair<int, DeltaRat> slackify(const LinTerm& t, DeltaRat bound) {
        bound = bound - DeltaRat(t.constant);
        if (t.coeffs.size() == 1 && t.coeffs.begin()->second == 1)
            return {t.coeffs.begin()->first, bound};
        auto it = slack_cache_.find(t.coeffs);
        if (it != slack_cache_.end()) return {it->second, bound};
        int s = declare("$s" + std::to_string(slack_cache_.size()), Sort::Real);
        slack_cache_[t.coeffs] = s;
        Row row;
        row.basic = s;
        for (const auto& [v, c] : t.coeffs) {
            if (row_of_[v] >= 0) {
                for (const auto& [v2, c2] : rows_[row_of_[v]].terms) {
                    Rat& slot = row.terms[v2];
                    slot += c * c2;
                    if (slot == 0) row.terms.erase(v2);
                }
            } else {
                Rat& slot = row.terms[v];
                slot += c;
                if (slot == 0) row.terms.erase(v);
            }
        }
        DeltaRat val(0);
        for (const auto& [v, c] : row.terms) val = val + beta_[v] * c;
        beta_[s] = val;
        row_of_[s] = (int)rows_.size();
        rows_.push_back(std::move(row));
        return {s, bound};
    }

    void tighten_int(int x, DeltaRat& b, bool is_lower) {
        if (sorts_[x] != Sort::Int) return;
        if (is_lower) {
            if (b.d > 0) b = DeltaRat(cpsp::rat_floor(b.r) + 1);
            else if (b.d == 0) b = DeltaRat(cpsp::rat_ceil(b.r));
            else b = DeltaRat(cpsp::rat_is_integer(b.r) ? b.r : cpsp::rat_ceil(b.r));
        } else {
            if (b.d < 0) b = DeltaRat(cpsp::rat_ceil(b.r) - 1);
            else if (b.d == 0) b = DeltaRat(cpsp::rat_floor(b.r));
            else b = DeltaRat(cpsp::rat_is_integer(b.r) ? b.r : cpsp::rat_floor(b.r));
        }
    }

    void assert_upper(int x, DeltaRat b) {
        tighten_int(x, b, false);
        if (upper_[x] && *upper_[x] <= b) return;
        if (lower_[x] && b < *lower_[x]) { conflict_ = true; return; }
        upper_[x] = b;
        if (row_of_[x] < 0 && beta_[x] > b) update(x, b);
    }

    void assert_lower(int x, DeltaRat b) {
        tighten_int(x, b, true);
        if (lower_[x] && *lower_[x] >= b) return;
        if (upper_[x] && *upper_[x] < b) { conflict_ = true; return; }
        lower_[x] = b;
        if (row_of_[x] < 0 && beta_[x] < b) update(x, b);
    }

    void update(int x, DeltaRat v) {
        DeltaRat d = v - beta_[x];
        beta_[x] = v;
        for (auto& row : rows_) {
            auto it = row.terms.find(x);
            if (it != row.terms.end()) beta_[row.basic] = beta_[row.basic] + d * it->second;
        }
    }

    void pivot_and_update(int xb, int xj, DeltaRat v) {
        int r = row_of_[xb];
        Rat a = rows_[r].terms.at(xj);
        DeltaRat theta = (v - beta_[xb]) * (Rat(1) / a);
        beta_[xb] = v;
        beta_[xj] = beta_[xj] + theta;
        for (auto& row : rows_) {
            if (row.basic == xb || row.basic == xj) continue;
            auto it = row.terms.find(xj);
            if (it != row.terms.end()) beta_[row.basic] = beta_[row.basic] + theta * it->second;
        }
        pivot(r, xj);
    }

    void pivot(int r, int xj) {
        Row& row = rows_[r];
        int xb = row.basic;
        Rat a = row.terms.at(xj);
        std::map<int, Rat> def;  // xj = xb/a - sum_{k != j} (a_k/a) x_k
        def[xb] = Rat(1) / a;
        for (const auto& [k, c] : row.terms)
            if (k != xj) def[k] = -c / a;
        row.terms = def;
        row.basic = xj;
        row_of_[xj] = r;
        row_of_[xb] = -1;
        for (auto& other : rows_) {
            if (other.basic == xj) continue;
            auto it = other.terms.find(xj);
            if (it == other.terms.end()) continue;
            Rat c = it->second;
            other.terms.erase(it);
            for (const auto& [k, ck] : def) {
                Rat& slot = other.terms[k];
                slot += c * ck;
                if (slot == 0) other.terms.erase(k);
            }
        }
    }

    // Dutertre-de Moura check loop with Bland's rule on variable indices.
    bool check() {
        while (true) {
            int xb = -1;
            bool need_up = false;
            for (int v = 0; v < (int)names_.size(); ++v) {
                if (row_of_[v] < 0) continue;
                if (lower_[v] && beta_[v] < *lower_[v]) { xb = v; need_up = true; break; }
                if (upper_[v] && beta_[v] > *upper_[v]) { xb = v; need_up = false; break; }
            }
            if (xb < 0) return true;
            const Row& row = rows_[row_of_[xb]];
            int xj = -1;
            for (const auto& [v, c] : row.terms) {
                bool can_up = !upper_[v] || beta_[v] < *upper_[v];
                bool can_down = !lower_[v] || beta_[v] > *lower_[v];
                if ((need_up && ((c > 0 && can_up) || (c < 0 && can_down))) ||
                    (!need_up && ((c > 0 && can_down) || (c < 0 && can_up)))) {
                    xj = v;
                    break;  // terms are index-ordered
                }
            }
            if (xj < 0) return false;
            pivot_and_update(xb, xj, need_up ? *lower_[xb] : *upper_[xb]);
        }
    }

    Outcome solve_rec(int depth, int& budget) {
        if (conflict_) return Outcome::Unsat;
        if (!check()) return Outcome::Unsat;
        int frac = -1;
        for (int v = 0; v < (int)names_.size(); ++v) {
            if (sorts_[v] != Sort::Int) continue;
            if (beta_[v].d != 0 || !cpsp::rat_is_integer(beta_[v].r)) { frac = v; break; }
        }
        if (frac < 0) return Outcome::Sat;
        if (--budget <= 0 || depth > 64) return Outcome::Unknown;

        Rat fv = (beta_[frac].d < 0 && cpsp::rat_is_integer(beta_[frac].r))
                     ? beta_[frac].r - 1
                     : cpsp::rat_floor(beta_[frac].r);

        Simplex left = *this;
        left.assert_upper(frac, DeltaRat(fv));
        Outcome lo = left.solve_rec(depth + 1, budget);
        if (lo == Outcome::Sat) { *this = std::move(left); return Outcome::Sat; }

        Simplex right = *this;
        right.assert_lower(frac, DeltaRat(fv + 1));
        Outcome hi = right.solve_rec(depth + 1, budget);
        if (hi == Outcome::Sat) { *this = std::move(right); return Outcome::Sat; }
        if (lo == Outcome::Unknown || hi == Outcome::Unknown) return Outcome::Unknown;
        return Outcome::Unsat;
    }

    Rat pick_delta() const {
        Rat eps(1);
        bool bounded = false;
        auto consider = [&](const DeltaRat& val, const DeltaRat& bound, bool is_upper) {
            DeltaRat diff = is_upper ? bound - val : val - bound;
            if (diff.r > 0 && diff.d < 0) {
                Rat cand = diff.r / -diff.d;
                if (!bounded || cand < eps) { eps = cand; bounded = true; }
            }
        };
        for (int v = 0; v < (int)names_.size(); ++v) {
            if (upper_[v]) consider(beta_[v], *upper_[v], true);
            if (lower_[v]) consider(beta_[v], *lower_[v], false);
        }
        return bounded ? eps / 2 : Rat(1);
    }

    std::map<std::string, int> index_;
    std::vector<std::string> names_;
    std::vector<Sort> sorts_;
    std::vector<std::optional<DeltaRat>> lower_, upper_;
    std::vector<DeltaRat> beta_;
    std::vector<int> row_of_;
    std::vector<Row> rows_;
    std::map<std::map<int, Rat>, int> slack_cache_;
    bool conflict_ = false;
};

// ── Assertion translation ───────────────────────────────────────────────────

LinTerm lin_of(const SExpr& e, Simplex& sx) {
    if (e.is_atom()) {
        if (auto v = cpsp::rat_parse(e.atom)) return {{}, *v};
        LinTerm t;
        t.coeffs[sx.id_of(e.atom)] = 1;
        return t;
    }
    if (e.items.empty() || !e.items[0].is_atom())
        throw UnsupportedInput("malformed term");
    const std::string& op = e.items[0].atom;
    if (op == "to_real" && e.items.size() == 2) return lin_of(e.items[1], sx);
    if (op == "+") {
        LinTerm out;
        for (size_t i = 1; i < e.items.size(); ++i) {
            LinTerm t = lin_of(e.items[i], sx);
            out.constant += t.constant;
            for (const auto& [v, c] : t.coeffs) out.coeffs[v] += c;
        }
        return out;
    }
    if (op == "-") {
        LinTerm out = lin_of(e.items[1], sx);
        if (e.items.size() == 2) {
            out.constant = -out.constant;
            for (auto& [v, c] : out.coeffs) c = -c;
            return out;
        }
        for (size_t i = 2; i < e.items.size(); ++i) {
            LinTerm t = lin_of(e.items[i], sx);
            out.constant -= t.constant;
            for (const auto& [v, c] : t.coeffs) out.coeffs[v] -= c;
        }
        return out;
    }
    if (op == "*") {
        LinTerm acc{{}, Rat(1)};
        for (size_t i = 1; i < e.items.size(); ++i) {
            LinTerm t = lin_of(e.items[i], sx);
            if (acc.coeffs.empty()) {
                Rat k = acc.constant;
                for (auto& [v, c] : t.coeffs) c *= k;
                t.constant *= k;
                acc = std::move(t);
            } else if (t.coeffs.empty()) {
                Rat k = t.constant;
                for (auto& [v, c] : acc.coeffs) c *= k;
                acc.constant *= k;
            } else {
                throw UnsupportedInput("nonlinear product");
            }
        }
        return acc;
    }
    if (op == "/" && e.items.size() == 3) {
        LinTerm num = lin_of(e.items[1], sx);
        LinTerm den = lin_of(e.items[2], sx);
        if (!den.coeffs.empty() || den.constant == 0)
            throw UnsupportedInput("division by non-constant");
        for (auto& [v, c] : num.coeffs) c /= den.constant;
        num.constant /= den.constant;
        return num;
    }
    throw UnsupportedInput("unsupported operator: " + op);
}

void assert_atom(const SExpr& e, Simplex& sx, bool positive);

void assert_formula(const SExpr& e, Simplex& sx, bool positive) {
    if (e.is_atom()) {
        if ((e.atom == "true") == positive) return;
        LinTerm one{{}, Rat(1)};
        sx.assert_upper_poly(one, DeltaRat(0));  // constant falsity
        return;
    }
    if (!e.items.empty() && e.items[0].is_atom()) {
        const std::string& op = e.items[0].atom;
        if (op == "and" && positive) {
            for (size_t i = 1; i < e.items.size(); ++i) assert_formula(e.items[i], sx, true);
            return;
        }
        if (op == "not" && e.items.size() == 2) {
            assert_formula(e.items[1], sx, !positive);
            return;
        }
    }
    assert_atom(e, sx, positive);
}

void assert_atom(const SExpr& e, Simplex& sx, bool positive) {
    if (e.items.size() < 3 || !e.items[0].is_atom())
        throw UnsupportedInput("unsupported assertion");
    std::string op = e.items[0].atom;
    if (!positive) {
        if (op == "<=") op = ">";
        else if (op == "<") op = ">=";
        else if (op == ">=") op = "<";
        else if (op == ">") op = "<=";
        else throw UnsupportedInput("cannot negate " + op);
    }
    for (size_t i = 1; i + 1 < e.items.size(); ++i) {
        LinTerm l = lin_of(e.items[i], sx);
        LinTerm r = lin_of(e.items[i + 1], sx);
        LinTerm d = l;  // l - r rel 0
        d.constant -= r.constant;
        for (const auto& [v, c] : r.coeffs) {
            d.coeffs[v] -= c;
            if (d.coeffs[v] == 0) d.coeffs.erase(v);
        }
        DeltaRat bound(-d.constant);
        d.constant = 0;
        if (d.coeffs.empty()) {
            bool ok = op == "="    ? Rat(0) == bound.r
                      : op == "<=" ? Rat(0) <= bound.r
                      : op == "<"  ? Rat(0) < bound.r
                      : op == ">=" ? Rat(0) >= bound.r
                                   : Rat(0) > bound.r;
            if (!ok) {
                LinTerm one{{}, Rat(1)};
                sx.assert_upper_poly(one, DeltaRat(0));
            }
            continue;
        }
        if (op == "=") {
            sx.assert_upper_poly(d, bound);
            sx.assert_lower_poly(d, bound);
        } else if (op == "<=") {
            sx.assert_upper_poly(d, bound);
        } else if (op == "<") {
            sx.assert_upper_poly(d, bound + DeltaRat(0, -1));
        } else if (op == ">=") {
            sx.assert_lower_poly(d, bound);
        } else if (op == ">") {
            sx.assert_lower_poly(d, bound + DeltaRat(0, 1));
        } else {
            throw UnsupportedInput("unsupported relation: " + op);
        }
    }
}

}  // namespace

int main() {
    std::string input((std::istreambuf_iterator<char>(std::cin)),
                      std::istreambuf_iterator<char>());
    Simplex sx;
    bool unsupported = false;
    Simplex::Outcome last = Simplex::Outcome::Unknown;
    bool solved = false;

    size_t i = 0;
    SExpr cmd;
    while (cpsp::smt::parse_sexpr(input, i, cmd)) {
        if (cmd.items.empty() || !cmd.items[0].is_atom()) continue;
        const std::string& head = cmd.items[0].atom;
        try {
            if (head == "declare-const" && cmd.items.size() == 3) {
                sx.declare(cmd.items[1].atom,
                           cmd.items[2].atom == "Int" ? Sort::Int : Sort::Real);
            } else if (head == "declare-fun" && cmd.items.size() == 4) {
                if (!cmd.items[2].items.empty() || cmd.items[2].is_atom())
                    throw UnsupportedInput("only zero-arity declarations");
                sx.declare(cmd.items[1].atom,
                           cmd.items[3].atom == "Int" ? Sort::Int : Sort::Real);
            } else if (head == "assert" && cmd.items.size() == 2) {
                assert_formula(cmd.items[1], sx, true);
            } else if (head == "check-sat") {
                if (unsupported) {
                    std::cout << "unknown\n" << std::flush;
                } else {
                    last = sx.solve();
                    solved = true;
                    std::cout << (last == Simplex::Outcome::Sat     ? "sat"
                                  : last == Simplex::Outcome::Unsat ? "unsat"
                                                                    : "unknown")
                              << "\n"
                              << std::flush;
                }
            } else if (head == "get-model") {
                if (solved && last == Simplex::Outcome::Sat && !unsupported)
                    std::cout << sx.model_text() << std::flush;
                else
                    std::cout << "(error \"no model available\")\n" << std::flush;
            } else if (head == "exit") {
                return 0;
            }
            // set-logic / set-option / set-info and anything else: ignored
        } catch (const UnsupportedInput& e) {
            std::cerr << "cpsp-smt: " << e.what() << "\n";
            unsupported = true;
        }
    }
    return 0;
}
