// ============================================================================
// cpsp/smtlib.hpp — SMT-LIB v2 encoding and the external solver backend
// ============================================================================
//
// The smt backend talks SMT-LIB v2 over stdin/stdout of a user-configured
// solver executable (z3 -in, cvc5, or the bundled cpsp-smt). One full script
// per call: set-logic QF_LIRA, declarations with nonnegativity, assertions,
// check-sat, get-model. floor(e) is encoded as a fresh integer auxiliary i
// with i <= e < i+1, ceil dually. No incremental protocol.
//
// Replies accepted: sat/unsat/unknown and a get-model s-expression whose
// values may be decimals, fractions (/ a b), or negations.
//
// ============================================================================

#pragma once

#include <cpsp/timealg.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

namespace cpsp {

class SolverUnavailable : public std::runtime_error {
public:
    explicit SolverUnavailable(const std::string& what) : std::runtime_error(what) {}
};

class MalformedSolverReply : public std::runtime_error {
public:
    explicit MalformedSolverReply(const std::string& what) : std::runtime_error(what) {}
};

// ── Encoding ────────────────────────────────────────────────────────────────

namespace smt {

inline std::string sym(const std::string& name) {
    for (char c : name)
        if (!(isalnum((unsigned char)c) || c == '_' || c == '.'))
            return "|" + name + "|";
    return name;
}

inline std::string lit(const Rat& q) {
    mpz_class num = q.get_num(), den = q.get_den();
    bool neg = num < 0;
    if (neg) num = -num;
    std::string body;
    if (den == 1) body = num.get_str() + ".0";
    else body = "(/ " + num.get_str() + ".0 " + den.get_str() + ".0)";
    return neg ? "(- " + body + ")" : body;
}

struct Encoder {
    std::ostringstream decls, asserts;
    int aux = 0;

    std::string expr(const TimeExpr& e) {
        switch (e.kind()) {
            case TimeKind::Num: return lit(e.value());
            case TimeKind::Var:
            case TimeKind::Dist: return sym(e.symbol());
            case TimeKind::Cur: throw std::logic_error("cur reached the encoder");
            case TimeKind::Add: return "(+ " + expr(e.lhs()) + " " + expr(e.rhs()) + ")";
            case TimeKind::Sub: return "(- " + expr(e.lhs()) + " " + expr(e.rhs()) + ")";
            case TimeKind::Mul: return "(* " + expr(e.lhs()) + " " + expr(e.rhs()) + ")";
            case TimeKind::Div: return "(/ " + expr(e.lhs()) + " " + expr(e.rhs()) + ")";
            case TimeKind::Floor: {
                std::string inner = expr(e.lhs());
                std::string i = ".f" + std::to_string(aux++);
                decls << "(declare-const " << i << " Int)\n";
                asserts << "(assert (<= (to_real " << i << ") " << inner << "))\n";
                asserts << "(assert (< " << inner << " (+ (to_real " << i << ") 1.0)))\n";
                return "(to_real " + i + ")";
            }
            case TimeKind::Ceil: {
                std::string inner = expr(e.lhs());
                std::string i = ".c" + std::to_string(aux++);
                decls << "(declare-const " << i << " Int)\n";
                asserts << "(assert (>= (to_real " << i << ") " << inner << "))\n";
                asserts << "(assert (< (- (to_real " << i << ") 1.0) " << inner << "))\n";
                return "(to_real " + i + ")";
            }
        }
        throw std::logic_error("bad time expression");
    }

    void constraint(const TimeConstraint& c) {
        const char* op = nullptr;
        switch (c.rel) {
            case TimeRel::Eq: op = "="; break;
            case TimeRel::Ge: op = ">="; break;
            case TimeRel::Gt: op = ">"; break;
            case TimeRel::Lt: op = "<"; break;
            case TimeRel::Le: op = "<="; break;
        }
        std::string l = expr(c.lhs), r = expr(c.rhs);
        asserts << "(assert (" << op << " " << l << " " << r << "))\n";
    }
};

}  // namespace smt

// Complete QF_LIRA script for the store: declarations and nonnegativity for
// every time variable and td atom, one assertion per constraint, check-sat
// and get-model at the end.
inline std::string encode_smtlib(const ConstraintStore& store) {
    std::set<std::string> tvars, dists;
    store.symbols(tvars, dists);

    smt::Encoder enc;
    std::ostringstream out;
    out << "(set-logic QF_LIRA)\n";
    std::vector<std::string> symbols(tvars.begin(), tvars.end());
    symbols.insert(symbols.end(), dists.begin(), dists.end());
    for (const auto& s : symbols) {
        out << "(declare-const " << smt::sym(s) << " Real)\n";
        enc.asserts << "(assert (>= " << smt::sym(s) << " 0.0))\n";
    }
    for (const auto& c : store.solve_view()) enc.constraint(c);
    out << enc.decls.str() << enc.asserts.str();
    out << "(check-sat)\n(get-model)\n";
    return out.str();
}

// ── S-expressions ───────────────────────────────────────────────────────────

struct SExpr {
    std::string atom;           // empty for lists
    std::vector<SExpr> items;
    bool is_atom() const { return items.empty() && !atom.empty(); }
};

namespace smt {

inline void skip_ws(const std::string& s, size_t& i) {
    while (i < s.size()) {
        if (isspace((unsigned char)s[i])) { ++i; continue; }
        if (s[i] == ';') {  // comment to end of line
            while (i < s.size() && s[i] != '\n') ++i;
            continue;
        }
        break;
    }
}

inline bool parse_sexpr(const std::string& s, size_t& i, SExpr& out) {
    skip_ws(s, i);
    if (i >= s.size()) return false;
    if (s[i] == '(') {
        ++i;
        out = SExpr{};
        while (true) {
            skip_ws(s, i);
            if (i >= s.size()) return false;
            if (s[i] == ')') { ++i; return true; }
            SExpr child;
            if (!parse_sexpr(s, i, child)) return false;
            out.items.push_back(std::move(child));
        }
    }
    if (s[i] == '|') {
        size_t end = s.find('|', i + 1);
        if (end == std::string::npos) return false;
        out = SExpr{s.substr(i + 1, end - i - 1), {}};
        i = end + 1;
        return true;
    }
    size_t start = i;
    while (i < s.size() && !isspace((unsigned char)s[i]) && s[i] != '(' && s[i] != ')') ++i;
    if (i == start) return false;
    out = SExpr{s.substr(start, i - start), {}};
    return true;
}

inline std::optional<Rat> value_of(const SExpr& e) {
    if (e.is_atom()) return rat_parse(e.atom);
    if (e.items.empty()) return std::nullopt;
    const auto& head = e.items[0];
    if (head.is_atom() && head.atom == "-" && e.items.size() == 2) {
        auto v = value_of(e.items[1]);
        if (!v) return std::nullopt;
        return -*v;
    }
    if (head.is_atom() && head.atom == "/" && e.items.size() == 3) {
        auto a = value_of(e.items[1]), b = value_of(e.items[2]);
        if (!a || !b || *b == 0) return std::nullopt;
        return *a / *b;
    }
    if (head.is_atom() && head.atom == "to_real" && e.items.size() == 2)
        return value_of(e.items[1]);
    return std::nullopt;
}

// Extracts name -> value pairs from a get-model reply, walking every
// (define-fun name () Sort value) found anywhere in the s-expressions.
inline void collect_model(const SExpr& e, TimeModel& model) {
    if (e.is_atom()) return;
    if (!e.items.empty() && e.items[0].is_atom() && e.items[0].atom == "define-fun" &&
        e.items.size() >= 5 && e.items[1].is_atom()) {
        if (auto v = value_of(e.items[4])) {
            const std::string& name = e.items[1].atom;
            if (!name.empty() && name[0] != '.')  // skip floor/ceil auxiliaries
                model[name] = *v;
        }
        return;
    }
    for (const auto& it : e.items) collect_model(it, model);
}

// ── Subprocess ──────────────────────────────────────────────────────────────

inline std::vector<std::string> split_command(const std::string& cmd) {
    std::vector<std::string> out;
    std::istringstream is(cmd);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

// Runs `argv`, writes `input` to stdin, returns all of stdout. Throws
// SolverUnavailable on spawn failure, crash, or timeout.
inline std::string run_process(const std::vector<std::string>& argv, const std::string& input,
                               int timeout_ms) {
    if (argv.empty()) throw SolverUnavailable("empty solver command");
    static const bool sigpipe_ignored = [] {
        signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;
    // close-on-exec keeps concurrently forked children from holding the
    // other ends open (the dup2 below clears the flag on stdin/stdout)
    int in_pipe[2], out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0)
        throw SolverUnavailable("pipe() failed");
    pid_t pid = fork();
    if (pid < 0) throw SolverUnavailable("fork() failed");
    if (pid == 0) {
        dup2(in_pipe[0], 0);
        dup2(out_pipe[1], 1);
        close(in_pipe[0]); close(in_pipe[1]);
        close(out_pipe[0]); close(out_pipe[1]);
        std::vector<char*> cargv;
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        execvp(cargv[0], cargv.data());
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);

    // Feed the script; the solver may start replying before stdin is closed.
    size_t off = 0;
    while (off < input.size()) {
        ssize_t n = write(in_pipe[1], input.data() + off, input.size() - off);
        if (n <= 0) break;
        off += (size_t)n;
    }
    close(in_pipe[1]);

    std::string output;
    char buf[4096];
    int waited_ms = 0;
    while (true) {
        struct pollfd pfd{out_pipe[0], POLLIN, 0};
        int rc = poll(&pfd, 1, 50);
        if (rc > 0) {
            ssize_t n = read(out_pipe[0], buf, sizeof buf);
            if (n <= 0) break;
            output.append(buf, (size_t)n);
        } else if (rc == 0) {
            waited_ms += 50;
            if (timeout_ms > 0 && waited_ms >= timeout_ms) {
                kill(pid, SIGKILL);
                close(out_pipe[0]);
                waitpid(pid, nullptr, 0);
                throw SolverUnavailable("solver timed out after " + std::to_string(timeout_ms) + "ms");
            }
        } else {
            break;
        }
    }
    close(out_pipe[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status) && WEXITSTATUS(status) == 127)
        throw SolverUnavailable("cannot execute solver: " + argv[0]);
    if (output.empty())
        throw SolverUnavailable("solver produced no output (" + argv[0] + ")");
    return output;
}

}  // namespace smt

// ── The smt backend ─────────────────────────────────────────────────────────

struct SolverConfig {
    std::string command;        // e.g. "cpsp-smt" or "z3 -in"
    int timeout_ms = 20000;
};

// Looks for a usable solver: $CPSP_SOLVER, then cpsp-smt next to the current
// executable (and one directory up, for build trees), then PATH.
inline std::string default_solver_command() {
    if (const char* env = getenv("CPSP_SOLVER"); env && *env) return env;
    char buf[4096];
    ssize_t n = readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n > 0) {
        std::string exe(buf, (size_t)n);
        auto dir = exe.substr(0, exe.find_last_of('/'));
        for (const std::string& cand : {dir + "/cpsp-smt", dir + "/../cpsp-smt"})
            if (access(cand.c_str(), X_OK) == 0) return cand;
    }
    return "cpsp-smt";
}

inline CheckResult check_sat_smt(const ConstraintStore& store, const SolverConfig& cfg) {
    std::string script = encode_smtlib(store) + "(exit)\n";
    std::string reply = smt::run_process(smt::split_command(cfg.command), script, cfg.timeout_ms);

    std::istringstream lines(reply);
    std::string verdict_line;
    while (std::getline(lines, verdict_line)) {
        // strip whitespace
        auto b = verdict_line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        verdict_line = verdict_line.substr(b, verdict_line.find_last_not_of(" \t\r") - b + 1);
        if (!verdict_line.empty()) break;
    }
    if (verdict_line == "unsat") {
        CheckResult r{Verdict::Unsat, {}};
        store.fill_cache(r);
        return r;
    }
    if (verdict_line == "unknown") return {Verdict::Unknown, {}};
    if (verdict_line != "sat")
        throw MalformedSolverReply("unexpected solver verdict: " + verdict_line);

    std::string rest(reply.substr(reply.find(verdict_line) + verdict_line.size()));
    TimeModel model;
    size_t i = 0;
    SExpr e;
    while (smt::parse_sexpr(rest, i, e)) smt::collect_model(e, model);

    std::set<std::string> tvars, dists;
    store.symbols(tvars, dists);
    for (const auto& s : tvars) model.try_emplace(s, 0);
    for (const auto& s : dists) model.try_emplace(s, 0);
    for (const auto& c : store.solve_view()) {
        if (!holds(c, model))
            throw MalformedSolverReply("solver model violates " + c.str());
    }
    CheckResult r{Verdict::Sat, model};
    store.fill_cache(r);
    return r;
}

enum class Backend { Builtin, Smt, Auto };

// Satisfiability oracle shared by the search and the CLI; counts calls so
// traces can report solver statistics.
class SatOracle {
public:
    explicit SatOracle(SolverConfig cfg = {default_solver_command()},
                       Backend mode = Backend::Auto)
        : cfg_(std::move(cfg)), mode_(mode) {}

    CheckResult check(const ConstraintStore& store, Backend backend = Backend::Auto) const {
        if (mode_ != Backend::Auto) backend = mode_;
        switch (backend) {
            case Backend::Builtin:
                ++builtin_calls_;
                return check_sat_builtin(store);
            case Backend::Smt:
                ++smt_calls_;
                return check_sat_smt(store, cfg_);
            case Backend::Auto: {
                ++builtin_calls_;
                auto r = check_sat_builtin(store);
                if (r.verdict != Verdict::Unknown) return r;
                ++smt_calls_;
                return check_sat_smt(store, cfg_);
            }
        }
        return {Verdict::Unknown, {}};
    }

    uint64_t builtin_calls() const { return builtin_calls_; }
    uint64_t smt_calls() const { return smt_calls_; }
    const SolverConfig& config() const { return cfg_; }

private:
    SolverConfig cfg_;
    Backend mode_ = Backend::Auto;
    mutable std::atomic<uint64_t> builtin_calls_{0};
    mutable std::atomic<uint64_t> smt_calls_{0};
};

// check_sat with an explicit backend choice, resolving the solver lazily.
inline CheckResult check_sat(const ConstraintStore& store, Backend backend,
                             const SolverConfig& cfg = {default_solver_command()}) {
    switch (backend) {
        case Backend::Builtin: return check_sat_builtin(store);
        case Backend::Smt: return check_sat_smt(store, cfg);
        case Backend::Auto: {
            auto r = check_sat_builtin(store);
            if (r.verdict != Verdict::Unknown) return r;
            return check_sat_smt(store, cfg);
        }
    }
    return {Verdict::Unknown, {}};
}

}  // namespace cpsp
