// ============================================================================
// cpsp/lang.hpp — the protocol language: roles, scenarios, positions
// ============================================================================
//
// Surface syntax (docs/scenario-format.md holds the full grammar):
//
//   role verifier(kv) {
//     new v;
//     send v # t = cur;
//     recv enc(v, kv) # cur <= t + 4;
//   }
//
//   scenario mafia {
//     participants p1, p2;
//     topology { td(p1,p2) > 4; td(p2,p1) > 4; }
//     kp name(p1), name(p2);
//     run p1: verifier(key(k1));
//     run p2: prover(key(k1));
//     goal complete(p1);
//   }
//
// Commands form a tree addressed by positions over {1,2}: the first command
// sits at the empty position, sequencing steps through .1, conditionals
// branch through .1 (then) and .2 (else). A conditional terminates its
// block; commands after `if ... else ...` are a parse error.
//
// Identifier scoping inside roles: an identifier is a message variable if it
// is a parameter, bound by `new`, or first bound by a receive pattern.
// Sending or testing an unbound identifier is a ScopeError. Time variables
// (inside # constraints) live in their own namespace and need no
// declaration; `cur` is the reserved clock.
//
// ============================================================================

#pragma once

#include <cpsp/terms.hpp>
#include <cpsp/timealg.hpp>
#include <cpsp/topology.hpp>

#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cpsp {

// ── Errors ──────────────────────────────────────────────────────────────────

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int col)
        : std::runtime_error(std::to_string(line) + ":" + std::to_string(col) + ": " + msg),
          line(line), col(col) {}
    int line, col;
};

class ScopeError : public ParseError {
public:
    using ParseError::ParseError;
};

class UnknownRole : public std::runtime_error {
public:
    explicit UnknownRole(const std::string& name) : std::runtime_error("unknown role: " + name) {}
};

class InvalidPosition : public std::runtime_error {
public:
    explicit InvalidPosition(const std::string& what) : std::runtime_error(what) {}
};

class UnboundParam : public std::runtime_error {
public:
    explicit UnboundParam(const std::string& what) : std::runtime_error(what) {}
};

// ── Positions ───────────────────────────────────────────────────────────────

using Position = std::vector<uint8_t>;  // elements in {1,2}; empty = first command

inline std::string pos_str(const Position& p) {
    std::string out;
    for (size_t i = 0; i < p.size(); ++i) {
        if (i) out += ".";
        out += std::to_string((int)p[i]);
    }
    return out;
}

inline std::optional<Position> pos_parse(const std::string& s) {
    Position out;
    if (s.empty()) return out;
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '1' || s[i] == '2') out.push_back((uint8_t)(s[i] - '0'));
        else return std::nullopt;
        ++i;
        if (i < s.size()) {
            if (s[i] != '.') return std::nullopt;
            ++i;
            if (i == s.size()) return std::nullopt;
        }
    }
    return out;
}

// ── Boolean expressions ─────────────────────────────────────────────────────

enum class BoolKind { UnifTest, TimeCmp, And, Not };

class BoolExpr;
struct BoolNode {
    BoolKind kind;
    Message m1, m2;              // UnifTest
    TimeConstraint cmp;          // TimeCmp (cur allowed until node creation)
    std::shared_ptr<const BoolNode> a, b;
};

class BoolExpr {
public:
    BoolExpr() = default;

    static BoolExpr unif_test(Message m1, Message m2) {
        auto n = std::make_shared<BoolNode>();
        n->kind = BoolKind::UnifTest;
        n->m1 = std::move(m1);
        n->m2 = std::move(m2);
        return BoolExpr(std::move(n));
    }
    static BoolExpr time_cmp(TimeConstraint c) {
        auto n = std::make_shared<BoolNode>();
        n->kind = BoolKind::TimeCmp;
        n->cmp = std::move(c);
        return BoolExpr(std::move(n));
    }
    static BoolExpr conj(BoolExpr a, BoolExpr b) {
        auto n = std::make_shared<BoolNode>();
        n->kind = BoolKind::And;
        n->a = a.node_;
        n->b = b.node_;
        return BoolExpr(std::move(n));
    }
    static BoolExpr negate(BoolExpr a) {
        auto n = std::make_shared<BoolNode>();
        n->kind = BoolKind::Not;
        n->a = a.node_;
        return BoolExpr(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    BoolKind kind() const { return node_->kind; }
    const Message& lhs_msg() const { return node_->m1; }
    const Message& rhs_msg() const { return node_->m2; }
    const TimeConstraint& cmp() const { return node_->cmp; }
    BoolExpr lhs() const { return BoolExpr(node_->a); }
    BoolExpr rhs() const { return BoolExpr(node_->b); }

private:
    explicit BoolExpr(std::shared_ptr<const BoolNode> n) : node_(std::move(n)) {}
    std::shared_ptr<const BoolNode> node_;
};

// ── Commands and roles ──────────────────────────────────────────────────────

enum class CmdKind { Nil, New, Send, Recv, Cond };

struct CommandNode;
using CommandPtr = std::shared_ptr<const CommandNode>;

struct CommandNode {
    CmdKind kind = CmdKind::Nil;
    std::string new_var;                       // New
    Message msg;                               // Send/Recv
    std::optional<TimeConstraint> annotation;  // timed variants (cur allowed)
    BoolExpr guard;                            // Cond
    CommandPtr then_branch, else_branch;       // Cond
    CommandPtr next;                           // New/Send/Recv
};

inline CommandPtr nil_command() {
    static const CommandPtr nil = std::make_shared<CommandNode>();
    return nil;
}

struct Role {
    std::string name;
    std::vector<std::string> params;
    CommandPtr body = nil_command();
};

inline const CommandNode* command_at(const Role& r, const Position& pos) {
    const CommandNode* n = r.body.get();
    for (uint8_t step : pos) {
        switch (n->kind) {
            case CmdKind::Cond:
                if (step == 1) n = n->then_branch.get();
                else n = n->else_branch.get();
                break;
            case CmdKind::New:
            case CmdKind::Send:
            case CmdKind::Recv:
                if (step != 1)
                    throw InvalidPosition("no branch " + std::to_string(step) + " at " +
                                          pos_str(pos));
                n = n->next.get();
                break;
            case CmdKind::Nil:
                throw InvalidPosition("position past the end of the role: " + pos_str(pos));
        }
        if (!n) throw InvalidPosition("dangling position: " + pos_str(pos));
    }
    return n;
}

namespace detail {
inline void collect_positions(const CommandNode* n, Position& here, std::set<Position>& out) {
    out.insert(here);
    switch (n->kind) {
        case CmdKind::Nil: return;
        case CmdKind::Cond:
            here.push_back(1);
            collect_positions(n->then_branch.get(), here, out);
            here.back() = 2;
            collect_positions(n->else_branch.get(), here, out);
            here.pop_back();
            return;
        default:
            here.push_back(1);
            collect_positions(n->next.get(), here, out);
            here.pop_back();
    }
}
}  // namespace detail

// Exactly the addresses of all commands reachable in the body (nil included).
inline std::set<Position> positions(const Role& r) {
    std::set<Position> out;
    Position here;
    detail::collect_positions(r.body.get(), here, out);
    return out;
}

// ── Scenario ────────────────────────────────────────────────────────────────

struct RunSpec {
    std::string participant;
    std::string role_name;
    std::vector<Message> args;
};

enum class GoalKind { Complete, Reach };

struct Goal {
    GoalKind kind = GoalKind::Complete;
    std::string participant;
    Position pos;  // Reach
    std::vector<TimeConstraint> extra;
};

struct Scenario {
    std::string name;
    Topology topology;         // participants + canonical intruders + explicit intruders
    Topology search_topology;  // participants only + scenario constraints
    std::map<std::string, Role> roles;
    std::vector<RunSpec> runs;
    std::vector<Message> kp;            // full intruder key set
    std::vector<Message> explicit_kp;   // only what the file listed
    std::vector<TimeConstraint> file_constraints;
    std::vector<std::string> participant_names;
    std::vector<std::string> explicit_intruder_names;
    Goal goal;
    bool has_goal = false;
};

// ── Lexer ───────────────────────────────────────────────────────────────────

namespace detail {

enum class Tok { Ident, Number, Str, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    Rat num;
    int line = 1, col = 1;
};

inline std::vector<Token> lex(const std::string& src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    size_t i = 0;
    auto advance = [&](size_t n) {
        for (size_t k = 0; k < n; ++k) {
            if (src[i + k] == '\n') { ++line; col = 1; }
            else ++col;
        }
        i += n;
    };
    while (i < src.size()) {
        char c = src[i];
        if (isspace((unsigned char)c)) { advance(1); continue; }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (isalpha((unsigned char)c) || c == '_') {
            size_t j = i;
            while (j < src.size() && (isalnum((unsigned char)src[j]) || src[j] == '_')) ++j;
            t.kind = Tok::Ident;
            t.text = src.substr(i, j - i);
            advance(j - i);
        } else if (isdigit((unsigned char)c)) {
            size_t j = i;
            while (j < src.size() && isdigit((unsigned char)src[j])) ++j;
            if (j < src.size() && src[j] == '.' && j + 1 < src.size() &&
                isdigit((unsigned char)src[j + 1])) {
                ++j;
                while (j < src.size() && isdigit((unsigned char)src[j])) ++j;
            }
            t.kind = Tok::Number;
            t.text = src.substr(i, j - i);
            t.num = *rat_parse(t.text);
            advance(j - i);
        } else if (c == '"') {
            size_t j = i + 1;
            while (j < src.size() && src[j] != '"') ++j;
            if (j == src.size()) throw ParseError("unterminated string", line, col);
            t.kind = Tok::Str;
            t.text = src.substr(i + 1, j - i - 1);
            advance(j - i + 1);
        } else {
            t.kind = Tok::Punct;
            auto take = [&](const char* s) {
                size_t n = strlen(s);
                if (src.compare(i, n, s) == 0) {
                    t.text = s;
                    advance(n);
                    return true;
                }
                return false;
            };
            if (!take(":=:") && !take("&&") && !take(">=") && !take("<=")) {
                t.text = std::string(1, c);
                advance(1);
            }
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Tok::End;
    end.line = line;
    end.col = col;
    out.push_back(end);
    return out;
}

// ── Parser ──────────────────────────────────────────────────────────────────

struct Parser {
    std::vector<Token> toks;
    size_t at = 0;

    // identifiers that resolve to message variables while parsing a role
    std::set<std::string>* scope = nullptr;
    // declared agents while parsing scenario-level messages
    const Topology* agents = nullptr;
    bool binding_context = false;  // receive patterns bind new identifiers
    bool allow_dist = false;       // td(...) permitted (topology/goal constraints)

    const Token& peek(size_t k = 0) const { return toks[std::min(at + k, toks.size() - 1)]; }
    const Token& next() { return toks[std::min(at++, toks.size() - 1)]; }
    bool at_punct(const char* p) const { return peek().kind == Tok::Punct && peek().text == p; }
    bool at_ident(const char* w) const { return peek().kind == Tok::Ident && peek().text == w; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, peek().line, peek().col);
    }
    [[noreturn]] void fail_scope(const std::string& msg) const {
        throw ScopeError(msg, peek().line, peek().col);
    }

    void expect_punct(const char* p) {
        if (!at_punct(p)) fail(std::string("expected '") + p + "'");
        ++at;
    }
    std::string expect_ident() {
        if (peek().kind != Tok::Ident) fail("expected identifier");
        return next().text;
    }
    void expect_keyword(const char* w) {
        if (!at_ident(w)) fail(std::string("expected '") + w + "'");
        ++at;
    }

    // ── messages ─────────────────────────────────────────────────────

    Message agent_arg() {
        std::string id = expect_ident();
        if (scope && scope->count(id)) return Message::var(id);
        if (agents) {
            if (const AgentId* a = agents->find(id))
                return a->kind == AgentKind::Participant ? Message::participant(id)
                                                         : Message::intruder(id);
            fail("unknown agent: " + id);
        }
        if (scope) {
            if (binding_context) {
                scope->insert(id);
                return Message::var(id);
            }
            fail_scope("unbound identifier in key position: " + id);
        }
        return Message::participant(id);
    }

    Message message() {
        if (at_punct("[")) {
            ++at;
            std::vector<Message> items;
            items.push_back(message());
            while (at_punct(",")) {
                ++at;
                items.push_back(message());
            }
            expect_punct("]");
            return Message::tuple(std::move(items));
        }
        if (peek().kind != Tok::Ident) fail("expected message");
        std::string head = peek().text;
        auto wrapped = [&](auto make) {
            ++at;
            expect_punct("(");
            std::string id = expect_ident();
            expect_punct(")");
            return make(id);
        };
        if (peek(1).kind == Tok::Punct && peek(1).text == "(") {
            if (head == "nonce") return wrapped([](const std::string& s) { return Message::nonce(s); });
            if (head == "key") return wrapped([](const std::string& s) { return Message::symkey(s); });
            if (head == "text") return wrapped([](const std::string& s) { return Message::text(s); });
            if (head == "name") {
                ++at;
                expect_punct("(");
                std::string id = expect_ident();
                expect_punct(")");
                if (agents) {
                    const AgentId* a = agents->find(id);
                    if (!a) fail("unknown agent: " + id);
                    return a->kind == AgentKind::Participant ? Message::participant(id)
                                                             : Message::intruder(id);
                }
                return Message::participant(id);
            }
            if (head == "var") {
                ++at;
                expect_punct("(");
                std::string id = expect_ident();
                expect_punct(")");
                return resolve_var(id);
            }
            if (head == "sk" || head == "pk") {
                ++at;
                expect_punct("(");
                Message a = agent_arg();
                expect_punct(")");
                return head == "sk" ? Message::sk(a) : Message::pk(a);
            }
            if (head == "enc") {
                ++at;
                expect_punct("(");
                Message payload = message();
                expect_punct(",");
                Message key = message();
                expect_punct(")");
                return Message::enc(payload, key);
            }
            fail("unknown message constructor: " + head);
        }
        // bare identifier
        ++at;
        return resolve_var(head);
    }

    Message resolve_var(const std::string& id) {
        if (scope) {
            if (scope->count(id)) return Message::var(id);
            if (binding_context) {
                scope->insert(id);
                return Message::var(id);
            }
            fail_scope("unbound identifier: " + id);
        }
        if (agents) {
            if (const AgentId* a = agents->find(id))
                return a->kind == AgentKind::Participant ? Message::participant(id)
                                                         : Message::intruder(id);
            fail("unknown agent: " + id);
        }
        return Message::var(id);
    }

    // ── time expressions ─────────────────────────────────────────────

    TimeExpr time_factor() {
        if (at_punct("(")) {
            ++at;
            TimeExpr e = time_expr();
            expect_punct(")");
            return e;
        }
        if (at_punct("-")) {
            ++at;
            return TimeExpr::sub(TimeExpr::num(0), time_factor());
        }
        if (peek().kind == Tok::Number) return TimeExpr::num(next().num);
        if (peek().kind != Tok::Ident) fail("expected time expression");
        std::string head = next().text;
        if (head == "cur") return TimeExpr::cur();
        if (head == "floor" || head == "ceil") {
            expect_punct("(");
            TimeExpr e = time_expr();
            expect_punct(")");
            return head == "floor" ? TimeExpr::floor(e) : TimeExpr::ceil(e);
        }
        if (head == "td") {
            if (!allow_dist) fail("td(...) is only allowed in topology and goal constraints");
            expect_punct("(");
            std::string a = expect_ident();
            expect_punct(",");
            std::string b = expect_ident();
            expect_punct(")");
            if (agents) {
                if (!agents->find(a)) fail("unknown agent: " + a);
                if (!agents->find(b)) fail("unknown agent: " + b);
            }
            return TimeExpr::dist(a, b);
        }
        return TimeExpr::var(head);
    }

    TimeExpr time_term() {
        TimeExpr e = time_factor();
        while (at_punct("*") || at_punct("/")) {
            bool mul = peek().text == "*";
            const Token& op = next();
            TimeExpr rhs = time_factor();
            try {
                e = mul ? TimeExpr::mul(e, rhs) : TimeExpr::div(e, rhs);
            } catch (const std::invalid_argument& err) {
                throw ParseError(err.what(), op.line, op.col);
            }
        }
        return e;
    }

    TimeExpr time_expr() {
        TimeExpr e = time_term();
        while (at_punct("+") || at_punct("-")) {
            bool add = peek().text == "+";
            ++at;
            TimeExpr rhs = time_term();
            e = add ? TimeExpr::add(e, rhs) : TimeExpr::sub(e, rhs);
        }
        return e;
    }

    std::optional<TimeRel> peek_rel() const {
        if (peek().kind != Tok::Punct) return std::nullopt;
        const std::string& p = peek().text;
        if (p == "=") return TimeRel::Eq;
        if (p == ">=") return TimeRel::Ge;
        if (p == ">") return TimeRel::Gt;
        if (p == "<") return TimeRel::Lt;
        if (p == "<=") return TimeRel::Le;
        return std::nullopt;
    }

    TimeConstraint time_constraint() {
        TimeExpr l = time_expr();
        auto rel = peek_rel();
        if (!rel) fail("expected relation (=, >=, >, <, <=)");
        ++at;
        TimeExpr r = time_expr();
        return {l, *rel, r};
    }

    // ── boolean expressions ──────────────────────────────────────────

    // True when a `:=:` belongs to the atom starting here, scanning ahead
    // without crossing the atom boundary.
    bool unif_test_ahead() const {
        int depth = 0;
        for (size_t k = at; k < toks.size(); ++k) {
            const Token& t = toks[k];
            if (t.kind == Tok::End) return false;
            if (t.kind != Tok::Punct) continue;
            if (t.text == "(" || t.text == "[") ++depth;
            else if (t.text == ")" || t.text == "]") {
                if (--depth < 0) return false;
            } else if (depth == 0) {
                if (t.text == ":=:") return true;
                if (t.text == "&&" || t.text == "{" || t.text == ";" || t.text == "#" ||
                    t.text == "=" || t.text == "<" || t.text == "<=" || t.text == ">" ||
                    t.text == ">=")
                    return false;
            }
        }
        return false;
    }

    BoolExpr bool_atom() {
        if (at_punct("!")) {
            ++at;
            return BoolExpr::negate(bool_atom());
        }
        if (unif_test_ahead()) {
            Message m1 = message();
            expect_punct(":=:");
            Message m2 = message();
            return BoolExpr::unif_test(m1, m2);
        }
        // parenthesized boolean or a time comparison; a relation symbol ahead
        // of any `&&`/`{` marks the comparison
        if (at_punct("(")) {
            size_t save = at;
            try {
                return BoolExpr::time_cmp(time_constraint());
            } catch (const ParseError&) {
                at = save;
            }
            ++at;
            BoolExpr b = bool_expr();
            expect_punct(")");
            return b;
        }
        return BoolExpr::time_cmp(time_constraint());
    }

    BoolExpr bool_expr() {
        BoolExpr b = bool_atom();
        while (at_punct("&&")) {
            ++at;
            b = BoolExpr::conj(b, bool_atom());
        }
        return b;
    }

    // ── commands ─────────────────────────────────────────────────────

    CommandPtr command_seq() {
        if (at_punct("}") || peek().kind == Tok::End) return nil_command();
        auto n = std::make_shared<CommandNode>();
        if (at_ident("new")) {
            ++at;
            n->kind = CmdKind::New;
            n->new_var = expect_ident();
            if (scope) scope->insert(n->new_var);
            expect_punct(";");
            n->next = command_seq();
            return n;
        }
        if (at_ident("send") || at_ident("recv")) {
            bool send = peek().text == "send";
            ++at;
            n->kind = send ? CmdKind::Send : CmdKind::Recv;
            binding_context = !send;
            n->msg = message();
            binding_context = false;
            if (at_punct("#")) {
                ++at;
                n->annotation = time_constraint();
            }
            expect_punct(";");
            n->next = command_seq();
            return n;
        }
        if (at_ident("if")) {
            ++at;
            n->kind = CmdKind::Cond;
            n->guard = bool_expr();
            if (at_punct("#")) {
                ++at;
                n->annotation = time_constraint();
            }
            expect_punct("{");
            std::set<std::string> then_scope = scope ? *scope : std::set<std::string>{};
            std::set<std::string>* outer = scope;
            if (scope) scope = &then_scope;
            n->then_branch = command_seq();
            expect_punct("}");
            expect_keyword("else");
            expect_punct("{");
            std::set<std::string> else_scope = outer ? *outer : std::set<std::string>{};
            if (outer) scope = &else_scope;
            n->else_branch = command_seq();
            expect_punct("}");
            scope = outer;
            if (!at_punct("}") && peek().kind != Tok::End)
                fail("a conditional terminates its block; no command may follow it");
            return n;
        }
        fail("expected command (new, send, recv, if)");
    }

    Role role_def() {
        expect_keyword("role");
        Role r;
        r.name = expect_ident();
        expect_punct("(");
        if (!at_punct(")")) {
            r.params.push_back(expect_ident());
            while (at_punct(",")) {
                ++at;
                r.params.push_back(expect_ident());
            }
        }
        expect_punct(")");
        expect_punct("{");
        std::set<std::string> sc(r.params.begin(), r.params.end());
        scope = &sc;
        r.body = command_seq();
        scope = nullptr;
        expect_punct("}");
        return r;
    }
};

}  // namespace detail

// Accepts either a full `role name(params) { ... }` definition or a bare
// command sequence (anonymous role without parameters).
inline Role parse_role(const std::string& text) {
    detail::Parser p{detail::lex(text)};
    if (p.at_ident("role")) {
        Role r = p.role_def();
        if (p.peek().kind != detail::Tok::End) p.fail("trailing input after role");
        return r;
    }
    Role r;
    std::set<std::string> sc;
    p.scope = &sc;
    r.body = p.command_seq();
    if (p.peek().kind != detail::Tok::End) p.fail("trailing input after commands");
    return r;
}

// ── Scenario parsing ────────────────────────────────────────────────────────

inline Scenario parse_scenario(const std::string& text) {
    detail::Parser p{detail::lex(text)};
    Scenario sc;
    bool have_scenario = false;

    while (p.peek().kind != detail::Tok::End) {
        if (p.at_ident("role")) {
            Role r = p.role_def();
            if (sc.roles.count(r.name))
                throw ParseError("duplicate role: " + r.name, p.peek().line, p.peek().col);
            sc.roles[r.name] = std::move(r);
            continue;
        }
        p.expect_keyword("scenario");
        if (have_scenario) p.fail("multiple scenario blocks");
        have_scenario = true;
        sc.name = p.expect_ident();
        p.expect_punct("{");

        std::vector<std::string> intruders;
        std::vector<std::pair<size_t, size_t>> deferred_constraints;  // token spans
        struct DeferredKp { size_t at; };
        std::vector<size_t> deferred_kp, deferred_runs, deferred_goal;

        // first pass over the block: declarations now, the rest deferred so
        // agent names are all known when constraints and messages resolve
        auto skip_to_semi = [&] {
            int depth = 0;
            while (p.peek().kind != detail::Tok::End) {
                if (p.at_punct("{")) ++depth;
                if (p.at_punct("}")) {
                    if (depth == 0) break;
                    --depth;
                }
                bool semi = p.at_punct(";") && depth == 0;
                ++p.at;
                if (semi) break;
            }
        };

        while (!p.at_punct("}")) {
            if (p.at_ident("participants")) {
                ++p.at;
                sc.participant_names.push_back(p.expect_ident());
                while (p.at_punct(",")) {
                    ++p.at;
                    sc.participant_names.push_back(p.expect_ident());
                }
                p.expect_punct(";");
            } else if (p.at_ident("intruders")) {
                ++p.at;
                intruders.push_back(p.expect_ident());
                while (p.at_punct(",")) {
                    ++p.at;
                    intruders.push_back(p.expect_ident());
                }
                p.expect_punct(";");
            } else if (p.at_ident("topology")) {
                ++p.at;
                p.expect_punct("{");
                while (!p.at_punct("}")) {
                    size_t start = p.at;
                    skip_to_semi();
                    deferred_constraints.push_back({start, p.at});
                }
                p.expect_punct("}");
            } else if (p.at_ident("kp")) {
                deferred_kp.push_back(p.at);
                ++p.at;
                skip_to_semi();
            } else if (p.at_ident("run")) {
                deferred_runs.push_back(p.at);
                ++p.at;
                skip_to_semi();
            } else if (p.at_ident("goal")) {
                deferred_goal.push_back(p.at);
                ++p.at;
                skip_to_semi();
            } else {
                p.fail("expected scenario item");
            }
        }
        p.expect_punct("}");
        size_t block_end = p.at;

        // assemble topology: participants, canonical intruders, explicit ones
        Topology base;
        for (const auto& name : sc.participant_names)
            base.add_agent({name, AgentKind::Participant});
        sc.topology = canonical_extension(base);
        for (const auto& name : intruders) {
            sc.topology.add_agent({name, AgentKind::Intruder});
            sc.explicit_intruder_names.push_back(name);
        }
        sc.search_topology = base;

        auto subparse = [&](size_t from, size_t, auto&& fn) {
            size_t save = p.at;
            p.at = from;
            p.agents = &sc.topology;
            fn();
            p.agents = nullptr;
            p.at = save;
        };

        for (auto [from, to] : deferred_constraints) {
            subparse(from, to, [&] {
                p.allow_dist = true;
                TimeConstraint c = p.time_constraint();
                p.allow_dist = false;
                if (contains_cur(c)) p.fail("cur is not allowed in topology constraints");
                p.expect_punct(";");
                sc.file_constraints.push_back(c);
            });
        }
        for (size_t pos : deferred_kp) {
            subparse(pos, block_end, [&] {
                p.expect_keyword("kp");
                sc.explicit_kp.push_back(p.message());
                while (p.at_punct(",")) {
                    ++p.at;
                    sc.explicit_kp.push_back(p.message());
                }
                p.expect_punct(";");
            });
        }
        for (size_t pos : deferred_runs) {
            subparse(pos, block_end, [&] {
                p.expect_keyword("run");
                RunSpec run;
                run.participant = p.expect_ident();
                p.expect_punct(":");
                run.role_name = p.expect_ident();
                p.expect_punct("(");
                if (!p.at_punct(")")) {
                    run.args.push_back(p.message());
                    while (p.at_punct(",")) {
                        ++p.at;
                        run.args.push_back(p.message());
                    }
                }
                p.expect_punct(")");
                p.expect_punct(";");
                sc.runs.push_back(std::move(run));
            });
        }
        for (size_t pos : deferred_goal) {
            subparse(pos, block_end, [&] {
                p.expect_keyword("goal");
                if (sc.has_goal) p.fail("multiple goals");
                sc.has_goal = true;
                if (p.at_ident("complete")) {
                    ++p.at;
                    sc.goal.kind = GoalKind::Complete;
                    p.expect_punct("(");
                    sc.goal.participant = p.expect_ident();
                    p.expect_punct(")");
                } else if (p.at_ident("reach")) {
                    ++p.at;
                    sc.goal.kind = GoalKind::Reach;
                    p.expect_punct("(");
                    sc.goal.participant = p.expect_ident();
                    p.expect_punct(",");
                    if (p.peek().kind != detail::Tok::Str) p.fail("expected quoted position");
                    auto parsed = pos_parse(p.next().text);
                    if (!parsed) p.fail("malformed position");
                    sc.goal.pos = *parsed;
                    p.expect_punct(")");
                } else {
                    p.fail("expected goal kind (complete, reach)");
                }
                if (p.at_ident("with")) {
                    ++p.at;
                    p.allow_dist = true;
                    sc.goal.extra.push_back(p.time_constraint());
                    while (p.at_punct(",")) {
                        ++p.at;
                        sc.goal.extra.push_back(p.time_constraint());
                    }
                    p.allow_dist = false;
                }
                p.expect_punct(";");
            });
        }
    }
    if (!have_scenario)
        throw ParseError("no scenario block", 1, 1);

    // validation
    for (const auto& run : sc.runs) {
        const AgentId* a = sc.topology.find(run.participant);
        if (!a || a->kind != AgentKind::Participant)
            throw UnknownRole("run references unknown participant: " + run.participant);
        if (!sc.roles.count(run.role_name)) throw UnknownRole(run.role_name);
    }
    if (sc.has_goal) {
        const AgentId* a = sc.topology.find(sc.goal.participant);
        if (!a || a->kind != AgentKind::Participant)
            throw UnknownRole("goal references unknown participant: " + sc.goal.participant);
        if (sc.goal.kind == GoalKind::Reach) {
            bool ok = false;
            for (const auto& run : sc.runs) {
                if (run.participant != sc.goal.participant) continue;
                auto ps = positions(sc.roles.at(run.role_name));
                if (ps.count(sc.goal.pos)) ok = true;
            }
            if (!ok) throw InvalidPosition("goal position not reachable in any run: " +
                                           pos_str(sc.goal.pos));
        }
    }

    for (const auto& c : sc.file_constraints) {
        sc.topology.add_constraint(c);
        sc.search_topology.add_constraint(c);
    }

    // K_P: all public keys, intruder private keys and names, plus the
    // scenario's explicit entries (shared/lost keys, public names, ...).
    for (const auto& a : sc.topology.agents())
        sc.kp.push_back(Message::pk(a.kind == AgentKind::Participant
                                        ? Message::participant(a.name)
                                        : Message::intruder(a.name)));
    for (const auto& a : sc.topology.agents()) {
        if (a.kind != AgentKind::Intruder) continue;
        sc.kp.push_back(Message::sk(Message::intruder(a.name)));
        sc.kp.push_back(Message::intruder(a.name));
    }
    for (const auto& m : sc.explicit_kp) sc.kp.push_back(m);

    return sc;
}

// ── Printing ────────────────────────────────────────────────────────────────

namespace detail {

// role bodies write variables bare; the scope rules rebind them on reparse
inline void print_msg_role(std::ostream& os, const Message& m) {
    switch (m.kind()) {
        case MsgKind::Var: os << m.name(); break;
        case MsgKind::SK:
        case MsgKind::PK:
            os << (m.kind() == MsgKind::SK ? "sk(" : "pk(");
            if (m.agent().kind() == MsgKind::Var || m.agent().kind() == MsgKind::Const)
                os << m.agent().name();
            else
                print_msg_role(os, m.agent());
            os << ")";
            break;
        case MsgKind::Enc:
            os << "enc(";
            print_msg_role(os, m.payload());
            os << ", ";
            print_msg_role(os, m.key());
            os << ")";
            break;
        case MsgKind::Tuple: {
            os << "[";
            bool first = true;
            for (const auto& it : m.items()) {
                if (!first) os << ", ";
                first = false;
                print_msg_role(os, it);
            }
            os << "]";
            break;
        }
        default: m.print(os);
    }
}

inline void print_bool(std::ostream& os, const BoolExpr& b) {
    switch (b.kind()) {
        case BoolKind::UnifTest:
            print_msg_role(os, b.lhs_msg());
            os << " :=: ";
            print_msg_role(os, b.rhs_msg());
            break;
        case BoolKind::TimeCmp: os << b.cmp().str(); break;
        case BoolKind::And:
            os << "(";
            print_bool(os, b.lhs());
            os << ") && (";
            print_bool(os, b.rhs());
            os << ")";
            break;
        case BoolKind::Not:
            os << "!(";
            print_bool(os, b.lhs());
            os << ")";
            break;
    }
}

inline void print_commands(std::ostream& os, const CommandNode* n, int indent) {
    std::string pad(indent * 2, ' ');
    while (n && n->kind != CmdKind::Nil) {
        switch (n->kind) {
            case CmdKind::New:
                os << pad << "new " << n->new_var << ";\n";
                n = n->next.get();
                break;
            case CmdKind::Send:
            case CmdKind::Recv: {
                os << pad << (n->kind == CmdKind::Send ? "send " : "recv ");
                print_msg_role(os, n->msg);
                if (n->annotation) os << " # " << n->annotation->str();
                os << ";\n";
                n = n->next.get();
                break;
            }
            case CmdKind::Cond: {
                os << pad << "if ";
                print_bool(os, n->guard);
                if (n->annotation) os << " # " << n->annotation->str();
                os << " {\n";
                print_commands(os, n->then_branch.get(), indent + 1);
                os << pad << "} else {\n";
                print_commands(os, n->else_branch.get(), indent + 1);
                os << pad << "}\n";
                return;  // a conditional ends the block
            }
            default: return;
        }
    }
}

}  // namespace detail

inline std::string print_role(const Role& r) {
    std::ostringstream os;
    os << "role " << (r.name.empty() ? "anonymous" : r.name) << "(";
    for (size_t i = 0; i < r.params.size(); ++i) {
        if (i) os << ", ";
        os << r.params[i];
    }
    os << ") {\n";
    detail::print_commands(os, r.body.get(), 1);
    os << "}\n";
    return os.str();
}

inline std::string print_scenario(const Scenario& sc) {
    std::ostringstream os;
    for (const auto& [name, role] : sc.roles) os << print_role(role) << "\n";
    os << "scenario " << sc.name << " {\n";
    os << "  participants ";
    for (size_t i = 0; i < sc.participant_names.size(); ++i)
        os << (i ? ", " : "") << sc.participant_names[i];
    os << ";\n";
    if (!sc.explicit_intruder_names.empty()) {
        os << "  intruders ";
        for (size_t i = 0; i < sc.explicit_intruder_names.size(); ++i)
            os << (i ? ", " : "") << sc.explicit_intruder_names[i];
        os << ";\n";
    }
    if (!sc.file_constraints.empty()) {
        os << "  topology {\n";
        for (const auto& c : sc.file_constraints) os << "    " << c.str() << ";\n";
        os << "  }\n";
    }
    if (!sc.explicit_kp.empty()) {
        os << "  kp ";
        for (size_t i = 0; i < sc.explicit_kp.size(); ++i) {
            if (i) os << ", ";
            os << sc.explicit_kp[i].str();
        }
        os << ";\n";
    }
    for (const auto& run : sc.runs) {
        os << "  run " << run.participant << ": " << run.role_name << "(";
        for (size_t i = 0; i < run.args.size(); ++i) {
            if (i) os << ", ";
            os << run.args[i].str();
        }
        os << ");\n";
    }
    if (sc.has_goal) {
        os << "  goal ";
        if (sc.goal.kind == GoalKind::Complete)
            os << "complete(" << sc.goal.participant << ")";
        else
            os << "reach(" << sc.goal.participant << ", \"" << pos_str(sc.goal.pos) << "\")";
        for (size_t i = 0; i < sc.goal.extra.size(); ++i)
            os << (i ? ", " : " with ") << sc.goal.extra[i].str();
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace cpsp
