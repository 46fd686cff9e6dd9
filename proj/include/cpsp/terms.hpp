// ============================================================================
// cpsp/terms.hpp — message algebra: terms, substitutions, unification
// ============================================================================
//
// Messages are immutable shared DAG nodes with value-semantics wrappers.
// Construction normalizes singleton tuples to their element, so [m] and m
// are one and the same term. Unification is purely syntactic (no equational
// theory); tuples unify only with tuples of the same length.
//
// Substitutions returned by unify() are idempotent: every binding is fully
// resolved against the others, and the occurs check keeps them acyclic.
//
// ============================================================================

#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpsp {

enum class ConstKind { Nonce, SymKey, Participant, Intruder, Text };

enum class MsgKind { Const, Var, SK, PK, Enc, Tuple };

class Message;
struct MsgNode;
using MsgPtr = std::shared_ptr<const MsgNode>;

struct MsgNode {
    MsgKind kind;
    std::string name;             // Const, Var
    ConstKind ckind = ConstKind::Nonce;
    std::vector<Message> args;    // SK/PK: 1, Enc: payload+key, Tuple: >= 2
};

class Message {
public:
    Message() = default;

    static Message constant(std::string name, ConstKind k) {
        auto n = std::make_shared<MsgNode>();
        n->kind = MsgKind::Const;
        n->name = std::move(name);
        n->ckind = k;
        return Message(std::move(n));
    }
    static Message nonce(std::string n) { return constant(std::move(n), ConstKind::Nonce); }
    static Message symkey(std::string n) { return constant(std::move(n), ConstKind::SymKey); }
    static Message participant(std::string n) { return constant(std::move(n), ConstKind::Participant); }
    static Message intruder(std::string n) { return constant(std::move(n), ConstKind::Intruder); }
    static Message text(std::string n) { return constant(std::move(n), ConstKind::Text); }

    static Message var(std::string name) {
        auto n = std::make_shared<MsgNode>();
        n->kind = MsgKind::Var;
        n->name = std::move(name);
        return Message(std::move(n));
    }

    static Message sk(Message agent) { return unary(MsgKind::SK, std::move(agent)); }
    static Message pk(Message agent) { return unary(MsgKind::PK, std::move(agent)); }

    static Message enc(Message payload, Message key) {
        auto n = std::make_shared<MsgNode>();
        n->kind = MsgKind::Enc;
        n->args = {std::move(payload), std::move(key)};
        return Message(std::move(n));
    }

    // [m] is identified with m; length-0 tuples are rejected.
    static Message tuple(std::vector<Message> items) {
        if (items.empty()) throw std::invalid_argument("empty tuple");
        if (items.size() == 1) return items[0];
        auto n = std::make_shared<MsgNode>();
        n->kind = MsgKind::Tuple;
        n->args = std::move(items);
        return Message(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    MsgKind kind() const { return node_->kind; }
    const std::string& name() const { return node_->name; }
    ConstKind const_kind() const { return node_->ckind; }
    const std::vector<Message>& items() const { return node_->args; }
    const Message& agent() const { return node_->args[0]; }    // SK/PK
    const Message& payload() const { return node_->args[0]; }  // Enc
    const Message& key() const { return node_->args[1]; }      // Enc

    bool is_const(ConstKind k) const {
        return node_->kind == MsgKind::Const && node_->ckind == k;
    }
    bool is_var() const { return node_->kind == MsgKind::Var; }

    friend int compare(const Message& a, const Message& b) {
        if (a.node_ == b.node_) return 0;
        if (a.node_->kind != b.node_->kind)
            return a.node_->kind < b.node_->kind ? -1 : 1;
        switch (a.node_->kind) {
            case MsgKind::Const:
                if (a.node_->ckind != b.node_->ckind)
                    return a.node_->ckind < b.node_->ckind ? -1 : 1;
                [[fallthrough]];
            case MsgKind::Var:
                return a.node_->name.compare(b.node_->name) < 0   ? -1
                       : a.node_->name == b.node_->name ? 0 : 1;
            default: {
                if (a.node_->args.size() != b.node_->args.size())
                    return a.node_->args.size() < b.node_->args.size() ? -1 : 1;
                for (size_t i = 0; i < a.node_->args.size(); ++i) {
                    int c = compare(a.node_->args[i], b.node_->args[i]);
                    if (c != 0) return c;
                }
                return 0;
            }
        }
    }

    bool operator==(const Message& o) const { return compare(*this, o) == 0; }
    bool operator!=(const Message& o) const { return compare(*this, o) != 0; }
    bool operator<(const Message& o) const { return compare(*this, o) < 0; }

    std::string str() const {
        std::ostringstream os;
        print(os);
        return os.str();
    }

    void print(std::ostream& os) const {
        const MsgNode& n = *node_;
        switch (n.kind) {
            case MsgKind::Const:
                switch (n.ckind) {
                    case ConstKind::Nonce: os << "nonce(" << n.name << ")"; break;
                    case ConstKind::SymKey: os << "key(" << n.name << ")"; break;
                    case ConstKind::Participant:
                    case ConstKind::Intruder: os << "name(" << n.name << ")"; break;
                    case ConstKind::Text: os << "text(" << n.name << ")"; break;
                }
                break;
            case MsgKind::Var: os << "var(" << n.name << ")"; break;
            case MsgKind::SK:
            case MsgKind::PK:
                os << (n.kind == MsgKind::SK ? "sk(" : "pk(");
                // agent position is an identifier in the surface syntax
                if (n.args[0].kind() == MsgKind::Const || n.args[0].kind() == MsgKind::Var)
                    os << n.args[0].name();
                else
                    n.args[0].print(os);
                os << ")";
                break;
            case MsgKind::Enc:
                os << "enc(";
                n.args[0].print(os);
                os << ", ";
                n.args[1].print(os);
                os << ")";
                break;
            case MsgKind::Tuple:
                os << "[";
                for (size_t i = 0; i < n.args.size(); ++i) {
                    if (i) os << ", ";
                    n.args[i].print(os);
                }
                os << "]";
                break;
        }
    }

private:
    explicit Message(MsgPtr n) : node_(std::move(n)) {}
    static Message unary(MsgKind k, Message arg) {
        auto n = std::make_shared<MsgNode>();
        n->kind = k;
        n->args = {std::move(arg)};
        return Message(std::move(n));
    }
    MsgPtr node_;
};

inline std::ostream& operator<<(std::ostream& os, const Message& m) {
    m.print(os);
    return os;
}

// ── Substitution ────────────────────────────────────────────────────────────

class Substitution {
public:
    Substitution() = default;

    bool empty() const { return map_.empty(); }
    size_t size() const { return map_.size(); }

    const Message* lookup(const std::string& var) const {
        auto it = map_.find(var);
        return it == map_.end() ? nullptr : &it->second;
    }

    // Raw insertion; unify() is responsible for keeping the whole map
    // idempotent before it hands a Substitution out.
    void bind(std::string var, Message m) { map_.insert_or_assign(std::move(var), std::move(m)); }

    auto begin() const { return map_.begin(); }
    auto end() const { return map_.end(); }

    bool operator==(const Substitution& o) const { return map_ == o.map_; }

private:
    std::map<std::string, Message> map_;
};

// Homomorphic application; unbound variables are left in place. Bindings are
// followed recursively, which terminates for occurs-checked substitutions.
inline Message apply(const Substitution& s, const Message& m) {
    switch (m.kind()) {
        case MsgKind::Const: return m;
        case MsgKind::Var: {
            const Message* b = s.lookup(m.name());
            return b ? apply(s, *b) : m;
        }
        case MsgKind::SK: return Message::sk(apply(s, m.agent()));
        case MsgKind::PK: return Message::pk(apply(s, m.agent()));
        case MsgKind::Enc: return Message::enc(apply(s, m.payload()), apply(s, m.key()));
        case MsgKind::Tuple: {
            std::vector<Message> out;
            out.reserve(m.items().size());
            for (const auto& it : m.items()) out.push_back(apply(s, it));
            return Message::tuple(std::move(out));
        }
    }
    return m;
}

inline void collect_vars(const Message& m, std::set<std::string>& out) {
    switch (m.kind()) {
        case MsgKind::Const: return;
        case MsgKind::Var: out.insert(m.name()); return;
        default:
            for (const auto& a : m.items()) collect_vars(a, out);
    }
}

// Exact set of variable names occurring in m.
inline std::set<std::string> vars(const Message& m) {
    std::set<std::string> out;
    collect_vars(m, out);
    return out;
}

inline bool is_ground(const Message& m) { return vars(m).empty(); }

namespace detail {

inline Message walk(const Substitution& s, Message m) {
    while (m.is_var()) {
        const Message* b = s.lookup(m.name());
        if (!b) return m;
        m = *b;
    }
    return m;
}

inline bool occurs(const std::string& v, const Message& m, const Substitution& s) {
    Message t = walk(s, m);
    switch (t.kind()) {
        case MsgKind::Const: return false;
        case MsgKind::Var: return t.name() == v;
        default:
            for (const auto& a : t.items())
                if (occurs(v, a, s)) return true;
            return false;
    }
}

inline bool unify_into(const Message& a0, const Message& b0, Substitution& s) {
    Message a = walk(s, a0);
    Message b = walk(s, b0);
    if (a.is_var() && b.is_var() && a.name() == b.name()) return true;
    if (a.is_var()) {
        if (occurs(a.name(), b, s)) return false;
        s.bind(a.name(), b);
        return true;
    }
    if (b.is_var()) {
        if (occurs(b.name(), a, s)) return false;
        s.bind(b.name(), a);
        return true;
    }
    if (a.kind() != b.kind()) return false;
    switch (a.kind()) {
        case MsgKind::Const:
            return a.const_kind() == b.const_kind() && a.name() == b.name();
        case MsgKind::SK:
        case MsgKind::PK:
            return unify_into(a.agent(), b.agent(), s);
        case MsgKind::Enc:
            return unify_into(a.payload(), b.payload(), s) &&
                   unify_into(a.key(), b.key(), s);
        case MsgKind::Tuple: {
            if (a.items().size() != b.items().size()) return false;
            for (size_t i = 0; i < a.items().size(); ++i)
                if (!unify_into(a.items()[i], b.items()[i], s)) return false;
            return true;
        }
        default: return false;
    }
}

}  // namespace detail

// Most general unifier extending `base`, or nullopt if none exists.
inline std::optional<Substitution> unify(const Message& a, const Message& b,
                                         const Substitution& base = {}) {
    Substitution s = base;
    if (!detail::unify_into(a, b, s)) return std::nullopt;
    // Resolve the triangular bindings into an idempotent map.
    Substitution out;
    for (const auto& [v, t] : s) out.bind(v, apply(s, t));
    return out;
}

inline bool unifiable(const Message& a, const Message& b, const Substitution& base = {}) {
    return unify(a, b, base).has_value();
}

// pk(p) <-> sk(p); a symmetric key is its own inverse.
// Throws on anything that cannot sit in a key position.
inline Message inverse_key(const Message& k) {
    switch (k.kind()) {
        case MsgKind::PK: return Message::sk(k.agent());
        case MsgKind::SK: return Message::pk(k.agent());
        case MsgKind::Const:
            if (k.const_kind() == ConstKind::SymKey) return k;
            break;
        default: break;
    }
    throw std::invalid_argument("inverse_key: not a key: " + k.str());
}

inline bool is_key_shape(const Message& k) {
    return k.kind() == MsgKind::PK || k.kind() == MsgKind::SK ||
           k.is_const(ConstKind::SymKey);
}

// ── Fresh names ─────────────────────────────────────────────────────────────

// Monotone counter for fresh constants and time variables; names carry the
// originating strand so origination holds by construction.
class FreshNames {
public:
    std::string fresh(const std::string& base, int strand_id) {
        return base + ".s" + std::to_string(strand_id) + "." +
               std::to_string(counter_.fetch_add(1));
    }
    std::string fresh_tvar() { return "tv" + std::to_string(tv_counter_.fetch_add(1)); }
    std::string fresh_text() { return "itext" + std::to_string(counter_.fetch_add(1)); }

private:
    std::atomic<uint64_t> counter_{1};
    std::atomic<uint64_t> tv_counter_{1};
};

}  // namespace cpsp
