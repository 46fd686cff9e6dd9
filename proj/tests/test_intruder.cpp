#include <catch2/catch_amalgamated.hpp>

#include <cpsp/intruder.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <random>

using namespace cpsp;
using namespace cpsp::testing;

namespace {

const AgentId kP1{"p1", AgentKind::Participant};
const AgentId kP2{"p2", AgentKind::Participant};
const AgentId kP3{"p3", AgentKind::Participant};

Message nonce(const char* n) { return Message::nonce(n); }

DeducibilityConstraint dc_of(std::vector<KnowledgeEntry> pool, Message target,
                             const AgentId& to, const std::string& tvar) {
    return {std::move(pool), std::move(target), to, tvar, NodeId{}};
}

std::set<std::string> timing_strings(const DeriveSolution& s) {
    std::set<std::string> out;
    for (const auto& c : s.timing) out.insert(c.str());
    return out;
}

}  // namespace

TEST_CASE("composition from two sent messages and a known key", "[intruder]") {
    FreshNames fresh;
    std::vector<KnowledgeEntry> pool{
        sent_entry(nonce("c1"), kP1, "tv1", {0, {}}),
        sent_entry(nonce("c2"), kP2, "tv2", {1, {}}),
        kp_entry(Message::symkey("k")),
    };
    auto target = Message::enc(Message::tuple({nonce("c1"), nonce("c2")}), Message::symkey("k"));
    auto sols = derive(dc_of(pool, target, kP3, "tv"), {}, fresh);
    REQUIRE_FALSE(sols.empty());
    bool found = false;
    for (const auto& s : sols) {
        if (timing_strings(s) == std::set<std::string>{"tv >= tv1 + td(p1, p3)",
                                                       "tv >= tv2 + td(p2, p3)"}) {
            found = true;
            std::set<Derivation::Rule> rules;
            s.derivation.rules_used(rules);
            REQUIRE(rules.count(Derivation::Rule::Encrypt));
            REQUIRE(rules.count(Derivation::Rule::Key));
        }
    }
    REQUIRE(found);
}

TEST_CASE("forwarding a sent message carries one hop obligation", "[intruder]") {
    FreshNames fresh;
    std::vector<KnowledgeEntry> pool{sent_entry(nonce("m"), kP1, "tv1", {0, {}})};
    auto sols = derive(dc_of(pool, nonce("m"), kP2, "tv"), {}, fresh);
    REQUIRE_FALSE(sols.empty());
    REQUIRE(sols[0].derivation.rule == Derivation::Rule::Forward);
    REQUIRE(timing_strings(sols[0]) == std::set<std::string>{"tv >= tv1 + td(p1, p2)"});
}

TEST_CASE("private keys are underivable", "[intruder]") {
    FreshNames fresh;
    std::vector<KnowledgeEntry> pool{kp_entry(Message::pk(Message::participant("p")))};
    auto sols = derive(dc_of(pool, Message::sk(Message::participant("p")), kP2, "tv"), {}, fresh);
    REQUIRE(sols.empty());
}

TEST_CASE("text constants are free and timeless", "[intruder]") {
    FreshNames fresh;
    auto sols = derive(dc_of({}, Message::text("hello"), kP2, "tv"), {}, fresh);
    REQUIRE_FALSE(sols.empty());
    REQUIRE(sols[0].derivation.rule == Derivation::Rule::Text);
    REQUIRE(sols[0].timing.empty());
}

TEST_CASE("variable targets bind fresh intruder texts first", "[intruder]") {
    FreshNames fresh;
    std::vector<KnowledgeEntry> pool{sent_entry(nonce("c"), kP1, "tv1", {0, {}})};
    auto sols = derive(dc_of(pool, Message::var("x"), kP2, "tv"), {}, fresh);
    REQUIRE(sols.size() >= 2);
    REQUIRE(sols[0].derivation.rule == Derivation::Rule::Text);
    REQUIRE(sols[0].timing.empty());
    REQUIRE(sols[0].subst.lookup("x") != nullptr);
    // the pool match comes later and pays the hop
    bool pool_match = false;
    for (const auto& s : sols)
        if (s.subst.lookup("x") && *s.subst.lookup("x") == nonce("c") && !s.timing.empty())
            pool_match = true;
    REQUIRE(pool_match);
}

TEST_CASE("closure decomposes tuples and decrypts with available keys", "[intruder]") {
    auto pair_entry = sent_entry(Message::tuple({nonce("c1"), nonce("c2")}), kP1, "tv1", {0, {}});
    auto closure = decompose_closure({pair_entry}, {});
    std::set<std::string> msgs;
    for (const auto& e : closure) msgs.insert(e.msg.str());
    REQUIRE(msgs.count("nonce(c1)"));
    REQUIRE(msgs.count("nonce(c2)"));
    for (const auto& e : closure) REQUIRE(e.prov == pair_entry.prov);

    auto enc_entry = sent_entry(Message::enc(nonce("c"), Message::symkey("k")), kP1, "tv1", {0, {}});
    auto closure2 = decompose_closure({enc_entry, kp_entry(Message::symkey("k"))}, {});
    bool has_c = false;
    for (const auto& e : closure2)
        if (e.msg == nonce("c")) has_c = true;
    REQUIRE(has_c);

    auto sealed = sent_entry(Message::enc(nonce("c"), Message::pk(Message::participant("q"))),
                             kP1, "tv1", {0, {}});
    auto closure3 = decompose_closure({sealed}, {});
    REQUIRE(closure3.size() == 1);
}

TEST_CASE("derive matches the exhaustive closure oracle", "[intruder][property]") {
    std::mt19937_64 rng(2026);
    FreshNames fresh;

    std::vector<Message> atoms = {
        nonce("c0"), nonce("c1"), nonce("c2"),
        Message::symkey("k0"), Message::symkey("k1"),
        Message::pk(Message::participant("p0")), Message::sk(Message::participant("p0")),
        Message::pk(Message::participant("p1")), Message::sk(Message::participant("p1")),
        Message::text("t0"), Message::participant("p0"),
    };
    std::function<Message(int)> rand_ground = [&](int depth) -> Message {
        int pick = (int)(rng() % (depth <= 0 ? 1 : 3));
        switch (pick) {
            case 0: return atoms[rng() % atoms.size()];
            case 1: {
                Message key = atoms[3 + rng() % 6];  // keys only
                return Message::enc(rand_ground(depth - 1), key);
            }
            default: {
                std::vector<Message> items;
                int n = 2 + (int)(rng() % 2);
                for (int i = 0; i < n; ++i) items.push_back(rand_ground(depth - 1));
                return Message::tuple(std::move(items));
            }
        }
    };

    int derivable_count = 0, underivable_count = 0;
    for (int round = 0; round < 200; ++round) {
        std::vector<Message> kp;
        for (int i = 3; i < 9; ++i)
            if (rng() % 3 == 0) kp.push_back(atoms[(size_t)i]);

        std::vector<KnowledgeEntry> pool;
        std::vector<Message> pool_msgs;
        int n = 1 + (int)(rng() % 6);
        for (int i = 0; i < n; ++i) {
            Message m = rand_ground(3);
            pool_msgs.push_back(m);
            pool.push_back(sent_entry(m, kP1, "tv" + std::to_string(i), {i, {}}));
        }
        for (const auto& k : kp) pool.push_back(kp_entry(k));

        Message target = rng() % 2 ? rand_ground(2) : pool_msgs[rng() % pool_msgs.size()];

        ClosureOracle oracle(pool_msgs, kp);
        bool expect = oracle.derivable(target);
        auto sols = derive(dc_of(pool, target, kP2, "tv"), {}, fresh);
        CAPTURE(target.str(), round);
        REQUIRE(!sols.empty() == expect);
        (expect ? derivable_count : underivable_count)++;
    }
    REQUIRE(derivable_count > 40);
    REQUIRE(underivable_count > 40);
}

TEST_CASE("materialized forward matches the implicit constraints", "[intruder][solver]") {
    // p1 sends a fresh value; p2's receive is discharged by forwarding it
    FreshNames fresh;
    TimedBundle b;
    int s0 = b.instantiate(parse_role("new v; send v;"), kP1, {}, fresh);
    int s1 = b.instantiate(parse_role("recv w;"), kP2, {}, fresh);
    b.append({s0, {}});
    b.append({s0, {1}});
    b.append({s1, {}});

    Message c = b.strand(s0).new_consts.at({});
    DeducibilityConstraint dc{
        {sent_entry(c, kP1, b.nodes().at({s0, {1}}).tvar, {s0, {1}})},
        b.term({s1, {}}),
        kP2,
        b.nodes().at({s1, {}}).tvar,
        {s1, {}}};
    auto sols = derive(dc, {}, fresh);
    REQUIRE_FALSE(sols.empty());
    const DeriveSolution* fwd_sol = nullptr;
    for (const auto& cand : sols)
        if (cand.derivation.rule == Derivation::Rule::Forward) { fwd_sol = &cand; break; }
    REQUIRE(fwd_sol != nullptr);
    const auto& sol = *fwd_sol;
    b.set_subst(sol.subst);

    MaterializeContext ctx{&b, &fresh, {}, nullptr, {}};
    materialize(sol.derivation, dc, sol.subst, ctx);

    // two forwarding strands appeared: one at each canonical intruder
    int fwd = 0;
    for (const auto& s : b.strands())
        if (s.intruder_rule == "forward") ++fwd;
    REQUIRE(fwd == 2);

    Topology parts;
    parts.add_agent(kP1);
    parts.add_agent(kP2);
    Topology canon = canonical_extension(parts);

    SatOracle oracle;
    auto rep = wellformed(b, canon, oracle);
    CAPTURE(rep.violations);
    REQUIRE(rep.ok());
    REQUIRE(origination_ok(b));

    // satisfiability equivalence of the two realizations, on both verdicts
    std::string send_tvar = b.nodes().at({s0, {1}}).tvar;
    auto implicit_store = [&](bool far_apart) {
        Topology t = parts;
        if (far_apart) t.add_constraint(tc(td("p1", "p2"), TimeRel::Gt, num(4)));
        ConstraintStore st = t.fresh_store();
        for (const auto& cst : sol.timing) st = st.add(cst);
        st = st.add(tc(tv(dc.recv_tvar), TimeRel::Le, tv(send_tvar)));
        return st;
    };
    auto explicit_store = [&](bool far_apart) {
        Topology t = canon;
        if (far_apart) t.add_constraint(tc(td("p1", "p2"), TimeRel::Gt, num(4)));
        ConstraintStore st = timed_constraint_set(b, t);
        st = st.add(tc(tv(dc.recv_tvar), TimeRel::Le, tv(send_tvar)));
        return st;
    };
    for (bool far : {false, true}) {
        auto vi = oracle.check(implicit_store(far), Backend::Auto).verdict;
        auto ve = oracle.check(explicit_store(far), Backend::Auto).verdict;
        CAPTURE(far);
        REQUIRE(vi == ve);
        REQUIRE(vi == (far ? Verdict::Unsat : Verdict::Sat));
    }
}

TEST_CASE("kp-backed target materializes a single key strand", "[intruder][solver]") {
    FreshNames fresh;
    TimedBundle b;
    int s1 = b.instantiate(parse_role("recv w;"), kP2, {}, fresh);
    b.append({s1, {}});

    Message k = Message::symkey("k");
    DeducibilityConstraint dc{{kp_entry(k)}, b.term({s1, {}}), kP2,
                              b.nodes().at({s1, {}}).tvar, {s1, {}}};
    auto sols = derive(dc, {}, fresh);
    REQUIRE_FALSE(sols.empty());
    const DeriveSolution* key_sol = nullptr;
    for (const auto& s : sols)
        if (s.derivation.rule == Derivation::Rule::Key) { key_sol = &s; break; }
    REQUIRE(key_sol != nullptr);
    b.set_subst(key_sol->subst);

    MaterializeContext ctx{&b, &fresh, {}, nullptr, {}};
    materialize(key_sol->derivation, dc, key_sol->subst, ctx);
    REQUIRE(b.strands().size() == 2);
    REQUIRE(b.strands()[1].intruder_rule == "key");

    Topology parts;
    parts.add_agent(kP2);
    SatOracle oracle;
    auto rep = wellformed(b, canonical_extension(parts), oracle);
    CAPTURE(rep.violations);
    REQUIRE(rep.ok());
}

TEST_CASE("compose-and-encrypt materializes chained intruder strands", "[intruder][solver]") {
    FreshNames fresh;
    TimedBundle b;
    int s0 = b.instantiate(parse_role("new v; send v;"), kP1, {}, fresh);
    int s1 = b.instantiate(parse_role("new v; send v;"), kP2, {}, fresh);
    int s2 = b.instantiate(parse_role("recv w;"), kP3, {}, fresh);
    Message c1 = b.strand(s0).new_consts.at({});
    Message c2 = b.strand(s1).new_consts.at({});
    for (int s : {s0, s1}) {
        b.append({s, {}});
        b.append({s, {1}});
    }
    b.append({s2, {}});

    Message k = Message::symkey("k");
    Message target = Message::enc(Message::tuple({c1, c2}), k);
    DeducibilityConstraint dc{
        {sent_entry(c1, kP1, b.nodes().at({s0, {1}}).tvar, {s0, {1}}),
         sent_entry(c2, kP2, b.nodes().at({s1, {1}}).tvar, {s1, {1}}),
         kp_entry(k)},
        b.term({s2, {}}),
        kP3,
        b.nodes().at({s2, {}}).tvar,
        {s2, {}}};
    Substitution s = *unify(b.term({s2, {}}), target);
    auto sols = derive(dc, s, fresh);
    REQUIRE_FALSE(sols.empty());

    // pick the solution that uses both sent messages
    const DeriveSolution* chosen = nullptr;
    for (const auto& cand : sols)
        if (cand.timing.size() == 2) { chosen = &cand; break; }
    REQUIRE(chosen != nullptr);
    b.set_subst(chosen->subst);

    MaterializeContext ctx{&b, &fresh, {}, nullptr, {}};
    materialize(chosen->derivation, dc, chosen->subst, ctx);

    std::set<std::string> rules;
    for (const auto& st : b.strands())
        if (!st.intruder_rule.empty()) rules.insert(st.intruder_rule);
    REQUIRE(rules.count("forward"));
    REQUIRE(rules.count("concat"));
    REQUIRE(rules.count("encrypt"));
    REQUIRE(rules.count("key"));

    Topology parts;
    parts.add_agent(kP1);
    parts.add_agent(kP2);
    parts.add_agent(kP3);
    SatOracle oracle;
    auto rep = wellformed(b, canonical_extension(parts), oracle);
    CAPTURE(rep.violations);
    REQUIRE(rep.ok());
    REQUIRE(origination_ok(b));
}
