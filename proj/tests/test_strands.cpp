#include <catch2/catch_amalgamated.hpp>

#include <cpsp/strands.hpp>

#include "bundles.hpp"
#include "fixtures.hpp"
#include "matching.hpp"

using namespace cpsp;
using namespace cpsp::testing;

namespace {

Topology two_party_topology() {
    Topology t;
    t.add_agent(kP1);
    t.add_agent(kP2);
    return t;
}

Topology relay_topology(long leg) {
    Topology t;
    t.add_agent(kP1);
    t.add_agent(kP2);
    t.add_agent(kTi1);
    t.add_agent(kTi2);
    for (const auto& c : ex4_relay_pins(leg)) t.add_constraint(c);
    return t;
}

}  // namespace

TEST_CASE("instantiation freshens constants and separates strands", "[strands]") {
    TimedBundle b;
    FreshNames fresh;
    int s0 = b.instantiate(db_verifier_role(), kP1, {}, fresh);
    int s1 = b.instantiate(db_verifier_role(), kP1, {}, fresh);

    auto c0 = b.strand(s0).new_consts.at(pos({}));
    auto c1 = b.strand(s1).new_consts.at(pos({}));
    REQUIRE(c0 != c1);

    std::set<std::string> tvars0, tvars1;
    for (const auto& [p, tvname] : b.strand(s0).tvar_at) tvars0.insert(tvname);
    for (const auto& [p, tvname] : b.strand(s1).tvar_at) tvars1.insert(tvname);
    for (const auto& t : tvars0) REQUIRE(tvars1.count(t) == 0);

    int s2 = b.instantiate(Role{}, kP2, {}, fresh);
    REQUIRE(positions(b.strand(s2).role) == std::set<Position>{pos({})});

    Role needs_arg = parse_role("role r(x) { send x; }");
    REQUIRE_THROWS_AS(b.instantiate(needs_arg, kP2, {}, fresh), UnboundParam);
}

TEST_CASE("direct exchange extracts exactly the seven constraints", "[strands]") {
    auto ex = build_direct_exchange();
    auto tagged = extract_constraints(ex.bundle);
    std::vector<TimeConstraint> got;
    for (const auto& t : tagged) got.push_back(t.constraint);
    REQUIRE(equal_modulo_renaming(got, ex3_constraints()));

    int annotations = 0, seq = 0, msg = 0;
    for (const auto& t : tagged) {
        if (t.source == ConstraintSource::RoleAnnotation) ++annotations;
        if (t.source == ConstraintSource::SeqEdge) ++seq;
        if (t.source == ConstraintSource::MsgEdge) ++msg;
    }
    REQUIRE(annotations == 2);
    REQUIRE(seq == 3);
    REQUIRE(msg == 2);
}

TEST_CASE("relay bundle extracts the fifteen constraints", "[strands]") {
    auto ex = build_relay();
    auto tagged = extract_constraints(ex.bundle);
    std::vector<TimeConstraint> got;
    for (const auto& t : tagged) got.push_back(t.constraint);
    REQUIRE(equal_modulo_renaming(got, ex4_constraints()));
}

TEST_CASE("single unannotated send contributes nothing", "[strands]") {
    TimedBundle b;
    FreshNames fresh;
    int s = b.instantiate(parse_role("new v; send v;"), kP1, {}, fresh);
    b.add_node({s, pos({1})});
    // just the send node, no edges: no constraints at all
    REQUIRE(extract_constraints(b).empty());
}

TEST_CASE("well-formedness of the direct exchange", "[strands][solver]") {
    auto ex = build_direct_exchange();
    SatOracle oracle;
    auto rep = wellformed(ex.bundle, two_party_topology(), oracle);
    CAPTURE(rep.violations);
    REQUIRE(rep.ok());
    REQUIRE(origination_ok(ex.bundle));

    // every message edge obeys the hop-delay accumulation in the model
    for (const auto& [x, y] : ex.bundle.msg_edges()) {
        const auto& nx = ex.bundle.nodes().at(x);
        const auto& ny = ex.bundle.nodes().at(y);
        Rat lhs = rep.model.at(ny.tvar);
        Rat rhs = rep.model.at(nx.tvar) +
                  rep.model.at(TimeExpr::dist_symbol(nx.agent.name, ny.agent.name));
        REQUIRE(lhs >= rhs);
    }
}

TEST_CASE("missing message edge violates clause 2", "[strands][solver]") {
    auto ex = build_direct_exchange();
    TimedBundle b;
    FreshNames fresh;
    int s0 = b.instantiate(db_verifier_role(), kP1, {}, fresh);
    b.append({s0, pos({})});
    b.append({s0, pos({1})});
    b.append({s0, pos({1, 1})});  // receive with no incoming edge
    SatOracle oracle;
    auto rep = wellformed(b, two_party_topology(), oracle);
    REQUIRE_FALSE(rep.violations.empty());
    REQUIRE(rep.violations[0].find("clause-2") != std::string::npos);
}

TEST_CASE("relay bundle satisfiable within bound, clause-5 violation beyond", "[strands][solver]") {
    SatOracle oracle;
    {
        auto ex = build_relay();
        auto rep = wellformed(ex.bundle, relay_topology(1), oracle);
        CAPTURE(rep.violations);
        REQUIRE(rep.ok());
    }
    {
        auto ex = build_relay();
        auto rep = wellformed(ex.bundle, relay_topology(3), oracle);
        REQUIRE(rep.store_verdict == Verdict::Unsat);
        bool clause5 = false;
        for (const auto& v : rep.violations)
            if (v.find("clause-5") != std::string::npos) clause5 = true;
        REQUIRE(clause5);
    }
}

TEST_CASE("origination violations are detected", "[strands]") {
    // p2 "receives" the constant without any path from its creation
    TimedBundle b;
    FreshNames fresh;
    int s0 = b.instantiate(db_verifier_role(), kP1, {}, fresh);
    Message c = b.strand(s0).new_consts.at(pos({}));
    int s1 = b.add_strand(kP2, trace_role({{false, c}, {true, c}}), "", fresh);
    b.append({s0, pos({})});
    b.append({s1, pos({})});
    b.append({s1, pos({1})});
    REQUIRE_FALSE(origination_ok(b));

    // no News at all is vacuously fine
    TimedBundle b2;
    int t0 = b2.add_strand(kP1, trace_role({{true, Message::text("hello")}}), "", fresh);
    b2.append({t0, pos({})});
    REQUIRE(origination_ok(b2));
}

TEST_CASE("extraction is independent of node insertion order", "[strands][property]") {
    auto build = [](bool reversed) {
        TimedBundle b;
        FreshNames fresh;
        int s0 = b.instantiate(db_verifier_role(), kP1, {}, fresh);
        int s1 = b.instantiate(echo_prover_role(), kP2, {}, fresh);
        std::vector<NodeId> order = {{s0, pos({})},  {s0, pos({1})}, {s0, pos({1, 1})},
                                     {s1, pos({})},  {s1, pos({1})}};
        if (reversed) std::reverse(order.begin(), order.end());
        for (const auto& id : order) b.add_node(id);
        b.add_seq_edge({s0, pos({})}, {s0, pos({1})});
        b.add_seq_edge({s0, pos({1})}, {s0, pos({1, 1})});
        b.add_seq_edge({s1, pos({})}, {s1, pos({1})});
        b.add_msg_edge({s0, pos({1})}, {s1, pos({})});
        b.add_msg_edge({s1, pos({1})}, {s0, pos({1, 1})});
        auto tagged = extract_constraints(b);
        std::set<std::string> out;
        for (const auto& t : tagged) out.insert(t.constraint.str());
        return out;
    };
    REQUIRE(build(false) == build(true));
}

TEST_CASE("store symbols are housed by nodes, role variables, or atoms", "[strands]") {
    auto ex = build_direct_exchange();
    std::set<std::string> node_tvars;
    for (const auto& [id, n] : ex.bundle.nodes()) {
        REQUIRE(node_tvars.insert(n.tvar).second);  // globally fresh per node
    }
    std::set<std::string> tvars, dists;
    for (const auto& t : extract_constraints(ex.bundle)) collect_symbols(t.constraint, tvars, dists);
    for (const auto& v : tvars) {
        bool housed = node_tvars.count(v) || v.find("#s") != std::string::npos;
        CAPTURE(v);
        REQUIRE(housed);
    }
}
