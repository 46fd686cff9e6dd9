#include <catch2/catch_amalgamated.hpp>

#include <cpsp/lang.hpp>

using namespace cpsp;

namespace {

const char* kVerifier = "new v; send v # t = cur; recv v # cur <= t + 4;";

const char* kPassportRole = R"(
role passport(kM, kE) {
  new v;
  send v;
  recv [v_enc, v_mac] # t0 = cur;
  if v_mac :=: enc(v_enc, kM) # t1 = t0 + tMac {
    if v_enc :=: enc(v, kE) # t2 = t1 + tEnc {
      send text(done) # cur = t2;
    } else {
      send text(error) # cur = t2;
    }
  } else {
    send text(error) # cur = t1;
  }
}
)";

Position pos(std::initializer_list<int> xs) {
    Position p;
    for (int x : xs) p.push_back((uint8_t)x);
    return p;
}

bool bool_equal(const BoolExpr& a, const BoolExpr& b);

bool cmd_equal(const CommandNode* a, const CommandNode* b) {
    if (a->kind != b->kind) return false;
    auto ann_eq = [&] {
        if (a->annotation.has_value() != b->annotation.has_value()) return false;
        return !a->annotation || *a->annotation == *b->annotation;
    };
    switch (a->kind) {
        case CmdKind::Nil: return true;
        case CmdKind::New:
            return a->new_var == b->new_var && cmd_equal(a->next.get(), b->next.get());
        case CmdKind::Send:
        case CmdKind::Recv:
            return a->msg == b->msg && ann_eq() && cmd_equal(a->next.get(), b->next.get());
        case CmdKind::Cond:
            return bool_equal(a->guard, b->guard) && ann_eq() &&
                   cmd_equal(a->then_branch.get(), b->then_branch.get()) &&
                   cmd_equal(a->else_branch.get(), b->else_branch.get());
    }
    return false;
}

bool bool_equal(const BoolExpr& a, const BoolExpr& b) {
    if (a.kind() != b.kind()) return false;
    switch (a.kind()) {
        case BoolKind::UnifTest: return a.lhs_msg() == b.lhs_msg() && a.rhs_msg() == b.rhs_msg();
        case BoolKind::TimeCmp: return a.cmp() == b.cmp();
        case BoolKind::And: return bool_equal(a.lhs(), b.lhs()) && bool_equal(a.rhs(), b.rhs());
        case BoolKind::Not: return bool_equal(a.lhs(), b.lhs());
    }
    return false;
}

const char* kMafiaScenario = R"(
role verifier() {
  new v;
  send v # t = cur;
  recv v # cur <= t + 4;
}
role prover() {
  recv w;
  send w;
}
scenario mafia {
  participants p1, p2;
  topology { td(p1,p2) > 4; td(p2,p1) > 4; }
  run p1: verifier();
  run p2: prover();
  goal complete(p1);
}
)";

}  // namespace

TEST_CASE("distance-bounding verifier parses to the expected shape", "[lang]") {
    Role r = parse_role(kVerifier);
    const CommandNode* n = r.body.get();
    REQUIRE(n->kind == CmdKind::New);
    REQUIRE(n->new_var == "v");
    n = n->next.get();
    REQUIRE(n->kind == CmdKind::Send);
    REQUIRE(n->msg == Message::var("v"));
    REQUIRE(n->annotation.has_value());
    REQUIRE(n->annotation->str() == "t = cur");
    n = n->next.get();
    REQUIRE(n->kind == CmdKind::Recv);
    REQUIRE(n->annotation->str() == "cur <= t + 4");
    REQUIRE(n->next->kind == CmdKind::Nil);
}

TEST_CASE("empty body is the empty protocol", "[lang]") {
    Role r = parse_role("");
    REQUIRE(r.body->kind == CmdKind::Nil);
    REQUIRE(positions(r) == std::set<Position>{pos({})});
}

TEST_CASE("sending an unbound identifier is a scope error", "[lang]") {
    REQUIRE_THROWS_AS(parse_role("send v;"), ScopeError);
    REQUIRE_THROWS_AS(parse_role("new v; if w :=: v { } else { }"), ScopeError);
    REQUIRE_NOTHROW(parse_role("recv w; send w;"));  // receive binds
}

TEST_CASE("positions of the verifier chain", "[lang]") {
    Role r = parse_role(kVerifier);
    std::set<Position> expect{pos({}), pos({1}), pos({1, 1}), pos({1, 1, 1})};
    REQUIRE(positions(r) == expect);
}

TEST_CASE("positions and command_at on the nested conditional role", "[lang]") {
    Role r = parse_role(kPassportRole);

    const CommandNode* inner_if = command_at(r, pos({1, 1, 1, 1}));
    REQUIRE(inner_if->kind == CmdKind::Cond);
    REQUIRE(inner_if->annotation.has_value());
    REQUIRE(inner_if->annotation->str() == "t2 = t1 + tEnc");

    const CommandNode* inner_else = command_at(r, pos({1, 1, 1, 1, 2}));
    REQUIRE(inner_else->kind == CmdKind::Send);
    REQUIRE(inner_else->msg == Message::text("error"));
    REQUIRE(inner_else->annotation->str() == "cur = t2");

    const CommandNode* outer_else = command_at(r, pos({1, 1, 1, 2}));
    REQUIRE(outer_else->kind == CmdKind::Send);
    REQUIRE(outer_else->annotation->str() == "cur = t1");

    // positions() and command_at agree on validity
    auto ps = positions(r);
    for (const auto& p : ps) REQUIRE_NOTHROW(command_at(r, p));
    REQUIRE(ps.count(pos({2})) == 0);
    REQUIRE_THROWS_AS(command_at(r, pos({2})), InvalidPosition);
    REQUIRE_THROWS_AS(command_at(r, pos({1, 1, 1, 1, 1, 1, 1})), InvalidPosition);
}

TEST_CASE("first command sits at the empty position", "[lang]") {
    Role r = parse_role(kVerifier);
    REQUIRE(command_at(r, pos({}))->kind == CmdKind::New);
    REQUIRE(command_at(r, pos({1}))->kind == CmdKind::Send);
}

TEST_CASE("commands after a conditional are rejected", "[lang]") {
    REQUIRE_THROWS_AS(parse_role("new v; if v :=: v { } else { } send v;"), ParseError);
}

TEST_CASE("scenario parsing builds the canonical configuration", "[lang]") {
    Scenario sc = parse_scenario(kMafiaScenario);
    REQUIRE(sc.name == "mafia");
    REQUIRE(sc.participant_names == std::vector<std::string>{"p1", "p2"});
    REQUIRE(sc.topology.agents().size() == 4);
    REQUIRE(sc.topology.find("ti_p1") != nullptr);
    REQUIRE(sc.topology.find("ti_p2") != nullptr);
    REQUIRE(sc.runs.size() == 2);
    REQUIRE(sc.has_goal);
    REQUIRE(sc.goal.kind == GoalKind::Complete);
    REQUIRE(sc.goal.participant == "p1");
    REQUIRE(sc.file_constraints.size() == 2);

    // K_P: pk for all four agents, sk+name for both canonical intruders
    int pks = 0, sks = 0, names = 0;
    for (const auto& m : sc.kp) {
        if (m.kind() == MsgKind::PK) ++pks;
        if (m.kind() == MsgKind::SK) ++sks;
        if (m.kind() == MsgKind::Const) ++names;
    }
    REQUIRE(pks == 4);
    REQUIRE(sks == 2);
    REQUIRE(names == 2);
}

TEST_CASE("scenario without runs is valid", "[lang]") {
    Scenario sc = parse_scenario("scenario empty { participants p; goal complete(p); }");
    REQUIRE(sc.runs.empty());
    REQUIRE(sc.topology.agents().size() == 2);
}

TEST_CASE("scenario errors", "[lang]") {
    REQUIRE_THROWS_AS(parse_scenario("scenario s { participants p; run p: nope(); }"),
                      UnknownRole);
    REQUIRE_THROWS_AS(parse_scenario("scenario s { participants p, p; }"), DuplicateAgent);
    REQUIRE_THROWS_AS(parse_scenario("scenario s { participants p; topology { td(p,q) > 1; } }"),
                      ParseError);
    REQUIRE_THROWS_AS(parse_scenario("role r() { new v; send v; } scenario s { participants p; "
                                     "run q: r(); }"),
                      UnknownRole);
}

TEST_CASE("explicit intruders are kept alongside canonical ones", "[lang]") {
    Scenario sc = parse_scenario(R"(
      scenario s {
        participants p1, p2;
        intruders ti1, ti2;
        topology { td(p1,ti1) = 0; }
      }
    )");
    REQUIRE(sc.topology.agents().size() == 6);
    REQUIRE(sc.explicit_intruder_names == std::vector<std::string>{"ti1", "ti2"});
    REQUIRE(sc.search_topology.agents().size() == 2);
}

TEST_CASE("every grammar production round-trips", "[lang][property]") {
    const char* samples[] = {
        "",                                           // empty protocol
        "new v; send v;",                             // fresh constant + output
        "new v; send v # t = cur;",                   // timed output
        "recv w;",                                    // input
        "recv w # cur <= 9;",                         // timed input
        "recv w; if w :=: text(hello) { send w; } else { }",  // conditional
        "recv w; if w :=: w # t = floor(cur) + 1 { } else { send w; }",  // timed conditional
        "recv w; if !(w :=: text(a)) && t < 3 { } else { }",  // boolean closure
        kVerifier,
        kPassportRole,
    };
    for (const char* text : samples) {
        Role once = parse_role(text);
        Role twice = parse_role(print_role(once));
        CAPTURE(text);
        REQUIRE(cmd_equal(once.body.get(), twice.body.get()));
        REQUIRE(positions(once) == positions(twice));
    }
}

TEST_CASE("scenario print-parse round trip", "[lang]") {
    Scenario once = parse_scenario(kMafiaScenario);
    Scenario twice = parse_scenario(print_scenario(once));
    REQUIRE(once.participant_names == twice.participant_names);
    REQUIRE(once.runs.size() == twice.runs.size());
    REQUIRE(once.file_constraints.size() == twice.file_constraints.size());
    for (size_t i = 0; i < once.file_constraints.size(); ++i)
        REQUIRE(once.file_constraints[i] == twice.file_constraints[i]);
    REQUIRE(once.kp.size() == twice.kp.size());
    REQUIRE(print_scenario(once) == print_scenario(twice));
}

TEST_CASE("goal reach positions are validated", "[lang]") {
    REQUIRE_THROWS_AS(parse_scenario(R"(
      role r() { new v; send v; }
      scenario s { participants p; run p: r(); goal reach(p, "2.2"); }
    )"),
                      InvalidPosition);
    Scenario ok = parse_scenario(R"(
      role r() { new v; send v; }
      scenario s { participants p; run p: r(); goal reach(p, "1"); }
    )");
    REQUIRE(ok.goal.kind == GoalKind::Reach);
    REQUIRE(pos_str(ok.goal.pos) == "1");
}

TEST_CASE("nonlinear time expressions are rejected at parse time", "[lang]") {
    REQUIRE_THROWS_AS(parse_role("recv w # t * t <= 4;"), ParseError);
    REQUIRE_THROWS_AS(parse_role("recv w # 4 / t <= 4;"), ParseError);
    REQUIRE_NOTHROW(parse_role("recv w # (2 + t + cur) / 10 <= 4;"));
    REQUIRE_NOTHROW(parse_role("recv w # ceil((2 + t + cur) / 10) <= 4;"));
}
