#include <catch2/catch_amalgamated.hpp>

#include <cpsp/smtlib.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <random>

using namespace cpsp;
using namespace cpsp::testing;

namespace {

size_t count_occurrences(const std::string& text, const std::string& needle) {
    size_t n = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace

TEST_CASE("script structure for a single bound", "[smtlib]") {
    auto st = store_of({tc(tv("tv"), TimeRel::Ge, num(0))});
    auto script = encode_smtlib(st);
    REQUIRE(count_occurrences(script, "(declare-const") == 1);
    REQUIRE(count_occurrences(script, "(assert") == 2);  // nonnegativity + the bound
    REQUIRE(script.find("(set-logic QF_LIRA)") == 0);
    REQUIRE(script.find("(check-sat)") != std::string::npos);
    REQUIRE(script.find("(get-model)") != std::string::npos);
}

TEST_CASE("floor introduces one integer auxiliary with two bounding assertions", "[smtlib]") {
    auto st = store_of({tc(tv("tv3"), TimeRel::Eq,
                           TimeExpr::add(TimeExpr::floor(tv("tv1")), num(1)))});
    auto script = encode_smtlib(st);
    REQUIRE(count_occurrences(script, "(declare-const .f0 Int)") == 1);
    REQUIRE(count_occurrences(script, "(declare-const") == 3);  // tv1, tv3, .f0
    REQUIRE(count_occurrences(script, "(assert") == 5);  // 2 nonneg + 2 aux bounds + constraint
}

TEST_CASE("external solver answers on an exchange store", "[smtlib][solver]") {
    auto st = store_of(ex3_constraints());
    SolverConfig cfg{default_solver_command()};
    auto r = check_sat_smt(st, cfg);
    REQUIRE(r.verdict == Verdict::Sat);
    for (const auto& c : ex3_constraints()) REQUIRE(holds(c, r.model));
}

TEST_CASE("external solver handles floor constraints", "[smtlib][solver]") {
    SolverConfig cfg{default_solver_command()};

    // floor(x) + 1 <= x is never satisfiable; floor(x) + 1 >= x always is.
    auto bad = store_of({tc(TimeExpr::add(TimeExpr::floor(tv("x")), num(1)), TimeRel::Le, tv("x"))});
    REQUIRE(check_sat_smt(bad, cfg).verdict == Verdict::Unsat);

    auto good = store_of({tc(TimeExpr::add(TimeExpr::floor(tv("x")), num(1)), TimeRel::Ge, tv("x")),
                          tc(tv("x"), TimeRel::Gt, num(3)),
                          tc(tv("x"), TimeRel::Lt, num(4))});
    auto r = check_sat_smt(good, cfg);
    REQUIRE(r.verdict == Verdict::Sat);
    REQUIRE(r.model.at("x") > 3);
    REQUIRE(r.model.at("x") < 4);

    auto ceil_pin = store_of({tc(TimeExpr::ceil(tv("y")), TimeRel::Eq, num(5)),
                              tc(tv("y"), TimeRel::Gt, num(4))});
    auto rc = check_sat_smt(ceil_pin, cfg);
    REQUIRE(rc.verdict == Verdict::Sat);
    REQUIRE(rat_ceil(rc.model.at("y")) == 5);
}

TEST_CASE("model replies accept decimals, fractions and negations", "[smtlib]") {
    std::string reply = R"((
      (define-fun a () Real 1.5)
      (define-fun b () Real (/ 7.0 2.0))
      (define-fun c () Real (- (/ 1 3)))
      (define-fun d () Int (- 4))
      (define-fun |td(p1,p2)| () Real 9.0)
      (define-fun .f0 () Int 2)
    ))";
    TimeModel model;
    size_t i = 0;
    SExpr e;
    while (smt::parse_sexpr(reply, i, e)) smt::collect_model(e, model);
    REQUIRE(model.at("a") == Rat(3, 2));
    REQUIRE(model.at("b") == Rat(7, 2));
    REQUIRE(model.at("c") == Rat(-1, 3));
    REQUIRE(model.at("d") == Rat(-4));
    REQUIRE(model.at("td(p1,p2)") == Rat(9));
    REQUIRE(model.count(".f0") == 0);  // floor auxiliaries stay internal
}

TEST_CASE("missing solver raises SolverUnavailable", "[smtlib]") {
    auto st = store_of({tc(tv("tv"), TimeRel::Ge, num(0))});
    SolverConfig cfg{"definitely-not-a-solver-binary"};
    REQUIRE_THROWS_AS(check_sat_smt(st, cfg), SolverUnavailable);
}

TEST_CASE("builtin and smt backends agree on difference stores", "[smtlib][solver][property]") {
    std::mt19937_64 rng(57);
    std::uniform_int_distribution<int> relpick(0, 4), var(0, 19), cst(-8, 8);
    SolverConfig cfg{default_solver_command()};
    int sat_n = 0, unsat_n = 0;
    for (int round = 0; round < 120; ++round) {
        std::vector<TimeConstraint> cs;
        int n = 2 + (int)(rng() % 14);
        for (int i = 0; i < n; ++i) {
            auto x = tv("x" + std::to_string(var(rng)));
            auto y = tv("x" + std::to_string(var(rng)));
            auto rel = static_cast<TimeRel>(relpick(rng));
            if (rng() % 4 == 0)
                cs.push_back(tc(x, rel, num(cst(rng))));
            else
                cs.push_back(tc(x, rel, TimeExpr::add(y, num(cst(rng)))));
        }
        auto st = store_of(cs);
        auto builtin = check_sat_builtin(st);
        REQUIRE(builtin.verdict != Verdict::Unknown);
        auto smt = check_sat_smt(store_of(cs), cfg);
        REQUIRE(smt.verdict == builtin.verdict);
        if (smt.verdict == Verdict::Sat) {
            ++sat_n;
            for (const auto& c : cs) {
                REQUIRE(holds(c, smt.model));
                REQUIRE(holds(c, builtin.model));
            }
        } else {
            ++unsat_n;
        }
    }
    REQUIRE(sat_n > 10);
    REQUIRE(unsat_n > 10);
}

TEST_CASE("auto backend falls back to smt on floor stores", "[smtlib][solver]") {
    SatOracle oracle;
    auto st = store_of({tc(tv("a"), TimeRel::Eq, TimeExpr::add(TimeExpr::floor(tv("b")), num(1))),
                        tc(tv("b"), TimeRel::Gt, num(2)),
                        tc(tv("b"), TimeRel::Lt, num(3))});
    auto r = oracle.check(st, Backend::Auto);
    REQUIRE(r.verdict == Verdict::Sat);
    REQUIRE(r.model.at("a") == 3);
    REQUIRE(oracle.smt_calls() == 1);
    REQUIRE(oracle.builtin_calls() == 1);
}
