// Shared constraint-set fixtures for the relay examples used across tests.

#pragma once

#include <cpsp/timealg.hpp>

#include <vector>

namespace cpsp::testing {

inline TimeExpr tv(const std::string& n) { return TimeExpr::var(n); }
inline TimeExpr td(const std::string& a, const std::string& b) { return TimeExpr::dist(a, b); }
inline TimeExpr num(long v) { return TimeExpr::num(v); }

// Two participants exchanging a fresh value directly: the seven constraints
// of the plain distance-bounding run (strand order, hop delays, the two
// clock annotations).
inline std::vector<TimeConstraint> ex3_constraints() {
    return {
        tc(tv("tv5"), TimeRel::Ge, tv("tv4")),
        tc(tv("tv3"), TimeRel::Ge, tv("tv2")),
        tc(tv("tv2"), TimeRel::Ge, tv("tv1")),
        tc(tv("tv"), TimeRel::Eq, tv("tv2")),
        tc(tv("tv4"), TimeRel::Ge, TimeExpr::add(tv("tv2"), td("p1", "p2"))),
        tc(tv("tv3"), TimeRel::Ge, TimeExpr::add(tv("tv5"), td("p2", "p1"))),
        tc(tv("tv3"), TimeRel::Le, TimeExpr::add(tv("tv"), num(4))),
    };
}

// The two-intruder relay of the same protocol: p1's challenge travels
// p1 -> ti1 -> ti2 -> p2 and the response returns p2 -> ti2 -> ti1 -> p1.
// Fifteen constraints: the annotations, every strand-order edge (including
// the verifier's send-to-receive edge) and every hop delay.
inline std::vector<TimeConstraint> ex4_constraints() {
    return {
        tc(tv("tv2"), TimeRel::Ge, tv("tv1")),
        tc(tv("tv3"), TimeRel::Ge, tv("tv2")),
        tc(tv("tv"), TimeRel::Eq, tv("tv2")),
        tc(tv("tv6"), TimeRel::Ge, TimeExpr::add(tv("tv2"), td("p1", "ti1"))),
        tc(tv("tv7"), TimeRel::Ge, tv("tv6")),
        tc(tv("tv8"), TimeRel::Ge, TimeExpr::add(tv("tv7"), td("ti1", "ti2"))),
        tc(tv("tv9"), TimeRel::Ge, tv("tv8")),
        tc(tv("tv4"), TimeRel::Ge, TimeExpr::add(tv("tv9"), td("ti2", "p2"))),
        tc(tv("tv5"), TimeRel::Ge, tv("tv4")),
        tc(tv("tv10"), TimeRel::Ge, TimeExpr::add(tv("tv5"), td("p2", "ti2"))),
        tc(tv("tv11"), TimeRel::Ge, tv("tv10")),
        tc(tv("tv12"), TimeRel::Ge, TimeExpr::add(tv("tv11"), td("ti2", "ti1"))),
        tc(tv("tv13"), TimeRel::Ge, tv("tv12")),
        tc(tv("tv3"), TimeRel::Ge, TimeExpr::add(tv("tv13"), td("ti1", "p1"))),
        tc(tv("tv3"), TimeRel::Le, TimeExpr::add(tv("tv"), num(4))),
    };
}

// Pins the relay legs: everything co-located except the intruder-to-intruder
// channel, whose one-way delay is `leg`.
inline std::vector<TimeConstraint> ex4_relay_pins(long leg) {
    auto fix = [](const std::string& a, const std::string& b, long v) {
        return tc(td(a, b), TimeRel::Eq, num(v));
    };
    return {
        fix("p1", "ti1", 0), fix("ti1", "p1", 0),
        fix("p2", "ti2", 0), fix("ti2", "p2", 0),
        fix("ti1", "ti2", leg), fix("ti2", "ti1", leg),
    };
}

// The full pin set for the bare-store boundary instances: relay legs plus
// the direct participant distance. Note the intruders' fast channel beats
// the direct path here, so these pins are meant for stores without the
// topology axioms.
inline std::vector<TimeConstraint> ex4_leg_equalities(long leg) {
    auto out = ex4_relay_pins(leg);
    out.push_back(tc(td("p1", "p2"), TimeRel::Eq, num(5)));
    out.push_back(tc(td("p2", "p1"), TimeRel::Eq, num(5)));
    return out;
}

inline ConstraintStore store_of(const std::vector<TimeConstraint>& cs) {
    ConstraintStore st;
    for (const auto& c : cs) st = st.add(c);
    return st;
}

}  // namespace cpsp::testing
