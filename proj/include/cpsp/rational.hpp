// ============================================================================
// cpsp/rational.hpp — exact rational arithmetic
// ============================================================================
//
// All time values in the verifier are exact rationals (GMP mpq_class).
// No floating point anywhere on a satisfiability-relevant path; model
// re-evaluation in tests is exact as well.
//
// DeltaRat augments a rational with an infinitesimal component r + k*delta,
// the standard device for handling strict inequalities in difference-logic
// and simplex procedures: x > c is represented as x >= c + delta.
//
// ============================================================================

#pragma once

#include <gmpxx.h>

#include <optional>
#include <stdexcept>
#include <string>

namespace cpsp {

using Rat = mpq_class;

inline Rat rat_of(long num, long den = 1) {
    Rat q(num, den);
    q.canonicalize();
    return q;
}

// Largest integer <= q.
inline Rat rat_floor(const Rat& q) {
    mpz_class z;
    mpz_fdiv_q(z.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return Rat(z);
}

// Smallest integer >= q.
inline Rat rat_ceil(const Rat& q) {
    mpz_class z;
    mpz_cdiv_q(z.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return Rat(z);
}

inline bool rat_is_integer(const Rat& q) { return q.get_den() == 1; }

// Parses "12", "-3", "4.25", ".5", "7/2". Returns nullopt on malformed input.
inline std::optional<Rat> rat_parse(const std::string& text) {
    if (text.empty()) return std::nullopt;
    std::string s = text;
    bool neg = false;
    if (s[0] == '-') { neg = true; s = s.substr(1); }
    if (s.empty()) return std::nullopt;

    auto all_digits = [](const std::string& t) {
        if (t.empty()) return false;
        for (char c : t)
            if (c < '0' || c > '9') return false;
        return true;
    };

    Rat out;
    auto slash = s.find('/');
    auto dot = s.find('.');
    if (slash != std::string::npos) {
        std::string n = s.substr(0, slash), d = s.substr(slash + 1);
        if (!all_digits(n) || !all_digits(d)) return std::nullopt;
        Rat den{mpz_class(d, 10)};
        if (den == 0) return std::nullopt;
        out = Rat(mpz_class(n, 10)) / den;
    } else if (dot != std::string::npos) {
        std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
        if (ip.empty()) ip = "0";
        if (!all_digits(ip) || !all_digits(fp)) return std::nullopt;
        Rat scale = 1;
        for (size_t i = 0; i < fp.size(); ++i) scale *= 10;
        out = Rat(mpz_class(ip)) + Rat(mpz_class(fp.empty() ? "0" : fp)) / scale;
    } else {
        if (!all_digits(s)) return std::nullopt;
        out = Rat(mpz_class(s, 10));
    }
    if (neg) out = -out;
    out.canonicalize();
    return out;
}

inline std::string rat_str(const Rat& q) { return q.get_str(); }

// ── DeltaRat ────────────────────────────────────────────────────────────────

struct DeltaRat {
    Rat r;  // standard part
    Rat d;  // coefficient of the infinitesimal

    DeltaRat() = default;
    DeltaRat(Rat real, Rat delta = 0) : r(std::move(real)), d(std::move(delta)) {}

    DeltaRat operator+(const DeltaRat& o) const { return {r + o.r, d + o.d}; }
    DeltaRat operator-(const DeltaRat& o) const { return {r - o.r, d - o.d}; }
    DeltaRat operator-() const { return {-r, -d}; }
    DeltaRat operator*(const Rat& k) const { return {r * k, d * k}; }

    bool operator==(const DeltaRat& o) const { return r == o.r && d == o.d; }
    bool operator!=(const DeltaRat& o) const { return !(*this == o); }
    bool operator<(const DeltaRat& o) const {
        return r < o.r || (r == o.r && d < o.d);
    }
    bool operator<=(const DeltaRat& o) const { return *this < o || *this == o; }
    bool operator>(const DeltaRat& o) const { return o < *this; }
    bool operator>=(const DeltaRat& o) const { return o <= *this; }

    // Concrete value once a positive rational is chosen for delta.
    Rat eval(const Rat& delta) const { return r + d * delta; }
};

}  // namespace cpsp
