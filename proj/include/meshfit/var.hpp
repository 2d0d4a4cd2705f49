#pragma once

#include "meshfit/tape.hpp"

namespace meshfit {

// Thin expression handle so render/loss code reads like the math it encodes.
struct Var {
  Tape* t = nullptr;
  Node n;
};

inline Var var(Tape& t, Node n) { return Var{&t, n}; }
inline Var cvar(Tape& t, double v) { return Var{&t, t.constant_scalar(v)}; }

inline Var operator+(Var a, Var b) { return {a.t, a.t->add(a.n, b.n)}; }
inline Var operator-(Var a, Var b) { return {a.t, a.t->sub(a.n, b.n)}; }
inline Var operator*(Var a, Var b) { return {a.t, a.t->mul(a.n, b.n)}; }
inline Var operator/(Var a, Var b) { return {a.t, a.t->div(a.n, b.n)}; }
inline Var operator-(Var a) { return {a.t, a.t->neg(a.n)}; }

inline Var operator+(Var a, double c) { return a + cvar(*a.t, c); }
inline Var operator+(double c, Var a) { return cvar(*a.t, c) + a; }
inline Var operator-(Var a, double c) { return a - cvar(*a.t, c); }
inline Var operator-(double c, Var a) { return cvar(*a.t, c) - a; }
inline Var operator*(Var a, double c) { return a * cvar(*a.t, c); }
inline Var operator*(double c, Var a) { return cvar(*a.t, c) * a; }
inline Var operator/(Var a, double c) { return a / cvar(*a.t, c); }
inline Var operator/(double c, Var a) { return cvar(*a.t, c) / a; }

inline Var sqrt(Var a) { return {a.t, a.t->sqrt(a.n)}; }
inline Var square(Var a) { return {a.t, a.t->square(a.n)}; }
inline Var abs(Var a) { return {a.t, a.t->abs(a.n)}; }
inline Var sin(Var a) { return {a.t, a.t->sin(a.n)}; }
inline Var cos(Var a) { return {a.t, a.t->cos(a.n)}; }
inline Var tanh(Var a) { return {a.t, a.t->tanh(a.n)}; }
inline Var sigmoid(Var a) { return {a.t, a.t->sigmoid(a.n)}; }
inline Var softplus(Var a) { return {a.t, a.t->softplus(a.n)}; }
inline Var exp(Var a) { return {a.t, a.t->exp(a.n)}; }
inline Var log(Var a) { return {a.t, a.t->log(a.n)}; }
inline Var clamp(Var a, double lo, double hi) { return {a.t, a.t->clamp(a.n, lo, hi)}; }
inline Var min2(Var a, Var b) { return {a.t, a.t->min2(a.n, b.n)}; }
inline Var max2(Var a, Var b) { return {a.t, a.t->max2(a.n, b.n)}; }
inline Var sum(Var a) { return {a.t, a.t->sum(a.n)}; }
inline Var mean(Var a) { return {a.t, a.t->mean(a.n)}; }
inline Var gather(Var a, std::vector<std::int64_t> idx) {
  return {a.t, a.t->gather(a.n, std::move(idx))};
}

/// Per-component array triple, e.g. vertex coordinates split by axis.
struct Vec3Nodes {
  Node x, y, z;
};

}  // namespace meshfit
