#include "meshfit/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "meshfit/errors.hpp"

namespace meshfit {

namespace {

std::atomic<std::uint32_t> g_tape_counter{1};

constexpr double kDenominatorFloor = 1e-12;

double guard_den(double b) {
  if (std::fabs(b) < kDenominatorFloor) return b < 0.0 ? -kDenominatorFloor : kDenominatorFloor;
  return b;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Walks an output shape while tracking flat indices into two broadcast
// operands. f(out, ia, ib) is called once per output element in order.
template <class F>
void for_each_broadcast(const Shape& sa, const Shape& sb, const Shape& out, F&& f) {
  const std::int64_t n = numel(out);
  if (sa == sb) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (numel(sa) == 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i, 0, i);
    return;
  }
  if (numel(sb) == 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, 0);
    return;
  }
  const int rank = static_cast<int>(out.size());
  auto aligned_strides = [&](const Shape& s) {
    std::vector<std::int64_t> own(s.size());
    std::int64_t acc = 1;
    for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
      own[d] = acc;
      acc *= s[d];
    }
    std::vector<std::int64_t> st(rank, 0);
    const int off = rank - static_cast<int>(s.size());
    for (int d = 0; d < static_cast<int>(s.size()); ++d) {
      st[off + d] = (s[d] == 1 && out[off + d] != 1) ? 0 : own[d];
    }
    return st;
  };
  const auto stra = aligned_strides(sa);
  const auto strb = aligned_strides(sb);
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0;; ++i) {
    f(i, ia, ib);
    int d = rank - 1;
    for (; d >= 0; --d) {
      ++idx[d];
      ia += stra[d];
      ib += strb[d];
      if (idx[d] < out[d]) break;
      ia -= stra[d] * out[d];
      ib -= strb[d] * out[d];
      idx[d] = 0;
    }
    if (d < 0) break;
  }
}

}  // namespace

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int rank = static_cast<int>(std::max(a.size(), b.size()));
  Shape out(rank, 1);
  for (int d = 0; d < rank; ++d) {
    const std::int64_t ea = d < static_cast<int>(a.size()) ? a[a.size() - 1 - d] : 1;
    const std::int64_t eb = d < static_cast<int>(b.size()) ? b[b.size() - 1 - d] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw std::invalid_argument("broadcast_shape: incompatible extents " + std::to_string(ea) +
                                  " vs " + std::to_string(eb));
    }
    out[rank - 1 - d] = std::max(ea, eb);
  }
  return out;
}

const std::vector<double>& Gradients::at(Node n) const {
  auto it = adjoints_.find(n.id);
  if (it == adjoints_.end()) {
    throw std::invalid_argument("Gradients::at: node is not a requires_grad leaf of this pass");
  }
  return it->second;
}

struct Tape::Record {
  enum class Op : std::uint8_t {
    Leaf, Const,
    Add, Sub, Mul, Div, Min2, Max2,
    Neg, Abs, Sqrt, Square, Sin, Cos, Tanh, Sigmoid, Softplus, Exp, Log, Clamp,
    Sum, Mean, Gather, ScatterAdd, Concat, BroadcastTo, Reshape
  };
  Op op;
  bool needs_grad = false;
  bool rg_leaf = false;
  Shape shape;
  std::vector<double> values;
  std::int32_t a = -1, b = -1;
  std::vector<std::int32_t> parts;
  std::vector<std::int64_t> indices;
  double lo = 0.0, hi = 0.0;
};

struct TapeDetail {
  using Op = Tape::Record::Op;

  static void eval(Tape& t, Tape::Record& r, bool count_guards) {
    auto& rs = t.records_;
    const std::int64_t n = numel(r.shape);
    r.values.resize(static_cast<std::size_t>(n));
    auto va = [&]() -> const std::vector<double>& { return rs[r.a].values; };
    auto vb = [&]() -> const std::vector<double>& { return rs[r.b].values; };
    auto sa = [&]() -> const Shape& { return rs[r.a].shape; };
    auto sb = [&]() -> const Shape& { return rs[r.b].shape; };

    auto binary = [&](auto&& f) {
      const auto& A = va();
      const auto& B = vb();
      for_each_broadcast(sa(), sb(), r.shape,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                           r.values[i] = f(A[ia], B[ib]);
                         });
    };
    auto unary = [&](auto&& f) {
      const auto& A = va();
      for (std::int64_t i = 0; i < n; ++i) r.values[i] = f(A[i]);
    };

    switch (r.op) {
      case Op::Leaf:
      case Op::Const:
        break;  // values already present
      case Op::Add: binary([](double x, double y) { return x + y; }); break;
      case Op::Sub: binary([](double x, double y) { return x - y; }); break;
      case Op::Mul: binary([](double x, double y) { return x * y; }); break;
      case Op::Div: {
        int guards = 0;
        binary([&](double x, double y) {
          if (std::fabs(y) < kDenominatorFloor) ++guards;
          return x / guard_den(y);
        });
        if (count_guards) t.division_guards_ += guards;
        break;
      }
      case Op::Min2: binary([](double x, double y) { return x <= y ? x : y; }); break;
      case Op::Max2: binary([](double x, double y) { return x >= y ? x : y; }); break;
      case Op::Neg: unary([](double x) { return -x; }); break;
      case Op::Abs: unary([](double x) { return std::fabs(x); }); break;
      case Op::Sqrt: unary([](double x) { return std::sqrt(x); }); break;
      case Op::Square: unary([](double x) { return x * x; }); break;
      case Op::Sin: unary([](double x) { return std::sin(x); }); break;
      case Op::Cos: unary([](double x) { return std::cos(x); }); break;
      case Op::Tanh: unary([](double x) { return std::tanh(x); }); break;
      case Op::Sigmoid: unary(stable_sigmoid); break;
      case Op::Softplus: unary(stable_softplus); break;
      case Op::Exp: unary([](double x) { return std::exp(x); }); break;
      case Op::Log: unary([](double x) { return std::log(guard_den(x)); }); break;
      case Op::Clamp: unary([&](double x) { return std::clamp(x, r.lo, r.hi); }); break;
      case Op::Sum: {
        double acc = 0.0;
        for (double x : va()) acc += x;
        r.values[0] = acc;
        break;
      }
      case Op::Mean: {
        double acc = 0.0;
        for (double x : va()) acc += x;
        r.values[0] = acc / static_cast<double>(va().size());
        break;
      }
      case Op::Gather: {
        const auto& A = va();
        for (std::int64_t i = 0; i < n; ++i) r.values[i] = A[r.indices[i]];
        break;
      }
      case Op::ScatterAdd: {
        std::fill(r.values.begin(), r.values.end(), 0.0);
        const auto& A = va();
        for (std::size_t i = 0; i < A.size(); ++i) r.values[r.indices[i]] += A[i];
        break;
      }
      case Op::Concat: {
        std::int64_t off = 0;
        for (auto pid : r.parts) {
          const auto& P = rs[pid].values;
          std::copy(P.begin(), P.end(), r.values.begin() + off);
          off += static_cast<std::int64_t>(P.size());
        }
        break;
      }
      case Op::BroadcastTo: {
        const auto& A = va();
        for_each_broadcast(sa(), r.shape, r.shape,
                           [&](std::int64_t i, std::int64_t ia, std::int64_t) {
                             r.values[i] = A[ia];
                           });
        break;
      }
      case Op::Reshape: {
        r.values = va();
        break;
      }
    }
  }
};

Tape::Tape() : tape_id_(g_tape_counter.fetch_add(1)) {}
Tape::~Tape() = default;

using Op = TapeDetail::Op;

void Tape::check(Node n) const {
  if (n.tape_id != tape_id_ || n.id < 0 || n.id >= static_cast<std::int32_t>(records_.size())) {
    throw std::invalid_argument("Node does not belong to this Tape");
  }
}

const Tape::Record& Tape::rec(Node n) const {
  check(n);
  return records_[n.id];
}

Node Tape::push(Record r) {
  if (numel(r.shape) <= 0) throw std::invalid_argument("Tape: empty shapes are not supported");
  if (r.op != Op::Leaf && r.op != Op::Const) {
    bool ng = false;
    if (r.a >= 0) ng = ng || records_[r.a].needs_grad;
    if (r.b >= 0) ng = ng || records_[r.b].needs_grad;
    for (auto p : r.parts) ng = ng || records_[p].needs_grad;
    r.needs_grad = ng;
  }
  records_.push_back(std::move(r));
  TapeDetail::eval(*this, records_.back(), /*count_guards=*/true);
  return Node{static_cast<std::int32_t>(records_.size() - 1), tape_id_};
}

Node Tape::leaf(std::span<const double> values, Shape shape, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
    throw std::invalid_argument("leaf: value count does not match shape");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("leaf: non-finite input rejected");
  }
  Record r;
  r.op = Op::Leaf;
  r.shape = std::move(shape);
  r.values.assign(values.begin(), values.end());
  r.needs_grad = requires_grad;
  r.rg_leaf = requires_grad;
  return push(std::move(r));
}

Node Tape::constant(std::span<const double> values, Shape shape) {
  if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
    throw std::invalid_argument("constant: value count does not match shape");
  }
  Record r;
  r.op = Op::Const;
  r.shape = std::move(shape);
  r.values.assign(values.begin(), values.end());
  return push(std::move(r));
}

Node Tape::constant_scalar(double v) { return constant(std::span<const double>(&v, 1), Shape{1}); }

#define MESHFIT_BINARY(NAME, OP)                                              \
  Node Tape::NAME(Node a, Node b) {                                           \
    check(a);                                                                 \
    check(b);                                                                 \
    Record r;                                                                 \
    r.op = Op::OP;                                                            \
    r.a = a.id;                                                               \
    r.b = b.id;                                                               \
    r.shape = broadcast_shape(records_[a.id].shape, records_[b.id].shape);    \
    return push(std::move(r));                                                \
  }
MESHFIT_BINARY(add, Add)
MESHFIT_BINARY(sub, Sub)
MESHFIT_BINARY(mul, Mul)
MESHFIT_BINARY(div, Div)
MESHFIT_BINARY(min2, Min2)
MESHFIT_BINARY(max2, Max2)
#undef MESHFIT_BINARY

#define MESHFIT_UNARY(NAME, OP)        \
  Node Tape::NAME(Node a) {            \
    check(a);                          \
    Record r;                          \
    r.op = Op::OP;                     \
    r.a = a.id;                        \
    r.shape = records_[a.id].shape;    \
    return push(std::move(r));         \
  }
MESHFIT_UNARY(neg, Neg)
MESHFIT_UNARY(abs, Abs)
MESHFIT_UNARY(sqrt, Sqrt)
MESHFIT_UNARY(square, Square)
MESHFIT_UNARY(sin, Sin)
MESHFIT_UNARY(cos, Cos)
MESHFIT_UNARY(tanh, Tanh)
MESHFIT_UNARY(sigmoid, Sigmoid)
MESHFIT_UNARY(softplus, Softplus)
MESHFIT_UNARY(exp, Exp)
MESHFIT_UNARY(log, Log)
#undef MESHFIT_UNARY

Node Tape::clamp(Node a, double lo, double hi) {
  check(a);
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
  Record r;
  r.op = Op::Clamp;
  r.a = a.id;
  r.shape = records_[a.id].shape;
  r.lo = lo;
  r.hi = hi;
  return push(std::move(r));
}

Node Tape::sum(Node a) {
  check(a);
  Record r;
  r.op = Op::Sum;
  r.a = a.id;
  r.shape = Shape{1};
  return push(std::move(r));
}

Node Tape::mean(Node a) {
  check(a);
  Record r;
  r.op = Op::Mean;
  r.a = a.id;
  r.shape = Shape{1};
  return push(std::move(r));
}

Node Tape::gather(Node src, std::vector<std::int64_t> idx) {
  check(src);
  if (idx.empty()) throw std::invalid_argument("gather: empty index list");
  const std::int64_t limit = numel(records_[src.id].shape);
  for (auto i : idx) {
    if (i < 0 || i >= limit) throw std::invalid_argument("gather: index out of range");
  }
  Record r;
  r.op = Op::Gather;
  r.a = src.id;
  r.shape = Shape{static_cast<std::int64_t>(idx.size())};
  r.indices = std::move(idx);
  return push(std::move(r));
}

Node Tape::scatter_add(Node src, std::vector<std::int64_t> idx, std::int64_t size) {
  check(src);
  if (size <= 0) throw std::invalid_argument("scatter_add: size must be positive");
  if (idx.size() != records_[src.id].values.size()) {
    throw std::invalid_argument("scatter_add: index count must match source numel");
  }
  for (auto i : idx) {
    if (i < 0 || i >= size) throw std::invalid_argument("scatter_add: index out of range");
  }
  Record r;
  r.op = Op::ScatterAdd;
  r.a = src.id;
  r.shape = Shape{size};
  r.indices = std::move(idx);
  return push(std::move(r));
}

Node Tape::concat(std::span<const Node> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: needs at least one part");
  std::int64_t total = 0;
  Record r;
  r.op = Op::Concat;
  for (Node p : parts) {
    check(p);
    total += numel(records_[p.id].shape);
    r.parts.push_back(p.id);
  }
  r.shape = Shape{total};
  return push(std::move(r));
}

Node Tape::broadcast_to(Node a, const Shape& shape) {
  check(a);
  if (broadcast_shape(records_[a.id].shape, shape) != shape) {
    throw std::invalid_argument("broadcast_to: source shape does not broadcast to target");
  }
  Record r;
  r.op = Op::BroadcastTo;
  r.a = a.id;
  r.shape = shape;
  return push(std::move(r));
}

Node Tape::reshape(Node a, Shape shape) {
  check(a);
  if (numel(shape) != numel(records_[a.id].shape)) {
    throw std::invalid_argument("reshape: numel mismatch");
  }
  Record r;
  r.op = Op::Reshape;
  r.a = a.id;
  r.shape = std::move(shape);
  return push(std::move(r));
}

std::size_t Tape::node_count() const { return records_.size(); }

const Shape& Tape::shape(Node n) const { return rec(n).shape; }
const std::vector<double>& Tape::values(Node n) const { return rec(n).values; }

double Tape::value(Node n) const {
  const auto& r = rec(n);
  if (r.values.size() != 1) throw std::invalid_argument("value: node is not scalar-shaped");
  return r.values[0];
}

void Tape::replay() {
  for (auto& r : records_) {
    if (r.op == Op::Leaf || r.op == Op::Const) continue;
    TapeDetail::eval(*this, r, /*count_guards=*/false);
  }
}

Gradients Tape::backward(Node loss) const {
  check(loss);
  const auto& lr = records_[loss.id];
  if (numel(lr.shape) != 1) {
    throw std::invalid_argument("backward: loss must be scalar-shaped");
  }

  std::vector<std::vector<double>> adj(records_.size());
  auto touch = [&](std::int32_t id) -> std::vector<double>& {
    auto& a = adj[id];
    if (a.empty()) a.assign(records_[id].values.size(), 0.0);
    return a;
  };
  touch(loss.id)[0] = 1.0;

  for (std::int32_t id = loss.id; id >= 0; --id) {
    const Record& r = records_[id];
    if (!r.needs_grad || adj[id].empty()) continue;
    const auto& g = adj[id];

    auto grad_a = [&]() -> std::vector<double>& { return touch(r.a); };
    auto grad_b = [&]() -> std::vector<double>& { return touch(r.b); };
    const bool need_a = r.a >= 0 && records_[r.a].needs_grad;
    const bool need_b = r.b >= 0 && records_[r.b].needs_grad;

    auto binary = [&](auto&& fa, auto&& fb) {
      const auto& A = records_[r.a].values;
      const auto& B = records_[r.b].values;
      std::vector<double>* ga = need_a ? &grad_a() : nullptr;
      std::vector<double>* gb = need_b ? &grad_b() : nullptr;
      for_each_broadcast(records_[r.a].shape, records_[r.b].shape, r.shape,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                           if (ga) (*ga)[ia] += fa(g[i], A[ia], B[ib]);
                           if (gb) (*gb)[ib] += fb(g[i], A[ia], B[ib]);
                         });
    };
    auto unary = [&](auto&& fa) {
      if (!need_a) return;
      const auto& A = records_[r.a].values;
      auto& ga = grad_a();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += fa(g[i], A[i], r.values[i]);
    };

    switch (r.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Add:
        binary([](double gi, double, double) { return gi; },
               [](double gi, double, double) { return gi; });
        break;
      case Op::Sub:
        binary([](double gi, double, double) { return gi; },
               [](double gi, double, double) { return -gi; });
        break;
      case Op::Mul:
        binary([](double gi, double, double y) { return gi * y; },
               [](double gi, double x, double) { return gi * x; });
        break;
      case Op::Div:
        binary([](double gi, double, double y) { return gi / guard_den(y); },
               [](double gi, double x, double y) {
                 const double d = guard_den(y);
                 return -gi * x / (d * d);
               });
        break;
      case Op::Min2:
        binary([](double gi, double x, double y) { return x <= y ? gi : 0.0; },
               [](double gi, double x, double y) { return x <= y ? 0.0 : gi; });
        break;
      case Op::Max2:
        binary([](double gi, double x, double y) { return x >= y ? gi : 0.0; },
               [](double gi, double x, double y) { return x >= y ? 0.0 : gi; });
        break;
      case Op::Neg: unary([](double gi, double, double) { return -gi; }); break;
      case Op::Abs:
        unary([](double gi, double x, double) {
          return x > 0.0 ? gi : (x < 0.0 ? -gi : 0.0);
        });
        break;
      case Op::Sqrt: unary([](double gi, double, double o) { return gi / (2.0 * o); }); break;
      case Op::Square: unary([](double gi, double x, double) { return 2.0 * x * gi; }); break;
      case Op::Sin: unary([](double gi, double x, double) { return gi * std::cos(x); }); break;
      case Op::Cos: unary([](double gi, double x, double) { return -gi * std::sin(x); }); break;
      case Op::Tanh: unary([](double gi, double, double o) { return gi * (1.0 - o * o); }); break;
      case Op::Sigmoid: unary([](double gi, double, double o) { return gi * o * (1.0 - o); }); break;
      case Op::Softplus:
        unary([](double gi, double x, double) { return gi * stable_sigmoid(x); });
        break;
      case Op::Exp: unary([](double gi, double, double o) { return gi * o; }); break;
      case Op::Log: unary([](double gi, double x, double) { return gi / guard_den(x); }); break;
      case Op::Clamp:
        unary([&](double gi, double x, double) {
          return (x >= r.lo && x <= r.hi) ? gi : 0.0;
        });
        break;
      case Op::Sum: {
        if (!need_a) break;
        auto& ga = grad_a();
        for (auto& v : ga) v += g[0];
        break;
      }
      case Op::Mean: {
        if (!need_a) break;
        auto& ga = grad_a();
        const double s = g[0] / static_cast<double>(ga.size());
        for (auto& v : ga) v += s;
        break;
      }
      case Op::Gather: {
        if (!need_a) break;
        auto& ga = grad_a();
        for (std::size_t i = 0; i < g.size(); ++i) ga[r.indices[i]] += g[i];
        break;
      }
      case Op::ScatterAdd: {
        if (!need_a) break;
        auto& ga = grad_a();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[r.indices[i]];
        break;
      }
      case Op::Concat: {
        std::int64_t off = 0;
        for (auto pid : r.parts) {
          const auto sz = static_cast<std::int64_t>(records_[pid].values.size());
          if (records_[pid].needs_grad) {
            auto& gp = touch(pid);
            for (std::int64_t i = 0; i < sz; ++i) gp[i] += g[off + i];
          }
          off += sz;
        }
        break;
      }
      case Op::BroadcastTo: {
        if (!need_a) break;
        auto& ga = grad_a();
        for_each_broadcast(records_[r.a].shape, r.shape, r.shape,
                           [&](std::int64_t i, std::int64_t ia, std::int64_t) {
                             ga[ia] += g[i];
                           });
        break;
      }
      case Op::Reshape: {
        if (!need_a) break;
        auto& ga = grad_a();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
    }
  }

  Gradients out;
  for (std::int32_t id = 0; id < static_cast<std::int32_t>(records_.size()); ++id) {
    const Record& r = records_[id];
    if (!r.rg_leaf) continue;
    if (adj[id].empty()) {
      out.adjoints_.emplace(id, std::vector<double>(r.values.size(), 0.0));
    } else {
      out.adjoints_.emplace(id, std::move(adj[id]));
    }
  }
  return out;
}

double grad_check(const std::function<Node(Tape&, Node)>& f,
                  std::span<const double> x0, const Shape& shape, double step,
                  std::span<const std::size_t> exclude) {
  Tape tape;
  Node x = tape.leaf(x0, shape, true);
  Node loss = f(tape, x);
  Gradients grads = tape.backward(loss);
  const auto& analytic = grads.at(x);

  auto eval_at = [&](std::span<const double> xs) {
    Tape t;
    Node xn = t.leaf(xs, shape, false);
    return t.value(f(t, xn));
  };

  std::vector<double> xs(x0.begin(), x0.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (std::find(exclude.begin(), exclude.end(), k) != exclude.end()) continue;
    const double keep = xs[k];
    xs[k] = keep + step;
    const double fp = eval_at(xs);
    xs[k] = keep - step;
    const double fm = eval_at(xs);
    xs[k] = keep;
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::fabs(analytic[k] - numeric) / std::max(1.0, std::fabs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace meshfit
