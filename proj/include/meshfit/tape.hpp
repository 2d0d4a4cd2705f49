#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace meshfit {

/// Array extents, outermost first. A scalar is shape {1}.
using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);

/// Numpy-style trailing-dimension alignment. Throws on incompatible extents.
Shape broadcast_shape(const Shape& a, const Shape& b);

/// Handle into a Tape. Only valid for the tape that created it.
struct Node {
  std::int32_t id = -1;
  std::uint32_t tape_id = 0;
  bool valid() const { return id >= 0; }
};

/// Adjoints for the requires_grad leaves of one backward pass.
/// Leaves with no path to the loss are present with all-zero adjoints.
class Gradients {
 public:
  const std::vector<double>& at(Node n) const;
  bool contains(Node n) const { return adjoints_.count(n.id) != 0; }
  std::unordered_map<std::int32_t, std::vector<double>> adjoints_;
};

/// Reverse-mode autodiff record over 64-bit real arrays.
///
/// The tape is append-only and topologically ordered by construction: every
/// node's inputs precede it. Forward values are computed eagerly at node
/// creation; backward() walks the record in reverse. A tape is single-writer
/// and not thread-safe; distinct tapes are fully independent.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- leaves and constants ---------------------------------------------
  Node leaf(std::span<const double> values, Shape shape, bool requires_grad = true);
  Node constant(std::span<const double> values, Shape shape);
  Node constant_scalar(double v);

  // -- elementwise, broadcasting both operands --------------------------
  Node add(Node a, Node b);
  Node sub(Node a, Node b);
  Node mul(Node a, Node b);
  Node div(Node a, Node b);  // |denominator| < 1e-12 clamped sign-preserving, counted
  Node min2(Node a, Node b);
  Node max2(Node a, Node b);

  // -- elementwise unary -------------------------------------------------
  Node neg(Node a);
  Node abs(Node a);      // d|x|/dx at 0 := 0
  Node sqrt(Node a);
  Node square(Node a);
  Node sin(Node a);
  Node cos(Node a);
  Node tanh(Node a);
  Node sigmoid(Node a);
  Node softplus(Node a);  // log(1 + e^x), stable at both tails
  Node exp(Node a);
  Node log(Node a);
  Node clamp(Node a, double lo, double hi);  // derivative 1 on [lo, hi] inclusive

  // -- reductions and structure ------------------------------------------
  Node sum(Node a);
  Node mean(Node a);
  /// out[i] = src[idx[i]]; flat indices into src.
  Node gather(Node src, std::vector<std::int64_t> idx);
  /// out[j] = sum of src[i] over i with idx[i] == j; out has `size` entries.
  Node scatter_add(Node src, std::vector<std::int64_t> idx, std::int64_t size);
  Node concat(std::span<const Node> parts);  // flattens, result shape {total}
  Node broadcast_to(Node a, const Shape& shape);
  Node reshape(Node a, Shape shape);  // same data, numel must match

  // -- inspection ----------------------------------------------------------
  const Shape& shape(Node n) const;
  const std::vector<double>& values(Node n) const;
  double value(Node n) const;  // scalar-shaped nodes only
  std::size_t node_count() const;
  int division_guard_count() const { return division_guards_; }

  /// Recomputes all non-leaf forward values in place from the recorded
  /// leaves/constants. Used to assert replay determinism.
  void replay();

  /// Chain rule in reverse topological order from a scalar-shaped loss.
  /// Does not mutate the tape; may be called repeatedly.
  Gradients backward(Node loss) const;

 private:
  friend struct TapeDetail;
  struct Record;
  Node push(Record rec);
  const Record& rec(Node n) const;
  void check(Node n) const;

  std::vector<Record> records_;
  std::uint32_t tape_id_ = 0;
  mutable int division_guards_ = 0;
};

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|), with
/// numeric gradients by central differences of step `step`. Coordinates in
/// `exclude` are skipped (caller's device for kink-adjacent points).
double grad_check(const std::function<Node(Tape&, Node)>& f,
                  std::span<const double> x0, const Shape& shape, double step,
                  std::span<const std::size_t> exclude = {});

}  // namespace meshfit
