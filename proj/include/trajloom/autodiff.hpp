#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "trajloom/core.hpp"

namespace trajloom::ad {

class Tape;

// Handle to one node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Append-only record of primitive applications. Reverse replay of the local
// adjoint rules yields gradients for every differentiable leaf. Nodes that
// do not depend on a differentiable leaf (constants, stop_gradient outputs)
// carry no adjoint rule, so nothing upstream of them receives gradient.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Mat value);
  Var constant(Mat value);
  Var scalar_constant(double v);

  // Records a primitive output. The rule runs only when some parent needs
  // gradient; pass the parents so that can be decided here.
  Var record(Mat value, std::initializer_list<Var> parents, Backward rule);
  Var record(Mat value, std::span<const Var> parents, Backward rule);

  const Mat& value(const Var& v) const { return nodes_[v.id_].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

  // Adds into the adjoint of v; no-op for nodes without gradient.
  void accumulate(const Var& v, const Mat& adjoint);

  // Reverse sweep from a 1x1 output. Returns d(output)/d(wrt[i]); zeros for
  // inputs the output does not depend on.
  std::vector<Mat> gradient(const Var& output, std::span<const Var> wrt);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat adjoint;
    Backward rule;
    bool requires_grad = false;
  };

  Var push(Node node);
  std::deque<Node> nodes_;  // stable addresses: Var::value() references survive later records
};

// ---- primitives -----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var shift(const Var& a, double c);  // a + c
Var scalar_mul(const Var& s, const Var& a);  // s is 1x1
Var add_rowwise(const Var& a, const Var& row);  // a (RxC) + row (1xC)
Var matmul(const Var& a, const Var& b);
Var affine(const Var& x, const Var& weight, const Var& bias);  // x W + b

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var exp(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var huber(const Var& a, double delta);

Var sum(const Var& a);
Var mean(const Var& a);
Var weighted_sum(const Var& a, const Mat& weights);  // sum(w .* a), w constant

Var reshape(const Var& a, Index rows, Index cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice(const Var& a, Index row, Index rows, Index col, Index cols);
// out.row(i) = a.row(index[i]); index -1 yields a zero row.
Var gather_rows(const Var& a, const std::vector<Index>& index);

Var stop_gradient(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator-(const Var& a) { return neg(a); }

}  // namespace trajloom::ad
