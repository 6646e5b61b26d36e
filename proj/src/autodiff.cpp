#include "trajloom/autodiff.hpp"

#include <algorithm>

#include <cmath>
#include <numbers>

namespace trajloom::ad {

const Mat& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw ShapeError("scalar: expected 1x1, got " + shape_str(v.rows(), v.cols()));
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Mat value) { return push(Node{std::move(value), Mat(), nullptr, true}); }
Var Tape::constant(Mat value) { return push(Node{std::move(value), Mat(), nullptr, false}); }
Var Tape::scalar_constant(double v) { return constant(Mat::Constant(1, 1, v)); }

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward rule) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(rule));
}

Var Tape::record(Mat value, std::span<const Var> parents, Backward rule) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape_ != this) throw Error("autodiff: operand recorded on a different tape");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  return push(Node{std::move(value), Mat(), needs ? std::move(rule) : nullptr, needs});
}

void Tape::accumulate(const Var& v, const Mat& adjoint) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.adjoint.size() == 0)
    n.adjoint = adjoint;
  else
    n.adjoint += adjoint;
}

std::vector<Mat> Tape::gradient(const Var& output, std::span<const Var> wrt) {
  if (output.tape_ != this) throw Error("gradient: output recorded on a different tape");
  const Mat& out = nodes_[output.id_].value;
  if (out.size() != 1) throw ShapeError("gradient: output must be 1x1, got " + shape_str(out.rows(), out.cols()));
  for (Node& n : nodes_) n.adjoint.resize(0, 0);
  accumulate(output, Mat::Ones(1, 1));
  for (int id = output.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.rule || n.adjoint.size() == 0) continue;
    const Mat adj = n.adjoint;  // rule may append nothing, but keep a stable copy
    n.rule(*this, adj);
  }
  std::vector<Mat> grads;
  grads.reserve(wrt.size());
  for (const Var& w : wrt) {
    const Node& n = nodes_[w.id_];
    grads.push_back(n.adjoint.size() ? n.adjoint : Mat::Zero(n.value.rows(), n.value.cols()));
  }
  return grads;
}

namespace {

void require_same(std::string_view op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Mat out = a.value().unaryExpr(f);
  return a.tape().record(std::move(out), {a}, [a, dfdx](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * t.value(a).unaryExpr(dfdx).array()).matrix());
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  Mat out = (a.value().array() * b.value().array()).matrix();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * t.value(b).array()).matrix());
    t.accumulate(b, (g.array() * t.value(a).array()).matrix());
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  return a.tape().record(a.value() * c, {a}, [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); });
}

Var shift(const Var& a, double c) {
  Mat out = (a.value().array() + c).matrix();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

Var scalar_mul(const Var& s, const Var& a) {
  if (s.value().size() != 1)
    throw ShapeError("scalar_mul: scale must be 1x1, got " + shape_str(s.rows(), s.cols()));
  const double sv = s.value()(0, 0);
  return a.tape().record(a.value() * sv, {s, a}, [s, a](Tape& t, const Mat& g) {
    t.accumulate(s, Mat::Constant(1, 1, (g.array() * t.value(a).array()).sum()));
    t.accumulate(a, g * t.value(s)(0, 0));
  });
}

Var add_rowwise(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_rowwise: " + shape_str(a.rows(), a.cols()) + " + " + shape_str(row.rows(), row.cols()));
  Mat out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
  Mat out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var affine(const Var& x, const Var& weight, const Var& bias) { return add_rowwise(matmul(x, weight), bias); }

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_scalar, [](double x) {
    const double y = sigmoid_scalar(x);
    return y * (1.0 - y);
  });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }, sigmoid_scalar);
}

Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x) {
        const double u = k * (x + c * x * x * x);
        const double th = std::tanh(u);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * k * (1.0 + 3.0 * c * x * x);
      });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var abs(const Var& a) {
  return unary(a, [](double x) { return std::abs(x); }, [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var huber(const Var& a, double delta) {
  return unary(
      a,
      [delta](double x) {
        const double ax = std::abs(x);
        return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
      },
      [delta](double x) { return std::clamp(x, -delta, delta); });
}

Var sum(const Var& a) {
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(Mat::Constant(1, 1, a.value().sum()), {a}, [a, r, c](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var weighted_sum(const Var& a, const Mat& weights) {
  if (weights.rows() != a.rows() || weights.cols() != a.cols())
    throw ShapeError("weighted_sum: " + shape_str(a.rows(), a.cols()) + " vs weights " +
                     shape_str(weights.rows(), weights.cols()));
  const double v = (a.value().array() * weights.array()).sum();
  return a.tape().record(Mat::Constant(1, 1, v), {a}, [a, weights](Tape& t, const Mat& g) {
    t.accumulate(a, weights * g(0, 0));
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  const Index r = a.rows(), c = a.cols();
  if (rows * cols != r * c)
    throw ShapeError("reshape: " + shape_str(r, c) + " -> " + shape_str(rows, cols));
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return a.tape().record(std::move(out), {a}, [a, r, c](Tape& t, const Mat& g) {
    t.accumulate(a, Eigen::Map<const Mat>(g.data(), r, c));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row count " + std::to_string(p.rows()) + " vs " + std::to_string(rows));
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [keep, offsets](Tape& t, const Mat& g) {
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (t.requires_grad(keep[i])) t.accumulate(keep[i], g.middleCols(offsets[i], keep[i].cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column count " + std::to_string(p.cols()) + " vs " + std::to_string(cols));
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [keep, offsets](Tape& t, const Mat& g) {
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (t.requires_grad(keep[i])) t.accumulate(keep[i], g.middleRows(offsets[i], keep[i].rows()));
  });
}

Var slice(const Var& a, Index row, Index rows, Index col, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols())
    throw ShapeError("slice: block (" + std::to_string(row) + "," + std::to_string(col) + ")+" + shape_str(rows, cols) +
                     " outside " + shape_str(a.rows(), a.cols()));
  Mat out = a.value().block(row, col, rows, cols);
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(out), {a}, [a, row, col, r, c](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(r, c);
    full.block(row, col, g.rows(), g.cols()) = g;
    t.accumulate(a, full);
  });
}

Var gather_rows(const Var& a, const std::vector<Index>& index) {
  const Mat& v = a.value();
  Mat out(static_cast<Index>(index.size()), v.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Index src = index[i];
    if (src < -1 || src >= v.rows())
      throw ShapeError("gather_rows: index " + std::to_string(src) + " outside " + std::to_string(v.rows()) + " rows");
    if (src < 0)
      out.row(static_cast<Index>(i)).setZero();
    else
      out.row(static_cast<Index>(i)) = v.row(src);
  }
  const Index r = v.rows(), c = v.cols();
  return a.tape().record(std::move(out), {a}, [a, index, r, c](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(r, c);
    for (std::size_t i = 0; i < index.size(); ++i)
      if (index[i] >= 0) full.row(index[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, full);
  });
}

Var stop_gradient(const Var& a) { return a.tape().constant(a.value()); }

}  // namespace trajloom::ad
