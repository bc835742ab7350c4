#pragma once
// Recorded forward computation with reverse-mode gradient extraction.
//
// Every operation evaluates eagerly when recorded and appends a node; the
// node list is therefore topologically ordered. gradients() walks the nodes
// reachable from a scalar loss in reverse and returns one gradient per
// parameter leaf. replay() re-evaluates all nodes from the current parameter
// values, which is what the finite-difference checker perturbs.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mbssl/tensor.hpp"

namespace mbssl {

enum class OpKind {
  parameter,
  constant,
  matmul,
  add,
  subtract,
  hadamard,
  scale,
  row_mean,
  segment_mean,
  row_concat,
  col_concat,
  gather_rows,
  leaky_relu,
  tanh,
  softmax,
  exp,
  log,
  inner_product,
  l2_norm,
  square,
  reduce_sum,
  dropout,
  transpose,
  select_column,
  scale_rows,
  row_dot,
  row_logsumexp,
};

std::string_view op_name(OpKind op);

struct OpAttrs {
  double scalar = 0.0;  // scale factor or leaky-relu slope
  int axis = 0;         // softmax axis
  bool trans_a = false;
  bool trans_b = false;
  std::size_t column = 0;
  std::vector<std::size_t> indices;  // gathered rows, or segment members
  std::vector<std::size_t> offsets;  // segment boundaries into indices, size groups + 1
  Tensor mask;                       // dropout multipliers or logsumexp admissibility (0/1)
  std::string name;                  // parameter leaf name
};

class Tape;

// A forward value overflowed or became NaN.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  explicit Tape(ParameterStore& params) : params_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // The same leaf node is returned for repeated requests of one name.
  Var parameter(const std::string& name);
  Var constant(Tensor value);
  Var record(OpKind op, std::vector<Var> inputs, OpAttrs attrs = {});

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool owns(Var v) const { return v.tape() == this && v.id() < nodes_.size(); }
  ParameterStore& parameters() { return *params_; }
  const ParameterStore& parameters() const { return *params_; }

  NamedGradients gradients(Var loss) const;

  // Re-evaluates every node from the current parameter values.
  void replay();

 private:
  struct Node {
    OpKind op;
    std::vector<std::size_t> inputs;
    OpAttrs attrs;
    Tensor value;
  };

  Tensor evaluate(const Node& node) const;
  void backward(const Node& node, const Tensor& grad_out, std::vector<Tensor>& adjoints,
                const std::vector<bool>& needed) const;

  ParameterStore* params_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> leaf_ids_;
};

// Operation helpers. Shapes are never broadcast implicitly.
namespace ops {

Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
// Mean of all rows -> 1 x cols.
Var row_mean(Var a);
// Output row g is the mean of rows indices[offsets[g] .. offsets[g+1]); empty groups give zeros.
Var segment_mean(Var a, std::vector<std::size_t> offsets, std::vector<std::size_t> indices);
// Vertical stack.
Var row_concat(const std::vector<Var>& parts);
// Horizontal join.
Var col_concat(const std::vector<Var>& parts);
Var gather_rows(Var a, std::vector<std::size_t> indices);
Var leaky_relu(Var a, double slope);
Var tanh(Var a);
Var softmax(Var a, int axis);
Var exp(Var a);
Var log(Var a);
Var inner_product(Var a, Var b);
Var l2_norm(Var a);
Var square(Var a);
Var reduce_sum(Var a);
// mask holds the per-element multipliers (0 or 1/(1-p) for inverted dropout).
Var dropout(Var a, Tensor mask);
Var transpose(Var a);
// Column j as rows x 1.
Var select_column(Var a, std::size_t column);
// Row r of a multiplied by s(r, 0); s is rows x 1.
Var scale_rows(Var a, Var s);
// Per-row inner products -> rows x 1.
Var row_dot(Var a, Var b);
// Per-row log-sum-exp over the entries whose mask value is nonzero -> rows x 1.
// An empty mask tensor admits every entry.
Var row_logsumexp(Var a, Tensor mask = Tensor());

// Elementwise mean of equally shaped values.
Var mean(const std::vector<Var>& parts);
Var sum(const std::vector<Var>& parts);

}  // namespace ops

struct FiniteDifferenceReport {
  std::map<std::string, double> max_relative_error;
  double worst = 0.0;
  bool pass = false;
};

// Central differences (f(p+h) - f(p-h)) / 2h for every coordinate of every
// parameter reachable from the loss. Relative error uses
// max(|analytic|, |numeric|, 1e-8) as the denominator. The tape is replayed
// back to the unperturbed state before returning.
FiniteDifferenceReport finite_difference_check(Tape& tape, Var loss, double step, double tolerance);

}  // namespace mbssl
