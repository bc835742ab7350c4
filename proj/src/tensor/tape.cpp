#include "mbssl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mbssl/kernels.hpp"

namespace mbssl {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::hadamard: return "hadamard";
    case OpKind::scale: return "scalar-scale";
    case OpKind::row_mean: return "row-mean";
    case OpKind::segment_mean: return "segment-mean";
    case OpKind::row_concat: return "row-concat";
    case OpKind::col_concat: return "col-concat";
    case OpKind::gather_rows: return "gather-rows";
    case OpKind::leaky_relu: return "leaky-relu";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax: return "softmax";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::inner_product: return "inner-product";
    case OpKind::l2_norm: return "l2-norm";
    case OpKind::square: return "square";
    case OpKind::reduce_sum: return "reduce-sum";
    case OpKind::dropout: return "dropout";
    case OpKind::transpose: return "transpose";
    case OpKind::select_column: return "select-column";
    case OpKind::scale_rows: return "scale-rows";
    case OpKind::row_dot: return "row-dot";
    case OpKind::row_logsumexp: return "row-logsumexp";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("value() on an unbound Var");
  return tape_->value(*this);
}

namespace {

[[noreturn]] void shape_error(OpKind op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " +
                              shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

[[noreturn]] void shape_error(OpKind op, const std::string& what) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + what);
}

void require_arity(OpKind op, std::size_t got, std::size_t want) {
  if (got != want) {
    shape_error(op, "expects " + std::to_string(want) + " inputs, got " + std::to_string(got));
  }
}

// out (+)= op(a) * op(b), dimensions taken from the stored tensors.
void gemm_into(Tensor& out, bool ta, bool tb, const Tensor& a, const Tensor& b, bool accumulate) {
  kernels::GemmArgs g;
  g.trans_a = ta;
  g.trans_b = tb;
  g.m = ta ? a.cols() : a.rows();
  g.k = ta ? a.rows() : a.cols();
  g.n = tb ? b.rows() : b.cols();
  g.a = a.data();
  g.lda = a.cols();
  g.b = b.data();
  g.ldb = b.cols();
  g.c = out.data();
  g.ldc = out.cols();
  g.accumulate = accumulate;
  kernels::gemm(g);
}

// Softmax traversal: for rank <= 1 every element belongs to one group.
struct SoftmaxLayout {
  std::size_t groups, length, group_stride, elem_stride;
};

SoftmaxLayout softmax_layout(const Tensor& t, int axis) {
  if (t.rank() <= 1) return {1, t.size(), 0, 1};
  if (axis == 0) return {t.cols(), t.rows(), 1, t.cols()};
  return {t.rows(), t.cols(), t.cols(), 1};
}

Tensor check_finite(OpKind op, Tensor t) {
  if (!t.all_finite()) throw NonFiniteError(std::string(op_name(op)) + ": produced a non-finite value");
  return t;
}

}  // namespace

Var Tape::parameter(const std::string& name) {
  for (const auto& [leaf_name, id] : leaf_ids_) {
    if (leaf_name == name) return Var(this, id);
  }
  Node node{OpKind::parameter, {}, {}, params_->get(name)};
  node.attrs.name = name;
  nodes_.push_back(std::move(node));
  leaf_ids_.emplace_back(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, {}, {}, std::move(value)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, std::vector<Var> inputs, OpAttrs attrs) {
  if (op == OpKind::parameter || op == OpKind::constant) {
    throw std::invalid_argument("record: leaves are created with parameter() or constant()");
  }
  Node node{op, {}, std::move(attrs), {}};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (!owns(v)) throw std::invalid_argument(std::string(op_name(op)) + ": input from another tape");
    node.inputs.push_back(v.id());
  }
  node.value = check_finite(op, evaluate(node));
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  if (!owns(v)) throw std::invalid_argument("value: Var does not belong to this tape");
  return nodes_[v.id()].value;
}

void Tape::replay() {
  for (auto& node : nodes_) {
    if (node.op == OpKind::parameter) {
      node.value = params_->get(node.attrs.name);
    } else if (node.op != OpKind::constant) {
      node.value = check_finite(node.op, evaluate(node));
    }
  }
}

Tensor Tape::evaluate(const Node& node) const {
  const OpKind op = node.op;
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  const OpAttrs& at = node.attrs;

  switch (op) {
    case OpKind::parameter:
    case OpKind::constant:
      return node.value;

    case OpKind::matmul: {
      require_arity(op, node.inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = at.trans_a ? a.cols() : a.rows();
      const std::size_t ka = at.trans_a ? a.rows() : a.cols();
      const std::size_t kb = at.trans_b ? b.cols() : b.rows();
      const std::size_t n = at.trans_b ? b.rows() : b.cols();
      if (ka != kb) shape_error(op, a, b);
      Tensor out(Shape{m, n});
      gemm_into(out, at.trans_a, at.trans_b, a, b, false);
      return out;
    }

    case OpKind::add:
    case OpKind::subtract:
    case OpKind::hadamard: {
      require_arity(op, node.inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) shape_error(op, a, b);
      Tensor out = a;
      if (op == OpKind::add) {
        kernels::axpy(1.0, b.values(), out.values());
      } else if (op == OpKind::subtract) {
        kernels::axpy(-1.0, b.values(), out.values());
      } else {
        kernels::mul(a.values(), b.values(), out.values());
      }
      return out;
    }

    case OpKind::scale: {
      require_arity(op, node.inputs.size(), 1);
      Tensor out = in(0);
      for (double& v : out.values()) v *= at.scalar;
      return out;
    }

    case OpKind::row_mean: {
      require_arity(op, node.inputs.size(), 1);
      const Tensor& a = in(0);
      if (a.rows() == 0) shape_error(op, "mean of zero rows");
      Tensor out(Shape{1, a.cols()});
      for (std::size_t r = 0; r < a.rows(); ++r) kernels::axpy(1.0, a.row(r), out.values());
      for (double& v : out.values()) v /= static_cast<double>(a.rows());
      return out;
    }

    case OpKind::segment_mean: {
      require_arity(op, node.inputs.size(), 1);
      const Tensor& a = in(0);
      if (at.offsets.empty() || at.offsets.back() != at.indices.size()) {
        shape_error(op, "offsets do not cover the index list");
      }
      const std::size_t groups = at.offsets.size() - 1;
      Tensor out(Shape{groups, a.cols()});
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t begin = at.offsets[g];
        const std::size_t end = at.offsets[g + 1];
        if (end < begin) shape_error(op, "offsets must be non-decreasing");
        if (end == begin) continue;
        auto dst = out.row(g);
        for (std::size_t p = begin; p < end; ++p) {
          if (at.indices[p] >= a.rows()) shape_error(op, "row index out of range");
          kernels::axpy(1.0, a.row(at.indices[p]), dst);
        }
        const double inv = 1.0 / static_cast<double>(end - begin);
        for (double& v : dst) v *= inv;
      }
      return out;
    }

    case OpKind::row_concat:
    case OpKind::col_concat: {
      if (node.inputs.empty()) shape_error(op, "needs at least one input");
      const bool rows_mode = op == OpKind::row_concat;
      const Tensor& first = in(0);
      std::size_t total = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Tensor& t = in(i);
        if (rows_mode ? t.cols() != first.cols() : t.rows() != first.rows()) {
          shape_error(op, first, t);
        }
        total += rows_mode ? t.rows() : t.cols();
      }
      Tensor out = rows_mode ? Tensor(Shape{total, first.cols()}) : Tensor(Shape{first.rows(), total});
      std::size_t offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Tensor& t = in(i);
        if (rows_mode) {
          std::copy(t.values().begin(), t.values().end(), out.data() + offset * out.cols());
          offset += t.rows();
        } else {
          for (std::size_t r = 0; r < t.rows(); ++r) {
            std::copy(t.row(r).begin(), t.row(r).end(), out.row(r).begin() + offset);
          }
          offset += t.cols();
        }
      }
      return out;
    }

    case OpKind::gather_rows: {
      require_arity(op, node.inputs.size(), 1);
      const Tensor& a = in(0);
      Tensor out(Shape{at.indices.size(), a.cols()});
      for (std::size_t i = 0; i < at.indices.size(); ++i) {
        if (at.indices[i] >= a.rows()) shape_error(op, "row index out of range");
        auto src = a.row(at.indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
      }
      return out;
    }

    case OpKind::leaky_relu: {
      require_arity(op, node.inputs.size(), 1);
      Tensor out = in(0);
      for (double& v : out.values()) {
        if (v < 0.0) v *= at.scalar;
      }
      return out;
    }

    case OpKind::tanh: {
      require_arity(op, node.inputs.size(), 1);
      Tensor out = in(0);
      for (double& v : out.values()) v = std::tanh(v);
      return out;
    }

    case OpKind::exp: {
      require_arity(op, node.inputs.size(), 1);
      Tensor out = in(0);
      for (double& v : out.values()) v = std::exp(v);
      return out;
    }

    case OpKind::log: {
      require_arity(op, node.inputs.size(), 1);
      Tensor out = in(0);
      for (double& v : out.values()) {
        if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
        v = std::log(v);
      }
      return out;
    }

    case OpKind::softmax: {
      require_arity(op, node.inputs.size(), 1);
      if (at.axis != 0 && at.axis != 1) shape_error(op, "axis must be 0 or 1");
      Tensor out = in(0);
      const auto lay = softmax_layout(out, at.axis);
      for (std::size_t g = 0; g < lay.groups; ++g) {
        double* base = out.data() + g * lay.group_stride;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < lay.length; ++e) peak = std::max(peak, base[e * lay.elem_stride]);
        double total = 0.0;
        for (std::size_t e = 0; e < lay.length; ++e) {
          double& v = base[e * lay.elem_stride];
          v = std::exp(v - peak);
          total += v;
        }
        for (std::size_t e = 0; e < lay.length; ++e) base[e * lay.elem_stride] /= total;
      }
      return out;
    }

    case OpKind::inner_product: {
      require_arity(op, node.inputs.size(), 2);
      if (!in(0).same_shape(in(1))) shape_error(op, in(0), in(1));
      return Tensor::scalar(kernels::dot(in(0).values(), in(1).values()));
    }

    case OpKind::l2_norm:
      require_arity(op, node.inputs.size(), 1);
      return Tensor::scalar(std::sqrt(squared_norm(in(0))));

    case OpKind::square: {
      require_arity(op, node.inputs.size(), 1);
      Tensor out = in(0);
      kernels::mul(in(0).values(), in(0).values(), out.values());
      return out;
    }

    case OpKind::reduce_sum: {
      require_arity(op, node.inputs.size(), 1);
      double total = 0.0;
      for (double v : in(0).values()) total += v;
      return Tensor::scalar(total);
    }

    case OpKind::dropout: {
      require_arity(op, node.inputs.size(), 1);
      if (!in(0).same_shape(at.mask)) shape_error(op, in(0), at.mask);
      Tensor out = in(0);
      kernels::mul(in(0).values(), at.mask.values(), out.values());
      return out;
    }

    case OpKind::transpose: {
      require_arity(op, node.inputs.size(), 1);
      const Tensor& a = in(0);
      Tensor out(Shape{a.cols(), a.rows()});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
      }
      return out;
    }

    case OpKind::select_column: {
      require_arity(op, node.inputs.size(), 1);
      const Tensor& a = in(0);
      if (at.column >= a.cols()) shape_error(op, "column out of range for " + shape_string(a.shape()));
      Tensor out(Shape{a.rows(), 1});
      for (std::size_t r = 0; r < a.rows(); ++r) out[r] = a(r, at.column);
      return out;
    }

    case OpKind::scale_rows: {
      require_arity(op, node.inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& s = in(1);
      if (s.rank() != 2 || s.rows() != a.rows() || s.cols() != 1) shape_error(op, a, s);
      Tensor out = a;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (double& v : out.row(r)) v *= s[r];
      }
      return out;
    }

    case OpKind::row_dot: {
      require_arity(op, node.inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) shape_error(op, a, b);
      Tensor out(Shape{a.rows(), 1});
      for (std::size_t r = 0; r < a.rows(); ++r) out[r] = kernels::dot(a.row(r), b.row(r));
      return out;
    }

    case OpKind::row_logsumexp: {
      require_arity(op, node.inputs.size(), 1);
      const Tensor& a = in(0);
      const bool masked = at.mask.size() > 0;
      if (masked && !a.same_shape(at.mask)) shape_error(op, a, at.mask);
      Tensor out(Shape{a.rows(), 1});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < a.cols(); ++c) {
          if (!masked || at.mask(r, c) != 0.0) peak = std::max(peak, a(r, c));
        }
        if (!std::isfinite(peak)) shape_error(op, "row " + std::to_string(r) + " admits no entry");
        double total = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
          if (!masked || at.mask(r, c) != 0.0) total += std::exp(a(r, c) - peak);
        }
        out[r] = peak + std::log(total);
      }
      return out;
    }
  }
  throw std::logic_error("unhandled op");
}

void Tape::backward(const Node& node, const Tensor& gout, std::vector<Tensor>& adj,
                    const std::vector<bool>& needed) const {
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  auto want = [&](std::size_t i) { return needed[node.inputs[i]]; };
  auto grad = [&](std::size_t i) -> Tensor& {
    Tensor& g = adj[node.inputs[i]];
    if (g.shape() != in(i).shape()) g = Tensor(in(i).shape());
    return g;
  };
  const OpAttrs& at = node.attrs;

  switch (node.op) {
    case OpKind::parameter:
    case OpKind::constant:
      return;

    case OpKind::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (want(0)) {
        if (!at.trans_a) {
          gemm_into(grad(0), false, !at.trans_b, gout, b, true);
        } else {
          gemm_into(grad(0), at.trans_b, true, b, gout, true);
        }
      }
      if (want(1)) {
        if (!at.trans_b) {
          gemm_into(grad(1), !at.trans_a, false, a, gout, true);
        } else {
          gemm_into(grad(1), true, at.trans_a, gout, a, true);
        }
      }
      return;
    }

    case OpKind::add:
      if (want(0)) kernels::axpy(1.0, gout.values(), grad(0).values());
      if (want(1)) kernels::axpy(1.0, gout.values(), grad(1).values());
      return;

    case OpKind::subtract:
      if (want(0)) kernels::axpy(1.0, gout.values(), grad(0).values());
      if (want(1)) kernels::axpy(-1.0, gout.values(), grad(1).values());
      return;

    case OpKind::hadamard: {
      const std::size_t n = gout.size();
      if (want(0)) {
        Tensor& g = grad(0);
        for (std::size_t i = 0; i < n; ++i) g[i] += gout[i] * in(1)[i];
      }
      if (want(1)) {
        Tensor& g = grad(1);
        for (std::size_t i = 0; i < n; ++i) g[i] += gout[i] * in(0)[i];
      }
      return;
    }

    case OpKind::scale:
      if (want(0)) kernels::axpy(at.scalar, gout.values(), grad(0).values());
      return;

    case OpKind::row_mean: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      const double inv = 1.0 / static_cast<double>(in(0).rows());
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(inv, gout.values(), g.row(r));
      return;
    }

    case OpKind::segment_mean: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t grp = 0; grp + 1 < at.offsets.size(); ++grp) {
        const std::size_t begin = at.offsets[grp];
        const std::size_t end = at.offsets[grp + 1];
        if (end == begin) continue;
        const double inv = 1.0 / static_cast<double>(end - begin);
        for (std::size_t p = begin; p < end; ++p) kernels::axpy(inv, gout.row(grp), g.row(at.indices[p]));
      }
      return;
    }

    case OpKind::row_concat:
    case OpKind::col_concat: {
      const bool rows_mode = node.op == OpKind::row_concat;
      std::size_t offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Tensor& t = in(i);
        if (want(i)) {
          Tensor& g = grad(i);
          for (std::size_t r = 0; r < t.rows(); ++r) {
            auto src = rows_mode ? gout.row(offset + r) : gout.row(r).subspan(offset, t.cols());
            kernels::axpy(1.0, src, g.row(r));
          }
        }
        offset += rows_mode ? t.rows() : t.cols();
      }
      return;
    }

    case OpKind::gather_rows: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t i = 0; i < at.indices.size(); ++i) kernels::axpy(1.0, gout.row(i), g.row(at.indices[i]));
      return;
    }

    case OpKind::leaky_relu: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += x[i] > 0.0 ? gout[i] : at.scalar * gout[i];
      return;
    }

    case OpKind::tanh: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * (1.0 - node.value[i] * node.value[i]);
      return;
    }

    case OpKind::exp: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * node.value[i];
      return;
    }

    case OpKind::log: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] / in(0)[i];
      return;
    }

    case OpKind::softmax: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      const Tensor& y = node.value;
      const auto lay = softmax_layout(y, at.axis);
      for (std::size_t grp = 0; grp < lay.groups; ++grp) {
        const std::size_t base = grp * lay.group_stride;
        double inner = 0.0;
        for (std::size_t e = 0; e < lay.length; ++e) {
          const std::size_t idx = base + e * lay.elem_stride;
          inner += gout[idx] * y[idx];
        }
        for (std::size_t e = 0; e < lay.length; ++e) {
          const std::size_t idx = base + e * lay.elem_stride;
          g[idx] += y[idx] * (gout[idx] - inner);
        }
      }
      return;
    }

    case OpKind::inner_product: {
      const double s = gout.item();
      if (want(0)) kernels::axpy(s, in(1).values(), grad(0).values());
      if (want(1)) kernels::axpy(s, in(0).values(), grad(1).values());
      return;
    }

    case OpKind::l2_norm: {
      if (!want(0)) return;
      const double n = node.value.item();
      if (n == 0.0) {
        grad(0);
        return;
      }
      kernels::axpy(gout.item() / n, in(0).values(), grad(0).values());
      return;
    }

    case OpKind::square: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * in(0)[i] * gout[i];
      return;
    }

    case OpKind::reduce_sum: {
      if (!want(0)) return;
      const double s = gout.item();
      for (double& v : grad(0).values()) v += s;
      return;
    }

    case OpKind::dropout: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * at.mask[i];
      return;
    }

    case OpKind::transpose: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += gout(c, r);
      }
      return;
    }

    case OpKind::select_column: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      for (std::size_t r = 0; r < g.rows(); ++r) g(r, at.column) += gout[r];
      return;
    }

    case OpKind::scale_rows: {
      const Tensor& a = in(0);
      const Tensor& s = in(1);
      if (want(0)) {
        Tensor& g = grad(0);
        for (std::size_t r = 0; r < a.rows(); ++r) kernels::axpy(s[r], gout.row(r), g.row(r));
      }
      if (want(1)) {
        Tensor& g = grad(1);
        for (std::size_t r = 0; r < a.rows(); ++r) g[r] += kernels::dot(gout.row(r), a.row(r));
      }
      return;
    }

    case OpKind::row_dot: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (want(0)) {
        Tensor& g = grad(0);
        for (std::size_t r = 0; r < a.rows(); ++r) kernels::axpy(gout[r], b.row(r), g.row(r));
      }
      if (want(1)) {
        Tensor& g = grad(1);
        for (std::size_t r = 0; r < a.rows(); ++r) kernels::axpy(gout[r], a.row(r), g.row(r));
      }
      return;
    }

    case OpKind::row_logsumexp: {
      if (!want(0)) return;
      Tensor& g = grad(0);
      const Tensor& a = in(0);
      const bool masked = at.mask.size() > 0;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double lse = node.value[r];
        for (std::size_t c = 0; c < a.cols(); ++c) {
          if (!masked || at.mask(r, c) != 0.0) g(r, c) += gout[r] * std::exp(a(r, c) - lse);
        }
      }
      return;
    }
  }
}

NamedGradients Tape::gradients(Var loss) const {
  if (!owns(loss)) throw std::invalid_argument("gradients: loss is not on this tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw std::invalid_argument("gradients: loss must be scalar, got shape " +
                                shape_string(nodes_[loss.id()].value.shape()));
  }
  const std::size_t root = loss.id();
  std::vector<bool> needed(root + 1, false);
  needed[root] = true;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!needed[i]) continue;
    for (std::size_t src : nodes_[i].inputs) needed[src] = true;
  }

  std::vector<Tensor> adj(root + 1);
  adj[root] = Tensor(nodes_[root].value.shape(), 1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!needed[i] || adj[i].size() == 0) continue;
    backward(nodes_[i], adj[i], adj, needed);
    if (nodes_[i].op != OpKind::parameter && i != root) adj[i] = Tensor();
  }

  NamedGradients out;
  for (const auto& [name, id] : leaf_ids_) {
    if (id > root || !needed[id]) continue;
    Tensor g = adj[id].size() == nodes_[id].value.size() ? std::move(adj[id])
                                                         : Tensor(nodes_[id].value.shape());
    out.emplace(name, std::move(g));
  }
  return out;
}

namespace ops {

namespace {
Tape& tape_of(Var v) {
  if (!v.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *v.tape();
}
}  // namespace

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  OpAttrs at;
  at.trans_a = trans_a;
  at.trans_b = trans_b;
  return tape_of(a).record(OpKind::matmul, {a, b}, std::move(at));
}

Var add(Var a, Var b) { return tape_of(a).record(OpKind::add, {a, b}); }
Var subtract(Var a, Var b) { return tape_of(a).record(OpKind::subtract, {a, b}); }
Var hadamard(Var a, Var b) { return tape_of(a).record(OpKind::hadamard, {a, b}); }

Var scale(Var a, double factor) {
  OpAttrs at;
  at.scalar = factor;
  return tape_of(a).record(OpKind::scale, {a}, std::move(at));
}

Var row_mean(Var a) { return tape_of(a).record(OpKind::row_mean, {a}); }

Var segment_mean(Var a, std::vector<std::size_t> offsets, std::vector<std::size_t> indices) {
  OpAttrs at;
  at.offsets = std::move(offsets);
  at.indices = std::move(indices);
  return tape_of(a).record(OpKind::segment_mean, {a}, std::move(at));
}

Var row_concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("row-concat: needs at least one input");
  return tape_of(parts.front()).record(OpKind::row_concat, parts);
}

Var col_concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("col-concat: needs at least one input");
  return tape_of(parts.front()).record(OpKind::col_concat, parts);
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  OpAttrs at;
  at.indices = std::move(indices);
  return tape_of(a).record(OpKind::gather_rows, {a}, std::move(at));
}

Var leaky_relu(Var a, double slope) {
  OpAttrs at;
  at.scalar = slope;
  return tape_of(a).record(OpKind::leaky_relu, {a}, std::move(at));
}

Var tanh(Var a) { return tape_of(a).record(OpKind::tanh, {a}); }

Var softmax(Var a, int axis) {
  OpAttrs at;
  at.axis = axis;
  return tape_of(a).record(OpKind::softmax, {a}, std::move(at));
}

Var exp(Var a) { return tape_of(a).record(OpKind::exp, {a}); }
Var log(Var a) { return tape_of(a).record(OpKind::log, {a}); }
Var inner_product(Var a, Var b) { return tape_of(a).record(OpKind::inner_product, {a, b}); }
Var l2_norm(Var a) { return tape_of(a).record(OpKind::l2_norm, {a}); }
Var square(Var a) { return tape_of(a).record(OpKind::square, {a}); }
Var reduce_sum(Var a) { return tape_of(a).record(OpKind::reduce_sum, {a}); }

Var dropout(Var a, Tensor mask) {
  OpAttrs at;
  at.mask = std::move(mask);
  return tape_of(a).record(OpKind::dropout, {a}, std::move(at));
}

Var transpose(Var a) { return tape_of(a).record(OpKind::transpose, {a}); }

Var select_column(Var a, std::size_t column) {
  OpAttrs at;
  at.column = column;
  return tape_of(a).record(OpKind::select_column, {a}, std::move(at));
}

Var scale_rows(Var a, Var s) { return tape_of(a).record(OpKind::scale_rows, {a, s}); }
Var row_dot(Var a, Var b) { return tape_of(a).record(OpKind::row_dot, {a, b}); }

Var row_logsumexp(Var a, Tensor mask) {
  OpAttrs at;
  at.mask = std::move(mask);
  return tape_of(a).record(OpKind::row_logsumexp, {a}, std::move(at));
}

Var sum(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("sum: needs at least one input");
  Var acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return acc;
}

Var mean(const std::vector<Var>& parts) {
  if (parts.size() == 1) return parts.front();
  return scale(sum(parts), 1.0 / static_cast<double>(parts.size()));
}

}  // namespace ops

FiniteDifferenceReport finite_difference_check(Tape& tape, Var loss, double step, double tolerance) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  const NamedGradients analytic = tape.gradients(loss);
  ParameterStore& params = tape.parameters();

  FiniteDifferenceReport report;
  report.pass = true;
  for (const auto& [name, grad] : analytic) {
    Tensor& p = params.get(name);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double original = p[i];
      p[i] = original + step;
      tape.replay();
      const double up = tape.value(loss).item();
      p[i] = original - step;
      tape.replay();
      const double down = tape.value(loss).item();
      p[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
    }
    report.max_relative_error[name] = worst;
    report.worst = std::max(report.worst, worst);
    if (!(worst < tolerance)) report.pass = false;
  }
  tape.replay();
  if (analytic.empty()) report.pass = false;
  return report;
}

}  // namespace mbssl
