#include "gtgrn/numcore/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gtgrn/errors.hpp"

namespace gtgrn::numcore {

// ---------------------------------------------------------------------------
// ParameterSet

ParameterSet::ParameterSet(const ParameterSet& other) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParameterSet::add(std::string name, Matrix init) {
  if (contains(name)) throw ContractError("ParameterSet: duplicate parameter '" + name + "'");
  Matrix grad(init.rows(), init.cols());
  params_.push_back(
      std::make_unique<Parameter>(Parameter{std::move(name), std::move(init), std::move(grad)}));
  return *params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ContractError("ParameterSet: no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const auto& p) { return p->name == name; });
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad = Matrix(p->value.rows(), p->value.cols());
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

bool ParameterSet::values_equal(const ParameterSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (params_[i]->name != other.params_[i]->name) return false;
    if (!(params_[i]->value == other.params_[i]->value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const {
  if (!tape_) throw StateError("Var: unbound handle");
  return tape_->value(id_);
}

Matrix Var::grad() const {
  if (!tape_) throw StateError("Var: unbound handle");
  return tape_->grad_copy(id_);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool tracked = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractError("Tape: operand recorded on a different tape");
    tracked = tracked || nodes_[v.id()].tracked;
  }
  nodes_.push_back(Node{std::move(value), {}, tracked ? std::move(fn) : BackwardFn{}, nullptr,
                        tracked, false});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Matrix Tape::grad_copy(std::size_t id) const {
  const Node& n = nodes_[id];
  if (!n.has_grad) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss recorded on a different tape");
  if (backward_done_) throw StateError("backward: already run on this tape; call reset() first");
  const Node& root = nodes_[loss.id()];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + root.value.shape_string());
  }
  if (!std::isfinite(root.value(0, 0))) throw NumericError("backward: non-finite loss");
  backward_done_ = true;
  grad_ref(loss.id())(0, 0) = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (!n.param || !n.has_grad) continue;
    require_finite(n.grad, "backward");
    Matrix& g = n.param->grad;
    if (!g.same_shape(n.value)) g = Matrix(n.value.rows(), n.value.cols());
    auto dst = g.values();
    auto src = n.grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw StateError("operation on an unbound Var");
  return *a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                         b.shape_string() + " differ");
  }
}

void accumulate(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename F>
Var unary(Var a, F&& f, Tape::BackwardFn fn) {
  Tape& t = tape_of(a);
  Matrix out = t.value(a.id());
  for (double& v : out.values()) v = f(v);
  return t.record(std::move(out), {a}, std::move(fn));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix out = numcore::matmul(t.value(a.id()), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    if (tp.tracked(ia)) accumulate(tp.grad_ref(ia), matmul_nt(g, tp.value(ib)));
    if (tp.tracked(ib)) accumulate(tp.grad_ref(ib), matmul_tn(tp.value(ia), g));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(t.value(a.id()), b.value(), "add");
  Matrix out = t.value(a.id());
  accumulate(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    if (tp.tracked(ia)) accumulate(tp.grad_ref(ia), g);
    if (tp.tracked(ib)) accumulate(tp.grad_ref(ib), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(t.value(a.id()), b.value(), "sub");
  Matrix out = t.value(a.id());
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    if (tp.tracked(ia)) accumulate(tp.grad_ref(ia), g);
    if (tp.tracked(ib)) {
      auto d = tp.grad_ref(ib).values();
      auto gv = g.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gv[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(t.value(a.id()), b.value(), "mul");
  Matrix out = t.value(a.id());
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    auto g = tp.incoming(self).values();
    if (tp.tracked(ia)) {
      auto d = tp.grad_ref(ia).values();
      auto other = tp.value(ib).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
    if (tp.tracked(ib)) {
      auto d = tp.grad_ref(ib).values();
      auto other = tp.value(ia).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return unary(
      a, [s](double v) { return v * s; },
      [ia, s](Tape& tp, std::size_t self) {
        auto d = tp.grad_ref(ia).values();
        auto g = tp.incoming(self).values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * g[i];
      });
}

Var add_scalar(Var a, double s) {
  const std::size_t ia = a.id();
  return unary(
      a, [s](double v) { return v + s; },
      [ia](Tape& tp, std::size_t self) { accumulate(tp.grad_ref(ia), tp.incoming(self)); });
}

Var add_row(Var x, Var row) {
  Tape& t = tape_of(x);
  const Matrix& xv = t.value(x.id());
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("add_row: row " + rv.shape_string() + " does not broadcast over " +
                         xv.shape_string());
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rv(0, c);
  }
  const std::size_t ix = x.id(), ir = row.id();
  return t.record(std::move(out), {x, row}, [ix, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    if (tp.tracked(ix)) accumulate(tp.grad_ref(ix), g);
    if (tp.tracked(ir)) {
      auto d = tp.grad_ref(ir).row(0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gr = g.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) d[c] += gr[c];
      }
    }
  });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  return unary(
      a, [](double v) { return v > 0.0 ? v : 0.0; },
      [ia](Tape& tp, std::size_t self) {
        auto d = tp.grad_ref(ia).values();
        auto g = tp.incoming(self).values();
        auto x = tp.value(ia).values();
        for (std::size_t i = 0; i < d.size(); ++i)
          if (x[i] > 0.0) d[i] += g[i];
      });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  return unary(
      a,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [ia](Tape& tp, std::size_t self) {
        auto d = tp.grad_ref(ia).values();
        auto g = tp.incoming(self).values();
        auto y = tp.value(self).values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  return unary(
      a, [](double v) { return std::exp(v); },
      [ia](Tape& tp, std::size_t self) {
        auto d = tp.grad_ref(ia).values();
        auto g = tp.incoming(self).values();
        auto y = tp.value(self).values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
      });
}

Var square(Var a) {
  const std::size_t ia = a.id();
  return unary(
      a, [](double v) { return v * v; },
      [ia](Tape& tp, std::size_t self) {
        auto d = tp.grad_ref(ia).values();
        auto g = tp.incoming(self).values();
        auto x = tp.value(ia).values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2.0 * x[i] * g[i];
      });
}

Var clamp(Var a, double lo, double hi) {
  const std::size_t ia = a.id();
  return unary(
      a, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [ia, lo, hi](Tape& tp, std::size_t self) {
        auto d = tp.grad_ref(ia).values();
        auto g = tp.incoming(self).values();
        auto x = tp.value(ia).values();
        for (std::size_t i = 0; i < d.size(); ++i)
          if (x[i] >= lo && x[i] <= hi) d[i] += g[i];
      });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : t.value(a.id()).values()) s += v;
  const std::size_t ia = a.id();
  return t.record(Matrix(1, 1, s), {a}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.incoming(self)(0, 0);
    for (double& d : tp.grad_ref(ia).values()) d += g;
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const Matrix& av = t.value(a.id());
  if (av.empty()) throw ContractError("mean: empty operand");
  double s = 0.0;
  for (double v : av.values()) s += v;
  const double inv = 1.0 / static_cast<double>(av.size());
  const std::size_t ia = a.id();
  return t.record(Matrix(1, 1, s * inv), {a}, [ia, inv](Tape& tp, std::size_t self) {
    const double g = tp.incoming(self)(0, 0) * inv;
    for (double& d : tp.grad_ref(ia).values()) d += g;
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  Tape& t = tape_of(a);
  const Matrix& av = t.value(a.id());
  Matrix out(rows.size(), av.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= av.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           av.shape_string());
    }
    std::copy_n(av.row(rows[r]).data(), av.cols(), out.row(r).data());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    Matrix& d = tp.grad_ref(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto dst = d.row(idx[r]);
      auto src = g.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = t.value(a.id());
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row counts differ: " + av.shape_string() + " and " +
                         bv.shape_string());
  }
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row(r).data(), ca, out.row(r).data());
    std::copy_n(bv.row(r).data(), cb, out.row(r).data() + ca);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, ca, cb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    if (tp.tracked(ia)) {
      Matrix& d = tp.grad_ref(ia);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) d(r, c) += g(r, c);
    }
    if (tp.tracked(ib)) {
      Matrix& d = tp.grad_ref(ib);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < cb; ++c) d(r, c) += g(r, ca + c);
    }
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  Matrix out = numcore::softmax_rows(t.value(a.id()));
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.incoming(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad_ref(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      auto dr = d.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = t.value(x.id());
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  const std::size_t width = xv.cols();
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != width || bv.cols() != width) {
    throw DimensionError("layer_norm: gain " + gv.shape_string() + " / bias " +
                         bv.shape_string() + " vs input " + xv.shape_string());
  }
  Matrix normed(xv.rows(), width);
  std::vector<double> inv_std(xv.rows());
  const double w = static_cast<double>(width);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= w;
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= w;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto nr = normed.row(r);
    for (std::size_t c = 0; c < width; ++c) nr[c] = (in[c] - mu) * inv_std[r];
  }
  Matrix out(xv.rows(), width);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = normed(r, c) * gv(0, c) + bv(0, c);
  require_finite(out, "layer_norm");
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& tp,
                                                                             std::size_t self) {
        const Matrix& g = tp.incoming(self);
        const std::size_t rows = g.rows(), cols = g.cols();
        if (tp.tracked(ig)) {
          auto d = tp.grad_ref(ig).row(0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) d[c] += g(r, c) * normed(r, c);
        }
        if (tp.tracked(ib)) {
          auto d = tp.grad_ref(ib).row(0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) d[c] += g(r, c);
        }
        if (tp.tracked(ix)) {
          const Matrix& gain_v = tp.value(ig);
          Matrix& d = tp.grad_ref(ix);
          const double w = static_cast<double>(cols);
          std::vector<double> dn(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              dn[c] = g(r, c) * gain_v(0, c);
              s1 += dn[c];
              s2 += dn[c] * normed(r, c);
            }
            for (std::size_t c = 0; c < cols; ++c)
              d(r, c) += inv_std[r] * (dn[c] - s1 / w - normed(r, c) * s2 / w);
          }
        }
      });
}

Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets) {
  Tape& t = tape_of(logits);
  const Matrix& lv = t.value(logits.id());
  if (targets.size() != lv.rows()) {
    throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) +
                         " targets for logits " + lv.shape_string());
  }
  if (lv.rows() == 0) throw ContractError("cross_entropy_rows: no rows");
  Matrix probs = numcore::softmax_rows(lv);
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] >= lv.cols()) throw DimensionError("cross_entropy_rows: target out of range");
    // log-sum-exp form keeps the loss finite when the target probability underflows.
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += (mx + std::log(z)) - row[targets[r]];
  }
  const double inv = 1.0 / static_cast<double>(lv.rows());
  const std::size_t il = logits.id();
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return t.record(Matrix(1, 1, total * inv), {logits},
                  [il, inv, probs = std::move(probs), tg = std::move(tg)](Tape& tp,
                                                                         std::size_t self) {
                    const double g = tp.incoming(self)(0, 0) * inv;
                    Matrix& d = tp.grad_ref(il);
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      auto dr = d.row(r);
                      auto pr = probs.row(r);
                      for (std::size_t c = 0; c < pr.size(); ++c) dr[c] += g * pr[c];
                      dr[tg[r]] -= g;
                    }
                  });
}

Var bce_with_logits(Var logits, std::span<const double> labels) {
  Tape& t = tape_of(logits);
  const Matrix& lv = t.value(logits.id());
  if (lv.cols() != 1 || lv.rows() != labels.size()) {
    throw DimensionError("bce_with_logits: logits " + lv.shape_string() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("bce_with_logits: no pairs");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = lv(i, 0);
    total += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const double inv = 1.0 / static_cast<double>(labels.size());
  const std::size_t il = logits.id();
  std::vector<double> y(labels.begin(), labels.end());
  return t.record(Matrix(1, 1, total * inv), {logits},
                  [il, inv, y = std::move(y)](Tape& tp, std::size_t self) {
                    const double g = tp.incoming(self)(0, 0) * inv;
                    Matrix& d = tp.grad_ref(il);
                    const Matrix& x = tp.value(il);
                    for (std::size_t i = 0; i < y.size(); ++i) {
                      const double v = x(i, 0);
                      const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                                : std::exp(v) / (1.0 + std::exp(v));
                      d(i, 0) += g * (s - y[i]);
                    }
                  });
}

}  // namespace gtgrn::numcore
