#include "gtgrn/numcore/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gtgrn/errors.hpp"

namespace gtgrn::numcore {

Neighborhoods sequence_neighborhoods(std::size_t num_sequences, std::size_t seq_len,
                                     std::span<const char> key_valid) {
  if (key_valid.size() != num_sequences * seq_len) {
    throw DimensionError("sequence_neighborhoods: " + std::to_string(key_valid.size()) +
                         " flags for " + std::to_string(num_sequences) + " x " +
                         std::to_string(seq_len) + " positions");
  }
  Neighborhoods nb;
  nb.offsets.reserve(num_sequences * seq_len + 1);
  for (std::size_t b = 0; b < num_sequences; ++b) {
    const std::size_t base = b * seq_len;
    for (std::size_t t = 0; t < seq_len; ++t) {
      for (std::size_t s = 0; s < seq_len; ++s)
        if (key_valid[base + s]) nb.indices.push_back(base + s);
      nb.offsets.push_back(nb.indices.size());
    }
  }
  return nb;
}

Var neighborhood_attention(Var q, Var k, Var v, const Neighborhoods& nbrs, std::size_t heads,
                           AttentionWeights* weights_out) {
  if (!q.valid()) throw StateError("neighborhood_attention: unbound Var");
  Tape& t = *q.tape();
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  const std::size_t d = qv.cols();
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("neighborhood_attention: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows()) {
    throw DimensionError("neighborhood_attention: q " + qv.shape_string() + ", k " +
                         kv.shape_string() + ", v " + vv.shape_string());
  }
  if (nbrs.query_count() != qv.rows()) {
    throw DimensionError("neighborhood_attention: " + std::to_string(nbrs.query_count()) +
                         " neighborhoods for " + std::to_string(qv.rows()) + " queries");
  }
  for (std::size_t idx : nbrs.indices)
    if (idx >= kv.rows()) throw DimensionError("neighborhood_attention: key index out of range");

  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t nnz = nbrs.entry_count();
  auto weights = std::make_shared<std::vector<double>>(heads * nnz);
  Matrix out(qv.rows(), d);

  std::vector<double> scores;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dk;
    for (std::size_t i = 0; i < qv.rows(); ++i) {
      const std::size_t beg = nbrs.offsets[i], end = nbrs.offsets[i + 1];
      if (beg == end) continue;
      const double* qi = qv.data() + i * d + c0;
      scores.assign(end - beg, 0.0);
      double mx = -INFINITY;
      for (std::size_t e = beg; e < end; ++e) {
        const double* kj = kv.data() + nbrs.indices[e] * d + c0;
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
        s *= inv_sqrt;
        scores[e - beg] = s;
        mx = std::max(mx, s);
      }
      double total = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        total += s;
      }
      double* oi = out.data() + i * d + c0;
      double* w = weights->data() + h * nnz;
      for (std::size_t e = beg; e < end; ++e) {
        const double we = scores[e - beg] / total;
        w[e] = we;
        const double* vj = vv.data() + nbrs.indices[e] * d + c0;
        for (std::size_t c = 0; c < dk; ++c) oi[c] += we * vj[c];
      }
    }
  }
  require_finite(out, "neighborhood_attention");
  if (weights_out) {
    weights_out->heads = heads;
    weights_out->values = *weights;
  }

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  auto layout = std::make_shared<Neighborhoods>(nbrs);
  return t.record(
      std::move(out), {q, k, v},
      [iq, ik, iv, heads, dk, inv_sqrt, weights, layout](Tape& tp, std::size_t self) {
        const Matrix& g = tp.incoming(self);
        const Matrix& qm = tp.value(iq);
        const Matrix& km = tp.value(ik);
        const Matrix& vm = tp.value(iv);
        const std::size_t d = heads * dk;
        const std::size_t nnz = layout->entry_count();
        Matrix* dq = tp.tracked(iq) ? &tp.grad_ref(iq) : nullptr;
        Matrix* dkm = tp.tracked(ik) ? &tp.grad_ref(ik) : nullptr;
        Matrix* dv = tp.tracked(iv) ? &tp.grad_ref(iv) : nullptr;
        std::vector<double> dw;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dk;
          const double* w = weights->data() + h * nnz;
          for (std::size_t i = 0; i < qm.rows(); ++i) {
            const std::size_t beg = layout->offsets[i], end = layout->offsets[i + 1];
            if (beg == end) continue;
            const double* gi = g.data() + i * d + c0;
            dw.assign(end - beg, 0.0);
            double weighted = 0.0;
            for (std::size_t e = beg; e < end; ++e) {
              const std::size_t j = layout->indices[e];
              const double* vj = vm.data() + j * d + c0;
              double s = 0.0;
              for (std::size_t c = 0; c < dk; ++c) s += gi[c] * vj[c];
              dw[e - beg] = s;
              weighted += w[e] * s;
              if (dv) {
                double* dvj = dv->data() + j * d + c0;
                for (std::size_t c = 0; c < dk; ++c) dvj[c] += w[e] * gi[c];
              }
            }
            if (!dq && !dkm) continue;
            const double* qi = qm.data() + i * d + c0;
            for (std::size_t e = beg; e < end; ++e) {
              const double ds = w[e] * (dw[e - beg] - weighted) * inv_sqrt;
              const std::size_t j = layout->indices[e];
              if (dq) {
                const double* kj = km.data() + j * d + c0;
                double* dqi = dq->data() + i * d + c0;
                for (std::size_t c = 0; c < dk; ++c) dqi[c] += ds * kj[c];
              }
              if (dkm) {
                double* dkj = dkm->data() + j * d + c0;
                for (std::size_t c = 0; c < dk; ++c) dkj[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

}  // namespace gtgrn::numcore
