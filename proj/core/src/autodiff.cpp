#include "propsched/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "propsched/errors.hpp"

namespace propsched {

Var Tape::push(Matrix value, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  if (record_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(const Matrix& value, int slot) {
  Var v = push(value, nullptr);
  nodes_[v.id].slot = slot;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols != B.rows) throw std::invalid_argument("matmul shape mismatch");
  Matrix C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    double* crow = &C.data[static_cast<std::size_t>(i) * C.cols];
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      const double* brow = &B.data[static_cast<std::size_t>(k) * B.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return push(std::move(C), [a, b](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    Matrix& gA = t.grad(a.id);
    Matrix& gB = t.grad(b.id);
    for (int i = 0; i < A.rows; ++i) {
      const double* grow = &G.data[static_cast<std::size_t>(i) * G.cols];
      for (int k = 0; k < A.cols; ++k) {
        const double* brow = &B.data[static_cast<std::size_t>(k) * B.cols];
        double acc = 0.0;
        for (int j = 0; j < B.cols; ++j) acc += grow[j] * brow[j];
        gA(i, k) += acc;
        const double aik = A(i, k);
        if (aik == 0.0) continue;
        double* gbrow = &gB.data[static_cast<std::size_t>(k) * gB.cols];
        for (int j = 0; j < B.cols; ++j) gbrow[j] += aik * grow[j];
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("add shape mismatch");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return push(std::move(C), [a, b](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
    Matrix& gB = t.grad(b.id);
    for (std::size_t i = 0; i < G.size(); ++i) gB.data[i] += G.data[i];
  });
}

Var Tape::add_row(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (B.rows != 1 || B.cols != A.cols) throw std::invalid_argument("add_row shape mismatch");
  Matrix C = A;
  for (int i = 0; i < C.rows; ++i) {
    for (int j = 0; j < C.cols; ++j) C(i, j) += B(0, j);
  }
  return push(std::move(C), [a, b](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    Matrix& gB = t.grad(b.id);
    for (int i = 0; i < G.rows; ++i) {
      for (int j = 0; j < G.cols; ++j) {
        gA(i, j) += G(i, j);
        gB(0, j) += G(i, j);
      }
    }
  });
}

Var Tape::scale(Var a, double s) {
  Matrix C = value(a);
  for (double& x : C.data) x *= s;
  return push(std::move(C), [a, s](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += s * G.data[i];
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  Matrix C = value(a);
  for (double& x : C.data) x = x > 0.0 ? x : slope * x;
  return push(std::move(C), [a, slope](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    const Matrix& A = t.value(a);
    Matrix& gA = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += (A.data[i] > 0.0 ? 1.0 : slope) * G.data[i];
  });
}

Var Tape::elu(Var a) {
  Matrix C = value(a);
  for (double& x : C.data) x = x > 0.0 ? x : std::expm1(x);
  return push(std::move(C), [a](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    const Matrix& A = t.value(a);
    Matrix& gA = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += (A.data[i] > 0.0 ? 1.0 : std::exp(A.data[i])) * G.data[i];
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  const int rows = value(parts.front()).rows;
  int cols = 0;
  for (Var p : parts) {
    if (value(p).rows != rows) throw std::invalid_argument("concat_cols row mismatch");
    cols += value(p).cols;
  }
  Matrix C(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Matrix& P = value(p);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < P.cols; ++j) C(i, off + j) = P(i, j);
    }
    off += P.cols;
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(std::move(C), [ids](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    int off = 0;
    for (Var p : ids) {
      Matrix& gP = t.grad(p.id);
      for (int i = 0; i < gP.rows; ++i) {
        for (int j = 0; j < gP.cols; ++j) gP(i, j) += G(i, off + j);
      }
      off += gP.cols;
    }
  });
}

Var Tape::concat_rows(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols != B.cols) throw std::invalid_argument("concat_rows column mismatch");
  Matrix C(A.rows + B.rows, A.cols);
  std::copy(A.data.begin(), A.data.end(), C.data.begin());
  std::copy(B.data.begin(), B.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(A.size()));
  return push(std::move(C), [a, b](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    Matrix& gB = t.grad(b.id);
    for (std::size_t i = 0; i < gA.size(); ++i) gA.data[i] += G.data[i];
    for (std::size_t i = 0; i < gB.size(); ++i) gB.data[i] += G.data[gA.size() + i];
  });
}

Var Tape::gather_rows(Var a, std::span<const int> index) {
  const Matrix& A = value(a);
  Matrix C(static_cast<int>(index.size()), A.cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const double* src = &A.data[static_cast<std::size_t>(index[r]) * A.cols];
    double* dst = &C.data[r * A.cols];
    for (int j = 0; j < A.cols; ++j) dst[j] = src[j];
  }
  return push(std::move(C), [a, index](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    for (std::size_t r = 0; r < index.size(); ++r) {
      const double* src = &G.data[r * G.cols];
      double* dst = &gA.data[static_cast<std::size_t>(index[r]) * gA.cols];
      for (int j = 0; j < G.cols; ++j) dst[j] += src[j];
    }
  });
}

Var Tape::row_scale(Var a, Var s) {
  const Matrix& A = value(a);
  const Matrix& S = value(s);
  if (S.cols != 1 || S.rows != A.rows) throw std::invalid_argument("row_scale shape mismatch");
  Matrix C = A;
  for (int i = 0; i < C.rows; ++i) {
    for (int j = 0; j < C.cols; ++j) C(i, j) *= S(i, 0);
  }
  return push(std::move(C), [a, s](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    const Matrix& A = t.value(a);
    const Matrix& S = t.value(s);
    Matrix& gA = t.grad(a.id);
    Matrix& gS = t.grad(s.id);
    for (int i = 0; i < G.rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < G.cols; ++j) {
        gA(i, j) += S(i, 0) * G(i, j);
        acc += A(i, j) * G(i, j);
      }
      gS(i, 0) += acc;
    }
  });
}

Var Tape::segment_softmax(Var a, const Segments& seg) {
  const Matrix& A = value(a);
  if (A.cols != 1) throw std::invalid_argument("segment_softmax expects a column vector");
  Matrix C(A.rows, 1);
  for (int s = 0; s < seg.count(); ++s) {
    const int lo = seg.offsets[s], hi = seg.offsets[s + 1];
    if (lo == hi) continue;
    double m = A(lo, 0);
    for (int e = lo + 1; e < hi; ++e) m = std::max(m, A(e, 0));
    double z = 0.0;
    for (int e = lo; e < hi; ++e) z += (C(e, 0) = std::exp(A(e, 0) - m));
    for (int e = lo; e < hi; ++e) C(e, 0) /= z;
  }
  const Segments* sp = &seg;
  return push(std::move(C), [a, sp](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    const Matrix& Y = t.nodes_[self].value;
    Matrix& gA = t.grad(a.id);
    for (int s = 0; s < sp->count(); ++s) {
      const int lo = sp->offsets[s], hi = sp->offsets[s + 1];
      double dot = 0.0;
      for (int e = lo; e < hi; ++e) dot += G(e, 0) * Y(e, 0);
      for (int e = lo; e < hi; ++e) gA(e, 0) += Y(e, 0) * (G(e, 0) - dot);
    }
  });
}

Var Tape::segment_sum(Var a, const Segments& seg) {
  const Matrix& A = value(a);
  Matrix C(seg.count(), A.cols);
  for (int s = 0; s < seg.count(); ++s) {
    double* dst = &C.data[static_cast<std::size_t>(s) * C.cols];
    for (int e = seg.offsets[s]; e < seg.offsets[s + 1]; ++e) {
      const double* src = &A.data[static_cast<std::size_t>(e) * A.cols];
      for (int j = 0; j < A.cols; ++j) dst[j] += src[j];
    }
  }
  const Segments* sp = &seg;
  return push(std::move(C), [a, sp](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    for (int s = 0; s < sp->count(); ++s) {
      const double* src = &G.data[static_cast<std::size_t>(s) * G.cols];
      for (int e = sp->offsets[s]; e < sp->offsets[s + 1]; ++e) {
        double* dst = &gA.data[static_cast<std::size_t>(e) * gA.cols];
        for (int j = 0; j < G.cols; ++j) dst[j] += src[j];
      }
    }
  });
}

Var Tape::mean_rows(Var a) {
  const Matrix& A = value(a);
  Matrix C(1, A.cols);
  if (A.rows > 0) {
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) C(0, j) += A(i, j);
    }
    for (double& x : C.data) x /= A.rows;
  }
  return push(std::move(C), [a](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    if (gA.rows == 0) return;
    const double inv = 1.0 / gA.rows;
    for (int i = 0; i < gA.rows; ++i) {
      for (int j = 0; j < gA.cols; ++j) gA(i, j) += G(0, j) * inv;
    }
  });
}

Var Tape::mask(Var a, Matrix m) {
  Matrix C = value(a);
  if (m.size() != C.size()) throw std::invalid_argument("mask shape mismatch");
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= m.data[i];
  return push(std::move(C), [a, m = std::move(m)](Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    Matrix& gA = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += m.data[i] * G.data[i];
  });
}

Var Tape::graph_attention(Var z, Var a_src, Var a_dst, std::span<const int> src, std::span<const int> dst,
                          const Segments& seg, double slope, Matrix* alpha_out) {
  const Matrix& Z = value(z);
  const Matrix& As = value(a_src);
  const Matrix& Ad = value(a_dst);
  const int heads = As.rows, d = As.cols;
  if (Ad.rows != heads || Ad.cols != d || Z.cols != heads * d) throw std::invalid_argument("graph_attention shape mismatch");
  if (src.size() != dst.size()) throw std::invalid_argument("graph_attention edge list mismatch");
  const int n = Z.rows;
  const int E = static_cast<int>(src.size());

  Matrix ss(n, heads), sd(n, heads);
  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < heads; ++h) {
      double a = 0.0, b = 0.0;
      for (int k = 0; k < d; ++k) {
        a += Z(i, h * d + k) * As(h, k);
        b += Z(i, h * d + k) * Ad(h, k);
      }
      ss(i, h) = a;
      sd(i, h) = b;
    }
  }
  Matrix u(E, heads), alpha(E, heads);
  for (int e = 0; e < E; ++e) {
    for (int h = 0; h < heads; ++h) u(e, h) = sd(dst[e], h) + ss(src[e], h);
  }
  for (int s = 0; s < seg.count(); ++s) {
    const int lo = seg.offsets[s], hi = seg.offsets[s + 1];
    if (lo == hi) continue;
    for (int h = 0; h < heads; ++h) {
      double m = -std::numeric_limits<double>::infinity();
      for (int e = lo; e < hi; ++e) {
        const double x = u(e, h) > 0.0 ? u(e, h) : slope * u(e, h);
        alpha(e, h) = x;
        m = std::max(m, x);
      }
      double total = 0.0;
      for (int e = lo; e < hi; ++e) total += (alpha(e, h) = std::exp(alpha(e, h) - m));
      for (int e = lo; e < hi; ++e) alpha(e, h) /= total;
    }
  }
  Matrix out(seg.count(), Z.cols);
  for (int s = 0; s < seg.count(); ++s) {
    double* orow = &out.data[static_cast<std::size_t>(s) * out.cols];
    for (int e = seg.offsets[s]; e < seg.offsets[s + 1]; ++e) {
      const double* zrow = &Z.data[static_cast<std::size_t>(src[e]) * Z.cols];
      for (int h = 0; h < heads; ++h) {
        const double w = alpha(e, h);
        for (int k = h * d; k < (h + 1) * d; ++k) orow[k] += w * zrow[k];
      }
    }
  }
  if (alpha_out) *alpha_out = alpha;

  const Segments* sp = &seg;
  return push(std::move(out), [z, a_src, a_dst, src, dst, sp, slope, u = std::move(u), alpha = std::move(alpha)](
                                  Tape& t, int self) {
    const Matrix& G = t.nodes_[self].grad;
    const Matrix& Z = t.value(z);
    const Matrix& As = t.value(a_src);
    const Matrix& Ad = t.value(a_dst);
    const int heads = As.rows, d = As.cols;
    const int n = Z.rows;
    Matrix& gZ = t.grad(z.id);
    Matrix& gAs = t.grad(a_src.id);
    Matrix& gAd = t.grad(a_dst.id);

    Matrix dss(n, heads), dsd(n, heads);
    for (int s = 0; s < sp->count(); ++s) {
      const int lo = sp->offsets[s], hi = sp->offsets[s + 1];
      const double* grow = &G.data[static_cast<std::size_t>(s) * G.cols];
      std::vector<double> dot(heads, 0.0);
      std::vector<double> da((hi - lo) * heads);
      for (int e = lo; e < hi; ++e) {
        const double* zrow = &Z.data[static_cast<std::size_t>(src[e]) * Z.cols];
        double* gzrow = &gZ.data[static_cast<std::size_t>(src[e]) * gZ.cols];
        for (int h = 0; h < heads; ++h) {
          const double w = alpha(e, h);
          double acc = 0.0;
          for (int k = h * d; k < (h + 1) * d; ++k) {
            acc += grow[k] * zrow[k];
            gzrow[k] += w * grow[k];
          }
          da[(e - lo) * heads + h] = acc;
          dot[h] += w * acc;
        }
      }
      for (int e = lo; e < hi; ++e) {
        for (int h = 0; h < heads; ++h) {
          double du = alpha(e, h) * (da[(e - lo) * heads + h] - dot[h]);
          if (u(e, h) <= 0.0) du *= slope;
          dsd(dst[e], h) += du;
          dss(src[e], h) += du;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      const double* zrow = &Z.data[static_cast<std::size_t>(i) * Z.cols];
      double* gzrow = &gZ.data[static_cast<std::size_t>(i) * gZ.cols];
      for (int h = 0; h < heads; ++h) {
        const double a = dss(i, h), b = dsd(i, h);
        if (a == 0.0 && b == 0.0) continue;
        for (int k = 0; k < d; ++k) {
          gzrow[h * d + k] += a * As(h, k) + b * Ad(h, k);
          gAs(h, k) += a * zrow[h * d + k];
          gAd(h, k) += b * zrow[h * d + k];
        }
      }
    }
  });
}

std::vector<Matrix> Tape::backward(std::span<const std::pair<Var, Matrix>> seeds, int num_slots) {
  if (consumed_) throw TapeConsumed("tape already replayed");
  if (!record_) throw TapeConsumed("tape was recorded without gradients");
  consumed_ = true;
  for (const auto& [v, g] : seeds) {
    Matrix& dst = grad(v.id);
    if (g.size() != dst.size()) throw std::invalid_argument("seed gradient shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += g.data[i];
  }
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, id);
  }
  std::vector<Matrix> out(num_slots);
  for (auto& n : nodes_) {
    if (n.slot < 0) continue;
    Matrix& g = out[n.slot];
    if (g.size() == 0) g = Matrix(n.value.rows, n.value.cols);
    if (n.grad.size() == 0) continue;
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
  }
  return out;
}

}  // namespace propsched
