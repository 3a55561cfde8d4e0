#ifndef PROPSCHED_AUTODIFF_HPP_
#define PROPSCHED_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace propsched {

/// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Contiguous segments over a sorted index: segment s covers [offsets[s], offsets[s+1]).
struct Segments {
  std::vector<int> offsets;
  int count() const { return static_cast<int>(offsets.size()) - 1; }
};

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

/// Record-and-replay reverse-mode tape over a small op vocabulary.
///
/// Parameters enter as leaves tagged with a slot; backward() returns one
/// gradient matrix per slot. A tape can be replayed once.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Matrix value);
  Var parameter(const Matrix& value, int slot);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool recording() const { return record_; }
  bool consumed() const { return consumed_; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (n x m) + row vector b (1 x m) broadcast over rows.
  Var add_row(Var a, Var b);
  Var scale(Var a, double s);
  Var leaky_relu(Var a, double slope);
  Var elu(Var a);
  Var concat_cols(std::span<const Var> parts);
  /// Stacks a on top of b.
  Var concat_rows(Var a, Var b);
  /// `index` must outlive the tape.
  Var gather_rows(Var a, std::span<const int> index);
  /// Row r of a multiplied by column vector s (n x 1) entry r.
  Var row_scale(Var a, Var s);
  /// Softmax of a column vector within each segment. `seg` must outlive the tape.
  Var segment_softmax(Var a, const Segments& seg);
  /// Sums rows of a into `segments` output rows: out[s] = sum of rows in segment s.
  Var segment_sum(Var a, const Segments& seg);
  /// Mean over rows -> 1 x cols.
  Var mean_rows(Var a);
  /// Elementwise product with a fixed mask (inverted dropout).
  Var mask(Var a, Matrix m);

  /// Multi-head graph attention over edges grouped by destination.
  ///
  /// z is N x (heads * d) with head h in columns [h*d, (h+1)*d); a_src and
  /// a_dst are heads x d. For edge e = (src, dst) and head h the score is
  /// LeakyReLU(a_dst[h] . z_h[dst] + a_src[h] . z_h[src]), normalized by a
  /// softmax over the edges entering dst. Output row i, head block h, is the
  /// attention-weighted sum of z_h over the sources of i. `src`, `dst` and
  /// `seg` must outlive the tape; `alpha` (E x heads) receives the weights.
  Var graph_attention(Var z, Var a_src, Var a_dst, std::span<const int> src, std::span<const int> dst,
                      const Segments& seg, double slope, Matrix* alpha = nullptr);

  /// Seeds d(loss)/d(node) and propagates to every parameter slot.
  /// Throws TapeConsumed on a second call.
  std::vector<Matrix> backward(std::span<const std::pair<Var, Matrix>> seeds, int num_slots);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, int)> back;
    int slot = -1;
  };

  Var push(Matrix value, std::function<void(Tape&, int)> back);
  Matrix& grad(int id);

  std::vector<Node> nodes_;
  bool record_;
  bool consumed_ = false;
};

}  // namespace propsched

#endif  // PROPSCHED_AUTODIFF_HPP_
