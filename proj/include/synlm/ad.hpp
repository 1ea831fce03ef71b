#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace synlm::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Row = Eigen::Matrix<double, 1, Eigen::Dynamic>;
// (q, k) nonzero when query row q may attend key row k.
using Allowed = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A trainable tensor with its gradient accumulator.
struct Param {
  Mat value;
  Mat grad;
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
};

// Reverse-mode recording of matrix operations. Nodes are appended in
// evaluation order; backward() walks them in reverse.
class Tape {
 public:
  Tape();
  // Distinct for every tape ever constructed in this process.
  uint64_t serial() const { return serial_; }

  Var param(Param& p);
  Var constant(Mat m);

  // Seeds d(out)/d(out) = 1 and accumulates gradients into every Param used.
  void backward(Var out);

  const Mat& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Mat& grad(int id);
  size_t size() const { return nodes_.size(); }

  using Backward = std::function<void(Tape&, int self)>;
  Var push(Mat value, Backward back);

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward back;
    Param* param = nullptr;
  };
  std::vector<Node> nodes_;
  uint64_t serial_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var gelu(Var a);
// Row-wise normalization with gain and bias rows.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Rows of `table` in the order given; indexes may repeat.
Var gather_rows(Var table, const std::vector<int>& ids);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, long first, long count);
// Multi-head attention core on already projected q, k, v. Heads are
// contiguous column blocks. Returns the concatenated head outputs.
Var masked_attention(Var q, Var k, Var v, std::shared_ptr<const Allowed> allowed, int heads);
// Sum over rows with target >= 0 of -log softmax(logits_row)[target].
Var cross_entropy(Var logits, const std::vector<int>& targets);

struct PointerRow {
  int query = 0;
  std::vector<int> candidates;
  int gold = 0;  // index into candidates
};
// Sum over rows of -log softmax_i(h_query^T theta h_{candidates[i]})[gold].
Var pointer_nll(Var h, Var theta, const std::vector<PointerRow>& rows);
Var sum(const std::vector<Var>& scalars);

// Numerically stable helpers shared with the inference code.
double gelu_value(double x);
void softmax_in_place(Eigen::Ref<Row> r);
double log_sum_exp(const Eigen::Ref<const Row>& r);

}  // namespace synlm::ad
