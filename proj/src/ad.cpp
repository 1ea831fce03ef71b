#include "synlm/ad.hpp"

#include <cmath>
#include <limits>

#include "synlm/error.hpp"

namespace synlm::ad {

const Mat& Var::value() const { return tape->value(id); }

namespace {
std::atomic<uint64_t> next_serial{1};
}

Tape::Tape() : serial_(next_serial++) {}

Var Tape::push(Mat value, Backward back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
  Var v = push(p.value, nullptr);
  nodes_.back().param = &p;
  return v;
}

Var Tape::constant(Mat m) { return push(std::move(m), nullptr); }

Mat& Tape::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.tape != this || value(out.id).size() != 1) throw ConfigError("backward needs a scalar on this tape");
  grad(out.id)(0, 0) = 1.0;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
    if (n.param) {
      if (n.param->grad.size() == 0) n.param->grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("shape mismatch in ") + what);
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul");
  Mat out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.grad(ia).noalias() += g * t.value(ib).transpose();
    t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ib) += g;
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  const int ia = a.id, ir = row.id;
  return a.tape->push(std::move(out), [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ir) += g.colwise().sum();
  });
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, [ia, s](Tape& t, int self) { t.grad(ia) += t.grad(self) * s; });
}

double gelu_value(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

Var gelu(Var a) {
  Mat out = a.value().unaryExpr([](double x) { return gelu_value(x); });
  const int ia = a.id;
  return a.tape->push(std::move(out), [ia](Tape& t, int self) {
    constexpr double c = 0.7978845608028654;
    const Mat& x = t.value(ia);
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(ia);
    for (long i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double th = std::tanh(c * (v + 0.044715 * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * v * v);
      gx.data()[i] += g.data()[i] * d;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.cols() == x.cols(), "layer_norm");
  const long n = x.rows(), d = x.cols();
  Mat xhat(n, d);
  Eigen::VectorXd inv_std(n);
  const Mat& xv = x.value();
  for (long i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Mat out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(std::move(out), [ix, ig, ib, xhat = std::move(xhat), inv_std](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const auto gain_row = t.value(ig).row(0).array();
    t.grad(ig) += (g.array() * xhat.array()).colwise().sum().matrix();
    t.grad(ib) += g.colwise().sum();
    Mat& gx = t.grad(ix);
    for (long i = 0; i < g.rows(); ++i) {
      Eigen::ArrayXd dxhat = (g.row(i).array() * gain_row).transpose();
      const Eigen::ArrayXd xh = xhat.row(i).array().transpose();
      const double m1 = dxhat.mean();
      const double m2 = (dxhat * xh).mean();
      gx.row(i).array() += ((dxhat - m1 - xh * m2) * inv_std(i)).transpose();
    }
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  const Mat& tv = table.value();
  Mat out(static_cast<long>(ids.size()), tv.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw ConfigError("gather_rows index out of range");
    out.row(static_cast<long>(i)) = tv.row(ids[i]);
  }
  const int it = table.id;
  return table.tape->push(std::move(out), [it, ids](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat& gt = t.grad(it);
    for (size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += g.row(static_cast<long>(i));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_rows of nothing");
  long rows = 0;
  const long cols = parts[0].cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  long r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    ids.push_back(p.id);
  }
  return parts[0].tape->push(std::move(out), [ids](Tape& t, int self) {
    const Mat& g = t.grad(self);
    long r = 0;
    for (int id : ids) {
      const long n = t.value(id).rows();
      t.grad(id) += g.middleRows(r, n);
      r += n;
    }
  });
}

Var slice_cols(Var a, long first, long count) {
  require(first >= 0 && first + count <= a.cols(), "slice_cols");
  const int ia = a.id;
  return a.tape->push(a.value().middleCols(first, count), [ia, first, count](Tape& t, int self) {
    t.grad(ia).middleCols(first, count) += t.grad(self);
  });
}

void softmax_in_place(Eigen::Ref<Row> r) {
  const double m = r.maxCoeff();
  r = (r.array() - m).exp();
  r /= r.sum();
}

double log_sum_exp(const Eigen::Ref<const Row>& r) {
  const double m = r.maxCoeff();
  return m + std::log((r.array() - m).exp().sum());
}

Var masked_attention(Var q, Var k, Var v, std::shared_ptr<const Allowed> allowed, int heads) {
  const long n = q.rows(), d = q.cols();
  require(k.rows() == n && v.rows() == n && k.cols() == d && v.cols() == d, "masked_attention");
  require(allowed->rows() == n && allowed->cols() == n, "masked_attention mask");
  require(heads > 0 && d % heads == 0, "masked_attention heads");
  const long dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(n, d);
  auto probs = std::make_shared<std::vector<Mat>>();
  for (int h = 0; h < heads; ++h) {
    Mat s(n, n);
    s.noalias() = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    s *= sc;
    for (long i = 0; i < n; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (long j = 0; j < n; ++j) {
        if ((*allowed)(i, j)) m = std::max(m, s(i, j));
      }
      double z = 0.0;
      for (long j = 0; j < n; ++j) {
        if ((*allowed)(i, j)) {
          s(i, j) = std::exp(s(i, j) - m);
          z += s(i, j);
        } else {
          s(i, j) = 0.0;
        }
      }
      s.row(i) /= z;
    }
    out.middleCols(h * dh, dh).noalias() = s * v.value().middleCols(h * dh, dh);
    probs->push_back(std::move(s));
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.tape->push(std::move(out), [iq, ik, iv, probs, heads, dh, sc](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (int h = 0; h < heads; ++h) {
      const Mat& p = (*probs)[static_cast<size_t>(h)];
      const auto go = g.middleCols(h * dh, dh);
      t.grad(iv).middleCols(h * dh, dh).noalias() += p.transpose() * go;
      Mat dp(p.rows(), p.cols());
      dp.noalias() = go * t.value(iv).middleCols(h * dh, dh).transpose();
      Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
      Mat ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * sc;
      t.grad(iq).middleCols(h * dh, dh).noalias() += ds * t.value(ik).middleCols(h * dh, dh);
      t.grad(ik).middleCols(h * dh, dh).noalias() += ds.transpose() * t.value(iq).middleCols(h * dh, dh);
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets) {
  const Mat& lv = logits.value();
  require(static_cast<long>(targets.size()) == lv.rows(), "cross_entropy");
  double total = 0.0;
  for (long i = 0; i < lv.rows(); ++i) {
    const int y = targets[static_cast<size_t>(i)];
    if (y < 0) continue;
    if (y >= lv.cols()) throw ConfigError("cross_entropy target out of range");
    total += log_sum_exp(lv.row(i)) - lv(i, y);
  }
  Mat out(1, 1);
  out(0, 0) = total;
  const int il = logits.id;
  return logits.tape->push(std::move(out), [il, targets](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Mat& lv = t.value(il);
    Mat& gl = t.grad(il);
    for (long i = 0; i < lv.rows(); ++i) {
      const int y = targets[static_cast<size_t>(i)];
      if (y < 0) continue;
      Row p = lv.row(i);
      softmax_in_place(p);
      p(y) -= 1.0;
      gl.row(i) += g * p;
    }
  });
}

Var pointer_nll(Var h, Var theta, const std::vector<PointerRow>& rows) {
  const Mat& hv = h.value();
  const Mat& th = theta.value();
  require(th.rows() == hv.cols() && th.cols() == hv.cols(), "pointer_nll");
  double total = 0.0;
  for (const auto& pr : rows) {
    if (pr.candidates.empty()) throw ConfigError("pointer row with no candidates");
    Row u = hv.row(pr.query) * th;
    Row s(static_cast<long>(pr.candidates.size()));
    for (size_t i = 0; i < pr.candidates.size(); ++i) s(static_cast<long>(i)) = u.dot(hv.row(pr.candidates[i]));
    total += log_sum_exp(s) - s(pr.gold);
  }
  Mat out(1, 1);
  out(0, 0) = total;
  const int ih = h.id, it = theta.id;
  return h.tape->push(std::move(out), [ih, it, rows](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Mat& hv = t.value(ih);
    const Mat& th = t.value(it);
    Mat& gh = t.grad(ih);
    Mat& gt = t.grad(it);
    for (const auto& pr : rows) {
      Row u = hv.row(pr.query) * th;
      Row s(static_cast<long>(pr.candidates.size()));
      for (size_t i = 0; i < pr.candidates.size(); ++i) s(static_cast<long>(i)) = u.dot(hv.row(pr.candidates[i]));
      softmax_in_place(s);
      s(pr.gold) -= 1.0;
      s *= g;
      Row du = Row::Zero(hv.cols());
      for (size_t i = 0; i < pr.candidates.size(); ++i) {
        const double ds = s(static_cast<long>(i));
        gh.row(pr.candidates[i]) += ds * u;
        du += ds * hv.row(pr.candidates[i]);
      }
      gh.row(pr.query) += du * th.transpose();
      gt.noalias() += hv.row(pr.query).transpose() * du;
    }
  });
}

Var sum(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw ConfigError("sum of nothing");
  Mat out = Mat::Zero(1, 1);
  std::vector<int> ids;
  for (const auto& s : scalars) {
    require(s.value().size() == 1, "sum");
    out(0, 0) += s.value()(0, 0);
    ids.push_back(s.id);
  }
  return scalars[0].tape->push(std::move(out), [ids](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    for (int id : ids) t.grad(id)(0, 0) += g;
  });
}

}  // namespace synlm::ad
