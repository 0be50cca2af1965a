#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "exdial/common.hpp"

namespace exdial {

// Dense double-precision tensor node, rank <= 3 (rank 1 and 2 in practice).
struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  std::size_t numel() const { return value.size(); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 0 : shape[1]; }
};

using Tensor = std::shared_ptr<Node>;

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw NumericError("non-positive tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return shape.empty() ? 0 : n;
}

inline Tensor make_tensor(std::vector<int> shape, bool requires_grad = false) {
  if (shape.size() > 3) throw NumericError("tensor rank > 3");
  auto t = std::make_shared<Node>();
  std::size_t n = shape_numel(shape);
  t->shape = std::move(shape);
  t->value.assign(n, 0.0);
  t->grad.assign(n, 0.0);
  t->requires_grad = requires_grad;
  return t;
}

inline Tensor make_vector(const std::vector<double>& v,
                          bool requires_grad = false) {
  Tensor t = make_tensor({static_cast<int>(v.size())}, requires_grad);
  t->value = v;
  return t;
}

inline void zero_grad(const Tensor& t) {
  std::fill(t->grad.begin(), t->grad.end(), 0.0);
}

inline bool same_shape(const Node& a, const Node& b) {
  return a.shape == b.shape;
}

// Records one forward pass; define-by-run. All ops route through a Tape so
// the backward closures replay in exact reverse order. A non-recording tape
// computes forward values only (inference / dev evaluation).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  // -- elementwise -----------------------------------------------------------

  Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(*a, *b, "add");
    Tensor out = fresh(a->shape, a, b);
    for (std::size_t i = 0; i < out->numel(); ++i)
      out->value[i] = a->value[i] + b->value[i];
    record(out, [a, b, out]() {
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i) b->grad[i] += out->grad[i];
    });
    return out;
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(*a, *b, "sub");
    Tensor out = fresh(a->shape, a, b);
    for (std::size_t i = 0; i < out->numel(); ++i)
      out->value[i] = a->value[i] - b->value[i];
    record(out, [a, b, out]() {
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i) b->grad[i] -= out->grad[i];
    });
    return out;
  }

  // Hadamard product.
  Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(*a, *b, "mul");
    Tensor out = fresh(a->shape, a, b);
    for (std::size_t i = 0; i < out->numel(); ++i)
      out->value[i] = a->value[i] * b->value[i];
    record(out, [a, b, out]() {
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i)
          a->grad[i] += out->grad[i] * b->value[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i)
          b->grad[i] += out->grad[i] * a->value[i];
    });
    return out;
  }

  Tensor scale(const Tensor& a, double c) {
    Tensor out = fresh(a->shape, a);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] * c;
    record(out, [a, out, c]() {
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->numel(); ++i)
          a->grad[i] += out->grad[i] * c;
    });
    return out;
  }

  Tensor sigmoid(const Tensor& a) {
    Tensor out = fresh(a->shape, a);
    for (std::size_t i = 0; i < out->numel(); ++i) {
      double x = a->value[i];
      out->value[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                             : std::exp(x) / (1.0 + std::exp(x));
    }
    record(out, [a, out]() {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < out->numel(); ++i) {
        double s = out->value[i];
        a->grad[i] += out->grad[i] * s * (1.0 - s);
      }
    });
    return out;
  }

  Tensor tanh(const Tensor& a) {
    Tensor out = fresh(a->shape, a);
    for (std::size_t i = 0; i < out->numel(); ++i)
      out->value[i] = std::tanh(a->value[i]);
    record(out, [a, out]() {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < out->numel(); ++i) {
        double t = out->value[i];
        a->grad[i] += out->grad[i] * (1.0 - t * t);
      }
    });
    return out;
  }

  Tensor relu(const Tensor& a) {
    Tensor out = fresh(a->shape, a);
    for (std::size_t i = 0; i < out->numel(); ++i)
      out->value[i] = a->value[i] > 0 ? a->value[i] : 0.0;
    record(out, [a, out]() {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < out->numel(); ++i)
        if (a->value[i] > 0) a->grad[i] += out->grad[i];
    });
    return out;
  }

  // -- linear algebra --------------------------------------------------------

  // A (m x k) times B, where B is (k x n) or a length-k vector.
  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a->shape.size() != 2) throw NumericError("matmul: A must be rank 2");
    int m = a->shape[0], k = a->shape[1];
    if (b->shape.size() == 1) {
      if (b->shape[0] != k) throw NumericError("matmul: inner dims disagree");
      Tensor out = fresh({m}, a, b);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) acc += arow[j] * b->value[static_cast<std::size_t>(j)];
        out->value[static_cast<std::size_t>(i)] = acc;
      }
      record(out, [a, b, out, m, k]() {
        if (a->requires_grad)
          for (int i = 0; i < m; ++i) {
            double g = out->grad[static_cast<std::size_t>(i)];
            if (g == 0.0) continue;
            double* arow = a->grad.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) arow[j] += g * b->value[static_cast<std::size_t>(j)];
          }
        if (b->requires_grad)
          for (int i = 0; i < m; ++i) {
            double g = out->grad[static_cast<std::size_t>(i)];
            if (g == 0.0) continue;
            const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) b->grad[static_cast<std::size_t>(j)] += g * arow[j];
          }
      });
      return out;
    }
    if (b->shape.size() != 2 || b->shape[0] != k)
      throw NumericError("matmul: inner dims disagree");
    int n = b->shape[1];
    Tensor out = fresh({m, n}, a, b);
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        double av = a->value[static_cast<std::size_t>(i) * k + kk];
        if (av == 0.0) continue;
        const double* brow = b->value.data() + static_cast<std::size_t>(kk) * n;
        double* crow = out->value.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    record(out, [a, b, out, m, k, n]() {
      if (a->requires_grad)  // dA = dC * B^T
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double* crow = out->grad.data() + static_cast<std::size_t>(i) * n;
            const double* brow = b->value.data() + static_cast<std::size_t>(kk) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += crow[j] * brow[j];
            a->grad[static_cast<std::size_t>(i) * k + kk] += acc;
          }
      if (b->requires_grad)  // dB = A^T * dC
        for (int kk = 0; kk < k; ++kk)
          for (int i = 0; i < m; ++i) {
            double av = a->value[static_cast<std::size_t>(i) * k + kk];
            if (av == 0.0) continue;
            const double* crow = out->grad.data() + static_cast<std::size_t>(i) * n;
            double* brow = b->grad.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) brow[j] += av * crow[j];
          }
    });
    return out;
  }

  // -- shape ops (vectors, last axis) ----------------------------------------

  Tensor concat(const Tensor& a, const Tensor& b) {
    if (a->shape.size() != 1 || b->shape.size() != 1)
      throw NumericError("concat: rank-1 operands only");
    int na = a->shape[0], nb = b->shape[0];
    Tensor out = fresh({na + nb}, a, b);
    std::copy(a->value.begin(), a->value.end(), out->value.begin());
    std::copy(b->value.begin(), b->value.end(), out->value.begin() + na);
    record(out, [a, b, out, na, nb]() {
      if (a->requires_grad)
        for (int i = 0; i < na; ++i) a->grad[static_cast<std::size_t>(i)] += out->grad[static_cast<std::size_t>(i)];
      if (b->requires_grad)
        for (int i = 0; i < nb; ++i) b->grad[static_cast<std::size_t>(i)] += out->grad[static_cast<std::size_t>(na + i)];
    });
    return out;
  }

  Tensor slice(const Tensor& a, int start, int len) {
    if (a->shape.size() != 1) throw NumericError("slice: rank-1 operand only");
    if (start < 0 || len <= 0 || start + len > a->shape[0])
      throw NumericError("slice: range out of bounds");
    Tensor out = fresh({len}, a);
    std::copy(a->value.begin() + start, a->value.begin() + start + len,
              out->value.begin());
    record(out, [a, out, start, len]() {
      if (!a->requires_grad) return;
      for (int i = 0; i < len; ++i)
        a->grad[static_cast<std::size_t>(start + i)] += out->grad[static_cast<std::size_t>(i)];
    });
    return out;
  }

  // -- embeddings ------------------------------------------------------------

  Tensor embedding_row(const Tensor& table, int id) {
    if (table->shape.size() != 2) throw NumericError("embedding table must be rank 2");
    int v = table->shape[0], e = table->shape[1];
    if (id < 0 || id >= v) throw NumericError("embedding id out of range");
    Tensor out = fresh({e}, table);
    const double* row = table->value.data() + static_cast<std::size_t>(id) * e;
    std::copy(row, row + e, out->value.begin());
    record(out, [table, out, id, e]() {
      if (!table->requires_grad) return;
      double* row = table->grad.data() + static_cast<std::size_t>(id) * e;
      for (int i = 0; i < e; ++i) row[i] += out->grad[static_cast<std::size_t>(i)];
    });
    return out;
  }

  // Row gather; duplicate ids scatter-add their gradients.
  Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    if (table->shape.size() != 2) throw NumericError("embedding table must be rank 2");
    int v = table->shape[0], e = table->shape[1];
    Tensor out = fresh({static_cast<int>(ids.size()), e}, table);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      int id = ids[r];
      if (id < 0 || id >= v) throw NumericError("embedding id out of range");
      const double* row = table->value.data() + static_cast<std::size_t>(id) * e;
      std::copy(row, row + e, out->value.begin() + r * static_cast<std::size_t>(e));
    }
    record(out, [table, out, ids, e]() {
      if (!table->requires_grad) return;
      for (std::size_t r = 0; r < ids.size(); ++r) {
        double* row = table->grad.data() + static_cast<std::size_t>(ids[r]) * e;
        const double* g = out->grad.data() + r * static_cast<std::size_t>(e);
        for (int i = 0; i < e; ++i) row[i] += g[i];
      }
    });
    return out;
  }

  // -- losses ----------------------------------------------------------------

  // -log softmax(logits)[target], stabilized by max subtraction.
  Tensor softmax_cross_entropy(const Tensor& logits, int target) {
    if (logits->shape.size() != 1)
      throw NumericError("softmax_cross_entropy: logits must be rank 1");
    int n = logits->shape[0];
    if (target < 0 || target >= n)
      throw NumericError("softmax_cross_entropy: target out of range");
    double mx = logits->value[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits->value[static_cast<std::size_t>(i)]);
    double denom = 0.0;
    for (int i = 0; i < n; ++i) denom += std::exp(logits->value[static_cast<std::size_t>(i)] - mx);
    Tensor out = fresh({1}, logits);
    out->value[0] = std::log(denom) - (logits->value[static_cast<std::size_t>(target)] - mx);
    record(out, [logits, out, target, mx, denom, n]() {
      if (!logits->requires_grad) return;
      double g = out->grad[0];
      for (int i = 0; i < n; ++i) {
        double soft = std::exp(logits->value[static_cast<std::size_t>(i)] - mx) / denom;
        logits->grad[static_cast<std::size_t>(i)] += g * (soft - (i == target ? 1.0 : 0.0));
      }
    });
    return out;
  }

  // Inverted dropout: kept units scale by 1/(1-rate); identity at inference.
  Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    if (!training || rate == 0.0) return a;
    double keep = 1.0 - rate;
    std::vector<double> mask(a->numel());
    for (double& m : mask) m = uniform01(rng) >= rate ? 1.0 / keep : 0.0;
    Tensor out = fresh(a->shape, a);
    for (std::size_t i = 0; i < out->numel(); ++i)
      out->value[i] = a->value[i] * mask[i];
    record(out, [a, out, mask = std::move(mask)]() {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < out->numel(); ++i)
        a->grad[i] += out->grad[i] * mask[i];
    });
    return out;
  }

  // Mean of scalar tensors (batch loss).
  Tensor mean_of(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw NumericError("mean_of: empty input");
    bool grad = false;
    for (const Tensor& x : xs) {
      if (x->numel() != 1) throw NumericError("mean_of: scalar inputs only");
      grad = grad || x->requires_grad;
    }
    Tensor out = make_tensor({1}, grad);
    double acc = 0.0;
    for (const Tensor& x : xs) acc += x->value[0];
    double inv = 1.0 / static_cast<double>(xs.size());
    out->value[0] = acc * inv;
    record(out, [xs, out, inv]() {
      for (const Tensor& x : xs)
        if (x->requires_grad) x->grad[0] += out->grad[0] * inv;
    });
    return out;
  }

  // -- backward --------------------------------------------------------------

  // Zeroes the gradients of tensors this tape produced, seeds d(loss)=1 and
  // replays the recorded closures in reverse. Gradients of leaf tensors
  // (parameters) are accumulated, so repeated calls add up.
  void backward(const Tensor& loss) {
    if (loss->numel() != 1) throw NumericError("backward: loss must be scalar");
    if (!recording_) throw NumericError("backward: tape is not recording");
    for (const Tensor& t : produced_) zero_grad(t);
    loss->grad[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  std::size_t op_count() const { return ops_.size(); }

  void reset() {
    ops_.clear();
    produced_.clear();
  }

 private:
  static void require_same_shape(const Node& a, const Node& b, const char* op) {
    if (!same_shape(a, b))
      throw NumericError(std::string(op) + ": shape mismatch");
  }

  template <typename... Ins>
  Tensor fresh(const std::vector<int>& shape, const Ins&... ins) {
    bool grad = (ins->requires_grad || ...);
    return make_tensor(shape, grad);
  }

  void record(const Tensor& out, std::function<void()> fn) {
    if (!recording_ || !out->requires_grad) return;
    produced_.push_back(out);
    ops_.push_back(std::move(fn));
  }

  bool recording_;
  std::vector<std::function<void()>> ops_;
  std::vector<Tensor> produced_;
};

}  // namespace exdial
