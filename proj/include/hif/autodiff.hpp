#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hif/tensor.hpp"

namespace hif {

/// Coordinate-list sparse matrix, used for normalized tree adjacencies.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  struct Entry {
    std::size_t r, c;
    double v;
  };
  std::vector<Entry> entries;
};

struct Value {
  int id = -1;
};

/// Reverse-mode computation tape. Nodes are appended in topological order
/// (parents always precede children), so one backward sweep in reverse index
/// order visits each node exactly once.
class Tape {
 public:
  const Tensor& val(Value v) const { return nodes_[check(v)].value; }

  Value constant(Tensor t) { return push(std::move(t), {}, nullptr); }

  /// Leaf with gradient tracking; same mechanics as constant, named for intent.
  Value param(Tensor t) { return push(std::move(t), {}, nullptr); }

  Value add(Value a, Value b) {
    require_same(a, b, "add");
    Tensor out = val(a);
    const auto& bd = val(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
    return push(std::move(out), {a, b}, [](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      t.accumulate(t.nodes_[id].parents[0], g);
      t.accumulate(t.nodes_[id].parents[1], g);
    });
  }

  Value sub(Value a, Value b) {
    require_same(a, b, "sub");
    Tensor out = val(a);
    const auto& bd = val(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
    return push(std::move(out), {a, b}, [](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      t.accumulate(t.nodes_[id].parents[0], g);
      Tensor neg = g;
      for (auto& x : neg.data) x = -x;
      t.accumulate(t.nodes_[id].parents[1], neg);
    });
  }

  Value mul(Value a, Value b) {
    require_same(a, b, "mul");
    Tensor out = val(a);
    const auto& bd = val(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
    return push(std::move(out), {a, b}, [](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      int pa = t.nodes_[id].parents[0].id, pb = t.nodes_[id].parents[1].id;
      Tensor ga = g, gb = g;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] *= t.nodes_[pb].value.data[i];
        gb.data[i] *= t.nodes_[pa].value.data[i];
      }
      t.accumulate({pa}, ga);
      t.accumulate({pb}, gb);
    });
  }

  /// alpha * a + beta (elementwise affine with scalar coefficients).
  Value affine(Value a, double alpha, double beta) {
    Tensor out = val(a);
    for (auto& x : out.data) x = alpha * x + beta;
    return push(std::move(out), {a}, [alpha](Tape& t, int id) {
      Tensor g = t.grad_[id];
      for (auto& x : g.data) x *= alpha;
      t.accumulate(t.nodes_[id].parents[0], g);
    });
  }

  Value scale(Value a, double alpha) { return affine(a, alpha, 0.0); }

  Value relu(Value a) {
    Tensor out = val(a);
    for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
    return push(std::move(out), {a}, [](Tape& t, int id) {
      Tensor g = t.grad_[id];
      const auto& in = t.nodes_[t.nodes_[id].parents[0].id].value.data;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (in[i] <= 0.0) g.data[i] = 0.0;
      }
      t.accumulate(t.nodes_[id].parents[0], g);
    });
  }

  Value sigmoid(Value a) {
    Tensor out = val(a);
    for (auto& x : out.data) x = stable_sigmoid(x);
    return push(std::move(out), {a}, [](Tape& t, int id) {
      Tensor g = t.grad_[id];
      const auto& y = t.nodes_[id].value.data;
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= y[i] * (1.0 - y[i]);
      t.accumulate(t.nodes_[id].parents[0], g);
    });
  }

  Value tanh_(Value a) {
    Tensor out = val(a);
    for (auto& x : out.data) x = std::tanh(x);
    return push(std::move(out), {a}, [](Tape& t, int id) {
      Tensor g = t.grad_[id];
      const auto& y = t.nodes_[id].value.data;
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= 1.0 - y[i] * y[i];
      t.accumulate(t.nodes_[id].parents[0], g);
    });
  }

  /// Numerically stable softmax over a 1-D vector.
  Value softmax(Value a) {
    const Tensor& in = val(a);
    if (in.shape.size() != 1) throw std::invalid_argument("softmax: expects 1-D vector");
    Tensor out = in;
    double mx = *std::max_element(out.data.begin(), out.data.end());
    double sum = 0.0;
    for (auto& x : out.data) {
      // Floor keeps entries strictly positive even when exp underflows.
      x = std::max(std::exp(x - mx), std::numeric_limits<double>::min());
      sum += x;
    }
    for (auto& x : out.data) x /= sum;
    return push(std::move(out), {a}, [](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      const auto& y = t.nodes_[id].value.data;
      double dot = 0.0;
      for (std::size_t i = 0; i < g.data.size(); ++i) dot += g.data[i] * y[i];
      Tensor gi = g;
      for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] = y[i] * (g.data[i] - dot);
      t.accumulate(t.nodes_[id].parents[0], gi);
    });
  }

  /// A[m,k] x B[k,n] -> [m,n].
  Value matmul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.rows()) {
      throw std::invalid_argument("matmul: incompatible shapes " + A.shape_str() + " x " +
                                  B.shape_str());
    }
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A.data[i * k + p];
        if (av == 0.0) continue;
        const double* brow = &B.data[p * n];
        double* orow = &out.data[i * n];
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
    return push(std::move(out), {a, b}, [m, k, n](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      int pa = t.nodes_[id].parents[0].id, pb = t.nodes_[id].parents[1].id;
      const Tensor& A = t.nodes_[pa].value;
      const Tensor& B = t.nodes_[pb].value;
      Tensor ga = Tensor::zeros({m, k});  // G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = g.data[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga.data[i * k + p] += gv * B.data[p * n + j];
        }
      }
      Tensor gb = Tensor::zeros({k, n});  // A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A.data[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb.data[p * n + j] += av * g.data[i * n + j];
        }
      }
      t.accumulate({pa}, ga);
      t.accumulate({pb}, gb);
    });
  }

  /// x[m] * W[m,n] + b[n] -> [n].
  Value dense(Value x, Value w, Value b) {
    const Tensor& X = val(x);
    const Tensor& W = val(w);
    const Tensor& B = val(b);
    if (X.shape.size() != 1 || W.shape.size() != 2 || B.shape.size() != 1 ||
        X.shape[0] != W.rows() || B.shape[0] != W.cols()) {
      throw std::invalid_argument("dense: incompatible shapes");
    }
    const std::size_t m = W.rows(), n = W.cols();
    Tensor out = B;
    for (std::size_t i = 0; i < m; ++i) {
      const double xv = X.data[i];
      if (xv == 0.0) continue;
      const double* wrow = &W.data[i * n];
      for (std::size_t j = 0; j < n; ++j) out.data[j] += xv * wrow[j];
    }
    return push(std::move(out), {x, w, b}, [m, n](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      int px = t.nodes_[id].parents[0].id;
      int pw = t.nodes_[id].parents[1].id;
      int pb = t.nodes_[id].parents[2].id;
      const Tensor& X = t.nodes_[px].value;
      const Tensor& W = t.nodes_[pw].value;
      Tensor gx = Tensor::zeros({m});
      Tensor gw = Tensor::zeros({m, n});
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* wrow = &W.data[i * n];
        double* gwrow = &gw.data[i * n];
        const double xv = X.data[i];
        for (std::size_t j = 0; j < n; ++j) {
          acc += wrow[j] * g.data[j];
          gwrow[j] += xv * g.data[j];
        }
        gx.data[i] = acc;
      }
      t.accumulate({px}, gx);
      t.accumulate({pw}, gw);
      t.accumulate({pb}, g);
    });
  }

  /// Same-padded 1-D convolution: x[L,Cin], kernels[k,Cin,Cout] -> [L,Cout].
  /// k must be odd; zero padding of (k-1)/2 on both ends.
  Value conv1d_same(Value x, Value kernels) {
    const Tensor& X = val(x);
    const Tensor& K = val(kernels);
    if (X.shape.size() != 2 || K.shape.size() != 3 || K.shape[1] != X.shape[1]) {
      throw std::invalid_argument("conv1d_same: incompatible shapes");
    }
    const std::size_t k = K.shape[0];
    if (k % 2 == 0) throw std::invalid_argument("conv1d_same: kernel width must be odd");
    const std::size_t L = X.shape[0], cin = X.shape[1], cout = K.shape[2];
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
    Tensor out = Tensor::zeros({L, cout});
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t t = 0; t < k; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + t) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double xv = X.data[static_cast<std::size_t>(src) * cin + ci];
          if (xv == 0.0) continue;
          const double* kk = &K.data[(t * cin + ci) * cout];
          double* orow = &out.data[l * cout];
          for (std::size_t co = 0; co < cout; ++co) orow[co] += xv * kk[co];
        }
      }
    }
    return push(std::move(out), {x, kernels}, [L, k, cin, cout, pad](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      int px = t.nodes_[id].parents[0].id;
      int pk = t.nodes_[id].parents[1].id;
      const Tensor& X = t.nodes_[px].value;
      const Tensor& K = t.nodes_[pk].value;
      Tensor gx = Tensor::zeros({L, cin});
      Tensor gk = Tensor::zeros({k, cin, cout});
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t tt = 0; tt < k; ++tt) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + tt) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = X.data[static_cast<std::size_t>(src) * cin + ci];
            const double* kk = &K.data[(tt * cin + ci) * cout];
            double* gkk = &gk.data[(tt * cin + ci) * cout];
            double acc = 0.0;
            const double* grow = &g.data[l * cout];
            for (std::size_t co = 0; co < cout; ++co) {
              acc += kk[co] * grow[co];
              gkk[co] += xv * grow[co];
            }
            gx.data[static_cast<std::size_t>(src) * cin + ci] += acc;
          }
        }
      }
      t.accumulate({px}, gx);
      t.accumulate({pk}, gk);
    });
  }

  /// Sparse(const) [m,m] x dense M[m,n]; gradient flows through M only.
  Value spmm(const SparseMatrix& A, Value m) {
    const Tensor& M = val(m);
    if (M.shape.size() != 2 || A.cols != M.rows()) {
      throw std::invalid_argument("spmm: incompatible shapes");
    }
    const std::size_t n = M.cols();
    Tensor out = Tensor::zeros({A.rows, n});
    for (const auto& e : A.entries) {
      const double* src = &M.data[e.c * n];
      double* dst = &out.data[e.r * n];
      for (std::size_t j = 0; j < n; ++j) dst[j] += e.v * src[j];
    }
    // Copy entries for the closure; adjacency matrices are small.
    auto entries = A.entries;
    const std::size_t mrows = M.rows();
    return push(std::move(out), {m}, [entries, mrows, n](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      Tensor gm = Tensor::zeros({mrows, n});
      for (const auto& e : entries) {
        const double* src = &g.data[e.r * n];
        double* dst = &gm.data[e.c * n];
        for (std::size_t j = 0; j < n; ++j) dst[j] += e.v * src[j];
      }
      t.accumulate(t.nodes_[id].parents[0], gm);
    });
  }

  /// Mean over rows of M[m,n] -> [n].
  Value mean_rows(Value m) {
    const Tensor& M = val(m);
    if (M.shape.size() != 2) throw std::invalid_argument("mean_rows: expects matrix");
    const std::size_t r = M.rows(), n = M.cols();
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < n; ++j) out.data[j] += M.data[i * n + j];
    }
    for (auto& x : out.data) x /= static_cast<double>(r);
    return push(std::move(out), {m}, [r, n](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      Tensor gm = Tensor::zeros({r, n});
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < n; ++j) gm.data[i * n + j] = g.data[j] / static_cast<double>(r);
      }
      t.accumulate(t.nodes_[id].parents[0], gm);
    });
  }

  /// Concatenate matrices with equal row counts along columns.
  Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const std::size_t r = val(parts[0]).rows();
    std::size_t total = 0;
    for (auto p : parts) {
      if (val(p).shape.size() != 2 || val(p).rows() != r) {
        throw std::invalid_argument("concat_cols: row count mismatch");
      }
      total += val(p).cols();
    }
    Tensor out = Tensor::zeros({r, total});
    std::size_t off = 0;
    for (auto p : parts) {
      const Tensor& m = val(p);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, off + j) = m.at(i, j);
      }
      off += m.cols();
    }
    return push(std::move(out), parts, [r, total](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      std::size_t off = 0;
      for (auto p : t.nodes_[id].parents) {
        const std::size_t c = t.nodes_[p.id].value.cols();
        Tensor gp = Tensor::zeros({r, c});
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gp.at(i, j) = g.data[i * total + off + j];
        }
        t.accumulate(p, gp);
        off += c;
      }
    });
  }

  /// Row-major flatten to a 1-D vector.
  Value flatten(Value a) {
    Tensor out = val(a);
    const auto orig_shape = out.shape;
    out.shape = {out.data.size()};
    return push(std::move(out), {a}, [orig_shape](Tape& t, int id) {
      Tensor g = t.grad_[id];
      g.shape = orig_shape;
      t.accumulate(t.nodes_[id].parents[0], g);
    });
  }

  /// Concatenate 1-D vectors.
  Value concat(const std::vector<Value>& parts) {
    std::size_t total = 0;
    for (auto p : parts) {
      if (val(p).shape.size() != 1) throw std::invalid_argument("concat: expects 1-D parts");
      total += val(p).size();
    }
    Tensor out = Tensor::zeros({total});
    std::size_t off = 0;
    for (auto p : parts) {
      const auto& d = val(p).data;
      std::copy(d.begin(), d.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
      off += d.size();
    }
    return push(std::move(out), parts, [](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      std::size_t off = 0;
      for (auto p : t.nodes_[id].parents) {
        const std::size_t n = t.nodes_[p.id].value.size();
        Tensor gp = Tensor::zeros({n});
        std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(off),
                  g.data.begin() + static_cast<std::ptrdiff_t>(off + n), gp.data.begin());
        t.accumulate(p, gp);
        off += n;
      }
    });
  }

  /// Slice [begin, begin+len) from a 1-D vector.
  Value slice(Value a, std::size_t begin, std::size_t len) {
    const Tensor& A = val(a);
    if (A.shape.size() != 1 || begin + len > A.size()) {
      throw std::invalid_argument("slice: out of range");
    }
    Tensor out = Tensor::zeros({len});
    std::copy(A.data.begin() + static_cast<std::ptrdiff_t>(begin),
              A.data.begin() + static_cast<std::ptrdiff_t>(begin + len), out.data.begin());
    const std::size_t full = A.size();
    return push(std::move(out), {a}, [begin, len, full](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      Tensor gp = Tensor::zeros({full});
      for (std::size_t i = 0; i < len; ++i) gp.data[begin + i] = g.data[i];
      t.accumulate(t.nodes_[id].parents[0], gp);
    });
  }

  /// Row i of matrix M (embedding lookup); gradient scatters into that row.
  Value row(Value m, std::size_t i) {
    const Tensor& M = val(m);
    if (M.shape.size() != 2 || i >= M.rows()) throw std::invalid_argument("row: out of range");
    const std::size_t n = M.cols(), r = M.rows();
    Tensor out = Tensor::zeros({n});
    std::copy(M.data.begin() + static_cast<std::ptrdiff_t>(i * n),
              M.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n), out.data.begin());
    return push(std::move(out), {m}, [i, n, r](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      Tensor gm = Tensor::zeros({r, n});
      for (std::size_t j = 0; j < n; ++j) gm.data[i * n + j] = g.data[j];
      t.accumulate(t.nodes_[id].parents[0], gm);
    });
  }

  /// Stack 1-D vectors of equal length into a matrix [m, n].
  Value stack_rows(const std::vector<Value>& rows_) {
    if (rows_.empty()) throw std::invalid_argument("stack_rows: empty");
    const std::size_t n = val(rows_[0]).size();
    Tensor out = Tensor::zeros({rows_.size(), n});
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto& d = val(rows_[i]).data;
      if (d.size() != n) throw std::invalid_argument("stack_rows: ragged rows");
      std::copy(d.begin(), d.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return push(std::move(out), rows_, [n](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      const auto& ps = t.nodes_[id].parents;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        Tensor gp = Tensor::zeros({n});
        for (std::size_t j = 0; j < n; ++j) gp.data[j] = g.data[i * n + j];
        t.accumulate(ps[i], gp);
      }
    });
  }

  /// alpha[m] weighted sum of rows of M[m,n] -> [n].
  Value weighted_rows(Value alpha, Value m) {
    const Tensor& A = val(alpha);
    const Tensor& M = val(m);
    if (A.shape.size() != 1 || M.shape.size() != 2 || A.size() != M.rows()) {
      throw std::invalid_argument("weighted_rows: incompatible shapes");
    }
    const std::size_t r = M.rows(), n = M.cols();
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < r; ++i) {
      const double av = A.data[i];
      for (std::size_t j = 0; j < n; ++j) out.data[j] += av * M.data[i * n + j];
    }
    return push(std::move(out), {alpha, m}, [r, n](Tape& t, int id) {
      const Tensor& g = t.grad_[id];
      int pa = t.nodes_[id].parents[0].id, pm = t.nodes_[id].parents[1].id;
      const Tensor& A = t.nodes_[pa].value;
      const Tensor& M = t.nodes_[pm].value;
      Tensor ga = Tensor::zeros({r});
      Tensor gm = Tensor::zeros({r, n});
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          acc += M.data[i * n + j] * g.data[j];
          gm.data[i * n + j] = A.data[i] * g.data[j];
        }
        ga.data[i] = acc;
      }
      t.accumulate({pa}, ga);
      t.accumulate({pm}, gm);
    });
  }

  Value sum(Value a) {
    double s = 0.0;
    for (double x : val(a).data) s += x;
    return push(Tensor::scalar(s), {a}, [](Tape& t, int id) {
      const double g = t.grad_[id].data[0];
      Tensor gp = t.nodes_[t.nodes_[id].parents[0].id].value;
      for (auto& x : gp.data) x = g;
      t.accumulate(t.nodes_[id].parents[0], gp);
    });
  }

  /// Sum of squared entries (used for L2 regularization).
  Value sum_squares(Value a) {
    double s = 0.0;
    for (double x : val(a).data) s += x * x;
    return push(Tensor::scalar(s), {a}, [](Tape& t, int id) {
      const double g = t.grad_[id].data[0];
      Tensor gp = t.nodes_[t.nodes_[id].parents[0].id].value;
      for (auto& x : gp.data) x *= 2.0 * g;
      t.accumulate(t.nodes_[id].parents[0], gp);
    });
  }

  /// Mean squared error between two same-shaped values -> scalar.
  Value mse(Value a, Value b) {
    require_same(a, b, "mse");
    const auto& ad = val(a).data;
    const auto& bd = val(b).data;
    const std::size_t n = ad.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = ad[i] - bd[i];
      s += d * d;
    }
    return push(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [n](Tape& t, int id) {
      const double g = t.grad_[id].data[0];
      int pa = t.nodes_[id].parents[0].id, pb = t.nodes_[id].parents[1].id;
      const auto& ad = t.nodes_[pa].value.data;
      const auto& bd = t.nodes_[pb].value.data;
      Tensor ga = t.nodes_[pa].value;
      Tensor gb = ga;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = 2.0 * g * (ad[i] - bd[i]) / static_cast<double>(n);
        ga.data[i] = d;
        gb.data[i] = -d;
      }
      t.accumulate({pa}, ga);
      t.accumulate({pb}, gb);
    });
  }

  /// sum(mask * (a - target)^2) / sum(mask); target and mask are plain tensors.
  Value masked_mse(Value a, const Tensor& target, const Tensor& mask) {
    const Tensor& A = val(a);
    if (!A.same_shape(target) || !A.same_shape(mask)) {
      throw std::invalid_argument("masked_mse: shape mismatch");
    }
    double s = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double d = A.data[i] - target.data[i];
      s += mask.data[i] * d * d;
      wsum += mask.data[i];
    }
    if (wsum <= 0.0) throw std::invalid_argument("masked_mse: empty mask");
    Tensor tgt = target, msk = mask;
    return push(Tensor::scalar(s / wsum), {a}, [tgt, msk, wsum](Tape& t, int id) {
      const double g = t.grad_[id].data[0];
      int pa = t.nodes_[id].parents[0].id;
      Tensor ga = t.nodes_[pa].value;
      for (std::size_t i = 0; i < ga.data.size(); ++i) {
        ga.data[i] = 2.0 * g * msk.data[i] * (ga.data[i] - tgt.data[i]) / wsum;
      }
      t.accumulate({pa}, ga);
    });
  }

  /// Cross-entropy of logits against a fixed soft target distribution
  /// (stable log-softmax inside) -> scalar.
  Value cross_entropy(Value logits, const Tensor& target) {
    const Tensor& L = val(logits);
    if (L.shape.size() != 1 || !L.same_shape(target)) {
      throw std::invalid_argument("cross_entropy: shape mismatch");
    }
    const double lse = logsumexp(L.data);
    double s = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) s -= target.data[i] * (L.data[i] - lse);
    Tensor tgt = target;
    return push(Tensor::scalar(s), {logits}, [tgt, lse](Tape& t, int id) {
      const double g = t.grad_[id].data[0];
      int pa = t.nodes_[id].parents[0].id;
      const auto& L = t.nodes_[pa].value.data;
      Tensor ga = t.nodes_[pa].value;
      double tsum = 0.0;
      for (double x : tgt.data) tsum += x;
      for (std::size_t i = 0; i < ga.data.size(); ++i) {
        ga.data[i] = g * (tsum * std::exp(L[i] - lse) - tgt.data[i]);
      }
      t.accumulate({pa}, ga);
    });
  }

  /// dL/dp for each parameter, same shape as p. Parameters that did not
  /// participate in the tape of `output` receive zero gradients.
  std::vector<Tensor> gradients(Value output, const std::vector<Value>& params) {
    const Tensor& out = val(output);
    if (!out.is_scalar()) {
      throw std::invalid_argument("gradients: output must be scalar, got " + out.shape_str());
    }
    grad_.assign(nodes_.size(), Tensor{});
    grad_[check(output)] = Tensor::scalar(1.0);
    for (int id = output.id; id >= 0; --id) {
      if (grad_[id].data.empty()) continue;
      if (nodes_[id].backprop) nodes_[id].backprop(*this, id);
    }
    std::vector<Tensor> result;
    result.reserve(params.size());
    for (auto p : params) {
      if (grad_[check(p)].data.empty()) {
        result.push_back(Tensor::zeros(nodes_[p.id].value.shape));
      } else {
        result.push_back(grad_[p.id]);
      }
    }
    return result;
  }

  std::size_t node_count() const { return nodes_.size(); }

  static double stable_sigmoid(double x) {
    if (x >= 0.0) {
      return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  static double logsumexp(const std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
  }

 private:
  struct Node {
    Tensor value;
    std::vector<Value> parents;
    std::function<void(Tape&, int)> backprop;
  };

  friend struct TapeAccess;

  int check(Value v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("Tape: bad value id");
    }
    return v.id;
  }

  void require_same(Value a, Value b, const char* op) const {
    if (!val(a).same_shape(val(b))) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + val(a).shape_str() +
                                  " vs " + val(b).shape_str());
    }
  }

  Value push(Tensor t, std::vector<Value> parents, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(t), std::move(parents), std::move(back)});
    return Value{static_cast<int>(nodes_.size() - 1)};
  }

  void accumulate(Value p, const Tensor& g) {
    Tensor& slot = grad_[check(p)];
    if (slot.data.empty()) {
      slot = g;
    } else {
      for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grad_;
};

}  // namespace hif
