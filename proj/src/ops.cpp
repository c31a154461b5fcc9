#include "charfuse/ops.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "charfuse/error.hpp"

namespace charfuse::ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  fail(ErrorKind::Shape, std::string(op) + ": incompatible shapes " +
                             a.shape_str() + " and " + b.shape_str());
}

void require_2d(const char* op, const Tensor& t) {
  if (t.shape.size() != 2) {
    fail(ErrorKind::Shape,
         std::string(op) + ": expected 2-D tensor, got " + t.shape_str());
  }
}

bool is_bias_for(const Tensor& a, const Tensor& b) {
  // {n} or {1, n} broadcast over rows of a.
  if (b.shape.size() == 1) return b.shape[0] == a.cols();
  return b.shape.size() == 2 && b.shape[0] == 1 && b.shape[1] == a.cols();
}

double gelu_value(double x) { return x * 0.5 * std::erfc(-x * kInvSqrt2); }

double gelu_derivative(double x) {
  const double phi = 0.5 * std::erfc(-x * kInvSqrt2);
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi + x * pdf;
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  require_2d("matmul", a->value);
  require_2d("matmul", b->value);
  if (a->value.shape[1] != b->value.shape[0]) shape_error("matmul", a->value, b->value);
  return g.record(
      "matmul", {a, b},
      [a, b](Node& n) {
        const Tensor& A = a->value;
        const Tensor& B = b->value;
        const int m = A.shape[0], k = A.shape[1], p = B.shape[1];
        n.value = Tensor::zeros({m, p});
        // ikj order keeps the inner loop contiguous in both B and the output.
        for (int i = 0; i < m; ++i) {
          const double* arow = &A.data[static_cast<size_t>(i) * k];
          double* orow = &n.value.data[static_cast<size_t>(i) * p];
          for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = &B.data[static_cast<size_t>(kk) * p];
            for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
          }
        }
      },
      [a, b](Node& n) {
        const Tensor& A = a->value;
        const Tensor& B = b->value;
        const int m = A.shape[0], k = A.shape[1], p = B.shape[1];
        if (a->requires_grad) {
          a->ensure_grad();
          for (int i = 0; i < m; ++i) {
            const double* grow = &n.grad[static_cast<size_t>(i) * p];
            double* arow = &a->grad[static_cast<size_t>(i) * k];
            for (int kk = 0; kk < k; ++kk) {
              const double* brow = &B.data[static_cast<size_t>(kk) * p];
              double acc = 0.0;
              for (int j = 0; j < p; ++j) acc += grow[j] * brow[j];
              arow[kk] += acc;
            }
          }
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (int kk = 0; kk < k; ++kk) {
            double* brow = &b->grad[static_cast<size_t>(kk) * p];
            for (int i = 0; i < m; ++i) {
              const double av = A.data[static_cast<size_t>(i) * k + kk];
              if (av == 0.0) continue;
              const double* grow = &n.grad[static_cast<size_t>(i) * p];
              for (int j = 0; j < p; ++j) brow[j] += av * grow[j];
            }
          }
        }
      });
}

Var transpose(Graph& g, Var a) {
  require_2d("transpose", a->value);
  return g.record(
      "transpose", {a},
      [a](Node& n) {
        const Tensor& A = a->value;
        const int m = A.shape[0], k = A.shape[1];
        n.value = Tensor::zeros({k, m});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j) n.value.at(j, i) = A.at(i, j);
      },
      [a](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const int k = n.value.shape[0], m = n.value.shape[1];
        for (int j = 0; j < k; ++j)
          for (int i = 0; i < m; ++i)
            a->grad[static_cast<size_t>(i) * k + j] +=
                n.grad[static_cast<size_t>(j) * m + i];
      });
}

Var add(Graph& g, Var a, Var b) {
  const bool same = a->value.same_shape(b->value);
  const bool bias = !same && is_bias_for(a->value, b->value);
  if (!same && !bias) shape_error("add", a->value, b->value);
  return g.record(
      "add", {a, b},
      [a, b, same](Node& n) {
        n.value = a->value;
        if (same) {
          for (size_t i = 0; i < n.value.data.size(); ++i)
            n.value.data[i] += b->value.data[i];
        } else {
          const int rows = a->value.rows(), cols = a->value.cols();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              n.value.data[static_cast<size_t>(r) * cols + c] += b->value.data[c];
        }
      },
      [a, b, same](Node& n) {
        if (a->requires_grad) {
          a->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          if (same) {
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
          } else {
            const int rows = a->value.rows(), cols = a->value.cols();
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < cols; ++c)
                b->grad[c] += n.grad[static_cast<size_t>(r) * cols + c];
          }
        }
      });
}

Var mul(Graph& g, Var a, Var b) {
  if (!a->value.same_shape(b->value)) shape_error("mul", a->value, b->value);
  return g.record(
      "mul", {a, b},
      [a, b](Node& n) {
        n.value = a->value;
        for (size_t i = 0; i < n.value.data.size(); ++i)
          n.value.data[i] *= b->value.data[i];
      },
      [a, b](Node& n) {
        if (a->requires_grad) {
          a->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i)
            a->grad[i] += n.grad[i] * b->value.data[i];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i)
            b->grad[i] += n.grad[i] * a->value.data[i];
        }
      });
}

Var scale(Graph& g, Var a, double c) {
  return g.record(
      "scale", {a},
      [a, c](Node& n) {
        n.value = a->value;
        for (double& v : n.value.data) v *= c;
      },
      [a, c](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += c * n.grad[i];
      });
}

Var scale_shift(Graph& g, Var x, double a, double b) {
  return g.record(
      "scale_shift", {x},
      [x, a, b](Node& n) {
        n.value = x->value;
        for (double& v : n.value.data) v = a * v + b;
      },
      [x, a](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) x->grad[i] += a * n.grad[i];
      });
}

Var stack_rows(Graph& g, std::vector<Var> rows) {
  if (rows.empty()) fail(ErrorKind::Shape, "stack_rows: no rows");
  const int cols = rows[0]->value.cols();
  for (const Var& r : rows) {
    if (r->value.rows() != 1 || r->value.cols() != cols) {
      fail(ErrorKind::Shape, "stack_rows: row of shape " + r->value.shape_str() +
                                 " does not fit width " + std::to_string(cols));
    }
  }
  std::vector<Var> parents = rows;
  return g.record(
      "stack_rows", std::move(parents),
      [rows, cols](Node& n) {
        n.value = Tensor::zeros({static_cast<int>(rows.size()), cols});
        for (size_t r = 0; r < rows.size(); ++r)
          for (int c = 0; c < cols; ++c)
            n.value.data[r * cols + c] = rows[r]->value.data[c];
      },
      [rows, cols](Node& n) {
        for (size_t r = 0; r < rows.size(); ++r) {
          if (!rows[r]->requires_grad) continue;
          rows[r]->ensure_grad();
          for (int c = 0; c < cols; ++c)
            rows[r]->grad[c] += n.grad[r * cols + c];
        }
      });
}

Var concat_cols(Graph& g, Var a, Var b) {
  require_2d("concat", a->value);
  require_2d("concat", b->value);
  if (a->value.shape[0] != b->value.shape[0]) shape_error("concat", a->value, b->value);
  return g.record(
      "concat", {a, b},
      [a, b](Node& n) {
        const int m = a->value.shape[0];
        const int ca = a->value.shape[1], cb = b->value.shape[1];
        n.value = Tensor::zeros({m, ca + cb});
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < ca; ++c) n.value.at(r, c) = a->value.at(r, c);
          for (int c = 0; c < cb; ++c) n.value.at(r, ca + c) = b->value.at(r, c);
        }
      },
      [a, b](Node& n) {
        const int m = a->value.shape[0];
        const int ca = a->value.shape[1], cb = b->value.shape[1];
        const int cn = ca + cb;
        if (a->requires_grad) {
          a->ensure_grad();
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < ca; ++c)
              a->grad[static_cast<size_t>(r) * ca + c] +=
                  n.grad[static_cast<size_t>(r) * cn + c];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < cb; ++c)
              b->grad[static_cast<size_t>(r) * cb + c] +=
                  n.grad[static_cast<size_t>(r) * cn + ca + c];
        }
      });
}

Var slice_cols(Graph& g, Var a, int start, int len) {
  require_2d("slice", a->value);
  if (start < 0 || len <= 0 || start + len > a->value.shape[1]) {
    fail(ErrorKind::Shape, "slice: range [" + std::to_string(start) + "," +
                               std::to_string(start + len) +
                               ") out of bounds for " + a->value.shape_str());
  }
  return g.record(
      "slice", {a},
      [a, start, len](Node& n) {
        const int m = a->value.shape[0];
        n.value = Tensor::zeros({m, len});
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < len; ++c) n.value.at(r, c) = a->value.at(r, start + c);
      },
      [a, start, len](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const int m = a->value.shape[0], ca = a->value.shape[1];
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < len; ++c)
            a->grad[static_cast<size_t>(r) * ca + start + c] +=
                n.grad[static_cast<size_t>(r) * len + c];
      });
}

Var gather_rows(Graph& g, Var table, std::vector<int> ids) {
  require_2d("gather_rows", table->value);
  const int rows = table->value.shape[0];
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      fail(ErrorKind::Shape, "gather_rows: index " + std::to_string(id) +
                                 " out of range for " + table->value.shape_str());
    }
  }
  return g.record(
      "gather_rows", {table},
      [table, ids](Node& n) {
        const int cols = table->value.shape[1];
        n.value = Tensor::zeros({static_cast<int>(ids.size()), cols});
        for (size_t r = 0; r < ids.size(); ++r)
          for (int c = 0; c < cols; ++c)
            n.value.data[r * cols + c] =
                table->value.data[static_cast<size_t>(ids[r]) * cols + c];
      },
      [table, ids](Node& n) {
        if (!table->requires_grad) return;
        table->ensure_grad();
        const int cols = table->value.shape[1];
        for (size_t r = 0; r < ids.size(); ++r)
          for (int c = 0; c < cols; ++c)
            table->grad[static_cast<size_t>(ids[r]) * cols + c] +=
                n.grad[r * cols + c];
      });
}

namespace {

template <typename Fwd, typename Dfn>
Var elementwise(Graph& g, const char* name, Var a, Fwd fwd, Dfn dfn) {
  return g.record(
      name, {a},
      [a, fwd](Node& n) {
        n.value = a->value;
        for (double& v : n.value.data) v = fwd(v);
      },
      [a, dfn](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
          a->grad[i] += n.grad[i] * dfn(a->value.data[i], n.value.data[i]);
      });
}

}  // namespace

Var tanh(Graph& g, Var a) {
  return elementwise(
      g, "tanh", std::move(a), [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Graph& g, Var a) {
  return elementwise(
      g, "sigmoid", std::move(a),
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Graph& g, Var a) {
  return elementwise(
      g, "gelu", std::move(a), [](double x) { return gelu_value(x); },
      [](double x, double) { return gelu_derivative(x); });
}

Var softmax(Graph& g, Var a) {
  if (a->value.cols() == 0) {
    fail(ErrorKind::Shape, "softmax: empty last axis " + a->value.shape_str());
  }
  return g.record(
      "softmax", {a},
      [a](Node& n) {
        n.value = a->value;
        const int rows = n.value.rows(), cols = n.value.cols();
        for (int r = 0; r < rows; ++r) {
          double* row = &n.value.data[static_cast<size_t>(r) * cols];
          double mx = row[0];
          for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
          double sum = 0.0;
          for (int c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
          }
          for (int c = 0; c < cols; ++c) row[c] /= sum;
        }
      },
      [a](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const int rows = n.value.rows(), cols = n.value.cols();
        for (int r = 0; r < rows; ++r) {
          const double* y = &n.value.data[static_cast<size_t>(r) * cols];
          const double* dy = &n.grad[static_cast<size_t>(r) * cols];
          double dot = 0.0;
          for (int c = 0; c < cols; ++c) dot += dy[c] * y[c];
          double* dx = &a->grad[static_cast<size_t>(r) * cols];
          for (int c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - dot);
        }
      });
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias, double epsilon) {
  if (epsilon <= 0.0) fail(ErrorKind::Usage, "layer_norm: epsilon must be > 0");
  const int cols = x->value.cols();
  if (static_cast<int64_t>(cols) != gain->value.numel() ||
      static_cast<int64_t>(cols) != bias->value.numel()) {
    fail(ErrorKind::Shape, "layer_norm: gain/bias length must match last axis " +
                               x->value.shape_str());
  }
  return g.record(
      "layer_norm", {x, gain, bias},
      [x, gain, bias, epsilon](Node& n) {
        n.value = x->value;
        const int rows = n.value.rows(), cols = n.value.cols();
        for (int r = 0; r < rows; ++r) {
          double* row = &n.value.data[static_cast<size_t>(r) * cols];
          double mean = 0.0;
          for (int c = 0; c < cols; ++c) mean += row[c];
          mean /= cols;
          double var = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double d = row[c] - mean;
            var += d * d;
          }
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + epsilon);
          for (int c = 0; c < cols; ++c)
            row[c] = (row[c] - mean) * inv * gain->value.data[c] + bias->value.data[c];
        }
      },
      [x, gain, bias, epsilon](Node& n) {
        const int rows = x->value.rows(), cols = x->value.cols();
        if (gain->requires_grad) gain->ensure_grad();
        if (bias->requires_grad) bias->ensure_grad();
        if (x->requires_grad) x->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          const double* xr = &x->value.data[static_cast<size_t>(r) * cols];
          const double* dy = &n.grad[static_cast<size_t>(r) * cols];
          double mean = 0.0;
          for (int c = 0; c < cols; ++c) mean += xr[c];
          mean /= cols;
          double var = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double d = xr[c] - mean;
            var += d * d;
          }
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + epsilon);
          if (gain->requires_grad || bias->requires_grad) {
            for (int c = 0; c < cols; ++c) {
              const double xhat = (xr[c] - mean) * inv;
              if (gain->requires_grad) gain->grad[c] += dy[c] * xhat;
              if (bias->requires_grad) bias->grad[c] += dy[c];
            }
          }
          if (x->requires_grad) {
            // dxhat = dy * gain; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int c = 0; c < cols; ++c) {
              const double xhat = (xr[c] - mean) * inv;
              const double dxh = dy[c] * gain->value.data[c];
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * xhat;
            }
            const double m1 = sum_dxhat / cols;
            const double m2 = sum_dxhat_xhat / cols;
            double* dx = &x->grad[static_cast<size_t>(r) * cols];
            for (int c = 0; c < cols; ++c) {
              const double xhat = (xr[c] - mean) * inv;
              const double dxh = dy[c] * gain->value.data[c];
              dx[c] += inv * (dxh - m1 - xhat * m2);
            }
          }
        }
      });
}

Var conv1d_same(Graph& g, Var x, Var w, Var b, int window) {
  require_2d("conv1d", x->value);
  require_2d("conv1d", w->value);
  if (window <= 0 || window % 2 == 0) {
    fail(ErrorKind::Usage, "conv1d: window must be odd and positive, got " +
                               std::to_string(window));
  }
  const int c_in = x->value.shape[1];
  const int filters = w->value.shape[0];
  if (w->value.shape[1] != window * c_in || b->value.numel() != filters) {
    fail(ErrorKind::Shape, "conv1d: weight " + w->value.shape_str() +
                               " does not match window " + std::to_string(window) +
                               " x input " + x->value.shape_str());
  }
  const int half = window / 2;
  return g.record(
      "conv1d", {x, w, b},
      [x, w, b, window, half](Node& n) {
        const int m = x->value.shape[0], c_in = x->value.shape[1];
        const int filters = w->value.shape[0];
        n.value = Tensor::zeros({m, filters});
        for (int t = 0; t < m; ++t) {
          double* orow = &n.value.data[static_cast<size_t>(t) * filters];
          for (int o = 0; o < filters; ++o) orow[o] = b->value.data[o];
          for (int k = 0; k < window; ++k) {
            const int src = t + k - half;
            if (src < 0 || src >= m) continue;
            const double* xrow = &x->value.data[static_cast<size_t>(src) * c_in];
            for (int o = 0; o < filters; ++o) {
              const double* wrow =
                  &w->value.data[static_cast<size_t>(o) * window * c_in + k * c_in];
              double acc = 0.0;
              for (int c = 0; c < c_in; ++c) acc += wrow[c] * xrow[c];
              orow[o] += acc;
            }
          }
        }
      },
      [x, w, b, window, half](Node& n) {
        const int m = x->value.shape[0], c_in = x->value.shape[1];
        const int filters = w->value.shape[0];
        if (b->requires_grad) {
          b->ensure_grad();
          for (int t = 0; t < m; ++t)
            for (int o = 0; o < filters; ++o)
              b->grad[o] += n.grad[static_cast<size_t>(t) * filters + o];
        }
        if (w->requires_grad) w->ensure_grad();
        if (x->requires_grad) x->ensure_grad();
        for (int t = 0; t < m; ++t) {
          const double* gr = &n.grad[static_cast<size_t>(t) * filters];
          for (int k = 0; k < window; ++k) {
            const int src = t + k - half;
            if (src < 0 || src >= m) continue;
            const double* xrow = &x->value.data[static_cast<size_t>(src) * c_in];
            for (int o = 0; o < filters; ++o) {
              const double go = gr[o];
              if (go == 0.0) continue;
              const size_t woff = static_cast<size_t>(o) * window * c_in + k * c_in;
              if (w->requires_grad) {
                for (int c = 0; c < c_in; ++c) w->grad[woff + c] += go * xrow[c];
              }
              if (x->requires_grad) {
                double* dxrow = &x->grad[static_cast<size_t>(src) * c_in];
                const double* wrow = &w->value.data[woff];
                for (int c = 0; c < c_in; ++c) dxrow[c] += go * wrow[c];
              }
            }
          }
        }
      });
}

Var cross_entropy(Graph& g, Var logits, std::vector<int> labels, Reduction red) {
  require_2d("cross_entropy", logits->value);
  const int rows = logits->value.shape[0], cols = logits->value.shape[1];
  if (cols == 0) fail(ErrorKind::Shape, "cross_entropy: empty class axis");
  if (static_cast<int>(labels.size()) != rows) {
    fail(ErrorKind::Shape, "cross_entropy: " + std::to_string(labels.size()) +
                               " labels for " + std::to_string(rows) + " rows");
  }
  for (int lab : labels) {
    if (lab != kIgnoreIndex && (lab < 0 || lab >= cols)) {
      fail(ErrorKind::Data, "cross_entropy: label " + std::to_string(lab) +
                                " out of range [0," + std::to_string(cols) + ")");
    }
  }
  int active = 0;
  for (int lab : labels) active += (lab != kIgnoreIndex) ? 1 : 0;
  const double denom = (red == Reduction::Mean && active > 0) ? active : 1.0;
  return g.record(
      "cross_entropy", {logits},
      [logits, labels, denom](Node& n) {
        const int rows = logits->value.shape[0], cols = logits->value.shape[1];
        double total = 0.0;
        for (int r = 0; r < rows; ++r) {
          if (labels[r] == kIgnoreIndex) continue;
          const double* row = &logits->value.data[static_cast<size_t>(r) * cols];
          double mx = row[0];
          for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
          double sum = 0.0;
          for (int c = 0; c < cols; ++c) sum += std::exp(row[c] - mx);
          total += std::log(sum) + mx - row[labels[r]];
        }
        n.value = Tensor::scalar(total / denom);
      },
      [logits, labels, denom](Node& n) {
        if (!logits->requires_grad) return;
        logits->ensure_grad();
        const double seed = n.grad[0] / denom;
        if (seed == 0.0) return;
        const int rows = logits->value.shape[0], cols = logits->value.shape[1];
        for (int r = 0; r < rows; ++r) {
          if (labels[r] == kIgnoreIndex) continue;
          const double* row = &logits->value.data[static_cast<size_t>(r) * cols];
          double* drow = &logits->grad[static_cast<size_t>(r) * cols];
          double mx = row[0];
          for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
          double sum = 0.0;
          for (int c = 0; c < cols; ++c) sum += std::exp(row[c] - mx);
          for (int c = 0; c < cols; ++c) {
            const double p = std::exp(row[c] - mx) / sum;
            drow[c] += seed * (p - (c == labels[r] ? 1.0 : 0.0));
          }
        }
      });
}

Var sum_all(Graph& g, Var a) {
  return g.record(
      "sum", {a},
      [a](Node& n) {
        double total = 0.0;
        for (double v : a->value.data) total += v;
        n.value = Tensor::scalar(total);
      },
      [a](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (double& gv : a->grad) gv += n.grad[0];
      });
}

Var mean_all(Graph& g, Var a) {
  const double inv = 1.0 / static_cast<double>(a->value.numel());
  return g.record(
      "mean", {a},
      [a, inv](Node& n) {
        double total = 0.0;
        for (double v : a->value.data) total += v;
        n.value = Tensor::scalar(total * inv);
      },
      [a, inv](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (double& gv : a->grad) gv += n.grad[0] * inv;
      });
}

Var mean_rows(Graph& g, Var a) {
  require_2d("mean_rows", a->value);
  const int m = a->value.shape[0];
  if (m == 0) fail(ErrorKind::Shape, "mean_rows: no rows");
  return g.record(
      "mean_rows", {a},
      [a](Node& n) {
        const int m = a->value.shape[0], cols = a->value.shape[1];
        n.value = Tensor::zeros({1, cols});
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < cols; ++c)
            n.value.data[c] += a->value.data[static_cast<size_t>(r) * cols + c];
        for (int c = 0; c < cols; ++c) n.value.data[c] /= m;
      },
      [a](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const int m = a->value.shape[0], cols = a->value.shape[1];
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < cols; ++c)
            a->grad[static_cast<size_t>(r) * cols + c] += n.grad[c] / m;
      });
}

Var dropout(Graph& g, Var a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    fail(ErrorKind::Usage, "dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return a;
  auto mask = std::make_shared<std::vector<double>>(a->value.data.size());
  const double keep = 1.0 - rate;
  for (double& mv : *mask) mv = (rng.uniform() < rate) ? 0.0 : 1.0 / keep;
  return g.record(
      "dropout", {a},
      [a, mask](Node& n) {
        n.value = a->value;
        for (size_t i = 0; i < n.value.data.size(); ++i)
          n.value.data[i] *= (*mask)[i];
      },
      [a, mask](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
          a->grad[i] += n.grad[i] * (*mask)[i];
      });
}

}  // namespace charfuse::ops
