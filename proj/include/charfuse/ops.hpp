#ifndef CHARFUSE_OPS_HPP
#define CHARFUSE_OPS_HPP

#include <vector>

#include "charfuse/graph.hpp"
#include "charfuse/rng.hpp"

namespace charfuse::ops {

enum class Reduction { Sum, Mean };

// Loss positions carrying this label contribute zero loss and zero gradient.
inline constexpr int kIgnoreIndex = -1;

Var matmul(Graph& g, Var a, Var b);
Var transpose(Graph& g, Var a);

// Same-shape addition, or bias broadcast: b of shape {n} or {1, n} added to
// every row of a.
Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);  // elementwise, same shape
Var scale(Graph& g, Var a, double c);

// Elementwise a * x + b with scalar constants (used e.g. for 1 - z).
Var scale_shift(Graph& g, Var x, double a, double b);

Var concat_cols(Graph& g, Var a, Var b);
Var slice_cols(Graph& g, Var a, int start, int len);

// Stacks k row vectors of identical width {1, n} into a {k, n} matrix.
Var stack_rows(Graph& g, std::vector<Var> rows);

// Row gather: embedding lookup when `table` is a parameter matrix, position
// selection otherwise. Backward scatter-adds into the gathered rows.
Var gather_rows(Graph& g, Var table, std::vector<int> ids);

Var tanh(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);
// Exact Gaussian-CDF form x * Phi(x).
Var gelu(Graph& g, Var a);

Var softmax(Graph& g, Var a);  // last axis

Var layer_norm(Graph& g, Var x, Var gain, Var bias, double epsilon);

// 1-D convolution over the row (sequence) axis with symmetric zero padding.
// x: {m, c_in}; w: {filters, window * c_in} with kernel-major layout
// w[o][k * c_in + c]; b: {filters}; window must be odd.
Var conv1d_same(Graph& g, Var x, Var w, Var b, int window);

// Stable log-softmax cross-entropy over rows of logits. labels.size() must
// equal the number of rows; kIgnoreIndex rows are skipped. Mean divides by
// the number of non-ignored rows.
Var cross_entropy(Graph& g, Var logits, std::vector<int> labels, Reduction red);

Var sum_all(Graph& g, Var a);
Var mean_all(Graph& g, Var a);
Var mean_rows(Graph& g, Var a);  // {m, n} -> {1, n}

// Inverted dropout; identity when rate == 0. The mask is drawn from `rng` at
// record time and reused on replay.
Var dropout(Graph& g, Var a, double rate, Rng& rng);

}  // namespace charfuse::ops

#endif  // CHARFUSE_OPS_HPP
