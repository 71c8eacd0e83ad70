#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "hmmr/ad/graph.hpp"

// Differentiable operations. Apart from scalar-times-tensor, operands must
// have exactly matching shapes; row-bias addition is its own op.

namespace hmmr::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// [m,k] x [k,n] -> [m,n]; a rank-1 right operand [k] gives a rank-1 [m].
Var matmul(Var a, Var b);
// x[m,n] + b[n] on every row.
Var add_row_bias(Var x, Var b);
// x[m,n] * w[n] on every row.
Var mul_cols(Var x, Var w);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// Rank-2 concat along axis 0 (rows) or 1 (cols); rank-1 along axis 0.
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> rows);

Var relu(Var a);
Var exp(Var a);
// out = x * mask with a fixed, pre-sampled mask.
Var dropout(Var x, const Tensor& mask);
Var stop_gradient(Var a);

Var sum(Var a);
Var mean(Var a);
// [m,n] -> [m]
Var row_sum(Var a);
// [m,n] -> [m], Euclidean norm per row. The backward rule divides by
// sqrt(|x|^2 + eps), so the gradient at a zero row is zero.
Var row_norm(Var a, double eps = 1e-8);

// x[Cin,T], w[Cout,Cin,K], b[Cout] -> [Cout,T]. K odd, zero padding, same length.
Var conv1d(Var x, Var w, Var b);
// x[C,T] normalized over each channel group at every time step separately,
// then scaled and shifted per channel.
Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps = 1e-5);

// Entries are 0 or 1/(1-rate).
Tensor make_dropout_mask(const Shape& shape, double rate, std::mt19937_64& rng);

}  // namespace hmmr::ad
