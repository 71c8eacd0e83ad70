#include "hmmr/ad/ops.hpp"

#include <cmath>

#include "hmmr/kernels/kernels.hpp"

namespace hmmr::ad {
namespace {

const kernels::KernelTable& K() { return kernels::table(); }

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound variable");
  return *a.graph();
}

void same_graph(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::invalid_argument("operands belong to different graphs");
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  same_graph(a, b);
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  const std::size_t n = a.size();
  std::vector<double> out(n);
  K().add(n, a.value().ptr(), b.value().ptr(), out.data());
  return graph_of(a).record("add", Tensor(a.shape(), std::move(out)), {a, b},
                            [n](const BackwardArgs& g) {
                              for (double* gi : g.grad_in) {
                                if (gi) K().axpy(n, 1.0, g.grad_out.data(), gi);
                              }
                            });
}

Var sub(Var a, Var b) {
  same_graph(a, b);
  if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.value().ptr();
  const double* y = b.value().ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
  return graph_of(a).record("sub", Tensor(a.shape(), std::move(out)), {a, b},
                            [n](const BackwardArgs& g) {
                              if (g.grad_in[0]) K().axpy(n, 1.0, g.grad_out.data(), g.grad_in[0]);
                              if (g.grad_in[1]) K().axpy(n, -1.0, g.grad_out.data(), g.grad_in[1]);
                            });
}

Var mul(Var a, Var b) {
  same_graph(a, b);
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const Tensor av = a.value(), bv = b.value();
  K().mul(n, av.ptr(), bv.ptr(), out.data());
  return graph_of(a).record("mul", Tensor(a.shape(), std::move(out)), {a, b},
                            [n, av, bv](const BackwardArgs& g) {
                              const double* go = g.grad_out.data();
                              if (double* ga = g.grad_in[0]) {
                                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
                              }
                              if (double* gb = g.grad_in[1]) {
                                for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * av[i];
                              }
                            });
}

Var scale(Var a, double s) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i];
  return graph_of(a).record("scale", Tensor(a.shape(), std::move(out)), {a},
                            [n, s](const BackwardArgs& g) {
                              K().axpy(n, s, g.grad_out.data(), g.grad_in[0]);
                            });
}

Var add_scalar(Var a, double s) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + s;
  return graph_of(a).record("add_scalar", Tensor(a.shape(), std::move(out)), {a},
                            [n](const BackwardArgs& g) {
                              K().axpy(n, 1.0, g.grad_out.data(), g.grad_in[0]);
                            });
}

Var matmul(Var a, Var b) {
  same_graph(a, b);
  require_rank("matmul", a, 2);
  const bool vec = b.shape().size() == 1;
  if (!vec) require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t kb = b.shape()[0];
  const std::size_t n = vec ? 1 : b.shape()[1];
  if (k != kb) mismatch("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n);
  const Tensor av = a.value(), bv = b.value();
  K().gemm(m, n, k, av.ptr(), bv.ptr(), out.data(), false);
  Shape os = vec ? Shape{m} : Shape{m, n};
  return graph_of(a).record("matmul", Tensor(os, std::move(out)), {a, b},
                            [m, n, k, av, bv](const BackwardArgs& g) {
                              // dA = G B^T, dB = A^T G
                              if (double* ga = g.grad_in[0]) {
                                K().gemm_nt(m, k, n, g.grad_out.data(), bv.ptr(), ga, true);
                              }
                              if (double* gb = g.grad_in[1]) {
                                K().gemm_tn(k, n, m, av.ptr(), g.grad_out.data(), gb, true);
                              }
                            });
}

Var add_row_bias(Var x, Var b) {
  same_graph(x, b);
  require_rank("add_row_bias", x, 2);
  require_rank("add_row_bias", b, 1);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (b.shape()[0] != n) mismatch("add_row_bias", x.shape(), b.shape());
  std::vector<double> out(m * n);
  const double* xv = x.value().ptr();
  const double* bv = b.value().ptr();
  for (std::size_t i = 0; i < m; ++i) K().add(n, xv + i * n, bv, out.data() + i * n);
  return graph_of(x).record("add_row_bias", Tensor(x.shape(), std::move(out)), {x, b},
                            [m, n](const BackwardArgs& g) {
                              const double* go = g.grad_out.data();
                              if (double* gx = g.grad_in[0]) K().axpy(m * n, 1.0, go, gx);
                              if (double* gb = g.grad_in[1]) {
                                for (std::size_t i = 0; i < m; ++i) K().axpy(n, 1.0, go + i * n, gb);
                              }
                            });
}

Var mul_cols(Var x, Var w) {
  same_graph(x, w);
  require_rank("mul_cols", x, 2);
  require_rank("mul_cols", w, 1);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (w.shape()[0] != n) mismatch("mul_cols", x.shape(), w.shape());
  std::vector<double> out(m * n);
  const Tensor xv = x.value(), wv = w.value();
  for (std::size_t i = 0; i < m; ++i) K().mul(n, xv.ptr() + i * n, wv.ptr(), out.data() + i * n);
  return graph_of(x).record("mul_cols", Tensor(x.shape(), std::move(out)), {x, w},
                            [m, n, xv, wv](const BackwardArgs& g) {
                              const double* go = g.grad_out.data();
                              if (double* gx = g.grad_in[0]) {
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += go[i * n + j] * wv[j];
                              }
                              if (double* gw = g.grad_in[1]) {
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) gw[j] += go[i * n + j] * xv[i * n + j];
                              }
                            });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return graph_of(a).record("transpose", Tensor({n, m}, std::move(out)), {a},
                            [m, n](const BackwardArgs& g) {
                              const double* go = g.grad_out.data();
                              double* ga = g.grad_in[0];
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
                            });
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  const std::size_t n = a.size();
  return graph_of(a).record("reshape", a.value().reshaped(std::move(shape)), {a},
                            [n](const BackwardArgs& g) {
                              K().axpy(n, 1.0, g.grad_out.data(), g.grad_in[0]);
                            });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Var first = parts.front();
  const std::size_t rank = first.shape().size();
  if (rank > 2 || axis >= rank) {
    throw ShapeError("concat: unsupported axis " + std::to_string(axis) + " for " +
                     shape_str(first.shape()));
  }
  for (const auto& p : parts) {
    same_graph(first, p);
    if (p.shape().size() != rank) mismatch("concat", first.shape(), p.shape());
    if (rank == 2 && p.shape()[1 - axis] != first.shape()[1 - axis]) {
      mismatch("concat", first.shape(), p.shape());
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  if (rank == 1 || axis == 0) {
    // Row-major: stacking along the leading axis is a flat append.
    std::vector<std::size_t> sizes;
    std::vector<double> out;
    std::size_t lead = 0;
    for (const auto& p : parts) {
      sizes.push_back(p.size());
      lead += p.shape()[0];
      out.insert(out.end(), p.value().data().begin(), p.value().data().end());
    }
    Shape os = first.shape();
    os[0] = lead;
    return graph_of(first).record("concat", Tensor(os, std::move(out)), std::move(inputs),
                                  [sizes](const BackwardArgs& g) {
                                    std::size_t off = 0;
                                    for (std::size_t i = 0; i < sizes.size(); ++i) {
                                      if (g.grad_in[i])
                                        K().axpy(sizes[i], 1.0, g.grad_out.data() + off, g.grad_in[i]);
                                      off += sizes[i];
                                    }
                                  });
  }
  const std::size_t m = first.shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<double> out(m * total);
  std::size_t col = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const double* src = parts[q].value().ptr();
    const std::size_t w = widths[q];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + col + j] = src[i * w + j];
    col += w;
  }
  return graph_of(first).record("concat", Tensor({m, total}, std::move(out)), std::move(inputs),
                                [m, widths, total](const BackwardArgs& g) {
                                  std::size_t c = 0;
                                  for (std::size_t q = 0; q < widths.size(); ++q) {
                                    const std::size_t w = widths[q];
                                    if (double* gi = g.grad_in[q]) {
                                      for (std::size_t i = 0; i < m; ++i)
                                        K().axpy(w, 1.0, g.grad_out.data() + i * total + c, gi + i * w);
                                    }
                                    c += w;
                                  }
                                });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& s = a.shape();
  if (s.size() > 2 || axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  if (s.size() == 1 || axis == 0) {
    const std::size_t inner = s.size() == 1 ? 1 : s[1];
    const std::size_t off = begin * inner, n = (end - begin) * inner;
    std::vector<double> out(a.value().data().begin() + off, a.value().data().begin() + off + n);
    Shape os = s;
    os[0] = end - begin;
    return graph_of(a).record("slice", Tensor(os, std::move(out)), {a},
                              [off, n](const BackwardArgs& g) {
                                K().axpy(n, 1.0, g.grad_out.data(), g.grad_in[0] + off);
                              });
  }
  const std::size_t m = s[0], n = s[1], w = end - begin;
  std::vector<double> out(m * w);
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * n + begin + j];
  return graph_of(a).record("slice", Tensor({m, w}, std::move(out)), {a},
                            [m, n, w, begin](const BackwardArgs& g) {
                              for (std::size_t i = 0; i < m; ++i)
                                K().axpy(w, 1.0, g.grad_out.data() + i * w, g.grad_in[0] + i * n + begin);
                            });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  require_rank("gather_rows", a, 2);
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  const double* x = a.value().ptr();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
                       shape_str(a.shape()));
    }
    std::copy(x + idx[r] * n, x + idx[r] * n + n, out.begin() + r * n);
  }
  return graph_of(a).record("gather_rows", Tensor({idx.size(), n}, std::move(out)), {a},
                            [idx, n](const BackwardArgs& g) {
                              for (std::size_t r = 0; r < idx.size(); ++r)
                                K().axpy(n, 1.0, g.grad_out.data() + r * n, g.grad_in[0] + idx[r] * n);
                            });
}

Var relu(Var a) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const Tensor x = a.value();
  K().relu(n, x.ptr(), out.data());
  return graph_of(a).record("relu", Tensor(a.shape(), std::move(out)), {a},
                            [n, x](const BackwardArgs& g) {
                              K().relu_backward(n, x.ptr(), g.grad_out.data(), g.grad_in[0]);
                            });
}

Var exp(Var a) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
  Tensor y(a.shape(), std::move(out));
  return graph_of(a).record("exp", y, {a}, [n, y](const BackwardArgs& g) {
    for (std::size_t i = 0; i < n; ++i) g.grad_in[0][i] += g.grad_out[i] * y[i];
  });
}

Var dropout(Var x, const Tensor& mask) {
  if (mask.shape() != x.shape()) mismatch("dropout", x.shape(), mask.shape());
  const std::size_t n = x.size();
  std::vector<double> out(n);
  K().mul(n, x.value().ptr(), mask.ptr(), out.data());
  return graph_of(x).record("dropout", Tensor(x.shape(), std::move(out)), {x},
                            [n, mask](const BackwardArgs& g) {
                              for (std::size_t i = 0; i < n; ++i) g.grad_in[0][i] += g.grad_out[i] * mask[i];
                            });
}

Var stop_gradient(Var a) { return graph_of(a).constant(a.value()); }

Var sum(Var a) {
  const std::size_t n = a.size();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return graph_of(a).record("sum", Tensor::scalar(s), {a}, [n](const BackwardArgs& g) {
    const double go = g.grad_out[0];
    for (std::size_t i = 0; i < n; ++i) g.grad_in[0][i] += go;
  });
}

Var mean(Var a) {
  const std::size_t n = a.size();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const double inv = 1.0 / static_cast<double>(n);
  return graph_of(a).record("mean", Tensor::scalar(s * inv), {a}, [n, inv](const BackwardArgs& g) {
    const double go = g.grad_out[0] * inv;
    for (std::size_t i = 0; i < n; ++i) g.grad_in[0][i] += go;
  });
}

Var row_sum(Var a) {
  require_rank("row_sum", a, 2);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m, 0.0);
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  return graph_of(a).record("row_sum", Tensor({m}, std::move(out)), {a},
                            [m, n](const BackwardArgs& g) {
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) g.grad_in[0][i * n + j] += g.grad_out[i];
                            });
}

Var row_norm(Var a, double eps) {
  require_rank("row_norm", a, 2);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m);
  std::vector<double> inv(m);
  const Tensor x = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double sq = K().dot(n, x.ptr() + i * n, x.ptr() + i * n);
    out[i] = std::sqrt(sq);
    inv[i] = 1.0 / std::sqrt(sq + eps);
  }
  return graph_of(a).record("row_norm", Tensor({m}, std::move(out)), {a},
                            [m, n, x, inv](const BackwardArgs& g) {
                              for (std::size_t i = 0; i < m; ++i)
                                K().axpy(n, g.grad_out[i] * inv[i], x.ptr() + i * n, g.grad_in[0] + i * n);
                            });
}

Var conv1d(Var x, Var w, Var b) {
  same_graph(x, w);
  same_graph(x, b);
  require_rank("conv1d", x, 2);
  require_rank("conv1d", w, 3);
  require_rank("conv1d", b, 1);
  const std::size_t cin = x.shape()[0], T = x.shape()[1];
  const std::size_t cout = w.shape()[0], ksz = w.shape()[2];
  if (w.shape()[1] != cin) mismatch("conv1d", x.shape(), w.shape());
  if (b.shape()[0] != cout) mismatch("conv1d", w.shape(), b.shape());
  if (ksz % 2 == 0) throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(ksz));
  const std::size_t pad = ksz / 2;
  const std::size_t rows = cin * ksz;

  // im2col: cols[(c*K + j), t] = x[c, t + j - pad], zero outside [0, T).
  auto cols = std::make_shared<std::vector<double>>(rows * T, 0.0);
  const double* xv = x.value().ptr();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t j = 0; j < ksz; ++j) {
      double* dst = cols->data() + (c * ksz + j) * T;
      for (std::size_t t = 0; t < T; ++t) {
        const long src = static_cast<long>(t) + static_cast<long>(j) - static_cast<long>(pad);
        if (src >= 0 && src < static_cast<long>(T)) dst[t] = xv[c * T + src];
      }
    }
  }
  std::vector<double> out(cout * T);
  const Tensor wv = w.value();
  K().gemm(cout, T, rows, wv.ptr(), cols->data(), out.data(), false);
  const double* bv = b.value().ptr();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < T; ++t) out[o * T + t] += bv[o];

  return graph_of(x).record(
      "conv1d", Tensor({cout, T}, std::move(out)), {x, w, b},
      [cin, T, cout, ksz, pad, rows, cols, wv](const BackwardArgs& g) {
        const double* go = g.grad_out.data();
        if (double* gw = g.grad_in[1]) K().gemm_nt(cout, rows, T, go, cols->data(), gw, true);
        if (double* gb = g.grad_in[2]) {
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t t = 0; t < T; ++t) gb[o] += go[o * T + t];
        }
        if (double* gx = g.grad_in[0]) {
          std::vector<double> gcols(rows * T);
          K().gemm_tn(rows, T, cout, wv.ptr(), go, gcols.data(), false);
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t j = 0; j < ksz; ++j) {
              const double* src = gcols.data() + (c * ksz + j) * T;
              for (std::size_t t = 0; t < T; ++t) {
                const long dst = static_cast<long>(t) + static_cast<long>(j) - static_cast<long>(pad);
                if (dst >= 0 && dst < static_cast<long>(T)) gx[c * T + dst] += src[t];
              }
            }
          }
        }
      });
}

Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  same_graph(x, gamma);
  same_graph(x, beta);
  require_rank("group_norm", x, 2);
  const std::size_t C = x.shape()[0], T = x.shape()[1];
  if (groups == 0 || C % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.shape() != Shape{C}) mismatch("group_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{C}) mismatch("group_norm", x.shape(), beta.shape());
  const std::size_t gs = C / groups;

  const double* xv = x.value().ptr();
  const Tensor gv = gamma.value();
  const double* bv = beta.value().ptr();
  auto xhat = std::make_shared<std::vector<double>>(C * T);
  auto inv_std = std::make_shared<std::vector<double>>(groups * T);
  std::vector<double> out(C * T);
  for (std::size_t q = 0; q < groups; ++q) {
    for (std::size_t t = 0; t < T; ++t) {
      double mu = 0.0;
      for (std::size_t c = q * gs; c < (q + 1) * gs; ++c) mu += xv[c * T + t];
      mu /= static_cast<double>(gs);
      double var = 0.0;
      for (std::size_t c = q * gs; c < (q + 1) * gs; ++c) {
        const double d = xv[c * T + t] - mu;
        var += d * d;
      }
      var /= static_cast<double>(gs);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[q * T + t] = is;
      for (std::size_t c = q * gs; c < (q + 1) * gs; ++c) {
        const double h = (xv[c * T + t] - mu) * is;
        (*xhat)[c * T + t] = h;
        out[c * T + t] = h * gv[c] + bv[c];
      }
    }
  }
  return graph_of(x).record(
      "group_norm", Tensor({C, T}, std::move(out)), {x, gamma, beta},
      [C, T, groups, gs, xhat, inv_std, gv](const BackwardArgs& g) {
        const double* go = g.grad_out.data();
        const auto& xh = *xhat;
        if (double* gg = g.grad_in[1]) {
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) gg[c] += go[c * T + t] * xh[c * T + t];
        }
        if (double* gb = g.grad_in[2]) {
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) gb[c] += go[c * T + t];
        }
        if (double* gx = g.grad_in[0]) {
          const double m = static_cast<double>(gs);
          for (std::size_t q = 0; q < groups; ++q) {
            for (std::size_t t = 0; t < T; ++t) {
              double s1 = 0.0, s2 = 0.0;
              for (std::size_t c = q * gs; c < (q + 1) * gs; ++c) {
                const double dh = go[c * T + t] * gv[c];
                s1 += dh;
                s2 += dh * xh[c * T + t];
              }
              const double is = (*inv_std)[q * T + t];
              for (std::size_t c = q * gs; c < (q + 1) * gs; ++c) {
                const double dh = go[c * T + t] * gv[c];
                gx[c * T + t] += is / m * (m * dh - s1 - xh[c * T + t] * s2);
              }
            }
          }
        }
      });
}

Tensor make_dropout_mask(const Shape& shape, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  const std::size_t n = shape_numel(shape);
  std::vector<double> m(n, 1.0);
  if (rate > 0.0) {
    const double keep = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : m) v = u(rng) < rate ? 0.0 : keep;
  }
  return Tensor(shape, std::move(m));
}

}  // namespace hmmr::ad
