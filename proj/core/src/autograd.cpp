#include "nqp/autograd.hpp"

#include <cmath>

namespace nqp {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMajor>;
using MapCRM = Eigen::Map<const RowMajor>;
using ComplexRowMajor = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MapCRM map2(const Tensor& t, long r, long c) { return MapCRM(t.data.data(), r, c); }
MapRM map2(Tensor& t, long r, long c) { return MapRM(t.data.data(), r, c); }

}  // namespace

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backprop)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Tensor& Tape::ensure_grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty() && n.value.numel() > 0) n.grad = Tensor(n.value.shape);
  return n.grad;
}

void Tape::accumulate(int id, const std::function<void(Tensor&)>& fn) {
  if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
  fn(ensure_grad(id));
}

const Tensor& Tape::grad(Var v) { return ensure_grad(v.id); }

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw ConfigError("add shape mismatch");
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  const bool rg = requires_grad(a) || requires_grad(b);
  Var self;
  self = push(std::move(out), rg, [a, b, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    t.accumulate(a.id, [&](Tensor& ga) {
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
    t.accumulate(b.id, [&](Tensor& gb) {
      for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
    });
  });
  return self;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw ConfigError("sub shape mismatch");
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] - tb.data[i];
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    t.accumulate(a.id, [&](Tensor& ga) {
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
    t.accumulate(b.id, [&](Tensor& gb) {
      for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
    });
  });
}

Var Tape::scale(Var a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = c * ta.data[i];
  return push(std::move(out), requires_grad(a), [a, c, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    t.accumulate(a.id, [&](Tensor& ga) {
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    });
  });
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  const Tensor& tb = value(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1) throw ConfigError("linear expects x[R,Cin], w[Cin,Cout], b[Cout]");
  const long rows = tx.rows(), cin = tx.cols(), cout = tw.cols();
  if (tw.rows() != cin || tb.dim(0) != cout) throw ConfigError("linear shape mismatch");

  Tensor out({rows, cout});
  {
    MapCRM mx = map2(tx, rows, cin);
    MapCRM mw = map2(tw, cin, cout);
    MapRM mo = map2(out, rows, cout);
    mo.noalias() = mx * mw;
    mo.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(tb.data.data(), cout);
  }
  const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  return push(std::move(out), rg, [x, w, b, rows, cin, cout, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    MapCRM mg = map2(g, rows, cout);
    const Tensor& tx2 = t.value(x);
    const Tensor& tw2 = t.value(w);
    t.accumulate(x.id, [&](Tensor& gx) {
      MapRM mgx = map2(gx, rows, cin);
      mgx.noalias() += mg * map2(tw2, cin, cout).transpose();
    });
    t.accumulate(w.id, [&](Tensor& gw) {
      MapRM mgw = map2(gw, cin, cout);
      mgw.noalias() += map2(tx2, rows, cin).transpose() * mg;
    });
    t.accumulate(b.id, [&](Tensor& gb) {
      Eigen::Map<Eigen::RowVectorXd> mgb(gb.data.data(), cout);
      mgb += mg.colwise().sum();
    });
  });
}

Var Tape::gelu(Var x) {
  const Tensor& tx = value(x);
  Tensor out(tx.shape);
  // The normal CDF is cached for backward, which then only needs exp.
  std::vector<double> cdf(tx.data.size());
  for (size_t i = 0; i < out.data.size(); ++i) {
    cdf[i] = 0.5 * std::erfc(-tx.data[i] * M_SQRT1_2);
    out.data[i] = tx.data[i] * cdf[i];
  }
  return push(std::move(out), requires_grad(x),
              [x, cdf = std::move(cdf), self_id = static_cast<int>(nodes_.size())](Tape& t) {
                const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
                const Tensor& tx2 = t.value(x);
                constexpr double inv_sqrt_2pi = 0.3989422804014327;
                t.accumulate(x.id, [&](Tensor& gx) {
                  for (size_t i = 0; i < g.data.size(); ++i) {
                    const double xv = tx2.data[i];
                    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv * xv);
                    gx.data[i] += g.data[i] * (cdf[i] + xv * pdf);
                  }
                });
              });
}

Var Tape::dft_time(Var x) {
  Tensor out = nqp::dft_time(value(x));
  return push(std::move(out), requires_grad(x), [x, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    // Adjoint of the unnormalized forward transform is T times the
    // normalized inverse.
    Tensor gx_term = nqp::idft_time(g);
    const double t_len = static_cast<double>(g.rows());
    t.accumulate(x.id, [&](Tensor& gx) {
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += t_len * gx_term.data[i];
    });
  });
}

Var Tape::idft_time(Var x) {
  Tensor out = nqp::idft_time(value(x));
  return push(std::move(out), requires_grad(x), [x, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    Tensor gx_term = nqp::dft_time(g);
    const double t_len = static_cast<double>(g.rows());
    t.accumulate(x.id, [&](Tensor& gx) {
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gx_term.data[i] / t_len;
    });
  });
}

Var Tape::zero_modes(Var x, long keep) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2) throw ConfigError("zero_modes expects a rank-2 tensor");
  if (keep < 0 || keep > tx.rows()) throw ConfigError("zero_modes keep count out of range");
  Tensor out = tx;
  const size_t cols = static_cast<size_t>(tx.cols());
  std::fill(out.data.begin() + static_cast<long>(keep * tx.cols()), out.data.end(), 0.0);
  (void)cols;
  return push(std::move(out), requires_grad(x), [x, keep, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    const long ncols = g.cols();
    t.accumulate(x.id, [&](Tensor& gx) {
      for (long i = 0; i < keep * ncols; ++i) gx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
    });
  });
}

Var Tape::complex_pointwise_mul(Var x, Var w) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  if (tx.rank() != 2 || tx.cols() % 2 != 0) throw ConfigError("complex_pointwise_mul expects x [T, 2 C_in]");
  if (tw.rank() != 4 || tw.dim(3) != 2) throw ConfigError("complex_pointwise_mul expects w [T, C_in, C_out, 2]");
  const long t_len = tx.rows();
  const long cin = tx.cols() / 2;
  const long cout = tw.dim(2);
  if (tw.dim(0) != t_len || tw.dim(1) != cin) throw ConfigError("complex_pointwise_mul shape mismatch");

  // Hand-rolled re/im loops: the per-mode blocks are too small for
  // library GEMM calls, and std::complex products would go through the
  // nan-recovering __muldc3 helper.
  Tensor out({t_len, 2 * cout});
  {
    const double* xp = tx.data.data();
    const double* wp = tw.data.data();
    double* op = out.data.data();
    for (long n = 0; n < t_len; ++n) {
      const double* xr = xp + n * 2 * cin;
      const double* wn = wp + n * 2 * cin * cout;
      double* orow = op + n * 2 * cout;
      for (long i = 0; i < cin; ++i) {
        const double ar = xr[2 * i], ai = xr[2 * i + 1];
        const double* wrow = wn + i * 2 * cout;
        for (long j = 0; j < cout; ++j) {
          orow[2 * j] += ar * wrow[2 * j] - ai * wrow[2 * j + 1];
          orow[2 * j + 1] += ar * wrow[2 * j + 1] + ai * wrow[2 * j];
        }
      }
    }
  }
  const bool rg = requires_grad(x) || requires_grad(w);
  return push(std::move(out), rg, [x, w, t_len, cin, cout, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    const Tensor& tx2 = t.value(x);
    const Tensor& tw2 = t.value(w);
    const double* gp = g.data.data();
    const double* xp = tx2.data.data();
    const double* wp = tw2.data.data();
    // gx_i += sum_j g_j conj(w_ij); gw_ij += conj(x_i) g_j
    t.accumulate(x.id, [&](Tensor& gx) {
      double* gxp = gx.data.data();
      for (long n = 0; n < t_len; ++n) {
        const double* gr = gp + n * 2 * cout;
        const double* wn = wp + n * 2 * cin * cout;
        double* gxr = gxp + n * 2 * cin;
        for (long i = 0; i < cin; ++i) {
          const double* wrow = wn + i * 2 * cout;
          double acc_re = 0.0, acc_im = 0.0;
          for (long j = 0; j < cout; ++j) {
            const double wr = wrow[2 * j], wi = wrow[2 * j + 1];
            const double gr_re = gr[2 * j], gr_im = gr[2 * j + 1];
            acc_re += gr_re * wr + gr_im * wi;
            acc_im += gr_im * wr - gr_re * wi;
          }
          gxr[2 * i] += acc_re;
          gxr[2 * i + 1] += acc_im;
        }
      }
    });
    t.accumulate(w.id, [&](Tensor& gw) {
      double* gwp = gw.data.data();
      for (long n = 0; n < t_len; ++n) {
        const double* gr = gp + n * 2 * cout;
        const double* xr = xp + n * 2 * cin;
        double* gwn = gwp + n * 2 * cin * cout;
        for (long i = 0; i < cin; ++i) {
          const double ar = xr[2 * i], ai = -xr[2 * i + 1];
          double* gwrow = gwn + i * 2 * cout;
          for (long j = 0; j < cout; ++j) {
            gwrow[2 * j] += ar * gr[2 * j] - ai * gr[2 * j + 1];
            gwrow[2 * j + 1] += ar * gr[2 * j + 1] + ai * gr[2 * j];
          }
        }
      }
    });
  });
}

Var Tape::time_fd(Var x, double dt) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2 || tx.rows() < 3) throw ConfigError("time_fd expects a rank-2 tensor with at least 3 rows");
  const long rows = tx.rows(), cols = tx.cols();
  const double inv2dt = 1.0 / (2.0 * dt);

  Tensor out({rows, cols});
  for (long c = 0; c < cols; ++c) {
    out.at2(0, c) = (-3.0 * tx.at2(0, c) + 4.0 * tx.at2(1, c) - tx.at2(2, c)) * inv2dt;
    for (long n = 1; n < rows - 1; ++n) out.at2(n, c) = (tx.at2(n + 1, c) - tx.at2(n - 1, c)) * inv2dt;
    out.at2(rows - 1, c) =
        (3.0 * tx.at2(rows - 1, c) - 4.0 * tx.at2(rows - 2, c) + tx.at2(rows - 3, c)) * inv2dt;
  }
  return push(std::move(out), requires_grad(x), [x, rows, cols, inv2dt, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self_id)].grad;
    t.accumulate(x.id, [&](Tensor& gx) {
      for (long c = 0; c < cols; ++c) {
        // adjoint of the stencil above
        gx.at2(0, c) += (-3.0 * g.at2(0, c)) * inv2dt;
        gx.at2(1, c) += (4.0 * g.at2(0, c)) * inv2dt;
        gx.at2(2, c) += (-g.at2(0, c)) * inv2dt;
        for (long n = 1; n < rows - 1; ++n) {
          gx.at2(n + 1, c) += g.at2(n, c) * inv2dt;
          gx.at2(n - 1, c) -= g.at2(n, c) * inv2dt;
        }
        gx.at2(rows - 1, c) += (3.0 * g.at2(rows - 1, c)) * inv2dt;
        gx.at2(rows - 2, c) += (-4.0 * g.at2(rows - 1, c)) * inv2dt;
        gx.at2(rows - 3, c) += g.at2(rows - 1, c) * inv2dt;
      }
    });
  });
}

Var Tape::frobenius_rows_mean(Var x, double divisor) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2) throw ConfigError("frobenius_rows_mean expects a rank-2 tensor");
  if (divisor <= 0.0) throw ConfigError("frobenius_rows_mean divisor must be positive");
  const long rows = tx.rows(), cols = tx.cols();

  std::vector<double> norms(static_cast<size_t>(rows), 0.0);
  double sum = 0.0;
  for (long r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (long c = 0; c < cols; ++c) sq += tx.at2(r, c) * tx.at2(r, c);
    norms[static_cast<size_t>(r)] = std::sqrt(sq);
    sum += norms[static_cast<size_t>(r)];
  }
  Tensor out({1});
  out.data[0] = sum / divisor;
  return push(std::move(out), requires_grad(x),
              [x, rows, cols, divisor, norms = std::move(norms), self_id = static_cast<int>(nodes_.size())](Tape& t) {
                const double g = t.nodes_[static_cast<size_t>(self_id)].grad.data[0];
                const Tensor& tx2 = t.value(x);
                t.accumulate(x.id, [&](Tensor& gx) {
                  for (long r = 0; r < rows; ++r) {
                    const double nr = norms[static_cast<size_t>(r)];
                    if (nr == 0.0) continue;  // subgradient 0 at the kink
                    const double s = g / (divisor * nr);
                    for (long c = 0; c < cols; ++c) gx.at2(r, c) += s * tx2.at2(r, c);
                  }
                });
              });
}

Var Tape::sum_squares(Var x) {
  const Tensor& tx = value(x);
  double sum = 0.0;
  for (double v : tx.data) sum += v * v;
  Tensor out({1});
  out.data[0] = sum;
  return push(std::move(out), requires_grad(x), [x, self_id = static_cast<int>(nodes_.size())](Tape& t) {
    const double g = t.nodes_[static_cast<size_t>(self_id)].grad.data[0];
    const Tensor& tx2 = t.value(x);
    t.accumulate(x.id, [&](Tensor& gx) {
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += 2.0 * g * tx2.data[i];
    });
  });
}

void Tape::backward(Var loss) {
  if (!loss.valid() || static_cast<size_t>(loss.id) >= nodes_.size()) throw ConfigError("backward on invalid node");
  if (nodes_[static_cast<size_t>(loss.id)].value.numel() != 1) throw ConfigError("backward requires a scalar loss");
  ensure_grad(loss.id).data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.data.empty() || !n.backprop) continue;
    n.backprop(*this);
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
    throw ConfigError("adam_step buffer size mismatch");
  state.step_count += 1;
  const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / b1t;
    const double vhat = state.v[i] / b2t;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace nqp
