#include "chunkpool/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "chunkpool/errors.hpp"

namespace chunkpool {

namespace detail {

namespace {
thread_local int no_grad_depth = 0;
}

bool grad_enabled() { return no_grad_depth == 0; }

}  // namespace detail

NoGradGuard::NoGradGuard() { ++detail::no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::no_grad_depth; }

std::string shape_str(const Shape& shape) {
    if (shape.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s;
}

namespace {

using detail::NodePtr;
using detail::TensorNode;

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

// Builds an op output node; the backward closure is attached only when the
// graph is live and some parent needs a gradient.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> backward_fn) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (detail::grad_enabled()) {
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    }
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor::wrap(node);
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                         shape_str(t.shape()));
}

// ---- contraction kernels ---------------------------------------------------
// All accumulate into C; inner loops run over contiguous rows.

// C[m x n] += A[m x k] * B[k x n]
void mm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double al = a[l];
            const double* b = B + l * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += al * b[j];
        }
    }
}

// C[m x k] += A[m x n] * B[k x n]^T
void mm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t n,
           std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * n;
        double* c = C + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double* b = B + l * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
            c[l] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
void mm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double al = a[l];
            double* c = C + l * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += al * b[j];
        }
    }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), 0.0);
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), value);
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("from_values: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

std::size_t Tensor::rows() const {
    require_rank2(*this, "rows");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    require_rank2(*this, "cols");
    return node_->shape[1];
}

double Tensor::at(std::size_t i) const {
    if (i >= numel()) throw IndexError("at: index " + std::to_string(i) + " out of range");
    return node_->data[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_rank2(*this, "at");
    if (r >= node_->shape[0] || c >= node_->shape[1])
        throw IndexError("at: (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of range for " + shape_str(node_->shape));
    return node_->data[r * node_->shape[1] + c];
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item: tensor has " + std::to_string(numel()) + " entries");
    return node_->data[0];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- ParameterStore --------------------------------------------------------

Tensor ParameterStore::add(const std::string& name, Tensor tensor) {
    if (contains(name)) throw ConfigError("parameter name already registered: " + name);
    tensor.set_requires_grad(true);
    params_.push_back(Parameter{name, tensor, true});
    return tensor;
}

bool ParameterStore::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

Parameter& ParameterStore::at(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw ConfigError("no such parameter: " + name);
}

const Parameter& ParameterStore::at(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw ConfigError("no such parameter: " + name);
}

void ParameterStore::set_trainable(const std::string& name, bool trainable) {
    Parameter& p = at(name);
    p.trainable = trainable;
    p.tensor.set_requires_grad(trainable);
}

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    mm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_op({m, n}, std::move(out), {a.node(), b.node()},
                   [m, k, n](TensorNode& self) {
                       TensorNode& pa = *self.parents[0];
                       TensorNode& pb = *self.parents[1];
                       if (pa.requires_grad) {
                           pa.ensure_grad();
                           mm_nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
                       }
                       if (pb.requires_grad) {
                           pb.ensure_grad();
                           mm_tn(pa.data.data(), self.grad.data(), pb.grad.data(), m, k, n);
                       }
                   });
}

// ---- elementwise binary ----------------------------------------------------

namespace {

enum class BinKind { add, sub, mul };

Tensor elementwise_binary(BinKind kind, const Tensor& a, const Tensor& b) {
    const bool broadcast = a.rank() == 2 && b.rank() == 1 && b.numel() == a.shape()[1];
    if (!broadcast && a.shape() != b.shape())
        throw ShapeError("elementwise: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " neither match nor row-broadcast");

    const std::size_t n = a.numel();
    const std::size_t width = broadcast ? b.numel() : n;
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double bi = bv[broadcast ? i % width : i];
        switch (kind) {
            case BinKind::add: out[i] = av[i] + bi; break;
            case BinKind::sub: out[i] = av[i] - bi; break;
            case BinKind::mul: out[i] = av[i] * bi; break;
        }
    }
    return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                   [kind, broadcast, width](TensorNode& self) {
                       TensorNode& pa = *self.parents[0];
                       TensorNode& pb = *self.parents[1];
                       const std::size_t count = self.numel();
                       if (pa.requires_grad) {
                           pa.ensure_grad();
                           for (std::size_t i = 0; i < count; ++i) {
                               const double g = self.grad[i];
                               pa.grad[i] += kind == BinKind::mul
                                                 ? g * pb.data[broadcast ? i % width : i]
                                                 : g;
                           }
                       }
                       if (pb.requires_grad) {
                           pb.ensure_grad();
                           for (std::size_t i = 0; i < count; ++i) {
                               double g = self.grad[i];
                               if (kind == BinKind::sub) g = -g;
                               if (kind == BinKind::mul) g *= pa.data[i];
                               pb.grad[broadcast ? i % width : i] += g;
                           }
                       }
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(BinKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(BinKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(BinKind::mul, a, b); }

// ---- elementwise unary -----------------------------------------------------

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// forward value and derivative per entry; derivative may use x and y
Tensor elementwise_unary(const Tensor& x,
                         const std::function<double(double)>& fwd,
                         const std::function<double(double, double)>& deriv) {
    const std::size_t n = x.numel();
    const auto& xv = x.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
    return make_op(x.shape(), std::move(out), {x.node()}, [deriv](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const std::size_t count = self.numel();
        for (std::size_t i = 0; i < count; ++i)
            px.grad[i] += self.grad[i] * deriv(px.data[i], self.data[i]);
    });
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor gelu(const Tensor& x) {
    return elementwise_unary(
        x, [](double v) { return v * norm_cdf(v); },
        [](double v, double) { return norm_cdf(v) + v * norm_pdf(v); });
}

Tensor tanh(const Tensor& x) {
    return elementwise_unary(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise_unary(
        x, [](double v) { return stable_sigmoid(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
    return elementwise_unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    for (double v : x.values())
        if (!(v > 0.0)) throw DomainError("log: non-positive entry " + std::to_string(v));
    return elementwise_unary(
        x, [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

// ---- softmax_masked --------------------------------------------------------

Tensor softmax_masked(const Tensor& scores, const Tensor& mask) {
    require_rank2(scores, "softmax_masked");
    const std::size_t rows = scores.rows(), n = scores.cols();
    const bool broadcast = mask.rank() == 1;
    if (broadcast ? mask.numel() != n : mask.shape() != scores.shape())
        throw ShapeError("softmax_masked: mask " + shape_str(mask.shape()) +
                         " does not fit scores " + shape_str(scores.shape()));

    const auto& sv = scores.values();
    const auto& mv = mask.values();
    std::vector<double> out(rows * n, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* m = broadcast ? mv.data() : mv.data() + r * n;
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (m[j] != 0.0) hi = std::max(hi, sv[r * n + j]);
        if (hi == -std::numeric_limits<double>::infinity())
            throw DomainError("softmax_masked: row " + std::to_string(r) +
                              " has no unmasked entry");
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (m[j] != 0.0) {
                const double e = std::exp(sv[r * n + j] - hi);
                out[r * n + j] = e;
                total += e;
            }
        }
        for (std::size_t j = 0; j < n; ++j)
            if (m[j] != 0.0) out[r * n + j] /= total;
    }
    return make_op(scores.shape(), std::move(out), {scores.node(), mask.node()},
                   [rows, n, broadcast](TensorNode& self) {
                       TensorNode& ps = *self.parents[0];
                       if (!ps.requires_grad) return;  // mask is constant
                       ps.ensure_grad();
                       const TensorNode& pm = *self.parents[1];
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* m =
                               broadcast ? pm.data.data() : pm.data.data() + r * n;
                           const double* p = self.data.data() + r * n;
                           const double* dp = self.grad.data() + r * n;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j)
                               if (m[j] != 0.0) dot += dp[j] * p[j];
                           for (std::size_t j = 0; j < n; ++j)
                               if (m[j] != 0.0)
                                   ps.grad[r * n + j] += p[j] * (dp[j] - dot);
                       }
                   });
}

// ---- layer_norm ------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank2(x, "layer_norm");
    const std::size_t rows = x.rows(), d = x.cols();
    if (gamma.rank() != 1 || gamma.numel() != d || beta.rank() != 1 || beta.numel() != d)
        throw ShapeError("layer_norm: gamma/beta must be rank-1 of width " +
                         std::to_string(d));

    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    std::vector<double> out(rows * d);
    std::vector<double> rstd(rows);
    std::vector<double> xhat(rows * d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gv[j] + bv[j];
        }
    }
    return make_op(
        x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [rows, d, rstd = std::move(rstd), xhat = std::move(xhat)](TensorNode& self) {
            TensorNode& px = *self.parents[0];
            TensorNode& pg = *self.parents[1];
            TensorNode& pb = *self.parents[2];
            for (std::size_t r = 0; r < rows; ++r) {
                const double* dy = self.grad.data() + r * d;
                const double* h = xhat.data() + r * d;
                if (pg.requires_grad) {
                    pg.ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) pg.grad[j] += dy[j] * h[j];
                }
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) pb.grad[j] += dy[j];
                }
                if (px.requires_grad) {
                    px.ensure_grad();
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = dy[j] * pg.data[j];
                        sum_dh += dh;
                        sum_dh_h += dh * h[j];
                    }
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = dy[j] * pg.data[j];
                        px.grad[r * d + j] +=
                            rstd[r] * (dh - inv_d * sum_dh - h[j] * inv_d * sum_dh_h);
                    }
                }
            }
        });
}

// ---- embedding_lookup ------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require_rank2(table, "embedding_lookup");
    const std::size_t vocab = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw IndexError("embedding_lookup: id " + std::to_string(id) +
                             " outside table of " + std::to_string(vocab) + " rows");
    const std::size_t n = ids.size();
    std::vector<double> out(n * d);
    const auto& tv = table.values();
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
    return make_op({n, d}, std::move(out), {table.node()}, [ids, d](TensorNode& self) {
        TensorNode& pt = *self.parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* dst = pt.grad.data() + static_cast<std::size_t>(ids[i]) * d;
            const double* src = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

// ---- reductions ------------------------------------------------------------

Tensor reduce_mean(const Tensor& x) {
    require_rank2(x, "reduce_mean");
    const std::size_t n = x.rows(), d = x.cols();
    if (n == 0) throw ShapeError("reduce_mean: empty reduction over 0 rows");
    std::vector<double> out(d, 0.0);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) out[j] *= inv_n;
    return make_op({d}, std::move(out), {x.node()}, [n, d, inv_n](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                px.grad[i * d + j] += self.grad[j] * inv_n;
    });
}

Tensor reduce_max(const Tensor& x) {
    require_rank2(x, "reduce_max");
    const std::size_t n = x.rows(), d = x.cols();
    if (n == 0) throw ShapeError("reduce_max: empty reduction over 0 rows");
    const auto& xv = x.values();
    std::vector<double> out(d);
    std::vector<std::size_t> argmax(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        double best = xv[j];
        std::size_t best_i = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (xv[i * d + j] > best) {  // strict: ties keep the lowest row
                best = xv[i * d + j];
                best_i = i;
            }
        }
        out[j] = best;
        argmax[j] = best_i;
    }
    return make_op({d}, std::move(out), {x.node()},
                   [d, argmax = std::move(argmax)](TensorNode& self) {
                       TensorNode& px = *self.parents[0];
                       if (!px.requires_grad) return;
                       px.ensure_grad();
                       for (std::size_t j = 0; j < d; ++j)
                           px.grad[argmax[j] * d + j] += self.grad[j];
                   });
}

// ---- concatenation / stacking ----------------------------------------------

namespace {

void require_equal_width_vectors(const std::vector<Tensor>& parts, const char* op) {
    if (parts.empty()) throw ShapeError(std::string(op) + ": no parts");
    for (const auto& p : parts) {
        if (p.rank() != 1)
            throw ShapeError(std::string(op) + ": parts must be rank-1, got " +
                             shape_str(p.shape()));
        if (p.numel() != parts.front().numel())
            throw ShapeError(std::string(op) + ": mixed widths " +
                             std::to_string(parts.front().numel()) + " and " +
                             std::to_string(p.numel()));
    }
}

std::vector<NodePtr> nodes_of(const std::vector<Tensor>& parts) {
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.node());
    return nodes;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts) {
    require_equal_width_vectors(parts, "concat");
    const std::size_t d = parts.front().numel();
    std::vector<double> out;
    out.reserve(parts.size() * d);
    for (const auto& p : parts)
        out.insert(out.end(), p.values().begin(), p.values().end());
    return make_op({parts.size() * d}, std::move(out), nodes_of(parts),
                   [d](TensorNode& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                           TensorNode& p = *self.parents[i];
                           if (!p.requires_grad) continue;
                           p.ensure_grad();
                           for (std::size_t j = 0; j < d; ++j)
                               p.grad[j] += self.grad[i * d + j];
                       }
                   });
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
    require_equal_width_vectors(parts, "stack_rows");
    const std::size_t d = parts.front().numel();
    std::vector<double> out;
    out.reserve(parts.size() * d);
    for (const auto& p : parts)
        out.insert(out.end(), p.values().begin(), p.values().end());
    return make_op({parts.size(), d}, std::move(out), nodes_of(parts),
                   [d](TensorNode& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                           TensorNode& p = *self.parents[i];
                           if (!p.requires_grad) continue;
                           p.ensure_grad();
                           for (std::size_t j = 0; j < d; ++j)
                               p.grad[j] += self.grad[i * d + j];
                       }
                   });
}

Tensor row(const Tensor& x, std::size_t i) {
    require_rank2(x, "row");
    const std::size_t n = x.rows(), d = x.cols();
    if (i >= n)
        throw IndexError("row: index " + std::to_string(i) + " out of " + std::to_string(n));
    std::vector<double> out(x.values().begin() + i * d, x.values().begin() + (i + 1) * d);
    return make_op({d}, std::move(out), {x.node()}, [i, d](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t j = 0; j < d; ++j) px.grad[i * d + j] += self.grad[j];
    });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width) {
    require_rank2(x, "slice_cols");
    const std::size_t n = x.rows(), d = x.cols();
    if (start + width > d)
        throw IndexError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") exceeds width " +
                         std::to_string(d));
    std::vector<double> out(n * width);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(xv.data() + i * d + start, width, out.data() + i * width);
    return make_op({n, width}, std::move(out), {x.node()},
                   [n, d, start, width](TensorNode& self) {
                       TensorNode& px = *self.parents[0];
                       if (!px.requires_grad) return;
                       px.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < width; ++j)
                               px.grad[i * d + start + j] += self.grad[i * width + j];
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t n = parts.front().rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != n)
            throw ShapeError("concat_cols: row counts differ, " + std::to_string(n) +
                             " vs " + std::to_string(p.rows()));
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<double> out(n * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].values();
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(pv.data() + i * widths[k], widths[k],
                        out.data() + i * total + offset);
        offset += widths[k];
    }
    return make_op({n, total}, std::move(out), nodes_of(parts),
                   [n, total, widths = std::move(widths)](TensorNode& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                           TensorNode& p = *self.parents[k];
                           const std::size_t w = widths[k];
                           if (p.requires_grad) {
                               p.ensure_grad();
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < w; ++j)
                                       p.grad[i * w + j] += self.grad[i * total + off + j];
                           }
                           off += w;
                       }
                   });
}

Tensor transpose(const Tensor& x) {
    require_rank2(x, "transpose");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
    return make_op({n, m}, std::move(out), {x.node()}, [m, n](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) px.grad[i * n + j] += self.grad[j * m + i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes the element count");
    std::vector<double> out = x.values();
    return make_op(std::move(shape), std::move(out), {x.node()}, [](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < self.numel(); ++i) px.grad[i] += self.grad[i];
    });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
    return make_op(x.shape(), std::move(out), {x.node()}, [c](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < self.numel(); ++i) px.grad[i] += self.grad[i] * c;
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_op({1}, {total}, {x.node()}, [](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (double& g : px.grad) g += self.grad[0];
    });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    std::vector<double> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
    return make_op(x.shape(), std::move(out), {x.node()}, [lo, hi](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < self.numel(); ++i)
            if (px.data[i] > lo && px.data[i] < hi) px.grad[i] += self.grad[i];
    });
}

Tensor zero_masked_rows(const Tensor& x, const Tensor& mask) {
    require_rank2(x, "zero_masked_rows");
    const std::size_t n = x.rows(), d = x.cols();
    if (mask.rank() != 1 || mask.numel() != n)
        throw ShapeError("zero_masked_rows: mask must be rank-1 with one entry per row");
    std::vector<double> out(n * d, 0.0);
    const auto& xv = x.values();
    const auto& mv = mask.values();
    for (std::size_t i = 0; i < n; ++i)
        if (mv[i] != 0.0) std::copy_n(xv.data() + i * d, d, out.data() + i * d);
    return make_op(x.shape(), std::move(out), {x.node(), mask.node()},
                   [n, d](TensorNode& self) {
                       TensorNode& px = *self.parents[0];
                       if (!px.requires_grad) return;
                       px.ensure_grad();
                       const TensorNode& pm = *self.parents[1];
                       for (std::size_t i = 0; i < n; ++i)
                           if (pm.data[i] != 0.0)
                               for (std::size_t j = 0; j < d; ++j)
                                   px.grad[i * d + j] += self.grad[i * d + j];
                   });
}

Tensor dropout(const Tensor& x, double p, Mode mode, Prng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: probability " + std::to_string(p) +
                          " outside [0, 1)");
    if (mode == Mode::eval || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
    std::vector<double> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    return make_op(x.shape(), std::move(out), {x.node()},
                   [mask = std::move(mask)](TensorNode& self) {
                       TensorNode& px = *self.parents[0];
                       if (!px.requires_grad) return;
                       px.ensure_grad();
                       for (std::size_t i = 0; i < self.numel(); ++i)
                           px.grad[i] += self.grad[i] * mask[i];
                   });
}

Tensor bce_loss(const Tensor& probs, const Tensor& targets) {
    if (probs.rank() != 1 || targets.rank() != 1 || probs.numel() != targets.numel())
        throw ShapeError("bce_loss: probs " + shape_str(probs.shape()) +
                         " vs targets " + shape_str(targets.shape()));
    const std::size_t n = probs.numel();
    if (n == 0) throw ShapeError("bce_loss: empty input");
    const Tensor ones = Tensor::full({n}, 1.0);
    const Tensor p = clamp(probs, 1e-7, 1.0 - 1e-7);
    const Tensor term =
        add(mul(targets, log(p)), mul(sub(ones, targets), log(sub(ones, p))));
    return scale(sum(term), -1.0 / static_cast<double>(n));
}

// ---- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    TensorNode* root = loss.node().get();
    if (!root->requires_grad) {
        // Constant loss: nothing reachable needs a gradient.
        return;
    }

    // Post-order DFS over the requires_grad subgraph.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        bool descended = false;
        while (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            topo.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    // Intermediates restart from zero each pass; leaf gradients persist so
    // repeated backward calls accumulate.
    for (TensorNode* node : topo) {
        node->ensure_grad();
        if (node->backward_fn) std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
    root->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

// ---- gradient checking -----------------------------------------------------

namespace {

double max_relative_error(const std::vector<double>& g_ad,
                          const std::function<double(std::size_t)>& g_fd_at,
                          std::size_t n) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double fd = g_fd_at(i);
        const double ad = g_ad[i];
        const double rel =
            std::abs(ad - fd) / std::max(1.0, std::abs(ad) + std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h) {
    Tensor probe = Tensor::from_values(x.shape(), x.values(), true);
    Tensor y = f(probe);
    if (y.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
    backward(y);
    std::vector<double> g_ad =
        probe.has_grad() ? probe.grad() : std::vector<double>(x.numel(), 0.0);

    NoGradGuard no_grad;
    return max_relative_error(
        g_ad,
        [&](std::size_t i) {
            std::vector<double> vp = x.values();
            vp[i] += h;
            const double fp = f(Tensor::from_values(x.shape(), std::move(vp))).item();
            std::vector<double> vm = x.values();
            vm[i] -= h;
            const double fm = f(Tensor::from_values(x.shape(), std::move(vm))).item();
            return (fp - fm) / (2.0 * h);
        },
        x.numel());
}

double grad_check_param(const std::function<Tensor()>& f, Tensor param, double h) {
    param.zero_grad();
    Tensor y = f();
    if (y.numel() != 1) throw ShapeError("grad_check_param: f must be scalar-valued");
    backward(y);
    std::vector<double> g_ad =
        param.has_grad() ? param.grad() : std::vector<double>(param.numel(), 0.0);

    NoGradGuard no_grad;
    std::vector<double>& buf = param.values();
    return max_relative_error(
        g_ad,
        [&](std::size_t i) {
            const double saved = buf[i];
            buf[i] = saved + h;
            const double fp = f().item();
            buf[i] = saved - h;
            const double fm = f().item();
            buf[i] = saved;
            return (fp - fm) / (2.0 * h);
        },
        param.numel());
}

}  // namespace chunkpool
