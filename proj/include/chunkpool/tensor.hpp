#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "chunkpool/rng.hpp"

namespace chunkpool {

using Shape = std::vector<std::size_t>;

enum class Mode { train, eval };

std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One vertex of the reverse-mode graph. `backward_fn` is set only on op
// outputs; it reads this node's grad and accumulates into the parents.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward first touches this node
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

bool grad_enabled();

}  // namespace detail

// Scoped switch that disables graph construction (inference, finite
// differences). Nested guards stack.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major f64 tensor with an optional gradient slot. Value type:
// copies share the underlying node. Data is immutable once an op has
// consumed the tensor; leaves may be rewritten in place (optimizer steps,
// finite-difference probes) between forward passes.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values,
                              bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->numel(); }
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only

    const std::vector<double>& values() const { return node_->data; }
    std::vector<double>& values() { return node_->data; }
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;
    double item() const;  // scalar only

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool requires_grad) { node_->requires_grad = requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const { return node_->grad; }
    void zero_grad();

    detail::NodePtr node() const { return node_; }
    static Tensor wrap(detail::NodePtr node) { return Tensor(std::move(node)); }

  private:
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    detail::NodePtr node_;
};

// A named, optionally trainable tensor. The trainable flag mirrors the
// tensor's requires_grad and is what the optimizer consults.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

class ParameterStore {
  public:
    // Registers a fresh parameter; the name must be unique.
    Tensor add(const std::string& name, Tensor tensor);
    bool contains(const std::string& name) const;
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }
    void set_trainable(const std::string& name, bool trainable);

  private:
    std::vector<Parameter> params_;
};

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; b may also be a rank-1 vector broadcast across the rows of a
// rank-2 a. No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor gelu(const Tensor& x);  // exact form x * Phi(x), Phi via erf
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Per-row exp-normalization over unmasked entries; masked entries get
// probability exactly 0. Mask is {0,1}, same shape as scores or a rank-1
// row broadcast, and is treated as a constant.
Tensor softmax_masked(const Tensor& scores, const Tensor& mask);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// Column-wise reductions over the rows of a rank-2 tensor.
Tensor reduce_mean(const Tensor& x);
Tensor reduce_max(const Tensor& x);  // ties route to the lowest row index

// Concatenation of equal-width rank-1 vectors into one long vector.
Tensor concat(const std::vector<Tensor>& parts);
// Stack rank-1 vectors of equal width into a rank-2 matrix.
Tensor stack_rows(const std::vector<Tensor>& parts);

Tensor row(const Tensor& x, std::size_t i);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor scale(const Tensor& x, double c);
Tensor sum(const Tensor& x);  // -> scalar, shape {1}
Tensor clamp(const Tensor& x, double lo, double hi);

// Zero out whole rows of a rank-2 tensor where mask (rank-1, one entry per
// row) is 0. Mask is constant.
Tensor zero_masked_rows(const Tensor& x, const Tensor& mask);

// Inverted dropout: in train mode each entry is zeroed with probability p
// and survivors are scaled by 1/(1-p); eval mode is the identity. The mask
// is drawn from rng in flat index order and reused in backward.
Tensor dropout(const Tensor& x, double p, Mode mode, Prng& rng);

// Mean over entries of -[y log p + (1-y) log(1-p)]; probabilities are
// clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& probs, const Tensor& targets);

// Reverse pass from a scalar loss. Gradients accumulate into every
// requires_grad tensor reachable from the loss; calling twice on the same
// graph doubles every leaf gradient.
void backward(const Tensor& loss);

// Max relative error between the reverse-mode gradient of f at x and
// central finite differences with step h. f must be scalar-valued and
// deterministic.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h = 1e-5);

// Same check for a closure that reads `param` from shared state (model
// parameters); the buffer is perturbed in place and restored.
double grad_check_param(const std::function<Tensor()>& f, Tensor param,
                        double h = 1e-5);

}  // namespace chunkpool
