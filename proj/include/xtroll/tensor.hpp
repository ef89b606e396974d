#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace xtroll {

/// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
///
/// Tensors are cheap shared handles: copies alias the same storage. All math
/// runs in double; reductions are sequential left-to-right so results are
/// bitwise reproducible within a build.
class Tensor {
  public:
    struct Data {
        std::vector<std::size_t> shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty until first accumulation
        bool requires_grad = false;
        bool needs_grad = false;  // requires_grad, or downstream of a tensor that does
    };

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor scalar(double v);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor param(std::vector<std::size_t> shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(d_); }
    const std::vector<std::size_t>& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t size() const { return d_->values.size(); }
    std::size_t rows() const { return d_->shape.at(0); }
    std::size_t cols() const { return d_->shape.at(1); }

    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    std::vector<double>& grad() { return d_->grad; }
    const std::vector<double>& grad() const { return d_->grad; }

    double& at(std::size_t i) { return d_->values[i]; }
    double at(std::size_t i) const { return d_->values[i]; }
    double& at(std::size_t i, std::size_t j) { return d_->values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return d_->values[i * cols() + j]; }
    double item() const;

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool on) {
        d_->requires_grad = on;
        d_->needs_grad = d_->needs_grad || on;
    }
    bool needs_grad() const { return d_->needs_grad; }

    // Sizes the gradient buffer (zero-filled) if absent.
    void ensure_grad();
    void zero_grad();

    Data* data() { return d_.get(); }
    const Data* data() const { return d_.get(); }

    std::string shape_str() const;

  private:
    explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
    std::shared_ptr<Data> d_;
};

/// Records the forward pass as a list of backward closures. Rebuilt per
/// forward pass; backward() replays it once in reverse.
class Tape {
  public:
    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded input.
    /// Repeated calls without zeroing accumulate into existing gradients.
    void backward(Tensor& loss);

    void reset() { ops_.clear(); }
    std::size_t size() const { return ops_.size(); }

  private:
    std::vector<std::function<void()>> ops_;
};

// ---- differentiable operations ------------------------------------------
// Every op validates shapes, computes the forward result, and (when any
// input needs a gradient) records a backward closure on the tape.

// [m×k]·[k×n] -> [m×n], [m×k]·[k] -> [m], [k]·[k×n] -> [n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);       // same shape
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);       // same shape
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);       // elementwise
Tensor add_rowwise(Tape& tape, const Tensor& x, const Tensor& bias);  // [m×n]+[n]
Tensor add_scalar_tensor(Tape& tape, const Tensor& x, const Tensor& s);
Tensor mul_scalar_tensor(Tape& tape, const Tensor& x, const Tensor& s);
Tensor mul_scalar(Tape& tape, const Tensor& x, double c);
Tensor add_scalar(Tape& tape, const Tensor& x, double c);

Tensor transpose(Tape& tape, const Tensor& x);  // 2-D only

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor log_strict(Tape& tape, const Tensor& x);               // domain error if x <= 0
Tensor log_clamped(Tape& tape, const Tensor& x, double eps);  // log(max(x, eps))
Tensor abs_val(Tape& tape, const Tensor& x);
Tensor reciprocal(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);   // -> [1]
Tensor mean(Tape& tape, const Tensor& x);  // -> [1]
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);  // 1-D, -> [1]

// Max-subtracted softmax. softmax_row over a 1-D tensor; softmax_rows
// normalizes each row of a 2-D tensor independently.
Tensor softmax_row(Tape& tape, const Tensor& x);
Tensor softmax_rows(Tape& tape, const Tensor& x);

// Row-wise layer normalization to zero mean / unit variance (no affine).
Tensor layer_norm_rows(Tape& tape, const Tensor& x, double eps = 1e-12);

// y_i = x_{i+1} - x_i for a 1-D input, length n-1.
Tensor adjacent_diff(Tape& tape, const Tensor& x);

// Stacks n equal-length 1-D tensors into [n×d].
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);

// Copies row i of a 2-D tensor into a 1-D tensor.
Tensor row(Tape& tape, const Tensor& x, std::size_t i);

// Copies the given rows of a 2-D tensor (backward scatter-adds).
Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<std::size_t>& idx);

// ids index rows of table [V×d]; result [n×d].
Tensor embedding_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids);

// ---- optimizer -----------------------------------------------------------

/// AdamW state (decoupled weight decay). Moments are stored per parameter in
/// registration order.
struct OptimizerState {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;

    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<Tensor>& params);
};

// One AdamW step over params; gradients are zeroed afterwards. Throws
// ContractError when a parameter has no populated gradient.
void adamw_step(std::vector<Tensor>& params, OptimizerState& state);

}  // namespace xtroll
