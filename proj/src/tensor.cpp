#include "xtroll/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "xtroll/error.hpp"

namespace xtroll {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void check_finite_inputs(const Tensor& x, const char* op) {
    for (double v : x.values()) {
        if (!std::isfinite(v)) {
            throw DomainError(std::string(op) + ": non-finite input value");
        }
    }
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    auto d = std::make_shared<Data>();
    d->values.assign(shape_product(shape), 0.0);
    d->shape = std::move(shape);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v) {
    Tensor t = zeros({1});
    t.at(0) = v;
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    if (shape_product(shape) != values.size()) {
        throw DimensionError("tensor: value count " + std::to_string(values.size()) +
                             " does not match shape product " +
                             std::to_string(shape_product(shape)));
    }
    auto d = std::make_shared<Data>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    return Tensor(std::move(d));
}

Tensor Tensor::param(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item: tensor of shape " + shape_str() + " is not a scalar");
    }
    return d_->values[0];
}

void Tensor::ensure_grad() {
    if (d_->grad.size() != d_->values.size()) {
        d_->grad.assign(d_->values.size(), 0.0);
    }
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) {
        d_->grad.assign(d_->values.size(), 0.0);
    }
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < d_->shape.size(); ++i) {
        if (i) os << "x";
        os << d_->shape[i];
    }
    os << "]";
    return os.str();
}

void Tape::backward(Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar tensor, got " +
                            (loss.defined() ? loss.shape_str() : std::string("<null>")));
    }
    loss.ensure_grad();
    loss.grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        (*it)();
    }
}

namespace {

// Shared setup for unary/binary op results: propagate needs_grad and make
// sure buffers exist before the closure captures them.
Tensor make_result(std::vector<std::size_t> shape, bool needs) {
    Tensor out = Tensor::zeros(std::move(shape));
    if (needs) {
        out.data()->needs_grad = true;
        out.ensure_grad();
    }
    return out;
}

void prep_input(const Tensor& t) {
    const_cast<Tensor&>(t).ensure_grad();
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    const bool a_vec = a.rank() == 1;
    const bool b_vec = b.rank() == 1;
    if (a.rank() > 2 || b.rank() > 2 || (a_vec && b_vec)) {
        throw DimensionError("matmul: unsupported ranks " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t m = a_vec ? 1 : a.rows();
    const std::size_t k = a_vec ? a.size() : a.cols();
    const std::size_t k2 = b_vec ? b.size() : b.rows();
    const std::size_t n = b_vec ? 1 : b.cols();
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions differ: " + a.shape_str() + " vs " +
                             b.shape_str());
    }

    std::vector<std::size_t> out_shape;
    if (a_vec) out_shape = {n};
    else if (b_vec) out_shape = {m};
    else out_shape = {m, n};

    const bool needs = a.needs_grad() || b.needs_grad();
    Tensor out = make_result(out_shape, needs);

    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    // Sequential left-to-right accumulation: the reduction order is part of
    // the determinism contract.
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += av[i * k + p] * bv[p * n + j];
            }
            ov[i * n + j] = acc;
        }
    }

    if (needs) {
        if (a.needs_grad()) prep_input(a);
        if (b.needs_grad()) prep_input(b);
        tape.record([a, b, out, m, n, k]() {
            const double* og = out.grad().data();
            if (a.needs_grad()) {
                double* ag = const_cast<Tensor&>(a).grad().data();
                const double* bv2 = b.values().data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            acc += og[i * n + j] * bv2[p * n + j];
                        }
                        ag[i * k + p] += acc;
                    }
                }
            }
            if (b.needs_grad()) {
                double* bg = const_cast<Tensor&>(b).grad().data();
                const double* av2 = a.values().data();
                for (std::size_t p = 0; p < k; ++p) {
                    for (std::size_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < m; ++i) {
                            acc += av2[i * k + p] * og[i * n + j];
                        }
                        bg[p * n + j] += acc;
                    }
                }
            }
        });
    }
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise_binary(Tape& tape, const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                          Bwd bwd) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(name) + ": shape mismatch: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const bool needs = a.needs_grad() || b.needs_grad();
    Tensor out = make_result(a.shape(), needs);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.at(i) = fwd(a.at(i), b.at(i));
    }
    if (needs) {
        if (a.needs_grad()) prep_input(a);
        if (b.needs_grad()) prep_input(b);
        tape.record([a, b, out, bwd]() {
            for (std::size_t i = 0; i < out.size(); ++i) {
                bwd(a, b, out, i);
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        tape, a, b, "add", [](double x, double y) { return x + y; },
        [](const Tensor& a2, const Tensor& b2, const Tensor& out, std::size_t i) {
            const double g = out.grad()[i];
            if (a2.needs_grad()) const_cast<Tensor&>(a2).grad()[i] += g;
            if (b2.needs_grad()) const_cast<Tensor&>(b2).grad()[i] += g;
        });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        tape, a, b, "sub", [](double x, double y) { return x - y; },
        [](const Tensor& a2, const Tensor& b2, const Tensor& out, std::size_t i) {
            const double g = out.grad()[i];
            if (a2.needs_grad()) const_cast<Tensor&>(a2).grad()[i] += g;
            if (b2.needs_grad()) const_cast<Tensor&>(b2).grad()[i] -= g;
        });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        tape, a, b, "mul", [](double x, double y) { return x * y; },
        [](const Tensor& a2, const Tensor& b2, const Tensor& out, std::size_t i) {
            const double g = out.grad()[i];
            if (a2.needs_grad()) const_cast<Tensor&>(a2).grad()[i] += g * b2.at(i);
            if (b2.needs_grad()) const_cast<Tensor&>(b2).grad()[i] += g * a2.at(i);
        });
}

Tensor add_rowwise(Tape& tape, const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || x.cols() != bias.size()) {
        throw DimensionError("add_rowwise: shape mismatch: " + x.shape_str() + " vs " +
                             bias.shape_str());
    }
    const bool needs = x.needs_grad() || bias.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    const std::size_t m = x.rows(), n = x.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) = x.at(i, j) + bias.at(j);
        }
    }
    if (needs) {
        if (x.needs_grad()) prep_input(x);
        if (bias.needs_grad()) prep_input(bias);
        tape.record([x, bias, out, m, n]() {
            const double* og = out.grad().data();
            if (x.needs_grad()) {
                double* xg = const_cast<Tensor&>(x).grad().data();
                for (std::size_t i = 0; i < m * n; ++i) xg[i] += og[i];
            }
            if (bias.needs_grad()) {
                double* bg = const_cast<Tensor&>(bias).grad().data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) bg[j] += og[i * n + j];
                }
            }
        });
    }
    return out;
}

Tensor add_scalar_tensor(Tape& tape, const Tensor& x, const Tensor& s) {
    if (s.size() != 1) {
        throw DimensionError("add_scalar_tensor: scalar operand has shape " + s.shape_str());
    }
    const bool needs = x.needs_grad() || s.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    const double sv = s.at(0);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) + sv;
    if (needs) {
        if (x.needs_grad()) prep_input(x);
        if (s.needs_grad()) prep_input(s);
        tape.record([x, s, out]() {
            const double* og = out.grad().data();
            if (x.needs_grad()) {
                double* xg = const_cast<Tensor&>(x).grad().data();
                for (std::size_t i = 0; i < out.size(); ++i) xg[i] += og[i];
            }
            if (s.needs_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < out.size(); ++i) acc += og[i];
                const_cast<Tensor&>(s).grad()[0] += acc;
            }
        });
    }
    return out;
}

Tensor mul_scalar_tensor(Tape& tape, const Tensor& x, const Tensor& s) {
    if (s.size() != 1) {
        throw DimensionError("mul_scalar_tensor: scalar operand has shape " + s.shape_str());
    }
    const bool needs = x.needs_grad() || s.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    const double sv = s.at(0);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) * sv;
    if (needs) {
        if (x.needs_grad()) prep_input(x);
        if (s.needs_grad()) prep_input(s);
        tape.record([x, s, out]() {
            const double* og = out.grad().data();
            const double sv2 = s.at(0);
            if (x.needs_grad()) {
                double* xg = const_cast<Tensor&>(x).grad().data();
                for (std::size_t i = 0; i < out.size(); ++i) xg[i] += og[i] * sv2;
            }
            if (s.needs_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < out.size(); ++i) acc += og[i] * x.at(i);
                const_cast<Tensor&>(s).grad()[0] += acc;
            }
        });
    }
    return out;
}

Tensor mul_scalar(Tape& tape, const Tensor& x, double c) {
    const bool needs = x.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) * c;
    if (needs) {
        prep_input(x);
        tape.record([x, out, c]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t i = 0; i < out.size(); ++i) xg[i] += og[i] * c;
        });
    }
    return out;
}

Tensor add_scalar(Tape& tape, const Tensor& x, double c) {
    const bool needs = x.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) + c;
    if (needs) {
        prep_input(x);
        tape.record([x, out]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t i = 0; i < out.size(); ++i) xg[i] += og[i];
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) {
        throw DimensionError("transpose: expected 2-D tensor, got " + x.shape_str());
    }
    const std::size_t m = x.rows(), n = x.cols();
    const bool needs = x.needs_grad();
    Tensor out = make_result({n, m}, needs);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
    }
    if (needs) {
        prep_input(x);
        tape.record([x, out, m, n]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) xg[i * n + j] += og[j * m + i];
            }
        });
    }
    return out;
}

namespace {

template <typename Fwd, typename Deriv>
Tensor elementwise_unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
    const bool needs = x.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = fwd(x.at(i));
    if (needs) {
        prep_input(x);
        tape.record([x, out, deriv]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t i = 0; i < out.size(); ++i) {
                xg[i] += og[i] * deriv(x.at(i), out.at(i));
            }
        });
    }
    return out;
}

}  // namespace

Tensor sigmoid(Tape& tape, const Tensor& x) {
    check_finite_inputs(x, "sigmoid");
    return elementwise_unary(
        tape, x,
        [](double v) {
            // Split by sign so exp never overflows.
            if (v >= 0.0) {
                const double e = std::exp(-v);
                return 1.0 / (1.0 + e);
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape& tape, const Tensor& x) {
    check_finite_inputs(x, "relu");
    return elementwise_unary(
        tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log_strict(Tape& tape, const Tensor& x) {
    for (double v : x.values()) {
        if (!(v > 0.0)) {
            throw DomainError("log: input must be strictly positive, got " + std::to_string(v));
        }
    }
    return elementwise_unary(
        tape, x, [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor log_clamped(Tape& tape, const Tensor& x, double eps) {
    return elementwise_unary(
        tape, x, [eps](double v) { return std::log(v > eps ? v : eps); },
        [eps](double v, double) { return v > eps ? 1.0 / v : 0.0; });
}

Tensor abs_val(Tape& tape, const Tensor& x) {
    return elementwise_unary(
        tape, x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor reciprocal(Tape& tape, const Tensor& x) {
    for (double v : x.values()) {
        if (v == 0.0) throw DomainError("reciprocal: division by zero");
    }
    return elementwise_unary(
        tape, x, [](double v) { return 1.0 / v; },
        [](double v, double) { return -1.0 / (v * v); });
}

Tensor sum(Tape& tape, const Tensor& x) {
    const bool needs = x.needs_grad();
    Tensor out = make_result({1}, needs);
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    out.at(0) = acc;
    if (needs) {
        prep_input(x);
        tape.record([x, out]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double g = out.grad()[0];
            for (std::size_t i = 0; i < x.size(); ++i) xg[i] += g;
        });
    }
    return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
    if (x.size() == 0) throw DomainError("mean: empty input");
    const bool needs = x.needs_grad();
    Tensor out = make_result({1}, needs);
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    out.at(0) = acc / static_cast<double>(x.size());
    if (needs) {
        prep_input(x);
        tape.record([x, out]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double g = out.grad()[0] / static_cast<double>(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) xg[i] += g;
        });
    }
    return out;
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
        throw DimensionError("dot: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    const bool needs = a.needs_grad() || b.needs_grad();
    Tensor out = make_result({1}, needs);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * b.at(i);
    out.at(0) = acc;
    if (needs) {
        if (a.needs_grad()) prep_input(a);
        if (b.needs_grad()) prep_input(b);
        tape.record([a, b, out]() {
            const double g = out.grad()[0];
            if (a.needs_grad()) {
                double* ag = const_cast<Tensor&>(a).grad().data();
                for (std::size_t i = 0; i < a.size(); ++i) ag[i] += g * b.at(i);
            }
            if (b.needs_grad()) {
                double* bg = const_cast<Tensor&>(b).grad().data();
                for (std::size_t i = 0; i < b.size(); ++i) bg[i] += g * a.at(i);
            }
        });
    }
    return out;
}

namespace {

// Softmax over [rows × n] laid out row-major; max-subtraction keeps exp in
// range on saturated inputs.
Tensor softmax_impl(Tape& tape, const Tensor& x, std::size_t nrows, std::size_t ncols) {
    if (ncols == 0) throw DomainError("softmax: empty input");
    check_finite_inputs(x, "softmax");
    const bool needs = x.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    for (std::size_t r = 0; r < nrows; ++r) {
        const double* xr = x.values().data() + r * ncols;
        double* yr = out.values().data() + r * ncols;
        double mx = xr[0];
        for (std::size_t i = 1; i < ncols; ++i) mx = xr[i] > mx ? xr[i] : mx;
        double z = 0.0;
        for (std::size_t i = 0; i < ncols; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            z += yr[i];
        }
        for (std::size_t i = 0; i < ncols; ++i) yr[i] /= z;
    }
    if (needs) {
        prep_input(x);
        tape.record([x, out, nrows, ncols]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            for (std::size_t r = 0; r < nrows; ++r) {
                const double* yr = out.values().data() + r * ncols;
                const double* gr = out.grad().data() + r * ncols;
                double inner = 0.0;
                for (std::size_t i = 0; i < ncols; ++i) inner += gr[i] * yr[i];
                for (std::size_t i = 0; i < ncols; ++i) {
                    xg[r * ncols + i] += yr[i] * (gr[i] - inner);
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor softmax_row(Tape& tape, const Tensor& x) {
    if (x.rank() != 1) {
        throw DimensionError("softmax_row: expected 1-D tensor, got " + x.shape_str());
    }
    return softmax_impl(tape, x, 1, x.size());
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) {
        throw DimensionError("softmax_rows: expected 2-D tensor, got " + x.shape_str());
    }
    return softmax_impl(tape, x, x.rows(), x.cols());
}

Tensor layer_norm_rows(Tape& tape, const Tensor& x, double eps) {
    if (x.rank() != 2) {
        throw DimensionError("layer_norm_rows: expected 2-D tensor, got " + x.shape_str());
    }
    const std::size_t m = x.rows(), n = x.cols();
    if (n == 0) throw DomainError("layer_norm_rows: empty rows");
    const bool needs = x.needs_grad();
    Tensor out = make_result(x.shape(), needs);
    std::vector<double> inv_std(m);
    for (std::size_t r = 0; r < m; ++r) {
        const double* xr = x.values().data() + r * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += xr[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = xr[i] - mu;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[r] = istd;
        double* yr = out.values().data() + r * n;
        for (std::size_t i = 0; i < n; ++i) yr[i] = (xr[i] - mu) * istd;
    }
    if (needs) {
        prep_input(x);
        tape.record([x, out, inv_std, m, n]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            for (std::size_t r = 0; r < m; ++r) {
                const double* yr = out.values().data() + r * n;
                const double* gr = out.grad().data() + r * n;
                double g_mean = 0.0, gy_mean = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    g_mean += gr[i];
                    gy_mean += gr[i] * yr[i];
                }
                g_mean /= static_cast<double>(n);
                gy_mean /= static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    xg[r * n + i] += inv_std[r] * (gr[i] - g_mean - yr[i] * gy_mean);
                }
            }
        });
    }
    return out;
}

Tensor adjacent_diff(Tape& tape, const Tensor& x) {
    if (x.rank() != 1 || x.size() < 1) {
        throw DimensionError("adjacent_diff: expected non-empty 1-D tensor, got " +
                             x.shape_str());
    }
    const std::size_t n = x.size();
    const bool needs = x.needs_grad();
    Tensor out = make_result({n > 1 ? n - 1 : 0}, needs);
    for (std::size_t i = 0; i + 1 < n; ++i) out.at(i) = x.at(i + 1) - x.at(i);
    if (needs && n > 1) {
        prep_input(x);
        tape.record([x, out, n]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t i = 0; i + 1 < n; ++i) {
                xg[i + 1] += og[i];
                xg[i] -= og[i];
            }
        });
    }
    return out;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
    if (rows.empty()) throw DomainError("stack_rows: empty row list");
    const std::size_t d = rows[0].size();
    bool needs = false;
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.size() != d) {
            throw DimensionError("stack_rows: row shape mismatch: " + rows[0].shape_str() +
                                 " vs " + r.shape_str());
        }
        needs = needs || r.needs_grad();
    }
    Tensor out = make_result({rows.size(), d}, needs);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = rows[i].at(j);
    }
    if (needs) {
        for (const Tensor& r : rows) {
            if (r.needs_grad()) prep_input(r);
        }
        tape.record([rows, out, d]() {
            const double* og = out.grad().data();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (!rows[i].needs_grad()) continue;
                double* rg = const_cast<Tensor&>(rows[i]).grad().data();
                for (std::size_t j = 0; j < d; ++j) rg[j] += og[i * d + j];
            }
        });
    }
    return out;
}

Tensor row(Tape& tape, const Tensor& x, std::size_t i) {
    if (x.rank() != 2 || i >= x.rows()) {
        throw DimensionError("row: index " + std::to_string(i) + " out of range for " +
                             x.shape_str());
    }
    const std::size_t n = x.cols();
    const bool needs = x.needs_grad();
    Tensor out = make_result({n}, needs);
    for (std::size_t j = 0; j < n; ++j) out.at(j) = x.at(i, j);
    if (needs) {
        prep_input(x);
        tape.record([x, out, i, n]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t j = 0; j < n; ++j) xg[i * n + j] += og[j];
        });
    }
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<std::size_t>& idx) {
    if (x.rank() != 2) {
        throw DimensionError("gather_rows: expected 2-D tensor, got " + x.shape_str());
    }
    for (std::size_t i : idx) {
        if (i >= x.rows()) {
            throw DimensionError("gather_rows: index " + std::to_string(i) +
                                 " out of range for " + x.shape_str());
        }
    }
    const std::size_t n = x.cols();
    const bool needs = x.needs_grad();
    Tensor out = make_result({idx.size(), n}, needs);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < n; ++j) out.at(r, j) = x.at(idx[r], j);
    }
    if (needs) {
        prep_input(x);
        tape.record([x, out, idx, n]() {
            double* xg = const_cast<Tensor&>(x).grad().data();
            const double* og = out.grad().data();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                for (std::size_t j = 0; j < n; ++j) xg[idx[r] * n + j] += og[r * n + j];
            }
        });
    }
    return out;
}

Tensor embedding_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) {
        throw DimensionError("embedding_rows: table must be 2-D, got " + table.shape_str());
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
            throw DimensionError("embedding_rows: id " + std::to_string(id) +
                                 " out of range for table " + table.shape_str());
        }
    }
    const std::size_t d = table.cols();
    const bool needs = table.needs_grad();
    Tensor out = make_result({ids.size(), d}, needs);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const double* src = table.values().data() + static_cast<std::size_t>(ids[r]) * d;
        double* dst = out.values().data() + r * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    if (needs) {
        prep_input(table);
        tape.record([table, out, ids, d]() {
            double* tg = const_cast<Tensor&>(table).grad().data();
            const double* og = out.grad().data();
            for (std::size_t r = 0; r < ids.size(); ++r) {
                double* dst = tg + static_cast<std::size_t>(ids[r]) * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += og[r * d + j];
            }
        });
    }
    return out;
}

void OptimizerState::init(const std::vector<Tensor>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const Tensor& p : params) {
        m.emplace_back(p.size(), 0.0);
        v.emplace_back(p.size(), 0.0);
    }
}

void adamw_step(std::vector<Tensor>& params, OptimizerState& state) {
    if (state.m.size() != params.size()) {
        throw ContractError("adamw_step: optimizer state not initialized for " +
                            std::to_string(params.size()) + " parameters");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        if (p.grad().size() != p.size()) {
            throw ContractError("adamw_step: parameter " + std::to_string(pi) +
                                " has no populated gradient");
        }
        auto& mv = state.m[pi];
        auto& vv = state.v[pi];
        double* w = p.values().data();
        double* g = p.grad().data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * g[i];
            vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = mv[i] / bc1;
            const double v_hat = vv[i] / bc2;
            // Decoupled weight decay: applied to the weight directly, not
            // folded into the gradient.
            w[i] -= state.lr * (m_hat / (std::sqrt(v_hat) + state.eps) +
                                state.weight_decay * w[i]);
        }
        p.zero_grad();
    }
}

}  // namespace xtroll
