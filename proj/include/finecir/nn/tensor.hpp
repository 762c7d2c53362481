#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a shared handle to a graph node. Operations record their parents
// and a closure that pushes the node's gradient back to them. Graph
// construction is skipped entirely under NoGradGuard or when no input
// requires a gradient, so inference pays only for the matrix arithmetic.

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace finecir::nn {

using Mat = Eigen::MatrixXd;

struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Mat& ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad = Mat::Zero(value.rows(), value.cols());
        return grad;
    }
};

namespace detail {
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
    ~NoGradGuard() { detail::grad_enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Var {
public:
    Var() = default;
    explicit Var(Mat value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    bool defined() const { return static_cast<bool>(node_); }
    const Mat& value() const { return node_->value; }
    Mat& mutable_value() { return node_->value; }
    const Mat& grad() const { return node_->ensure_grad(); }
    Mat& mutable_grad() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const {
        if (node_->value.size() != 1) throw ShapeError("item() on non-scalar");
        return node_->value(0, 0);
    }
    void zero_grad() {
        if (node_->grad.size()) node_->grad.setZero();
    }
    const std::shared_ptr<Node>& node() const { return node_; }

    /// Reverse pass from a scalar root.
    void backward() const {
        if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar root");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        // Iterative post-order DFS.
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, i] = stack.back();
            if (i < n->parents.size()) {
                Node* p = n->parents[i++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad().setOnes();
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn && n->grad.size()) n->backward_fn(*n);
        }
    }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline Var make_result(Mat value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (grad_enabled()) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (auto& p : parents) node->parents.push_back(p.node());
            node->backward_fn = std::move(fn);
        }
    }
    return Var(std::move(node));
}

inline void add_grad(const std::shared_ptr<Node>& p, const Mat& g) {
    if (p->requires_grad) p->ensure_grad() += g;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace detail

inline Var constant(Mat m) { return Var(std::move(m), false); }

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dims " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    return detail::make_result(a.value() * b.value(), {a, b}, [](Node& n) {
        const auto& A = n.parents[0];
        const auto& B = n.parents[1];
        if (A->requires_grad) A->ensure_grad().noalias() += n.grad * B->value.transpose();
        if (B->requires_grad) B->ensure_grad().noalias() += A->value.transpose() * n.grad;
    });
}

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    return detail::make_result(a.value() + b.value(), {a, b}, [](Node& n) {
        detail::add_grad(n.parents[0], n.grad);
        detail::add_grad(n.parents[1], n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    return detail::make_result(a.value() - b.value(), {a, b}, [](Node& n) {
        detail::add_grad(n.parents[0], n.grad);
        detail::add_grad(n.parents[1], -n.grad);
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mul");
    return detail::make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        detail::add_grad(n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
        detail::add_grad(n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
    });
}

inline Var scale(const Var& a, double s) {
    return detail::make_result(a.value() * s, {a}, [s](Node& n) { detail::add_grad(n.parents[0], n.grad * s); });
}

/// a (r x c) plus a row vector b (1 x c) broadcast over rows.
inline Var add_row(const Var& a, const Var& b) {
    if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    Mat v = a.value().rowwise() + b.value().row(0);
    return detail::make_result(std::move(v), {a, b}, [](Node& n) {
        detail::add_grad(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad() += n.grad.colwise().sum();
    });
}

/// a (r x c) times a 1x1 scalar variable.
inline Var mul_scalar(const Var& a, const Var& s) {
    if (s.rows() != 1 || s.cols() != 1) throw ShapeError("mul_scalar: expected 1x1 scalar");
    return detail::make_result(a.value() * s.value()(0, 0), {a, s}, [](Node& n) {
        const double sv = n.parents[1]->value(0, 0);
        detail::add_grad(n.parents[0], n.grad * sv);
        if (n.parents[1]->requires_grad)
            n.parents[1]->ensure_grad()(0, 0) += n.grad.cwiseProduct(n.parents[0]->value).sum();
    });
}

inline Var transpose(const Var& a) {
    return detail::make_result(a.value().transpose(), {a},
                               [](Node& n) { detail::add_grad(n.parents[0], n.grad.transpose()); });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    Eigen::Index rows = 0, cols = parts.front().cols();
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.rows();
    }
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return detail::make_result(std::move(v), parts, [](Node& n) {
        Eigen::Index off = 0;
        for (const auto& p : n.parents) {
            if (p->requires_grad) p->ensure_grad() += n.grad.middleRows(off, p->value.rows());
            off += p->value.rows();
        }
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Eigen::Index cols = 0, rows = parts.front().rows();
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.cols();
    }
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return detail::make_result(std::move(v), parts, [](Node& n) {
        Eigen::Index off = 0;
        for (const auto& p : n.parents) {
            if (p->requires_grad) p->ensure_grad() += n.grad.middleCols(off, p->value.cols());
            off += p->value.cols();
        }
    });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    return detail::make_result(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().middleRows(start, count) += n.grad;
    });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    return detail::make_result(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().middleCols(start, count) += n.grad;
    });
}

/// Row-major reshape (element order is that of reading rows left to right).
inline Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.value().size()) throw ShapeError("reshape: size mismatch");
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMat src = a.value();
    Mat v = Eigen::Map<RowMat>(src.data(), rows, cols);
    const auto in_rows = a.rows(), in_cols = a.cols();
    return detail::make_result(std::move(v), {a}, [in_rows, in_cols](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        RowMat g = n.grad;
        n.parents[0]->ensure_grad() += Mat(Eigen::Map<RowMat>(g.data(), in_rows, in_cols));
    });
}

inline Var gather_rows(const Var& table, std::vector<Eigen::Index> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= table.rows()) throw ShapeError("gather_rows: index out of range");
        v.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
    }
    return detail::make_result(std::move(v), {table}, [idx = std::move(idx)](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    });
}

inline Var sum_all(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    return detail::make_result(std::move(v), {a}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().array() += n.grad(0, 0);
    });
}

/// Mean over rows: (r x c) -> (1 x c).
inline Var mean_rows(const Var& a) {
    if (a.rows() == 0) throw ShapeError("mean_rows: empty input");
    const double inv = 1.0 / static_cast<double>(a.rows());
    Mat v = a.value().colwise().sum() * inv;
    return detail::make_result(std::move(v), {a}, [inv](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().rowwise() += n.grad.row(0) * inv;
    });
}

namespace detail {
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
    Mat v = a.value().unaryExpr(f);
    return make_result(std::move(v), {a}, [df](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Mat& x = n.parents[0]->value;
        n.parents[0]->ensure_grad() += n.grad.cwiseProduct(Mat(x.binaryExpr(n.value, df)));
    });
}
}  // namespace detail

// Derivative closures receive (input x, output y).
inline Var leaky_relu(const Var& a, double slope = 0.2) {
    return detail::unary(
        a, [slope](double x) { return x > 0 ? x : slope * x; },
        [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Var relu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var elu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

inline Var tanh(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// tanh approximation of GELU.
inline Var gelu(const Var& a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return detail::unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))); },
        [](double x, double) {
            const double u = k * (x + 0.044715 * x * x * x);
            const double t = std::tanh(u);
            const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        });
}

inline Var softmax_rows(const Var& a) {
    Mat v = a.value();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double m = v.row(r).maxCoeff();
        v.row(r) = (v.row(r).array() - m).exp().matrix();
        v.row(r) /= v.row(r).sum();
    }
    return detail::make_result(std::move(v), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Mat& y = n.value;
        Mat gy = n.grad.cwiseProduct(y);
        Eigen::VectorXd s = gy.rowwise().sum();
        n.parents[0]->ensure_grad() += gy - (y.array().colwise() * s.array()).matrix();
    });
}

inline Var log_softmax_rows(const Var& a) {
    Mat v = a.value();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double m = v.row(r).maxCoeff();
        const double lse = m + std::log((v.row(r).array() - m).exp().sum());
        v.row(r).array() -= lse;
    }
    return detail::make_result(std::move(v), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Mat p = n.value.array().exp();
        Eigen::VectorXd s = n.grad.rowwise().sum();
        n.parents[0]->ensure_grad() += n.grad - (p.array().colwise() * s.array()).matrix();
    });
}

/// Per-row layer normalization with learned gain and bias (both 1 x c).
inline Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5) {
    const auto c = a.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
        throw ShapeError("layer_norm_rows: gain/bias must be 1 x cols");
    Mat xhat(a.rows(), c);
    Eigen::VectorXd inv_std(a.rows());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double mu = a.value().row(r).mean();
        const double var = (a.value().row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
    }
    Mat v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
    v.rowwise() += bias.value().row(0);
    return detail::make_result(std::move(v), {a, gain, bias}, [xhat, inv_std](Node& n) {
        const auto& A = n.parents[0];
        const auto& G = n.parents[1];
        const auto& B = n.parents[2];
        if (G->requires_grad) G->ensure_grad() += n.grad.cwiseProduct(xhat).colwise().sum();
        if (B->requires_grad) B->ensure_grad() += n.grad.colwise().sum();
        if (A->requires_grad) {
            const double cn = static_cast<double>(xhat.cols());
            Mat dxhat = (n.grad.array().rowwise() * G->value.row(0).array()).matrix();
            auto& ga = A->ensure_grad();
            for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                const double m1 = dxhat.row(r).sum();
                const double m2 = dxhat.row(r).dot(xhat.row(r));
                ga.row(r).array() +=
                    inv_std(r) / cn * (cn * dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
            }
        }
    });
}

/// Scales each row to unit Euclidean length.
inline Var l2_normalize_rows(const Var& a, double eps = 1e-12) {
    Eigen::VectorXd norms = a.value().rowwise().norm();
    for (Eigen::Index r = 0; r < norms.size(); ++r) norms(r) = std::max(norms(r), eps);
    Mat v = a.value().array().colwise() / norms.array();
    return detail::make_result(std::move(v), {a}, [norms](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Mat& y = n.value;
        Eigen::VectorXd dots = n.grad.cwiseProduct(y).rowwise().sum();
        Mat g = n.grad - (y.array().colwise() * dots.array()).matrix();
        n.parents[0]->ensure_grad() += (g.array().colwise() / norms.array()).matrix();
    });
}

}  // namespace finecir::nn
