#pragma once

// Define-by-run reverse-mode differentiation over dense double matrices.
//
// A Graph records operations in execution order; backward() walks the record
// once in reverse and accumulates gradients additively into the Parameters
// that were bound as leaves. The operator set is closed: every model and loss
// in the library is composed from the thirteen kinds in OpKind.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kae::ad {

using Matrix = Eigen::MatrixXd;

/// A named trainable tensor with its gradient buffer.
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Matrix value)
        : name_(std::move(name)), value_(std::move(value)),
          grad_(Matrix::Zero(value_.rows(), value_.cols())) {}

    const std::string& name() const { return name_; }
    Matrix& value() { return value_; }
    const Matrix& value() const { return value_; }
    Matrix& grad() { return grad_; }
    const Matrix& grad() const { return grad_; }
    void zero_grad() { grad_.setZero(value_.rows(), value_.cols()); }

    bool requires_grad = true;

private:
    std::string name_;
    Matrix value_;
    Matrix grad_;
};

enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Sub,
    Scale,
    ElementwiseMul,
    Tanh,
    Relu,
    Transpose,
    DiagFromVector,
    FrobeniusNormSq,
    Mean,
    Sum,
    ReciprocalClamped,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its Graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    const Matrix& value() const;
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    /// value()(0, 0); the node must be 1x1.
    double scalar() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    Graph() { nodes_.reserve(512); }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that never receives gradient.
    Var constant(Matrix value);
    /// Leaf bound to `p`; backward() adds d(loss)/dp into p.grad() when p.requires_grad.
    Var parameter(Parameter& p);

    const Matrix& value(Var v) const { return nodes_[v.id()].value; }
    const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }
    std::size_t size() const { return nodes_.size(); }
    OpKind kind(Var v) const { return nodes_[v.id()].kind; }

    /// Reverse sweep from a scalar node. Throws ContractError for non-scalar loss.
    void backward(Var loss);

    // Operator constructors; see the free functions below.
    Var record(OpKind kind, Matrix value, std::size_t lhs, std::size_t rhs = kNone, double scalar = 0.0);

    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::size_t lhs = kNone;
        std::size_t rhs = kNone;
        double scalar = 0.0;
        bool needs_grad = false;
        Parameter* param = nullptr;
        Matrix value;
        Matrix grad;
    };

    bool needs(std::size_t id) const { return id != kNone && nodes_[id].needs_grad; }
    void propagate(Node& node);

    std::vector<Node> nodes_;
};

// Forward operators. Shapes follow ordinary matrix algebra; `add`/`sub`
// additionally accept an (r x 1) right operand broadcast across columns.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var elementwise_mul(Var a, Var b);
Var tanh(Var a);
Var relu(Var a);
Var transpose(Var a);
/// (M x 1) -> (M x M) diagonal matrix.
Var diag_from_vector(Var v);
/// Scalar sum of squared entries.
Var frobenius_norm_sq(Var a);
Var mean(Var a);
Var sum(Var a);
/// Elementwise 1 / max(x, eps); eps must be positive.
Var reciprocal_clamped(Var a, double eps);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// Adam hyperparameters.
struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moment estimates for one parameter.
struct AdamState {
    Matrix m;
    Matrix v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update of `p` from p.grad(). Throws TrainingError
/// naming the parameter when the gradient is non-finite.
void adam_step(Parameter& p, AdamState& state, const AdamConfig& cfg);

/// Adam over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    void step();
    void zero_grad();
    const AdamConfig& config() const { return cfg_; }
    const std::vector<AdamState>& states() const { return states_; }

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
    AdamConfig cfg_;
};

} // namespace kae::ad
