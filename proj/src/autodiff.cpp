#include "kae/autodiff.hpp"

#include <cmath>
#include <string>

#include "kae/errors.hpp"

namespace kae::ad {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
}

bool broadcasts(const Matrix& a, const Matrix& b) {
    return b.cols() == 1 && a.rows() == b.rows() && a.cols() != 1;
}

} // namespace

const Matrix& Var::value() const { return graph_->value(*this); }
const Matrix& Var::grad() const { return graph_->grad(*this); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ContractError("scalar(): node is " + shape_str(v));
    return v(0, 0);
}

Var Graph::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p) {
    Node n;
    n.value = p.value();
    n.param = &p;
    n.needs_grad = p.requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Graph::record(OpKind kind, Matrix value, std::size_t lhs, std::size_t rhs, double scalar) {
    Node n;
    n.kind = kind;
    n.lhs = lhs;
    n.rhs = rhs;
    n.scalar = scalar;
    n.needs_grad = needs(lhs) || needs(rhs);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
    if (&loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
    const std::size_t root = loss.id();
    if (nodes_[root].value.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(nodes_[root].value));
    for (std::size_t i = 0; i <= root; ++i)
        if (nodes_[i].needs_grad) nodes_[i].grad.setZero(nodes_[i].value.rows(), nodes_[i].value.cols());
    if (!nodes_[root].needs_grad) return;
    nodes_[root].grad(0, 0) = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.needs_grad) propagate(n);
    }
}

void Graph::propagate(Node& n) {
    const Matrix& g = n.grad;
    auto* a = n.lhs != kNone ? &nodes_[n.lhs] : nullptr;
    auto* b = n.rhs != kNone ? &nodes_[n.rhs] : nullptr;
    const bool da = a && a->needs_grad;
    const bool db = b && b->needs_grad;

    switch (n.kind) {
    case OpKind::Leaf:
        if (n.param) n.param->grad() += g;
        break;
    case OpKind::MatMul:
        if (da) a->grad.noalias() += g * b->value.transpose();
        if (db) b->grad.noalias() += a->value.transpose() * g;
        break;
    case OpKind::Add:
    case OpKind::Sub: {
        const double sign = n.kind == OpKind::Add ? 1.0 : -1.0;
        if (da) a->grad += g;
        if (db) {
            if (broadcasts(a->value, b->value))
                b->grad += sign * g.rowwise().sum();
            else
                b->grad += sign * g;
        }
        break;
    }
    case OpKind::Scale:
        if (da) a->grad += n.scalar * g;
        break;
    case OpKind::ElementwiseMul:
        if (da) a->grad.array() += g.array() * b->value.array();
        if (db) b->grad.array() += g.array() * a->value.array();
        break;
    case OpKind::Tanh:
        if (da) a->grad.array() += g.array() * (1.0 - n.value.array().square());
        break;
    case OpKind::Relu:
        if (da) a->grad.array() += (a->value.array() > 0.0).select(g.array(), 0.0);
        break;
    case OpKind::Transpose:
        if (da) a->grad += g.transpose();
        break;
    case OpKind::DiagFromVector:
        if (da) a->grad += g.diagonal();
        break;
    case OpKind::FrobeniusNormSq:
        if (da) a->grad += (2.0 * g(0, 0)) * a->value;
        break;
    case OpKind::Mean:
        if (da) a->grad.array() += g(0, 0) / static_cast<double>(a->value.size());
        break;
    case OpKind::Sum:
        if (da) a->grad.array() += g(0, 0);
        break;
    case OpKind::ReciprocalClamped:
        if (da)
            a->grad.array() += (a->value.array() > n.scalar)
                                   .select(-g.array() * n.value.array().square(), 0.0);
        break;
    }
}

Var matmul(Var a, Var b) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (x.cols() != y.rows()) shape_error("matmul", x, y);
    Matrix out(x.rows(), y.cols());
    out.noalias() = x * y;
    return a.graph().record(OpKind::MatMul, std::move(out), a.id(), b.id());
}

Var add(Var a, Var b) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (x.rows() == y.rows() && x.cols() == y.cols())
        return a.graph().record(OpKind::Add, x + y, a.id(), b.id());
    if (broadcasts(x, y))
        return a.graph().record(OpKind::Add, x.colwise() + y.col(0), a.id(), b.id());
    shape_error("add", x, y);
}

Var sub(Var a, Var b) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (x.rows() == y.rows() && x.cols() == y.cols())
        return a.graph().record(OpKind::Sub, x - y, a.id(), b.id());
    if (broadcasts(x, y))
        return a.graph().record(OpKind::Sub, x.colwise() - y.col(0), a.id(), b.id());
    shape_error("sub", x, y);
}

Var scale(Var a, double s) {
    return a.graph().record(OpKind::Scale, s * a.value(), a.id(), Graph::kNone, s);
}

Var elementwise_mul(Var a, Var b) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error("elementwise_mul", x, y);
    return a.graph().record(OpKind::ElementwiseMul, x.cwiseProduct(y), a.id(), b.id());
}

Var tanh(Var a) {
    if (!a.value().allFinite()) throw DomainError("tanh: non-finite input");
    return a.graph().record(OpKind::Tanh, a.value().array().tanh().matrix(), a.id());
}

Var relu(Var a) {
    if (!a.value().allFinite()) throw DomainError("relu: non-finite input");
    return a.graph().record(OpKind::Relu, a.value().cwiseMax(0.0), a.id());
}

Var transpose(Var a) {
    return a.graph().record(OpKind::Transpose, a.value().transpose(), a.id());
}

Var diag_from_vector(Var v) {
    if (v.cols() != 1) throw DimensionError("diag_from_vector: expected a column vector, got " +
                                            shape_str(v.value()));
    Matrix out = v.value().col(0).asDiagonal();
    return v.graph().record(OpKind::DiagFromVector, std::move(out), v.id());
}

Var frobenius_norm_sq(Var a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().squaredNorm();
    return a.graph().record(OpKind::FrobeniusNormSq, std::move(out), a.id());
}

Var mean(Var a) {
    if (a.value().size() == 0) throw DimensionError("mean: empty input");
    Matrix out(1, 1);
    out(0, 0) = a.value().mean();
    return a.graph().record(OpKind::Mean, std::move(out), a.id());
}

Var sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.graph().record(OpKind::Sum, std::move(out), a.id());
}

Var reciprocal_clamped(Var a, double eps) {
    if (!(eps > 0.0)) throw ContractError("reciprocal_clamped: eps must be positive");
    Matrix out = a.value().cwiseMax(eps).cwiseInverse();
    return a.graph().record(OpKind::ReciprocalClamped, std::move(out), a.id(), Graph::kNone, eps);
}

void adam_step(Parameter& p, AdamState& state, const AdamConfig& cfg) {
    const Matrix& g = p.grad();
    if (!g.allFinite()) throw TrainingError("non-finite gradient for parameter " + p.name(), p.name());
    if (state.m.size() == 0) {
        state.m = Matrix::Zero(g.rows(), g.cols());
        state.v = Matrix::Zero(g.rows(), g.cols());
    }
    if (state.m.rows() != g.rows() || state.m.cols() != g.cols())
        throw DimensionError("adam_step: state shape does not match parameter " + p.name());
    ++state.step;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    p.value().array() -=
        cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i]->requires_grad) adam_step(*params_[i], states_[i], cfg_);
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

} // namespace kae::ad
