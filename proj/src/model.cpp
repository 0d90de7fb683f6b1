#include "kae/model.hpp"

#include <algorithm>
#include <cmath>

#include "kae/errors.hpp"

namespace kae {

namespace {

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix out(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) out(i, j) = dist(rng);
    return out;
}

Matrix xavier_uniform(int fan_out, int fan_in, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix out(fan_out, fan_in);
    for (int j = 0; j < fan_in; ++j)
        for (int i = 0; i < fan_out; ++i) out(i, j) = dist(rng);
    return out;
}

void check_finite_latent(const Matrix& z, std::size_t step) {
    if (!z.allFinite()) throw DivergenceError("rollout: non-finite latent", step);
}

} // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Ckae: return "ckae";
    case Variant::Isvd: return "isvd";
    case Variant::Usvd: return "usvd";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::Vanilla, Variant::Ckae, Variant::Isvd, Variant::Usvd})
        if (variant_name(v) == name) return v;
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (valid: vanilla, ckae, isvd, usvd)");
}

bool has_backward(Variant v) { return v != Variant::Vanilla; }
bool has_svd_terms(Variant v) { return v == Variant::Isvd || v == Variant::Usvd; }

void LossWeights::validate() const {
    for (double w : {id, f, b, sv, c})
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ConfigError("loss weights must be finite and non-negative");
}

Matrix random_orthogonal(int m, std::mt19937_64& rng) {
    return linalg::orthonormalize(gaussian(m, m, rng));
}

KaeModel::KaeModel(Variant variant, Dims dims, LossWeights weights, std::size_t wf, std::size_t wb,
                   std::uint64_t seed)
    : variant_(variant), dims_(dims), weights_(weights), wf_(wf), wb_(wb) {
    if (dims.n <= 0 || dims.m <= 0 || dims.h < 0)
        throw ConfigError("model dimensions must be positive");
    set_weights(weights);
    normalization = Normalization::identity(dims.n);

    std::mt19937_64 rng(seed);
    params_.reserve(static_cast<std::size_t>(4 * depth() + 6));
    add_mlp("enc", dims.n, dims.h, dims.m, rng);
    add_mlp("dec", dims.m, dims.h, dims.n, rng);

    const int m = dims.m;
    auto near_identity = [&] { return Matrix(Matrix::Identity(m, m) + 0.01 * gaussian(m, m, rng)); };
    switch (variant) {
    case Variant::Vanilla:
        params_.emplace_back("op.K", near_identity());
        break;
    case Variant::Ckae:
    case Variant::Isvd:
        params_.emplace_back("op.K", near_identity());
        params_.emplace_back("op.G", near_identity());
        break;
    case Variant::Usvd: {
        const Matrix uf = random_orthogonal(m, rng);
        const Matrix vf = random_orthogonal(m, rng);
        params_.emplace_back("op.Uf", uf);
        params_.emplace_back("op.Vf", vf);
        params_.emplace_back("op.sf", Matrix(Vector::Ones(m)));
        // Backward factors start equal to the forward ones, so G = K^-1.
        params_.emplace_back("op.Ub", uf);
        params_.emplace_back("op.Vb", vf);
        params_.emplace_back("op.sb", Matrix(Vector::Ones(m)));
        break;
    }
    }
    if (variant == Variant::Isvd) refresh_isvd();
}

void KaeModel::set_weights(const LossWeights& w) {
    w.validate();
    weights_ = w;
}

void KaeModel::add_mlp(const std::string& prefix, int in, int hidden, int out, std::mt19937_64& rng) {
    std::vector<int> widths{in};
    if (hidden > 0) {
        widths.push_back(hidden);
        widths.push_back(hidden);
    }
    widths.push_back(out);
    for (std::size_t l = 1; l < widths.size(); ++l) {
        const std::string idx = std::to_string(l);
        params_.emplace_back(prefix + ".W" + idx, xavier_uniform(widths[l], widths[l - 1], rng));
        params_.emplace_back(prefix + ".b" + idx, Matrix(Vector::Zero(widths[l])));
    }
}

std::size_t KaeModel::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name() == name) return i;
    return params_.size();
}

bool KaeModel::has(std::string_view name) const { return index_of(name) < params_.size(); }

ad::Parameter& KaeModel::param(std::string_view name) {
    const std::size_t i = index_of(name);
    if (i == params_.size()) throw ContractError("model has no parameter " + std::string(name));
    return params_[i];
}

const ad::Parameter& KaeModel::param(std::string_view name) const {
    return const_cast<KaeModel*>(this)->param(name);
}

std::vector<ad::Parameter*> KaeModel::trainable() {
    std::vector<ad::Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

Matrix KaeModel::run_mlp(std::size_t first, const Matrix& x) const {
    Matrix a = x;
    const int layers = depth();
    for (int l = 0; l < layers; ++l) {
        const Matrix& w = params_[first + 2 * l].value();
        const Matrix& b = params_[first + 2 * l + 1].value();
        if (w.cols() != a.rows())
            throw DimensionError("mlp: input has " + std::to_string(a.rows()) + " rows, layer expects " +
                                 std::to_string(w.cols()));
        Matrix y = (w * a).colwise() + b.col(0);
        a = l + 1 < layers ? Matrix(y.array().tanh().matrix()) : std::move(y);
    }
    return a;
}

Matrix KaeModel::encode(const Matrix& x) const { return run_mlp(0, x); }

Matrix KaeModel::decode(const Matrix& z) const {
    return run_mlp(static_cast<std::size_t>(2 * depth()), z);
}

Matrix KaeModel::forward_matrix() const {
    if (variant_ == Variant::Usvd)
        return param("op.Uf").value() * param("op.sf").value().col(0).asDiagonal() *
               param("op.Vf").value().transpose();
    return param("op.K").value();
}

Matrix KaeModel::backward_matrix() const {
    if (!has_backward(variant_))
        throw ContractError("backward operator is not available for variant " +
                            std::string(variant_name(variant_)));
    if (variant_ == Variant::Usvd) {
        const Vector inv = param("op.sb").value().col(0).cwiseMax(kSigmaClamp).cwiseInverse();
        return param("op.Vb").value() * inv.asDiagonal() * param("op.Ub").value().transpose();
    }
    return param("op.G").value();
}

void KaeModel::refresh_isvd() {
    if (variant_ != Variant::Isvd)
        throw ContractError("refresh_isvd requires the isvd variant");
    isvd_.forward = linalg::svd(param("op.K").value());
    isvd_.g = linalg::svd(param("op.G").value());

    // G = U_G S_G V_G^T = V_b S_b^-1 U_b^T with S_b = S_G^-1: reverse the
    // order so sigma_b is descending, then match signs to the forward factors.
    const auto& g = isvd_.g;
    const Eigen::Index m = g.sigma.size();
    auto& bwd = isvd_.backward;
    bwd.u.resize(m, m);
    bwd.v.resize(m, m);
    bwd.sigma.resize(m);
    bwd.sweeps = g.sweeps;
    for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index src = m - 1 - j;
        bwd.u.col(j) = g.v.col(src);
        bwd.v.col(j) = g.u.col(src);
        bwd.sigma(j) = g.sigma(src) > 0 ? 1.0 / g.sigma(src) : std::numeric_limits<double>::infinity();
        if (bwd.u.col(j).dot(isvd_.forward.u.col(j)) < 0) {
            bwd.u.col(j) = -bwd.u.col(j);
            bwd.v.col(j) = -bwd.v.col(j);
        }
    }
    ++isvd_.refreshes;
}

const IsvdCache& KaeModel::isvd_cache() const {
    if (variant_ != Variant::Isvd) throw ContractError("isvd_cache requires the isvd variant");
    return isvd_;
}

BoundModel::BoundModel(ad::Graph& graph, KaeModel& model) : graph_(&graph), model_(&model) {
    vars_.reserve(model.parameters().size());
    for (auto& p : model.parameters()) vars_.push_back(graph.parameter(p));

    if (model.variant() == Variant::Usvd) {
        k_ = var("op.Uf") * diag_from_vector(var("op.sf")) * transpose(var("op.Vf"));
        g_ = var("op.Vb") * diag_from_vector(reciprocal_clamped(var("op.sb"), kSigmaClamp)) *
             transpose(var("op.Ub"));
    } else {
        k_ = var("op.K");
        if (has_backward(model.variant())) g_ = var("op.G");
    }
}

ad::Var BoundModel::var(std::string_view name) const {
    const auto& params = model_->parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name() == name) return vars_[i];
    throw ContractError("model has no parameter " + std::string(name));
}

ad::Var BoundModel::backward_matrix() const {
    if (!has_backward(model_->variant()))
        throw ContractError("backward operator is not available for variant " +
                            std::string(variant_name(model_->variant())));
    return g_;
}

ad::Var BoundModel::mlp(std::size_t first, ad::Var x) const {
    const int layers = model_->depth();
    ad::Var a = x;
    for (int l = 0; l < layers; ++l) {
        const ad::Var y = add(matmul(vars_[first + 2 * l], a), vars_[first + 2 * l + 1]);
        a = l + 1 < layers ? ad::tanh(y) : y;
    }
    return a;
}

ad::Var BoundModel::encode(ad::Var x) const { return mlp(0, x); }

ad::Var BoundModel::decode(ad::Var z) const {
    return mlp(static_cast<std::size_t>(2 * model_->depth()), z);
}

std::vector<ad::Var> BoundModel::rollout_forward(ad::Var z0, std::size_t tau) const {
    if (tau < 1) throw ContractError("rollout_forward: tau must be at least 1");
    std::vector<ad::Var> out;
    out.reserve(tau);
    ad::Var z = z0;
    for (std::size_t s = 1; s <= tau; ++s) {
        z = matmul(k_, z);
        check_finite_latent(z.value(), s);
        out.push_back(z);
    }
    return out;
}

std::vector<ad::Var> BoundModel::rollout_backward(ad::Var z0, std::size_t tau) const {
    if (tau < 1) throw ContractError("rollout_backward: tau must be at least 1");
    const ad::Var g = backward_matrix();
    std::vector<ad::Var> out;
    out.reserve(tau);
    ad::Var z = z0;
    for (std::size_t s = 1; s <= tau; ++s) {
        z = matmul(g, z);
        check_finite_latent(z.value(), s);
        out.push_back(z);
    }
    return out;
}

namespace {

std::vector<Matrix> rollout(const Matrix& op, const Matrix& z0, std::size_t tau) {
    std::vector<Matrix> out;
    out.reserve(tau);
    Matrix z = z0;
    for (std::size_t s = 1; s <= tau; ++s) {
        z = op * z;
        check_finite_latent(z, s);
        out.push_back(z);
    }
    return out;
}

} // namespace

std::vector<Matrix> rollout_forward(const KaeModel& model, const Matrix& z0, std::size_t tau) {
    if (tau < 1) throw ContractError("rollout_forward: tau must be at least 1");
    return rollout(model.forward_matrix(), z0, tau);
}

std::vector<Matrix> rollout_backward(const KaeModel& model, const Matrix& z0, std::size_t tau) {
    if (tau < 1) throw ContractError("rollout_backward: tau must be at least 1");
    return rollout(model.backward_matrix(), z0, tau);
}

} // namespace kae
