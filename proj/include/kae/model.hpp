#pragma once

// Koopman autoencoder: encoder and decoder MLPs around a latent linear map.
//
// Four parameterizations of the latent operator are supported:
//   Vanilla  dense K
//   Ckae     dense K and backward G
//   Isvd     dense K and G, plus SVD caches refreshed outside the graph
//   Usvd     K = Uf diag(sf) Vf^T and G = Vb diag(1/max(sb, eps)) Ub^T,
//            with the factors as the trainable parameters

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kae/autodiff.hpp"
#include "kae/dynamics.hpp"
#include "kae/linalg.hpp"

namespace kae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Variant { Vanilla, Ckae, Isvd, Usvd };

std::string_view variant_name(Variant v);
/// Accepts vanilla|ckae|isvd|usvd; throws ConfigError listing the valid names.
Variant parse_variant(std::string_view name);
bool has_backward(Variant v);
bool has_svd_terms(Variant v);

struct Dims {
    int n = 3;  ///< state dimension
    int m = 8;  ///< latent dimension
    int h = 16; ///< hidden width; 0 means a single linear layer each side
};

/// Weights (w_id, w_f, w_b, w_sv, w_c) of the aggregate objective.
struct LossWeights {
    double id = 1.0;
    double f = 1.0;
    double b = 1e-2;
    double sv = 1e-4;
    double c = 1.0;

    void validate() const;
};

/// Lower clamp applied to sb before inverting it.
inline constexpr double kSigmaClamp = 1e-3;

/// SVD caches of the dense operators of an Isvd model.
///
/// `backward` holds G's factors rearranged as G = V_b diag(sigma_b)^-1 U_b^T
/// with sigma_b descending and column signs matched against `forward`.
struct IsvdCache {
    linalg::SvdResult<double> forward;  ///< svd(K)
    linalg::SvdResult<double> g;        ///< svd(G) as computed
    linalg::SvdResult<double> backward; ///< u = U_b, sigma = sigma_b, v = V_b
    std::size_t refreshes = 0;
};

class KaeModel {
public:
    KaeModel(Variant variant, Dims dims, LossWeights weights, std::size_t wf, std::size_t wb,
             std::uint64_t seed);

    Variant variant() const { return variant_; }
    const Dims& dims() const { return dims_; }
    const LossWeights& weights() const { return weights_; }
    void set_weights(const LossWeights& w);
    std::size_t wf() const { return wf_; }
    std::size_t wb() const { return wb_; }

    std::vector<ad::Parameter>& parameters() { return params_; }
    const std::vector<ad::Parameter>& parameters() const { return params_; }
    bool has(std::string_view name) const;
    ad::Parameter& param(std::string_view name);
    const ad::Parameter& param(std::string_view name) const;
    std::vector<ad::Parameter*> trainable();

    /// Number of encoder (and decoder) layers.
    int depth() const { return dims_.h == 0 ? 1 : 3; }

    // Graph-free evaluation; columns are samples.
    Matrix encode(const Matrix& x) const;
    Matrix decode(const Matrix& z) const;
    /// Materialized K.
    Matrix forward_matrix() const;
    /// Materialized G; throws ContractError for Vanilla.
    Matrix backward_matrix() const;

    /// Recompute the Isvd caches from the current K and G.
    void refresh_isvd();
    const IsvdCache& isvd_cache() const;

    /// Preprocessing the model was trained with.
    Normalization normalization;
    /// Length of the trajectory the training windows were cut from.
    std::size_t train_length = 0;

private:
    void add_mlp(const std::string& prefix, int in, int hidden, int out, std::mt19937_64& rng);
    Matrix run_mlp(std::size_t first, const Matrix& x) const;
    std::size_t index_of(std::string_view name) const;

    Variant variant_;
    Dims dims_;
    LossWeights weights_;
    std::size_t wf_;
    std::size_t wb_;
    std::vector<ad::Parameter> params_;
    IsvdCache isvd_;
};

/// A model's parameters bound as leaves of one Graph.
class BoundModel {
public:
    BoundModel(ad::Graph& graph, KaeModel& model);

    KaeModel& model() const { return *model_; }
    ad::Graph& graph() const { return *graph_; }

    ad::Var encode(ad::Var x) const;
    ad::Var decode(ad::Var z) const;
    ad::Var forward_matrix() const { return k_; }
    /// Throws ContractError for Vanilla.
    ad::Var backward_matrix() const;
    /// Handle for a named parameter (e.g. "op.Uf").
    ad::Var var(std::string_view name) const;

    /// z(t+1..t+tau) by repeated multiplication with K.
    std::vector<ad::Var> rollout_forward(ad::Var z0, std::size_t tau) const;
    /// z(t-1..t-tau) by repeated multiplication with G.
    std::vector<ad::Var> rollout_backward(ad::Var z0, std::size_t tau) const;

private:
    ad::Var mlp(std::size_t first, ad::Var x) const;

    ad::Graph* graph_;
    KaeModel* model_;
    std::vector<ad::Var> vars_;
    ad::Var k_;
    ad::Var g_;
};

// Graph-free rollouts of a materialized operator.
std::vector<Matrix> rollout_forward(const KaeModel& model, const Matrix& z0, std::size_t tau);
std::vector<Matrix> rollout_backward(const KaeModel& model, const Matrix& z0, std::size_t tau);

/// Uniform draw of an orthogonal matrix (QR of a Gaussian matrix).
Matrix random_orthogonal(int m, std::mt19937_64& rng);

} // namespace kae
