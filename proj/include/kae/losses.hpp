#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kae/autodiff.hpp"
#include "kae/dynamics.hpp"
#include "kae/model.hpp"

namespace kae {

/// Column-stacked mini-batch of windows. future[k] holds x(t+k+1) and past[k]
/// holds x(t-k-1) for every window anchor t.
struct Batch {
    Matrix anchor;
    std::vector<Matrix> future;
    std::vector<Matrix> past;

    Eigen::Index size() const { return anchor.cols(); }
};

Batch make_batch(const WindowDataset& ds, std::span<const std::size_t> windows);
/// Every window in [begin, end).
Batch make_batch(const WindowDataset& ds, std::size_t begin, std::size_t end);

/// Values of every loss term. Terms a variant does not use are 0.
struct LossBreakdown {
    double r_t = 0.0;
    double f_tw = 0.0;
    double b_tw = 0.0;
    double c1 = 0.0;
    double v_sigma = 0.0;
    double s_unitary = 0.0;
    double c_cross = 0.0;
    double total = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
    LossBreakdown& operator/=(double d);
    /// Name of the first non-finite term, or empty.
    std::string first_non_finite() const;
};

/// Mean over the batch of ||x - D(E(x))||^2. `z` must be E(x).
ad::Var reconstruction_loss(const BoundModel& m, ad::Var x, ad::Var z);
ad::Var reconstruction_loss(const BoundModel& m, const Batch& batch);

/// (1 / (B wf)) sum_b sum_{tau=1..wf} ||x(t+tau) - D(K^tau z(t))||^2.
ad::Var forward_loss(const BoundModel& m, const Batch& batch, ad::Var z0, std::size_t wf);
ad::Var forward_loss(const BoundModel& m, const Batch& batch, std::size_t wf);

/// Mirror of forward_loss with G and the past states.
ad::Var backward_loss(const BoundModel& m, const Batch& batch, ad::Var z0, std::size_t wb);
ad::Var backward_loss(const BoundModel& m, const Batch& batch, std::size_t wb);

/// ||G K - I||_F^2
ad::Var consistency_c1(ad::Var k, ad::Var g);
/// sum (1 - sf)^2 + sum (1 - sb)^2 for column vectors sf, sb.
ad::Var sigma_loss(ad::Var sf, ad::Var sb);
/// ||U^T U - I||_F^2 + ||V^T V - I||_F^2
ad::Var unitarity_loss(ad::Var u, ad::Var v);
/// ||Vf Vb^T - I||_F^2 + ||Uf Ub^T - I||_F^2
ad::Var cross_consistency(ad::Var uf, ad::Var ub, ad::Var vf, ad::Var vb);

struct LossTerms {
    ad::Var total;
    LossBreakdown values;
};

/// Variant-specific weighted objective:
///   Vanilla  w_id R + w_f F
///   Ckae     + w_b B + w_c C1
///   Usvd     w_id R + w_f F + w_b B + w_sv V + w_c (S_f + S_b + C)
///   Isvd     as Usvd, with V realized as ||K - U_K V_K^T||^2 + ||G - U_G V_G^T||^2
///            against the cached factors, and S and C evaluated on the caches.
LossTerms aggregate(ad::Graph& graph, KaeModel& model, const Batch& batch);

/// Forward-only evaluation of aggregate().
LossBreakdown evaluate_losses(KaeModel& model, const Batch& batch);

} // namespace kae
