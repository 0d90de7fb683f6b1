#include "kae/losses.hpp"

#include <cmath>

#include "kae/errors.hpp"

namespace kae {

namespace {

ad::Var identity_like(ad::Var a) {
    return a.graph().constant(Matrix::Identity(a.rows(), a.cols()));
}

void require_square_pair(ad::Var a, ad::Var b, const char* op) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
        throw DimensionError(std::string(op) + ": expected two square matrices of equal size");
}

ad::Var multi_step_loss(const BoundModel& m, const std::vector<Matrix>& targets,
                        const std::vector<ad::Var>& latents, Eigen::Index batch) {
    ad::Graph& g = m.graph();
    ad::Var acc;
    for (std::size_t s = 0; s < latents.size(); ++s) {
        const ad::Var err = frobenius_norm_sq(g.constant(targets[s]) - m.decode(latents[s]));
        acc = s == 0 ? err : acc + err;
    }
    return scale(acc, 1.0 / static_cast<double>(batch * static_cast<Eigen::Index>(latents.size())));
}

} // namespace

Batch make_batch(const WindowDataset& ds, std::span<const std::size_t> windows) {
    if (windows.empty()) throw ContractError("make_batch: no windows");
    const Eigen::Index n = ds.dim();
    const auto cols = static_cast<Eigen::Index>(windows.size());
    Batch b;
    b.anchor.resize(n, cols);
    b.future.assign(ds.wf, Matrix(n, cols));
    b.past.assign(ds.wb, Matrix(n, cols));
    for (Eigen::Index j = 0; j < cols; ++j) {
        const std::size_t w = windows[static_cast<std::size_t>(j)];
        if (w >= ds.size()) throw ContractError("make_batch: window index out of range");
        const auto t = static_cast<Eigen::Index>(ds.anchor(w));
        b.anchor.col(j) = ds.states.col(t);
        for (std::size_t k = 0; k < ds.wf; ++k)
            b.future[k].col(j) = ds.states.col(t + static_cast<Eigen::Index>(k) + 1);
        for (std::size_t k = 0; k < ds.wb; ++k)
            b.past[k].col(j) = ds.states.col(t - static_cast<Eigen::Index>(k) - 1);
    }
    return b;
}

Batch make_batch(const WindowDataset& ds, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return make_batch(ds, idx);
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    r_t += o.r_t;
    f_tw += o.f_tw;
    b_tw += o.b_tw;
    c1 += o.c1;
    v_sigma += o.v_sigma;
    s_unitary += o.s_unitary;
    c_cross += o.c_cross;
    total += o.total;
    return *this;
}

LossBreakdown& LossBreakdown::operator/=(double d) {
    r_t /= d;
    f_tw /= d;
    b_tw /= d;
    c1 /= d;
    v_sigma /= d;
    s_unitary /= d;
    c_cross /= d;
    total /= d;
    return *this;
}

std::string LossBreakdown::first_non_finite() const {
    const std::pair<const char*, double> terms[] = {
        {"r_t", r_t},         {"f_tw", f_tw},           {"b_tw", b_tw},       {"c1", c1},
        {"v_sigma", v_sigma}, {"s_unitary", s_unitary}, {"c_cross", c_cross}, {"total", total}};
    for (const auto& [name, value] : terms)
        if (!std::isfinite(value)) return name;
    return {};
}

ad::Var reconstruction_loss(const BoundModel& m, ad::Var x, ad::Var z) {
    const ad::Var err = frobenius_norm_sq(x - m.decode(z));
    return scale(err, 1.0 / static_cast<double>(x.cols()));
}

ad::Var reconstruction_loss(const BoundModel& m, const Batch& batch) {
    if (batch.size() == 0) throw ContractError("reconstruction_loss: empty batch");
    const ad::Var x = m.graph().constant(batch.anchor);
    return reconstruction_loss(m, x, m.encode(x));
}

ad::Var forward_loss(const BoundModel& m, const Batch& batch, ad::Var z0, std::size_t wf) {
    if (wf < 1) throw ContractError("forward_loss: wf must be at least 1");
    if (batch.future.size() < wf) throw ContractError("forward_loss: windows shorter than wf");
    return multi_step_loss(m, batch.future, m.rollout_forward(z0, wf), batch.size());
}

ad::Var forward_loss(const BoundModel& m, const Batch& batch, std::size_t wf) {
    return forward_loss(m, batch, m.encode(m.graph().constant(batch.anchor)), wf);
}

ad::Var backward_loss(const BoundModel& m, const Batch& batch, ad::Var z0, std::size_t wb) {
    if (!has_backward(m.model().variant()))
        throw ContractError("backward_loss: variant has no backward operator");
    if (wb < 1) throw ContractError("backward_loss: wb must be at least 1");
    if (batch.past.size() < wb) throw ContractError("backward_loss: windows shorter than wb");
    return multi_step_loss(m, batch.past, m.rollout_backward(z0, wb), batch.size());
}

ad::Var backward_loss(const BoundModel& m, const Batch& batch, std::size_t wb) {
    return backward_loss(m, batch, m.encode(m.graph().constant(batch.anchor)), wb);
}

ad::Var consistency_c1(ad::Var k, ad::Var g) {
    require_square_pair(k, g, "consistency_c1");
    return frobenius_norm_sq(g * k - identity_like(k));
}

ad::Var sigma_loss(ad::Var sf, ad::Var sb) {
    if (sf.cols() != 1 || sb.cols() != 1 || sf.rows() != sb.rows())
        throw DimensionError("sigma_loss: expected two column vectors of equal length");
    const ad::Var ones = sf.graph().constant(Matrix::Ones(sf.rows(), 1));
    return frobenius_norm_sq(ones - sf) + frobenius_norm_sq(ones - sb);
}

ad::Var unitarity_loss(ad::Var u, ad::Var v) {
    require_square_pair(u, v, "unitarity_loss");
    const ad::Var eye = identity_like(u);
    return frobenius_norm_sq(transpose(u) * u - eye) + frobenius_norm_sq(transpose(v) * v - eye);
}

ad::Var cross_consistency(ad::Var uf, ad::Var ub, ad::Var vf, ad::Var vb) {
    require_square_pair(uf, ub, "cross_consistency");
    require_square_pair(vf, vb, "cross_consistency");
    const ad::Var eye = identity_like(uf);
    return frobenius_norm_sq(vf * transpose(vb) - eye) + frobenius_norm_sq(uf * transpose(ub) - eye);
}

LossTerms aggregate(ad::Graph& graph, KaeModel& model, const Batch& batch) {
    const LossWeights& w = model.weights();
    w.validate();
    if (batch.size() == 0) throw ContractError("aggregate: empty batch");
    const Variant variant = model.variant();
    const BoundModel m(graph, model);

    const ad::Var x = graph.constant(batch.anchor);
    const ad::Var z0 = m.encode(x);

    LossTerms out;
    LossBreakdown& v = out.values;
    const ad::Var r = reconstruction_loss(m, x, z0);
    const ad::Var f = forward_loss(m, batch, z0, model.wf());
    v.r_t = r.scalar();
    v.f_tw = f.scalar();
    ad::Var total = scale(r, w.id) + scale(f, w.f);

    if (has_backward(variant)) {
        const ad::Var b = backward_loss(m, batch, z0, model.wb());
        v.b_tw = b.scalar();
        total = total + scale(b, w.b);
    }

    switch (variant) {
    case Variant::Vanilla:
        break;
    case Variant::Ckae: {
        const ad::Var c1 = consistency_c1(m.forward_matrix(), m.backward_matrix());
        v.c1 = c1.scalar();
        total = total + scale(c1, w.c);
        break;
    }
    case Variant::Usvd: {
        const ad::Var uf = m.var("op.Uf"), vf = m.var("op.Vf"), sf = m.var("op.sf");
        const ad::Var ub = m.var("op.Ub"), vb = m.var("op.Vb"), sb = m.var("op.sb");
        const ad::Var sv = sigma_loss(sf, sb);
        const ad::Var su = unitarity_loss(uf, vf) + unitarity_loss(ub, vb);
        const ad::Var cc = cross_consistency(uf, ub, vf, vb);
        v.v_sigma = sv.scalar();
        v.s_unitary = su.scalar();
        v.c_cross = cc.scalar();
        total = total + scale(sv, w.sv) + scale(su + cc, w.c);
        break;
    }
    case Variant::Isvd: {
        const IsvdCache& cache = model.isvd_cache();
        // Nearest orthogonal matrices (sigma clamped to 1) from the cached factors.
        const Matrix polar_k = cache.forward.u * cache.forward.v.transpose();
        const Matrix polar_g = cache.g.u * cache.g.v.transpose();
        const ad::Var sv = frobenius_norm_sq(m.forward_matrix() - graph.constant(polar_k)) +
                           frobenius_norm_sq(m.backward_matrix() - graph.constant(polar_g));
        const ad::Var uf = graph.constant(cache.forward.u), vf = graph.constant(cache.forward.v);
        const ad::Var ub = graph.constant(cache.backward.u), vb = graph.constant(cache.backward.v);
        const ad::Var su = unitarity_loss(uf, vf) + unitarity_loss(ub, vb);
        const ad::Var cc = cross_consistency(uf, ub, vf, vb);
        v.v_sigma = sv.scalar();
        v.s_unitary = su.scalar();
        v.c_cross = cc.scalar();
        total = total + scale(sv, w.sv) + scale(su + cc, w.c);
        break;
    }
    }
    out.total = total;
    v.total = total.scalar();
    return out;
}

LossBreakdown evaluate_losses(KaeModel& model, const Batch& batch) {
    ad::Graph graph;
    return aggregate(graph, model, batch).values;
}

} // namespace kae
