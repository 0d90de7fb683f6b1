#pragma once

// Finite-difference gradient checks shared by the unit tests and the
// acceptance suite.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kae/autodiff.hpp"
#include "kae/losses.hpp"
#include "kae/model.hpp"
#include "oracles.hpp"

namespace gradcheck {

namespace ad = kae::ad;
using Builder = std::function<ad::Var(ad::Graph&)>;

inline constexpr double kStep = 1e-5;
inline constexpr double kRelative = 1e-4;
inline constexpr double kAbsolute = 1e-7;

/// Worst entry of |analytic - numeric| / max(kRelative * |numeric|, kAbsolute)
/// over every entry of `params`, using central differences with step kStep.
/// A value at most 1 passes. `build` must bind the parameters into the graph
/// it is handed and return a scalar.
inline double relative_error(const std::vector<ad::Parameter*>& params, const Builder& build, double h = kStep) {
    for (auto* p : params) p->zero_grad();
    {
        ad::Graph g;
        g.backward(build(g));
    }
    auto eval = [&] {
        ad::Graph g;
        return build(g).scalar();
    };
    double worst = 0.0;
    for (auto* p : params) {
        const oracle::Matrix analytic = p->grad();
        oracle::Matrix numeric(analytic.rows(), analytic.cols());
        for (Eigen::Index i = 0; i < analytic.rows(); ++i)
            for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
                double& x = p->value()(i, j);
                const double keep = x;
                x = keep + h;
                const double up = eval();
                x = keep - h;
                const double down = eval();
                x = keep;
                numeric(i, j) = (up - down) / (2.0 * h);
            }
        const oracle::Matrix tol = (kRelative * numeric.cwiseAbs()).cwiseMax(kAbsolute);
        worst = std::max(worst, (analytic - numeric).cwiseAbs().cwiseQuotient(tol).maxCoeff());
    }
    return worst;
}

struct Named {
    std::string name;
    std::function<double(std::mt19937_64&)> run; ///< one random instance -> relative error
};

inline oracle::Matrix away_from(const oracle::Matrix& m, double point, double gap) {
    return m.unaryExpr([&](double x) {
        if (std::abs(x - point) >= gap) return x;
        return x >= point ? point + gap + x : point - gap + x;
    });
}

/// One case per operator of the autodiff engine. Each instance draws random
/// shapes and values and contracts the op's output with a random weight so
/// that every output entry contributes to the scalar.
inline std::vector<Named> operator_cases() {
    auto dims = [](std::mt19937_64& rng) {
        std::uniform_int_distribution<int> d(1, 5);
        return std::array<int, 3>{d(rng), d(rng), d(rng)};
    };
    auto contract = [](ad::Graph& g, ad::Var out, const oracle::Matrix& w) {
        return ad::sum(ad::elementwise_mul(out, g.constant(w)));
    };
    using Unary = std::function<ad::Var(ad::Var)>;
    auto unary = [=](Unary op, double kink, bool square_only) {
        return [=](std::mt19937_64& rng) {
            auto [r, c, _] = dims(rng);
            if (square_only) c = r;
            ad::Parameter a("a", away_from(oracle::gaussian(r, c, rng), kink, 0.05));
            ad::Graph probe;
            const auto shape = op(probe.constant(a.value())).value();
            const oracle::Matrix w = oracle::gaussian(shape.rows(), shape.cols(), rng);
            return relative_error({&a}, [&](ad::Graph& g) { return contract(g, op(g.parameter(a)), w); });
        };
    };
    using Binary = std::function<ad::Var(ad::Var, ad::Var)>;
    auto binary = [=](Binary op, int mode) {
        return [=](std::mt19937_64& rng) {
            auto [r, c, k] = dims(rng);
            oracle::Matrix av, bv;
            if (mode == 0) { // matmul
                av = oracle::gaussian(r, k, rng);
                bv = oracle::gaussian(k, c, rng);
            } else if (mode == 1) { // same shape
                av = oracle::gaussian(r, c, rng);
                bv = oracle::gaussian(r, c, rng);
            } else { // column broadcast
                av = oracle::gaussian(r, c + 1, rng);
                bv = oracle::gaussian(r, 1, rng);
            }
            ad::Parameter a("a", av), b("b", bv);
            ad::Graph probe;
            const auto shape = op(probe.constant(av), probe.constant(bv)).value();
            const oracle::Matrix w = oracle::gaussian(shape.rows(), shape.cols(), rng);
            return relative_error({&a, &b},
                                  [&](ad::Graph& g) { return contract(g, op(g.parameter(a), g.parameter(b)), w); });
        };
    };

    std::vector<Named> cases;
    cases.push_back({"matmul", binary([](ad::Var a, ad::Var b) { return ad::matmul(a, b); }, 0)});
    cases.push_back({"add", binary([](ad::Var a, ad::Var b) { return ad::add(a, b); }, 1)});
    cases.push_back({"add (broadcast)", binary([](ad::Var a, ad::Var b) { return ad::add(a, b); }, 2)});
    cases.push_back({"sub", binary([](ad::Var a, ad::Var b) { return ad::sub(a, b); }, 1)});
    cases.push_back({"sub (broadcast)", binary([](ad::Var a, ad::Var b) { return ad::sub(a, b); }, 2)});
    cases.push_back({"elementwise_mul", binary([](ad::Var a, ad::Var b) { return ad::elementwise_mul(a, b); }, 1)});
    cases.push_back({"scale", unary([](ad::Var a) { return ad::scale(a, -1.7); }, 1e9, false)});
    cases.push_back({"tanh", unary([](ad::Var a) { return ad::tanh(a); }, 1e9, false)});
    cases.push_back({"relu", unary([](ad::Var a) { return ad::relu(a); }, 0.0, false)});
    cases.push_back({"transpose", unary([](ad::Var a) { return ad::transpose(a); }, 1e9, false)});
    cases.push_back({"frobenius_norm_sq", unary([](ad::Var a) { return ad::frobenius_norm_sq(a); }, 1e9, false)});
    cases.push_back({"mean", unary([](ad::Var a) { return ad::mean(a); }, 1e9, false)});
    cases.push_back({"sum", unary([](ad::Var a) { return ad::sum(a); }, 1e9, false)});
    cases.push_back({"reciprocal_clamped", unary([](ad::Var a) { return ad::reciprocal_clamped(a, 0.2); }, 0.2, false)});
    cases.push_back({"diag_from_vector", [=](std::mt19937_64& rng) {
                         const int m = dims(rng)[0];
                         ad::Parameter v("v", oracle::gaussian(m, 1, rng));
                         const oracle::Matrix w = oracle::gaussian(m, m, rng);
                         return relative_error(
                             {&v}, [&](ad::Graph& g) { return contract(g, ad::diag_from_vector(g.parameter(v)), w); });
                     }});
    return cases;
}

/// Small random problem for the loss-term checks.
struct LossProblem {
    kae::KaeModel model;
    kae::Batch batch;
};

inline LossProblem loss_problem(kae::Variant variant, std::mt19937_64& rng) {
    const std::size_t wf = 3, wb = 2;
    kae::Dims dims{3, 4, 5};
    LossProblem p{kae::KaeModel(variant, dims, kae::LossWeights{0.7, 1.3, 0.5, 0.2, 0.9}, wf, wb, rng()), {}};
    // Move operators away from the initial identity-like state so every term is non-trivial.
    for (auto& prm : p.model.parameters()) prm.value() += oracle::gaussian(prm.value().rows(), prm.value().cols(), rng, 0.1);
    if (variant == kae::Variant::Isvd) p.model.refresh_isvd();
    const int b = 3;
    p.batch.anchor = oracle::gaussian(dims.n, b, rng);
    for (std::size_t k = 0; k < wf; ++k) p.batch.future.push_back(oracle::gaussian(dims.n, b, rng));
    for (std::size_t k = 0; k < wb; ++k) p.batch.past.push_back(oracle::gaussian(dims.n, b, rng));
    return p;
}

inline double loss_error(kae::Variant variant, std::mt19937_64& rng,
                         const std::function<ad::Var(const kae::BoundModel&, const kae::Batch&)>& term) {
    LossProblem p = loss_problem(variant, rng);
    return relative_error(p.model.trainable(), [&](ad::Graph& g) {
        const kae::BoundModel m(g, p.model);
        return term(m, p.batch);
    });
}

/// One case per loss term plus the aggregate objective of every variant.
inline std::vector<Named> loss_cases() {
    using kae::Variant;
    std::vector<Named> cases;
    cases.push_back({"R_T", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Vanilla, rng, [](const kae::BoundModel& m, const kae::Batch& b) {
                             return kae::reconstruction_loss(m, b);
                         });
                     }});
    cases.push_back({"F_TW", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Usvd, rng, [](const kae::BoundModel& m, const kae::Batch& b) {
                             return kae::forward_loss(m, b, m.model().wf());
                         });
                     }});
    cases.push_back({"B_TW", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Ckae, rng, [](const kae::BoundModel& m, const kae::Batch& b) {
                             return kae::backward_loss(m, b, m.model().wb());
                         });
                     }});
    cases.push_back({"C1", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Ckae, rng, [](const kae::BoundModel& m, const kae::Batch&) {
                             return kae::consistency_c1(m.forward_matrix(), m.backward_matrix());
                         });
                     }});
    cases.push_back({"V", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Usvd, rng, [](const kae::BoundModel& m, const kae::Batch&) {
                             return kae::sigma_loss(m.var("op.sf"), m.var("op.sb"));
                         });
                     }});
    cases.push_back({"S", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Usvd, rng, [](const kae::BoundModel& m, const kae::Batch&) {
                             return kae::unitarity_loss(m.var("op.Uf"), m.var("op.Vf")) +
                                    kae::unitarity_loss(m.var("op.Ub"), m.var("op.Vb"));
                         });
                     }});
    cases.push_back({"C", [](std::mt19937_64& rng) {
                         return loss_error(Variant::Usvd, rng, [](const kae::BoundModel& m, const kae::Batch&) {
                             return kae::cross_consistency(m.var("op.Uf"), m.var("op.Ub"), m.var("op.Vf"),
                                                           m.var("op.Vb"));
                         });
                     }});
    for (Variant v : {Variant::Vanilla, Variant::Ckae, Variant::Isvd, Variant::Usvd}) {
        cases.push_back({"L (" + std::string(kae::variant_name(v)) + ")", [v](std::mt19937_64& rng) {
                             LossProblem p = loss_problem(v, rng);
                             return relative_error(p.model.trainable(), [&](ad::Graph& g) {
                                 return kae::aggregate(g, p.model, p.batch).total;
                             });
                         }});
    }
    return cases;
}

} // namespace gradcheck
