#include "kae/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "kae/errors.hpp"
#include "kae/linalg.hpp"

namespace kae {

PredictionReport predict_horizon(const KaeModel& model, const Matrix& states, std::size_t t0, std::size_t horizon) {
    if (horizon < 1) throw ContractError("predict_horizon: horizon must be at least 1");
    if (states.rows() != model.dims().n)
        throw DimensionError("predict_horizon: states have " + std::to_string(states.rows()) +
                             " rows, model expects " + std::to_string(model.dims().n));
    if (t0 + horizon >= static_cast<std::size_t>(states.cols()))
        throw ContractError("predict_horizon: ground truth ends at index " + std::to_string(states.cols() - 1) +
                            ", need " + std::to_string(t0 + horizon));

    PredictionReport r;
    r.t0 = t0;
    r.errors.reserve(horizon);
    r.truth.resize(states.rows(), static_cast<Eigen::Index>(horizon));
    r.prediction.resize(states.rows(), static_cast<Eigen::Index>(horizon));

    const Matrix k = model.forward_matrix();
    Matrix z = model.encode(states.col(static_cast<Eigen::Index>(t0)));
    std::size_t done = 0;
    for (std::size_t tau = 1; tau <= horizon; ++tau) {
        z = k * z;
        if (!z.allFinite()) {
            r.diverged = true;
            r.diverged_at = tau;
            break;
        }
        const auto col = static_cast<Eigen::Index>(tau - 1);
        r.truth.col(col) = states.col(static_cast<Eigen::Index>(t0 + tau));
        r.prediction.col(col) = model.decode(z);
        r.errors.push_back((r.truth.col(col) - r.prediction.col(col)).squaredNorm());
        done = tau;
    }
    r.truth.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(done));
    r.prediction.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(done));
    r.average = r.errors.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : std::accumulate(r.errors.begin(), r.errors.end(), 0.0) /
                                       static_cast<double>(r.errors.size());
    return r;
}

SpectrumReport spectrum(const KaeModel& model) {
    SpectrumReport r;
    const auto k = linalg::eigenvalues(model.forward_matrix());
    r.k = k.eigenvalues;
    r.max_deviation = k.max_unit_deviation();
    if (model.variant() == Variant::Usvd) {
        r.uf = linalg::eigenvalues(model.param("op.Uf").value()).eigenvalues;
        r.vf = linalg::eigenvalues(model.param("op.Vf").value()).eigenvalues;
        r.sf = model.param("op.sf").value().col(0);
    } else if (model.variant() == Variant::Isvd) {
        const auto& cache = model.isvd_cache();
        r.uf = linalg::eigenvalues(cache.forward.u).eigenvalues;
        r.vf = linalg::eigenvalues(cache.forward.v).eigenvalues;
        r.sf = cache.forward.sigma;
    }
    return r;
}

unsigned worker_threads(unsigned fallback) {
    if (const char* env = std::getenv("KOOPMAN_SVD_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, fallback);
}

std::vector<ComparisonRow> compare_variants(const std::vector<TrainConfig>& configs, const WindowDataset& ds,
                                            const Matrix& eval_states, std::size_t t0,
                                            const std::vector<std::uint64_t>& seeds, const CompareOptions& opts) {
    if (configs.empty() || seeds.empty()) throw ContractError("compare_variants: need at least one config and seed");
    std::vector<ComparisonRow> rows(configs.size() * seeds.size());

    auto run_one = [&](std::size_t job) {
        const TrainConfig& base = configs[job / seeds.size()];
        ComparisonRow& row = rows[job];
        TrainConfig cfg = base;
        cfg.seed = seeds[job % seeds.size()];
        row.variant = cfg.variant;
        row.seed = cfg.seed;
        row.epochs = cfg.epochs;
        row.ops_per_step = count_ops(cfg);
        try {
            auto snapshot = [&](const EpochLog& e, const KaeModel& m) {
                if (std::find(opts.budgets.begin(), opts.budgets.end(), e.epoch) != opts.budgets.end())
                    row.budget_errors.emplace_back(e.epoch, predict_horizon(m, eval_states, t0, opts.horizon).average);
            };
            TrainResult result = train(cfg, ds, snapshot);
            const PredictionReport rep = predict_horizon(result.model, eval_states, t0, opts.horizon);
            row.avg_err = rep.average;
            if (rep.diverged) {
                row.ok = false;
                row.error = "latent diverged at tau=" + std::to_string(rep.diverged_at);
            }
            if (opts.keep_runs) row.run.emplace(std::move(result));
        } catch (const Error& e) {
            row.ok = false;
            row.avg_err = std::numeric_limits<double>::quiet_NaN();
            row.error = e.what();
        }
    };

    const unsigned n_threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(rows.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t job = next++; job < rows.size(); job = next++) run_one(job);
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }
    return rows;
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace

double median_error(const std::vector<ComparisonRow>& rows, Variant variant) {
    std::vector<double> v;
    for (const auto& r : rows)
        if (r.variant == variant && r.ok) v.push_back(r.avg_err);
    return median_of(std::move(v));
}

double median_budget_error(const std::vector<ComparisonRow>& rows, Variant variant, std::size_t budget) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.variant != variant) continue;
        for (const auto& [epoch, err] : r.budget_errors)
            if (epoch == budget && std::isfinite(err)) v.push_back(err);
    }
    return median_of(std::move(v));
}

void write_prediction_csv(std::ostream& os, const PredictionReport& r) {
    os << "tau,err,x1_true,x2_true,x3_true,x1_pred,x2_pred,x3_pred\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < r.errors.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        os << k + 1 << ',' << r.errors[k];
        for (Eigen::Index d = 0; d < r.truth.rows(); ++d) os << ',' << r.truth(d, c);
        for (Eigen::Index d = 0; d < r.prediction.rows(); ++d) os << ',' << r.prediction(d, c);
        os << '\n';
    }
}

void write_spectrum_csv(std::ostream& os, const SpectrumReport& r) {
    os << "component,re,im,abs\n";
    os << std::setprecision(17);
    auto emit = [&](const char* name, const std::vector<std::complex<double>>& values) {
        for (const auto& l : values) os << name << ',' << l.real() << ',' << l.imag() << ',' << std::abs(l) << '\n';
    };
    emit("K", r.k);
    emit("Uf", r.uf);
    emit("Vf", r.vf);
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
    os << "variant,seed,avg_err_1000,ops_per_step\n";
    os << std::setprecision(17);
    for (const auto& r : rows) {
        os << variant_name(r.variant) << ',' << r.seed << ',';
        if (r.ok)
            os << r.avg_err;
        else
            os << "nan";
        os << ',' << r.ops_per_step << '\n';
    }
}

} // namespace kae
