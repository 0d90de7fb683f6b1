#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kae/dynamics.hpp"
#include "kae/model.hpp"
#include "kae/training.hpp"

namespace kae {

/// Long-horizon prediction from a single encoding at t0.
struct PredictionReport {
    std::size_t t0 = 0;
    /// errors[k] = || x(t0+k+1) - D(K^(k+1) z(t0)) ||^2
    std::vector<double> errors;
    double average = 0.0;
    Matrix truth;      ///< dim x errors.size()
    Matrix prediction; ///< dim x errors.size()
    bool diverged = false;
    std::size_t diverged_at = 0; ///< first tau with a non-finite latent
};

/// `states` must already be in the model's normalized coordinates and
/// contain columns t0 .. t0 + horizon.
PredictionReport predict_horizon(const KaeModel& model, const Matrix& states, std::size_t t0, std::size_t horizon);

struct SpectrumReport {
    std::vector<std::complex<double>> k;
    std::vector<std::complex<double>> uf; ///< empty for variants without factors
    std::vector<std::complex<double>> vf;
    Vector sf;
    /// max_i | |lambda_i(K)| - 1 |
    double max_deviation = 0.0;
};

/// Eigenvalues of the materialized K, and of Uf, Vf (the trainable factors
/// for Usvd, the cached SVD factors for Isvd).
SpectrumReport spectrum(const KaeModel& model);

struct ComparisonRow {
    Variant variant = Variant::Usvd;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double avg_err = 0.0;
    std::uint64_t ops_per_step = 0;
    bool ok = true;
    std::string error;
    /// Average error of snapshots taken at the budgets requested in CompareOptions.
    std::vector<std::pair<std::size_t, double>> budget_errors;
    std::optional<TrainResult> run; ///< kept when CompareOptions::keep_runs
};

struct CompareOptions {
    std::size_t horizon = 1000;
    unsigned threads = 1;
    /// Also evaluate snapshots after these epoch counts.
    std::vector<std::size_t> budgets;
    bool keep_runs = false;
};

/// Trains every config once per seed and scores each run with predict_horizon
/// from `t0` on `eval_states` (normalized like `ds`). Failed runs are flagged
/// per row. Rows are ordered config-major, then by seed.
std::vector<ComparisonRow> compare_variants(const std::vector<TrainConfig>& configs, const WindowDataset& ds,
                                            const Matrix& eval_states, std::size_t t0,
                                            const std::vector<std::uint64_t>& seeds, const CompareOptions& opts);

/// Median over successful rows of `variant`; NaN when there are none.
double median_error(const std::vector<ComparisonRow>& rows, Variant variant);
/// Same, for the snapshot error at `budget` epochs.
double median_budget_error(const std::vector<ComparisonRow>& rows, Variant variant, std::size_t budget);

/// Worker count from KOOPMAN_SVD_THREADS, else `fallback`.
unsigned worker_threads(unsigned fallback = 1);

// CSV reports.
// Coordinates are the normalized ones the errors are measured in.
void write_prediction_csv(std::ostream& os, const PredictionReport& r);
void write_spectrum_csv(std::ostream& os, const SpectrumReport& r);
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);

} // namespace kae
