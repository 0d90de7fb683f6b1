#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "kae/dynamics.hpp"
#include "kae/linalg.hpp"
#include "kae/losses.hpp"
#include "kae/model.hpp"

namespace kae {

enum class IsvdRefresh { PerStep, PerEpoch };

struct TrainConfig {
    Variant variant = Variant::Usvd;
    std::size_t epochs = 1000;
    std::size_t batch_size = 16;
    double lr = 1e-2;
    LossWeights weights;
    std::size_t wf = 20;
    std::size_t wb = 20;
    std::uint64_t seed = 0;
    Dims dims;
    IsvdRefresh isvd_refresh = IsvdRefresh::PerStep;
    /// Write a checkpoint every this many epochs (0 = never) into checkpoint_dir.
    std::size_t checkpoint_every = 0;
    std::string checkpoint_dir;
    /// When false the epoch log records wall_ms = 0 so logs are reproducible byte for byte.
    bool record_wall_time = false;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    LossBreakdown train;      ///< mean over the epoch's optimizer steps
    LossBreakdown validation; ///< full validation split at the end of the epoch
    double wall_ms = 0.0;
    std::uint64_t ops_cumulative = 0;
};

struct TrainResult {
    KaeModel model;
    std::vector<EpochLog> log;
};

/// Called after every epoch with the log entry and the current model.
using EpochCallback = std::function<void(const EpochLog&, const KaeModel&)>;

/// Mini-batch Adam training over the training split of `ds`.
///
/// Deterministic for a given config: initialization and the per-epoch
/// shuffles derive from `seed`. Throws TrainingError naming the offending
/// term (and the last checkpoint written, if any) on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const WindowDataset& ds, const EpochCallback& on_epoch = {});

/// Analytic multiply-add count of one training step's forward pass.
///
/// Covers encoder/decoder matmuls, wf (+ wb) latent rollout steps and their
/// decodes, the matrix products of the spectral loss terms, operator
/// materialization for Usvd, and for Isvd two Jacobi SVDs budgeted at
/// `svd_sweeps` sweeps of M(M-1)/2 rotations costing 11M multiply-adds each.
/// A hidden width of 0 means single linear layers.
std::uint64_t count_ops(Variant variant, const Dims& dims, std::size_t batch_size, std::size_t wf,
                        std::size_t wb, int svd_sweeps = linalg::kSvdMaxSweeps);
std::uint64_t count_ops(const TrainConfig& cfg);

void write_epoch_log_csv(std::ostream& os, const std::vector<EpochLog>& log);
void write_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& log);

/// Trailing moving average of train totals; entry i averages epochs
/// max(0, i-window+1)..i.
std::vector<double> smoothed_totals(const std::vector<EpochLog>& log, std::size_t window);

} // namespace kae
