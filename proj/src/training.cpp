#include "kae/training.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "kae/checkpoint.hpp"
#include "kae/errors.hpp"

namespace kae {

void TrainConfig::validate() const {
    weights.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
    if (wf < 1) throw ConfigError("wf must be at least 1");
    if (has_backward(variant) && wb < 1) throw ConfigError("wb must be at least 1 for this variant");
    if (checkpoint_every > 0 && checkpoint_dir.empty())
        throw ConfigError("checkpoint_every requires checkpoint_dir");
}

namespace {

std::uint64_t mlp_ops(std::uint64_t in, std::uint64_t hidden, std::uint64_t out) {
    return hidden == 0 ? in * out : in * hidden + hidden * hidden + hidden * out;
}

std::vector<std::size_t> shuffled(std::size_t begin, std::size_t end, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    // Fisher-Yates with explicit draws; std::shuffle's draw pattern is unspecified.
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace

std::uint64_t count_ops(Variant variant, const Dims& dims, std::size_t batch_size, std::size_t wf,
                        std::size_t wb, int svd_sweeps) {
    const std::uint64_t n = dims.n, m = dims.m, h = dims.h;
    const std::uint64_t enc = mlp_ops(n, h, m);
    const std::uint64_t dec = mlp_ops(m, h, n);
    const std::uint64_t m2 = m * m, m3 = m * m * m;

    std::uint64_t per_sample = enc + wf * (m2 + dec);
    if (has_backward(variant)) per_sample += wb * (m2 + dec);
    std::uint64_t ops = batch_size * per_sample;

    switch (variant) {
    case Variant::Vanilla:
        break;
    case Variant::Ckae:
        ops += m3; // G K
        break;
    case Variant::Usvd:
        ops += (m2 + m3) + (m + m2 + m3); // Uf diag(sf) Vf^T, Vb diag(1/sb) Ub^T
        ops += 4 * m3 + 2 * m3 + 2 * m;   // S (four Gram products), C, V
        break;
    case Variant::Isvd: {
        const std::uint64_t rotations = m * (m - 1) / 2;
        ops += 2 * static_cast<std::uint64_t>(svd_sweeps) * rotations * 11 * m;
        ops += 2 * m3;                  // U V^T projection targets
        ops += 4 * m3 + 2 * m3 + 2 * m; // S, C on cached factors, V
        break;
    }
    }
    return ops;
}

std::uint64_t count_ops(const TrainConfig& cfg) {
    return count_ops(cfg.variant, cfg.dims, cfg.batch_size, cfg.wf, cfg.wb);
}

TrainResult train(const TrainConfig& cfg, const WindowDataset& ds, const EpochCallback& on_epoch) {
    cfg.validate();
    if (ds.wf < cfg.wf || (has_backward(cfg.variant) && ds.wb < cfg.wb))
        throw ContractError("train: dataset windows are shorter than the configured horizons");
    if (ds.dim() != cfg.dims.n)
        throw DimensionError("train: dataset has " + std::to_string(ds.dim()) + " dimensions, model expects " +
                             std::to_string(cfg.dims.n));

    TrainResult result{KaeModel(cfg.variant, cfg.dims, cfg.weights, cfg.wf, cfg.wb, cfg.seed), {}};
    KaeModel& model = result.model;
    model.normalization = ds.normalization;
    model.train_length = static_cast<std::size_t>(ds.states.cols());
    if (cfg.epochs == 0) return result;

    const Split& split = ds.split;
    if (split.train_end <= split.train_begin) throw ContractError("train: empty training split");
    const bool has_val = split.val_end > split.val_begin;
    const Batch val_batch = has_val ? make_batch(ds, split.val_begin, split.val_end) : Batch{};

    ad::Adam adam(model.trainable(), ad::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    const std::uint64_t ops_per_step = count_ops(cfg);
    std::uint64_t ops_total = 0;
    std::string last_checkpoint;
    const bool isvd = cfg.variant == Variant::Isvd;

    std::vector<std::size_t> batch_idx;
    batch_idx.reserve(cfg.batch_size);
    result.log.reserve(cfg.epochs);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const auto order = shuffled(split.train_begin, split.train_end, cfg.seed, epoch);
        if (isvd && cfg.isvd_refresh == IsvdRefresh::PerEpoch) model.refresh_isvd();

        LossBreakdown sum;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Batch batch = make_batch(ds, batch_idx);
            if (isvd && cfg.isvd_refresh == IsvdRefresh::PerStep) model.refresh_isvd();

            ad::Graph graph;
            LossTerms terms;
            try {
                terms = aggregate(graph, model, batch);
            } catch (const DivergenceError& e) {
                throw TrainingError(std::string("training diverged in epoch ") + std::to_string(epoch) +
                                        ": " + e.what(),
                                    "f_tw", last_checkpoint);
            } catch (const DomainError& e) {
                throw TrainingError(std::string("non-finite activations in epoch ") + std::to_string(epoch) +
                                        ": " + e.what(),
                                    "r_t", last_checkpoint);
            }
            if (const std::string bad = terms.values.first_non_finite(); !bad.empty())
                throw TrainingError("non-finite loss term " + bad + " in epoch " + std::to_string(epoch), bad,
                                    last_checkpoint);
            adam.zero_grad();
            graph.backward(terms.total);
            adam.step();

            sum += terms.values;
            ++steps;
            ops_total += ops_per_step;
        }
        sum /= static_cast<double>(steps);

        if (isvd) model.refresh_isvd();
        EpochLog entry;
        entry.epoch = epoch;
        entry.train = sum;
        if (has_val) entry.validation = evaluate_losses(model, val_batch);
        entry.ops_cumulative = ops_total;
        if (cfg.record_wall_time)
            entry.wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        result.log.push_back(entry);

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            std::ostringstream name;
            name << "checkpoint_epoch_" << std::setw(5) << std::setfill('0') << epoch << ".json";
            const auto path = std::filesystem::path(cfg.checkpoint_dir) / name.str();
            save_checkpoint(path.string(), model);
            last_checkpoint = path.string();
        }
        if (on_epoch) on_epoch(entry, model);
    }
    return result;
}

void write_epoch_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
    os << "epoch,r_t,f_tw,b_tw,c1,v_sigma,s_unitary,c_cross,total,val_total,ops_cumulative,wall_ms\n";
    os << std::setprecision(17);
    for (const auto& e : log) {
        const auto& t = e.train;
        os << e.epoch << ',' << t.r_t << ',' << t.f_tw << ',' << t.b_tw << ',' << t.c1 << ',' << t.v_sigma
           << ',' << t.s_unitary << ',' << t.c_cross << ',' << t.total << ',' << e.validation.total << ','
           << e.ops_cumulative << ',' << e.wall_ms << '\n';
    }
}

void write_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_epoch_log_csv(os, log);
}

std::vector<double> smoothed_totals(const std::vector<EpochLog>& log, std::size_t window) {
    if (window == 0) throw ContractError("smoothed_totals: window must be positive");
    std::vector<double> out(log.size());
    double running = 0.0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        running += log[i].train.total;
        if (i >= window) running -= log[i - window].train.total;
        out[i] = running / static_cast<double>(std::min(window, i + 1));
    }
    return out;
}

} // namespace kae
