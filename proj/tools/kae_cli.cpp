// kae: data generation, training, evaluation and diagnostics for Koopman
// autoencoders.
//
// Exit codes: 0 success, 2 usage, 3 numeric failure, 4 artifact mismatch.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kae/checkpoint.hpp"
#include "kae/config.hpp"
#include "kae/dynamics.hpp"
#include "kae/errors.hpp"
#include "kae/evaluation.hpp"
#include "kae/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitArtifact = 4;

struct UsageError : kae::Error {
    using kae::Error::Error;
};

kae::ExperimentConfig base_config(const std::string& path) {
    return path.empty() ? kae::ExperimentConfig{} : kae::load_config(path);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw kae::Error("cannot open " + path.string() + " for writing");
    return os;
}

int cmd_generate(const std::string& config, const std::string& out, std::optional<std::size_t> steps) {
    auto cfg = base_config(config);
    if (steps) {
        if (*steps < 2) throw UsageError("--steps must be at least 2");
        cfg.ode.n_steps = *steps;
    }
    const kae::Trajectory traj = kae::simulate(cfg.ode);
    auto os = open_out(out);
    kae::write_trajectory_csv(os, traj);

    const auto& s = traj.states;
    const double expected = std::sqrt(-cfg.ode.mu / cfg.ode.amp);
    double radius_dev = 0.0;
    for (Eigen::Index i = 0; i < s.cols(); ++i)
        radius_dev = std::max(radius_dev, std::abs(std::hypot(s(0, i), s(1, i)) - expected));
    std::cout << "steps=" << traj.size() << " dt=" << traj.dt << " radius_target=" << expected
              << " max_radius_deviation=" << radius_dev << " -> " << out << '\n';
    return 0;
}

int cmd_train(const std::string& config, const std::string& variant, const std::string& data, const std::string& out,
              std::optional<std::size_t> epochs, std::optional<std::uint64_t> seed) {
    auto cfg = base_config(config);
    if (!variant.empty()) cfg.train.variant = kae::parse_variant(variant);
    if (epochs) cfg.train.epochs = *epochs;
    if (seed) cfg.train.seed = *seed;
    cfg.train.checkpoint_dir = out;
    fs::create_directories(out);

    const kae::Trajectory traj = kae::read_trajectory_csv(data);
    const kae::WindowDataset ds = kae::make_windows(traj, cfg.train.wf, cfg.train.wb, cfg.normalize);

    if (cfg.train.epochs == 0) {
        const kae::TrainResult r = kae::train(cfg.train, ds);
        kae::save_checkpoint((fs::path(out) / "checkpoint_initial.json").string(), r.model);
        std::cout << "epochs=0: wrote initial checkpoint to " << (fs::path(out) / "checkpoint_initial.json") << '\n';
        return 0;
    }

    std::ofstream log_os = open_out(fs::path(out) / "epoch_log.csv");
    log_os << std::setprecision(17);
    bool header = false;
    auto stream_log = [&](const kae::EpochLog& e, const kae::KaeModel&) {
        std::ostringstream row;
        kae::write_epoch_log_csv(row, {e});
        std::string text = row.str();
        if (header) text = text.substr(text.find('\n') + 1);
        header = true;
        log_os << text << std::flush;
    };
    const kae::TrainResult r = kae::train(cfg.train, ds, stream_log);
    kae::save_checkpoint((fs::path(out) / "checkpoint_final.json").string(), r.model);
    const auto& last = r.log.back();
    std::cout << "variant=" << kae::variant_name(cfg.train.variant) << " epochs=" << r.log.size()
              << " total=" << last.train.total << " val_total=" << last.validation.total
              << " v_sigma=" << last.train.v_sigma << " ops_per_step=" << kae::count_ops(cfg.train) << '\n';
    return 0;
}

kae::KaeModel load_expecting(const std::string& checkpoint, const std::string& variant) {
    kae::KaeModel model = kae::load_checkpoint(checkpoint);
    if (!variant.empty()) {
        const kae::Variant want = kae::parse_variant(variant);
        if (want != model.variant())
            throw kae::ArtifactError("checkpoint holds a " + std::string(kae::variant_name(model.variant())) +
                                     " model, expected " + std::string(kae::variant_name(want)));
    }
    return model;
}

int cmd_eval(const std::string& checkpoint, const std::string& variant, const std::string& data,
             std::size_t horizon, std::optional<std::size_t> t0_opt, const std::string& out) {
    const kae::KaeModel model = load_expecting(checkpoint, variant);
    const kae::Trajectory traj = kae::read_trajectory_csv(data);
    if (traj.states.rows() != model.dims().n)
        throw kae::ArtifactError("data dimension does not match the checkpoint");
    const std::size_t length = model.train_length > 0 ? model.train_length : traj.size();
    const std::size_t t0 = t0_opt ? *t0_opt : kae::test_origin(length, model.wf(), model.wb());
    if (t0 + horizon >= traj.size())
        throw kae::ArtifactError("data has " + std::to_string(traj.size()) + " rows but t0=" + std::to_string(t0) +
                                 " with horizon " + std::to_string(horizon) + " needs " +
                                 std::to_string(t0 + horizon + 1) + " (generate a longer trajectory with --steps)");
    const kae::Matrix states = model.normalization.apply(traj.states);
    const kae::PredictionReport rep = kae::predict_horizon(model, states, t0, horizon);
    auto os = open_out(out);
    kae::write_prediction_csv(os, rep);
    std::cout << std::setprecision(10) << "avg_err=" << rep.average << " horizon=" << rep.errors.size()
              << " t0=" << t0 << (rep.diverged ? " diverged" : "") << " -> " << out << '\n';
    return rep.diverged ? kExitNumeric : 0;
}

int cmd_spectrum(const std::string& checkpoint, const std::string& variant, const std::string& out) {
    const kae::KaeModel model = load_expecting(checkpoint, variant);
    const kae::SpectrumReport rep = kae::spectrum(model);
    auto os = open_out(out);
    kae::write_spectrum_csv(os, rep);
    std::cout << std::setprecision(10) << "max_deviation=" << rep.max_deviation << " eigenvalues=" << rep.k.size()
              << " -> " << out << '\n';
    return 0;
}

int cmd_compare(const std::string& config, const std::string& data, const std::string& eval_data,
                const std::string& out, std::optional<std::size_t> epochs, std::optional<std::size_t> seeds,
                std::optional<std::size_t> horizon, std::optional<std::uint64_t> seed) {
    auto cfg = base_config(config);
    if (epochs) cfg.train.epochs = *epochs;
    if (seeds) cfg.seeds = *seeds;
    if (horizon) cfg.horizon = *horizon;
    if (seed) cfg.train.seed = *seed;
    if (cfg.seeds < 1 || cfg.horizon < 1) throw UsageError("--seeds and --horizon must be positive");

    const kae::Trajectory traj = kae::read_trajectory_csv(data);
    const kae::Trajectory eval_traj = eval_data.empty() ? traj : kae::read_trajectory_csv(eval_data);
    const kae::WindowDataset ds = kae::make_windows(traj, cfg.train.wf, cfg.train.wb, cfg.normalize);
    const std::size_t t0 = kae::test_origin(traj.size(), cfg.train.wf, cfg.train.wb);
    if (t0 + cfg.horizon >= eval_traj.size())
        throw kae::ArtifactError("evaluation data has " + std::to_string(eval_traj.size()) + " rows, need " +
                                 std::to_string(t0 + cfg.horizon + 1) + " (pass --eval-data)");
    const kae::Matrix eval_states = ds.normalization.apply(eval_traj.states);

    std::vector<kae::TrainConfig> configs;
    for (kae::Variant v : {kae::Variant::Usvd, kae::Variant::Isvd, kae::Variant::Vanilla, kae::Variant::Ckae}) {
        kae::TrainConfig t = cfg.train;
        t.variant = v;
        t.checkpoint_every = 0;
        configs.push_back(t);
    }
    std::vector<std::uint64_t> seed_list;
    for (std::size_t i = 0; i < cfg.seeds; ++i) seed_list.push_back(cfg.train.seed + i);

    kae::CompareOptions opts;
    opts.horizon = cfg.horizon;
    opts.threads = kae::worker_threads(1);
    const auto rows = kae::compare_variants(configs, ds, eval_states, t0, seed_list, opts);

    fs::create_directories(out);
    auto os = open_out(fs::path(out) / "comparison.csv");
    kae::write_comparison_csv(os, rows);
    bool all_ok = true;
    for (const auto& r : rows) {
        if (!r.ok) {
            all_ok = false;
            std::cerr << "run " << kae::variant_name(r.variant) << " seed " << r.seed << " failed: " << r.error << '\n';
        }
    }
    std::cout << std::setprecision(6);
    for (const auto& c : configs)
        std::cout << kae::variant_name(c.variant) << " median_avg_err=" << kae::median_error(rows, c.variant)
                  << " ops_per_step=" << kae::count_ops(c) << '\n';
    return all_ok ? 0 : kExitNumeric;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman autoencoders with SVD-parameterized operators"};
    app.require_subcommand(1);

    std::string config, out, data, eval_data, variant, checkpoint;
    std::optional<std::size_t> steps, epochs, horizon_opt, t0, seeds;
    std::optional<std::uint64_t> seed;
    std::size_t horizon = 1000;

    app.add_subcommand("print-config", "Print the default configuration");

    auto* gen = app.add_subcommand("generate-data", "Simulate the cylinder-wake model and write a trajectory CSV");
    gen->add_option("--config", config, "Experiment config file")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output CSV")->required();
    gen->add_option("--steps", steps, "Override n_steps");
    gen->add_option("--seed", seed, "Accepted for uniformity; the simulation is deterministic");

    auto* tr = app.add_subcommand("train", "Train one model variant");
    tr->add_option("--variant", variant, "vanilla|ckae|isvd|usvd");
    tr->add_option("--data", data, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", out, "Output directory")->required();
    tr->add_option("--config", config, "Experiment config file")->check(CLI::ExistingFile);
    tr->add_option("--epochs", epochs, "Override epochs");
    tr->add_option("--seed", seed, "Override seed");

    auto* ev = app.add_subcommand("eval", "Long-horizon prediction error of a checkpoint");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "Trajectory CSV with ground truth")->required()->check(CLI::ExistingFile);
    ev->add_option("--horizon", horizon, "Prediction steps P")->check(CLI::PositiveNumber);
    ev->add_option("--variant", variant, "Expected variant of the checkpoint");
    ev->add_option("--t0", t0, "Initial index (default: first test-window anchor)");
    ev->add_option("--out", out, "Prediction CSV")->default_val("prediction.csv");
    ev->add_option("--seed", seed, "Accepted for uniformity");

    auto* sp = app.add_subcommand("spectrum", "Eigenvalues of the Koopman matrix and its factors");
    sp->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    sp->add_option("--variant", variant, "Expected variant of the checkpoint");
    sp->add_option("--out", out, "Spectrum CSV")->default_val("spectrum.csv");

    auto* cmp = app.add_subcommand("compare", "Train all four variants over several seeds");
    cmp->add_option("--data", data, "Training trajectory CSV")->required()->check(CLI::ExistingFile);
    cmp->add_option("--eval-data", eval_data, "Longer trajectory for evaluation")->check(CLI::ExistingFile);
    cmp->add_option("--out", out, "Output directory")->required();
    cmp->add_option("--config", config, "Experiment config file")->check(CLI::ExistingFile);
    cmp->add_option("--epochs", epochs, "Override epochs");
    cmp->add_option("--seeds", seeds, "Number of seeds");
    cmp->add_option("--horizon", horizon_opt, "Prediction steps P");
    cmp->add_option("--seed", seed, "First seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (app.got_subcommand("print-config")) {
            std::cout << kae::format_config(kae::ExperimentConfig{});
            return 0;
        }
        if (gen->parsed()) return cmd_generate(config, out, steps);
        if (tr->parsed()) return cmd_train(config, variant, data, out, epochs, seed);
        if (ev->parsed()) return cmd_eval(checkpoint, variant, data, horizon, t0, out);
        if (sp->parsed()) return cmd_spectrum(checkpoint, variant, out);
        if (cmp->parsed()) return cmd_compare(config, data, eval_data, out, epochs, seeds, horizon_opt, seed);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const kae::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const kae::TrainingError& e) {
        std::cerr << "numeric failure in term " << e.term() << ": " << e.what();
        if (!e.last_checkpoint().empty()) std::cerr << " (last good checkpoint: " << e.last_checkpoint() << ")";
        std::cerr << '\n';
        return kExitNumeric;
    } catch (const kae::DivergenceError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const kae::NumericalError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const kae::ArtifactError& e) {
        std::cerr << "artifact mismatch: " << e.what() << '\n';
        return kExitArtifact;
    } catch (const kae::DimensionError& e) {
        std::cerr << "artifact mismatch: " << e.what() << '\n';
        return kExitArtifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitUsage;
}
