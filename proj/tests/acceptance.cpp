// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
// any selected criterion fails.
//
//   kae_acceptance [--criteria 1,2,...] [--out DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "kae/checkpoint.hpp"
#include "kae/dynamics.hpp"
#include "kae/evaluation.hpp"
#include "kae/linalg.hpp"
#include "kae/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using kae::Variant;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

Outcome gradient_suite() {
    std::mt19937_64 rng(1);
    double worst = 0.0;
    std::string worst_name;
    int checked = 0;
    auto run = [&](const std::vector<gradcheck::Named>& cases) {
        for (const auto& c : cases) {
            for (int i = 0; i < 20; ++i) {
                const double e = c.run(rng);
                ++checked;
                if (!(e <= worst)) {
                    worst = e;
                    worst_name = c.name;
                }
            }
        }
    };
    run(gradcheck::operator_cases());
    run(gradcheck::loss_cases());
    return {worst <= 1.0, std::to_string(checked) + " instances, worst error/tolerance " + fmt(worst) + " (" +
                              worst_name + "), tolerance max(1e-4 relative, 1e-7 absolute)"};
}

Outcome linalg_suite() {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> size(1, 64);
    double svd_worst = 0.0, eig_worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = size(rng);
        const Eigen::MatrixXd a = oracle::gaussian(m, m, rng, 1.0 / std::sqrt(static_cast<double>(m)));
        const auto s = kae::linalg::svd(a);
        svd_worst = std::max({svd_worst, (s.reconstruct() - a).norm() / a.norm(),
                              kae::linalg::orthogonality_defect(s.u), kae::linalg::orthogonality_defect(s.v)});
        const auto spec = kae::linalg::eigenvalues(a);
        const double tr = a.trace(), det = oracle::determinant(a);
        eig_worst = std::max({eig_worst, std::abs(spec.sum() - tr) / std::max(1.0, std::abs(tr)),
                              std::abs(spec.product() - det) / std::abs(det)});
    }
    return {svd_worst < 1e-8 && eig_worst < 1e-6,
            "100 matrices M<=64: svd residual " + fmt(svd_worst) + " (<1e-8), eigenvalue trace/det " +
                fmt(eig_worst) + " (<1e-6)"};
}

Outcome dynamics_suite() {
    const Eigen::Vector3d x0(0.5, 0.2, 0.1);
    auto end_state = [&](double dt, double horizon) {
        kae::OdeSpec spec;
        spec.x0 = x0;
        spec.dt = dt;
        spec.n_steps = static_cast<std::size_t>(std::llround(horizon / dt)) + 1;
        const auto t = kae::simulate(spec);
        return Eigen::Vector3d(t.states.col(t.states.cols() - 1));
    };
    const Eigen::Vector3d ref = end_state(0.1 / 64, 5.0);
    const double ratio = (end_state(0.1, 5.0) - ref).norm() / (end_state(0.05, 5.0) - ref).norm();

    const auto traj = kae::simulate(kae::OdeSpec{});
    double dev = 0.0;
    for (Eigen::Index i = 0; i < traj.states.cols(); ++i)
        dev = std::max(dev, std::abs(std::hypot(traj.states(0, i), traj.states(1, i)) - 1.0));
    return {ratio >= 12 && ratio <= 20 && dev < 1e-3 && traj.size() == 1500,
            "RK4 dt-halving ratio " + fmt(ratio) + " (in [12,20]), max |r-1| over " + std::to_string(traj.size()) +
                " steps " + fmt(dev) + " (<1e-3)"};
}

Outcome op_counts() {
    const kae::TrainConfig cfg;
    auto ops = [&](Variant v) { return kae::count_ops(v, cfg.dims, cfg.batch_size, cfg.wf, cfg.wb); };
    const auto van = ops(Variant::Vanilla), ck = ops(Variant::Ckae), us = ops(Variant::Usvd), is = ops(Variant::Isvd);
    const double saving = 1.0 - static_cast<double>(us) / static_cast<double>(is);
    return {is > us && us > ck && ck > van && saving >= 0.35 && saving <= 0.65,
            "per-step ops isvd " + std::to_string(is) + " > usvd " + std::to_string(us) + " > ckae " +
                std::to_string(ck) + " > vanilla " + std::to_string(van) + "; usvd saving " +
                fmt(100 * saving) + "% (in [35,65])"};
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome determinism(const fs::path& out) {
    const auto traj = kae::simulate(kae::OdeSpec{});
    const auto ds = kae::make_windows(traj, 20, 20, true);
    kae::OdeSpec long_spec;
    long_spec.n_steps = 2400;
    const auto eval_states = ds.normalization.apply(kae::simulate(long_spec).states);
    const std::size_t t0 = kae::test_origin(traj.size(), 20, 20);
    bool same = true;
    int files = 0;
    for (Variant v : {Variant::Vanilla, Variant::Ckae, Variant::Isvd, Variant::Usvd}) {
        kae::TrainConfig cfg;
        cfg.variant = v;
        cfg.epochs = 5;
        cfg.seed = 11;
        for (int round = 0; round < 2; ++round) {
            const fs::path dir = out / "determinism" / (std::string(kae::variant_name(v)) + std::to_string(round));
            fs::create_directories(dir);
            cfg.checkpoint_every = 5;
            cfg.checkpoint_dir = dir.string();
            const auto r = kae::train(cfg, ds);
            kae::write_epoch_log_csv((dir / "epoch_log.csv").string(), r.log);
            std::ofstream pred(dir / "prediction.csv", std::ios::binary);
            kae::write_prediction_csv(pred, kae::predict_horizon(r.model, eval_states, t0, 1000));
        }
        for (const char* f : {"checkpoint_epoch_00005.json", "epoch_log.csv", "prediction.csv"}) {
            const fs::path a = out / "determinism" / (std::string(kae::variant_name(v)) + "0") / f;
            const fs::path b = out / "determinism" / (std::string(kae::variant_name(v)) + "1") / f;
            const std::string ba = file_bytes(a);
            same = same && !ba.empty() && ba == file_bytes(b);
            ++files;
        }
    }
    return {same, std::to_string(files) + " file pairs (checkpoint, epoch log, prediction CSV) for 4 variants " +
                      (same ? "bitwise identical" : "DIFFER")};
}

/// Criteria 4, 5, 7 and 8 share one set of 1000-epoch runs.
struct Experiment {
    std::vector<kae::ComparisonRow> rows;
    double seconds = 0.0;
};

Experiment run_experiment(const fs::path& out) {
    const auto traj = kae::simulate(kae::OdeSpec{});
    const auto ds = kae::make_windows(traj, 20, 20, true);
    const std::size_t t0 = kae::test_origin(traj.size(), 20, 20);
    kae::OdeSpec long_spec;
    long_spec.n_steps = t0 + 1000 + 1;
    const auto eval_states = ds.normalization.apply(kae::simulate(long_spec).states);

    std::vector<kae::TrainConfig> configs;
    for (Variant v : {Variant::Usvd, Variant::Isvd, Variant::Vanilla, Variant::Ckae}) {
        kae::TrainConfig c;
        c.variant = v;
        configs.push_back(c);
    }
    kae::CompareOptions opts;
    opts.horizon = 1000;
    opts.budgets = {200};
    opts.keep_runs = true;
    opts.threads = kae::worker_threads(1);
    const auto start = std::chrono::steady_clock::now();
    Experiment e;
    e.rows = kae::compare_variants(configs, ds, eval_states, t0, {0, 1, 2}, opts);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    fs::create_directories(out);
    std::ofstream csv(out / "comparison.csv");
    kae::write_comparison_csv(csv, e.rows);
    std::ofstream budget(out / "comparison_200.csv");
    budget << "variant,seed,avg_err_1000_at_200\n";
    for (const auto& r : e.rows) {
        budget << kae::variant_name(r.variant) << ',' << r.seed;
        for (const auto& [ep, err] : r.budget_errors) budget << ',' << err;
        budget << '\n';
        if (r.run) {
            const std::string stem = std::string(kae::variant_name(r.variant)) + "_seed" + std::to_string(r.seed);
            kae::write_epoch_log_csv((out / (stem + "_epoch_log.csv")).string(), r.run->log);
            kae::save_checkpoint((out / (stem + ".json")).string(), r.run->model);
        }
    }
    return e;
}

const kae::ComparisonRow* find_row(const Experiment& e, Variant v, std::uint64_t seed) {
    for (const auto& r : e.rows)
        if (r.variant == v && r.seed == seed) return &r;
    return nullptr;
}

Outcome eigenvalue_control(const Experiment& e) {
    const auto* row = find_row(e, Variant::Usvd, 0);
    if (!row || !row->ok || !row->run) return {false, "usvd seed 0 run failed: " + (row ? row->error : "missing")};
    kae::KaeModel model = row->run->model;
    const auto spec = kae::spectrum(model);
    kae::ad::Graph g;
    const kae::BoundModel b(g, model);
    const double sc = (kae::unitarity_loss(b.var("op.Uf"), b.var("op.Vf")) +
                       kae::unitarity_loss(b.var("op.Ub"), b.var("op.Vb")) +
                       kae::cross_consistency(b.var("op.Uf"), b.var("op.Ub"), b.var("op.Vf"), b.var("op.Vb")))
                          .scalar();
    return {spec.max_deviation < 0.1 && sc < 1e-2,
            "usvd seed 0 after 1000 epochs: max||lambda|-1| " + fmt(spec.max_deviation) +
                " (<0.1), s_unitary+c_cross " + fmt(sc) + " (<1e-2)"};
}

Outcome ordering(const Experiment& e) {
    const double us = kae::median_error(e.rows, Variant::Usvd);
    const double is = kae::median_error(e.rows, Variant::Isvd);
    const double van = kae::median_error(e.rows, Variant::Vanilla);
    const double ck = kae::median_error(e.rows, Variant::Ckae);
    const bool pass = us < van && us < ck && us <= 2 * is;
    return {pass, "median avg error (1000 steps): usvd " + fmt(us) + ", isvd " + fmt(is) + ", vanilla " + fmt(van) +
                      ", ckae " + fmt(ck) + "; need usvd < vanilla, usvd < ckae, usvd <= 2*isvd; runs took " +
                      fmt(e.seconds) + " s"};
}

Outcome budgeted(const Experiment& e) {
    const double us = kae::median_budget_error(e.rows, Variant::Usvd, 200);
    const double is = kae::median_budget_error(e.rows, Variant::Isvd, 200);
    return {us <= is, "median avg error at 200 epochs: usvd " + fmt(us) + " <= isvd " + fmt(is)};
}

Outcome convergence(const Experiment& e) {
    const auto* row = find_row(e, Variant::Usvd, 0);
    if (!row || !row->run || row->run->log.size() < 500) return {false, "usvd seed 0 run missing"};
    const auto smooth = kae::smoothed_totals(row->run->log, 25);
    const double first = row->run->log.front().train.total;
    const double at500 = smooth[499];
    return {at500 <= 0.1 * first, "usvd seed 0: smoothed total (25-epoch window) at epoch 500 " + fmt(at500) +
                                      " vs epoch 1 " + fmt(first) + " (ratio " + fmt(at500 / first) + ", <=0.1)"};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string selection = "1,2,3,4,5,6,7,8,9";
    std::string out = "acceptance_out";
    app.add_option("--criteria", selection, "Comma-separated criteria to run");
    app.add_option("--out", out, "Directory for run artifacts");
    CLI11_PARSE(app, argc, argv);

    std::set<int> chosen;
    std::stringstream ss(selection);
    for (std::string tok; std::getline(ss, tok, ',');) chosen.insert(std::stoi(tok));

    const fs::path dir(out);
    fs::create_directories(dir);
    bool all = true;
    auto report = [&](int id, const char* title, const Outcome& o) {
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << title << "): " << o.detail
                  << std::endl;
    };
    auto guarded = [](auto&& fn) -> Outcome {
        try {
            return fn();
        } catch (const std::exception& ex) {
            return {false, std::string("exception: ") + ex.what()};
        }
    };

    if (chosen.count(1)) report(1, "gradient suite", guarded(gradient_suite));
    if (chosen.count(2)) report(2, "linear algebra", guarded(linalg_suite));
    if (chosen.count(3)) report(3, "dynamics", guarded(dynamics_suite));
    if (chosen.count(6)) report(6, "compute cost", guarded(op_counts));
    if (chosen.count(9)) report(9, "determinism", guarded([&] { return determinism(dir); }));

    if (chosen.count(4) || chosen.count(5) || chosen.count(7) || chosen.count(8)) {
        Experiment e;
        std::string failure;
        try {
            e = run_experiment(dir);
        } catch (const std::exception& ex) {
            failure = ex.what();
        }
        auto from = [&](auto fn) -> Outcome {
            if (!failure.empty()) return {false, "experiment failed: " + failure};
            return fn(e);
        };
        if (chosen.count(4)) report(4, "eigenvalue control", from(eigenvalue_control));
        if (chosen.count(5)) report(5, "prediction ordering", from(ordering));
        if (chosen.count(7)) report(7, "200-epoch budget", from(budgeted));
        if (chosen.count(8)) report(8, "convergence", from(convergence));
    }
    return all ? 0 : 1;
}
