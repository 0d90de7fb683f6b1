#include "kae/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kae/errors.hpp"

namespace kae {

void OdeSpec::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("OdeSpec: dt must be positive");
    if (n_steps < 2) throw ContractError("OdeSpec: n_steps must be at least 2");
    if (!x0.allFinite()) throw DomainError("OdeSpec: x0 must be finite");
}

State OdeSpec::derivative(const State& x) const {
    if (rhs) return rhs(x);
    return State(mu * x(0) - omega * x(1) + amp * x(0) * x(2),
                 omega * x(0) + mu * x(1) + amp * x(1) * x(2),
                 -lam * (x(2) - x(0) * x(0) - x(1) * x(1)));
}

State rk4_step(const OdeSpec& spec, const State& x, double dt) {
    const State k1 = spec.derivative(x);
    const State k2 = spec.derivative(x + 0.5 * dt * k1);
    const State k3 = spec.derivative(x + 0.5 * dt * k2);
    const State k4 = spec.derivative(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory simulate(const OdeSpec& spec) {
    spec.validate();
    Trajectory traj;
    traj.dt = spec.dt;
    traj.states.resize(3, static_cast<Eigen::Index>(spec.n_steps));
    State x = spec.x0;
    traj.states.col(0) = x;
    for (std::size_t i = 1; i < spec.n_steps; ++i) {
        x = rk4_step(spec, x, spec.dt);
        if (!x.allFinite()) throw DivergenceError("simulate: non-finite state", i);
        traj.states.col(static_cast<Eigen::Index>(i)) = x;
    }
    return traj;
}

Eigen::MatrixXd Normalization::apply(const Eigen::MatrixXd& x) const {
    return (x.colwise() - shift).array().colwise() / scale.array();
}

Eigen::MatrixXd Normalization::invert(const Eigen::MatrixXd& y) const {
    return (y.array().colwise() * scale.array()).matrix().colwise() + shift;
}

Normalization Normalization::identity(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Split split_windows(std::size_t n) {
    Split s;
    const std::size_t n_train = (n * 8) / 10;
    const std::size_t n_val = n / 10;
    s.train_begin = 0;
    s.train_end = n_train;
    s.val_begin = n_train;
    s.val_end = n_train + n_val;
    s.test_begin = s.val_end;
    s.test_end = n;
    return s;
}

std::size_t WindowDataset::size() const {
    return static_cast<std::size_t>(states.cols()) - wf - wb;
}

WindowDataset make_windows(const Trajectory& traj, std::size_t wf, std::size_t wb, bool normalize) {
    const std::size_t length = traj.size();
    if (length < wf + wb + 1)
        throw ContractError("make_windows: trajectory of length " + std::to_string(length) +
                            " is too short for wf=" + std::to_string(wf) + ", wb=" + std::to_string(wb));
    WindowDataset ds;
    ds.wf = wf;
    ds.wb = wb;
    ds.split = split_windows(length - wf - wb);

    const Eigen::Index dim = traj.states.rows();
    ds.normalization = Normalization::identity(dim);
    if (normalize) {
        // States touched by the training windows only.
        const std::size_t n_train = std::max<std::size_t>(ds.split.train_end, 1);
        const Eigen::Index touched = static_cast<Eigen::Index>(n_train - 1 + wf + wb + 1);
        const Eigen::MatrixXd train = traj.states.leftCols(touched);
        const Eigen::VectorXd mean = train.rowwise().mean();
        const Eigen::VectorXd var =
            (train.colwise() - mean).array().square().rowwise().mean().matrix();
        ds.normalization.shift = mean;
        for (Eigen::Index d = 0; d < dim; ++d) {
            const double sd = std::sqrt(var(d));
            const bool constant = sd < std::max(kConstantAbsolute, kConstantRelative * std::abs(mean(d)));
            ds.normalization.scale(d) = constant ? 1.0 : sd;
        }
    }
    ds.states = ds.normalization.apply(traj.states);
    return ds;
}

std::size_t test_origin(std::size_t length, std::size_t wf, std::size_t wb) {
    if (length < wf + wb + 1) throw ContractError("test_origin: trajectory too short");
    return split_windows(length - wf - wb).test_begin + wb;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,x1,x2,x3\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto c = traj.states.col(static_cast<Eigen::Index>(i));
        os << traj.time(i) << ',' << c(0) << ',' << c(1) << ',' << c(2) << '\n';
    }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_trajectory_csv(os, traj);
}

Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ArtifactError("trajectory CSV: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,x1,x2,x3") throw ArtifactError("trajectory CSV: expected header t,x1,x2,x3");

    std::vector<std::array<double, 4>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::array<double, 4> row{};
        std::istringstream ls(line);
        std::string cell;
        for (std::size_t k = 0; k < 4; ++k) {
            if (!std::getline(ls, cell, ','))
                throw ArtifactError("trajectory CSV: line " + std::to_string(lineno) + " has fewer than 4 fields");
            try {
                std::size_t used = 0;
                row[k] = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw ArtifactError("trajectory CSV: bad number on line " + std::to_string(lineno));
            }
            if (!std::isfinite(row[k]))
                throw DomainError("trajectory CSV: non-finite value on line " + std::to_string(lineno));
        }
        if (!rows.empty() && !(row[0] > rows.back()[0]))
            throw ArtifactError("trajectory CSV: time column must increase (line " + std::to_string(lineno) + ")");
        rows.push_back(row);
    }
    if (rows.size() < 2) throw ArtifactError("trajectory CSV: need at least 2 rows");

    Trajectory traj;
    traj.dt = rows[1][0] - rows[0][0];
    traj.states.resize(3, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        traj.states.col(static_cast<Eigen::Index>(i)) = State(rows[i][1], rows[i][2], rows[i][3]);
    return traj;
}

Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ArtifactError("cannot open " + path);
    return read_trajectory_csv(is);
}

} // namespace kae
