#pragma once

// Training data: the three-state mean-field model of the cylinder wake,
// integrated with classic RK4, and the sliding windows cut from it.

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kae {

using State = Eigen::Vector3d;

/// Mean-field Galerkin model
///   x1' = mu x1 - omega x2 + amp x1 x3
///   x2' = omega x1 + mu x2 + amp x2 x3
///   x3' = -lam (x3 - x1^2 - x2^2)
/// Its limit cycle has radius sqrt(-mu / amp).
struct OdeSpec {
    double mu = 0.1;
    double omega = 1.0;
    double amp = -0.1;
    double lam = 10.0;
    double dt = 0.1;
    std::size_t n_steps = 1500;
    State x0 = State(1.0, 0.0, 1.0);

    /// Right-hand side override; empty means the mean-field model above.
    std::function<State(const State&)> rhs;

    void validate() const;
    State derivative(const State& x) const;
};

struct Trajectory {
    /// One column per time step (3 x n_steps).
    Eigen::Matrix3Xd states;
    double dt = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
    double time(std::size_t i) const { return static_cast<double>(i) * dt; }
};

/// Fixed-step RK4 from spec.x0. Throws DivergenceError at the first non-finite state.
Trajectory simulate(const OdeSpec& spec);

/// Single RK4 step.
State rk4_step(const OdeSpec& spec, const State& x, double dt);

/// Per-dimension affine map used to normalize states: (x - shift) / scale.
struct Normalization {
    Eigen::VectorXd shift;
    Eigen::VectorXd scale;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& y) const;
    static Normalization identity(Eigen::Index dim);
};

/// Contiguous index ranges [begin, end) over windows.
struct Split {
    std::size_t train_begin = 0, train_end = 0;
    std::size_t val_begin = 0, val_end = 0;
    std::size_t test_begin = 0, test_end = 0;
};

/// Chronological 80/10/10 split of `n_windows`.
Split split_windows(std::size_t n_windows);

/// Sliding windows of length wb + 1 + wf. Window i covers states
/// [i, i + wb + wf]; its anchor (the state that is encoded) is i + wb.
struct WindowDataset {
    Eigen::MatrixXd states;   // normalized, dim x length
    Normalization normalization;
    std::size_t wf = 0;
    std::size_t wb = 0;
    Split split;

    std::size_t size() const;
    std::size_t anchor(std::size_t window) const { return window + wb; }
    Eigen::Index dim() const { return states.rows(); }
};

/// A dimension is treated as constant, and keeps scale 1, when its standard
/// deviation is below max(kConstantAbsolute, kConstantRelative * |mean|).
inline constexpr double kConstantAbsolute = 1e-8;
inline constexpr double kConstantRelative = 1e-3;

/// Builds the window dataset. With `normalize`, shift/scale are the mean and
/// population standard deviation of the states touched by training windows,
/// except that constant dimensions are only shifted.
WindowDataset make_windows(const Trajectory& traj, std::size_t wf, std::size_t wb, bool normalize);

/// State index at which long-horizon evaluation starts: the anchor of the
/// first test window of a trajectory with `length` steps.
std::size_t test_origin(std::size_t length, std::size_t wf, std::size_t wb);

// CSV with header `t,x1,x2,x3`, 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is);
Trajectory read_trajectory_csv(const std::string& path);

} // namespace kae
