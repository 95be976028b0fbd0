#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/core/error.hpp"

namespace vidact::dmp {

using Point = std::vector<double>;

/// Time-sampled trajectory; every row has the same width.
struct Trajectory {
    std::vector<double> t;
    std::vector<Point> y, yd, ydd;

    std::size_t size() const { return t.size(); }
    std::size_t dims() const { return y.empty() ? 0 : y.front().size(); }
};

struct Gains {
    double alpha_z = 25.0;
    double beta_z = 25.0 / 4.0;  // critical damping
    double alpha_x = 1.0;
};

/// Discrete movement primitive: a critically damped spring towards the goal
/// plus a learned forcing term on Gaussian bases of a decaying phase.
///
///   tau z' = alpha_z (beta_z (g - y) - z) + f(x)
///   tau y' = z
///   tau x' = -alpha_x x
///   f(x)   = s x sum_i psi_i(x) w_i / sum_i psi_i(x),  psi_i = exp(-h_i (x - c_i)^2)
///
/// s rescales the forcing by the ratio of the new to the demonstrated
/// amplitude (g - y0) per dimension; a dimension demonstrated with no net
/// motion keeps s = 1.
struct DmpPrimitive {
    std::string name;
    Gains gains;
    double tau = 1.0;  // seconds
    std::vector<double> centers, widths;
    std::vector<std::vector<double>> weights;  // [dim][basis]
    Point y0, goal;                            // demonstrated endpoints

    std::size_t dims() const { return weights.size(); }

    void validate() const {
        require(gains.alpha_z > 0.0 && gains.beta_z > 0.0 && gains.alpha_x > 0.0, ErrorKind::Config,
                "dmp '" + name + "': gains must be positive");
        require(tau > 0.0, ErrorKind::Config, "dmp '" + name + "': tau must be positive");
        require(centers.size() == widths.size() && !centers.empty(), ErrorKind::Config,
                "dmp '" + name + "': basis centers and widths disagree");
        require(y0.size() == dims() && goal.size() == dims(), ErrorKind::Config,
                "dmp '" + name + "': endpoint width differs from weight rows");
        for (const auto& row : weights) {
            require(row.size() == centers.size(), ErrorKind::Config, "dmp '" + name + "': weight row size mismatch");
            for (double w : row) require(std::isfinite(w), ErrorKind::Numeric, "dmp '" + name + "': non-finite weight");
        }
    }

    /// Normalized basis activations times the phase.
    std::vector<double> features(double x) const {
        std::vector<double> psi(centers.size());
        double total = 0.0;
        for (std::size_t i = 0; i < centers.size(); ++i) {
            psi[i] = std::exp(-widths[i] * (x - centers[i]) * (x - centers[i]));
            total += psi[i];
        }
        for (double& p : psi) p = total > 1e-300 ? p * x / total : 0.0;
        // far beyond the last center every activation underflows; the last basis dominates there
        if (total <= 1e-300) psi.back() = x;
        return psi;
    }

    double amplitude_scale(std::size_t d, double start, double target) const {
        const double demo = goal[d] - y0[d];
        return std::abs(demo) < 1e-9 ? 1.0 : (target - start) / demo;
    }
};

inline void to_json(nlohmann::json& j, const Gains& g) {
    j = {{"alpha_z", g.alpha_z}, {"beta_z", g.beta_z}, {"alpha_x", g.alpha_x}};
}
inline void from_json(const nlohmann::json& j, Gains& g) {
    g.alpha_z = j.at("alpha_z").get<double>();
    g.beta_z = j.at("beta_z").get<double>();
    g.alpha_x = j.value("alpha_x", 1.0);
}

inline void to_json(nlohmann::json& j, const DmpPrimitive& p) {
    j = {{"name", p.name},       {"gains", p.gains},     {"tau", p.tau}, {"centers", p.centers},
         {"widths", p.widths}, {"weights", p.weights}, {"y0", p.y0},   {"goal", p.goal}};
}
inline void from_json(const nlohmann::json& j, DmpPrimitive& p) {
    p.name = j.at("name").get<std::string>();
    p.gains = j.at("gains").get<Gains>();
    p.tau = j.at("tau").get<double>();
    p.centers = j.at("centers").get<std::vector<double>>();
    p.widths = j.at("widths").get<std::vector<double>>();
    p.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    p.y0 = j.at("y0").get<Point>();
    p.goal = j.at("goal").get<Point>();
    p.validate();
}

/// Centers equally spaced in time over the demo, widths from neighbour spacing.
inline void place_bases(DmpPrimitive& p, std::size_t n_basis) {
    require(n_basis >= 2, ErrorKind::Config, "dmp: need at least 2 basis functions");
    p.centers.resize(n_basis);
    p.widths.resize(n_basis);
    for (std::size_t i = 0; i < n_basis; ++i)
        p.centers[i] = std::exp(-p.gains.alpha_x * static_cast<double>(i) / static_cast<double>(n_basis - 1));
    for (std::size_t i = 0; i + 1 < n_basis; ++i) {
        const double gap = p.centers[i + 1] - p.centers[i];
        p.widths[i] = 1.0 / (gap * gap);
    }
    p.widths.back() = p.widths[n_basis - 2];
}

/// Locally weighted regression of the forcing term that reproduces `demo`.
inline DmpPrimitive fit_dmp(const Trajectory& demo, const Gains& gains = {}, std::size_t n_basis = 20,
                            std::string name = "primitive") {
    const std::size_t n = demo.size();
    require(n >= 3, ErrorKind::Data, "dmp fit: need at least 3 samples, got " + std::to_string(n));
    require(demo.y.size() == n && demo.yd.size() == n && demo.ydd.size() == n, ErrorKind::Data,
            "dmp fit: sample arrays differ in length");
    for (std::size_t k = 1; k < n; ++k)
        require(demo.t[k] > demo.t[k - 1], ErrorKind::Data, "dmp fit: timestamps must increase strictly");
    const double duration = demo.t.back() - demo.t.front();
    require(duration > 0.0, ErrorKind::Data, "dmp fit: zero-duration demonstration");
    const std::size_t dims = demo.dims();
    require(dims > 0, ErrorKind::Data, "dmp fit: empty samples");

    DmpPrimitive p;
    p.name = std::move(name);
    p.gains = gains;
    p.tau = duration;
    p.y0 = demo.y.front();
    p.goal = demo.y.back();
    place_bases(p, n_basis);
    p.weights.assign(dims, std::vector<double>(n_basis, 0.0));

    const double a = gains.alpha_z, b = gains.beta_z, tau = p.tau;
    for (std::size_t d = 0; d < dims; ++d) {
        const double scale = p.amplitude_scale(d, p.y0[d], p.goal[d]);  // 1 on the demo itself
        std::vector<double> num(n_basis, 0.0), den(n_basis, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double x = std::exp(-gains.alpha_x * (demo.t[k] - demo.t.front()) / tau);
            const double target = tau * tau * demo.ydd[k][d] -
                                  a * (b * (p.goal[d] - demo.y[k][d]) - tau * demo.yd[k][d]);
            for (std::size_t i = 0; i < n_basis; ++i) {
                const double psi = std::exp(-p.widths[i] * (x - p.centers[i]) * (x - p.centers[i]));
                const double s = x * scale;
                num[i] += psi * s * target;
                den[i] += psi * s * s;
            }
        }
        for (std::size_t i = 0; i < n_basis; ++i) p.weights[d][i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
    }
    p.validate();
    return p;
}

/// Integrates the primitive from `start` towards `target` with classical RK4.
/// Samples are taken every `dt` up to and including `duration`.
inline Trajectory rollout(const DmpPrimitive& p, const Point& start, const Point& target, double dt, double duration) {
    p.validate();
    require(dt > 0.0, ErrorKind::Config, "rollout: dt must be positive");
    require(duration >= p.tau - 1e-12, ErrorKind::Config, "rollout: duration shorter than the primitive's tau");
    const std::size_t dims = p.dims();
    require(start.size() == dims && target.size() == dims, ErrorKind::Dimension, "rollout: endpoint width mismatch");

    std::vector<double> scale(dims);
    double reach = 1.0;
    for (std::size_t d = 0; d < dims; ++d) {
        scale[d] = p.amplitude_scale(d, start[d], target[d]);
        reach = std::max({reach, std::abs(start[d]), std::abs(target[d])});
    }
    const double a = p.gains.alpha_z, b = p.gains.beta_z, ax = p.gains.alpha_x, tau = p.tau;

    // state layout: [y_0..y_{D-1}, z_0..z_{D-1}, x]
    auto deriv = [&](const std::vector<double>& s) {
        std::vector<double> ds(s.size());
        const double x = s[2 * dims];
        const auto phi = p.features(x);
        for (std::size_t d = 0; d < dims; ++d) {
            double f = 0.0;
            for (std::size_t i = 0; i < phi.size(); ++i) f += phi[i] * p.weights[d][i];
            f *= scale[d];
            ds[d] = s[dims + d] / tau;
            ds[dims + d] = (a * (b * (target[d] - s[d]) - s[dims + d]) + f) / tau;
        }
        ds[2 * dims] = -ax * x / tau;
        return ds;
    };
    auto axpy = [](const std::vector<double>& s, const std::vector<double>& k, double h) {
        std::vector<double> out(s);
        for (std::size_t i = 0; i < s.size(); ++i) out[i] += h * k[i];
        return out;
    };

    std::vector<double> state(2 * dims + 1, 0.0);
    for (std::size_t d = 0; d < dims; ++d) state[d] = start[d];
    state[2 * dims] = 1.0;

    Trajectory traj;
    auto record = [&](double t, const std::vector<double>& s) {
        const auto ds = deriv(s);
        Point y(dims), yd(dims), ydd(dims);
        for (std::size_t d = 0; d < dims; ++d) {
            y[d] = s[d];
            yd[d] = ds[d];
            ydd[d] = ds[dims + d] / tau;
        }
        traj.t.push_back(t);
        traj.y.push_back(std::move(y));
        traj.yd.push_back(std::move(yd));
        traj.ydd.push_back(std::move(ydd));
    };

    const auto steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
    record(0.0, state);
    for (std::size_t k = 1; k <= steps; ++k) {
        const double h = std::min(dt, duration - static_cast<double>(k - 1) * dt);
        const auto k1 = deriv(state);
        const auto k2 = deriv(axpy(state, k1, h / 2));
        const auto k3 = deriv(axpy(state, k2, h / 2));
        const auto k4 = deriv(axpy(state, k3, h));
        for (std::size_t i = 0; i < state.size(); ++i) state[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        for (std::size_t d = 0; d < dims; ++d)
            require(std::isfinite(state[d]) && std::abs(state[d]) < 1e6 * reach, ErrorKind::Numeric,
                    "rollout of '" + p.name + "' diverged at t=" + std::to_string(static_cast<double>(k) * dt) +
                        "; check gains and time step");
        record(std::min(duration, static_cast<double>(k) * dt), state);
    }
    return traj;
}

/// Minimum-jerk point-to-point motion with an optional sinusoidal bump added
/// to each dimension (peak `bump[d]` at mid-course), sampled every `dt`.
inline Trajectory minimum_jerk(const Point& from, const Point& to, double duration, double dt,
                               const Point& bump = {}) {
    require(from.size() == to.size() && (bump.empty() || bump.size() == from.size()), ErrorKind::Dimension,
            "minimum_jerk: endpoint widths differ");
    require(duration > 0.0 && dt > 0.0, ErrorKind::Config, "minimum_jerk: duration and dt must be positive");
    constexpr double pi = 3.14159265358979323846;
    Trajectory traj;
    const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = duration * static_cast<double>(k) / static_cast<double>(steps), s = t / duration;
        const double pos = 10 * std::pow(s, 3) - 15 * std::pow(s, 4) + 6 * std::pow(s, 5);
        const double vel = (30 * s * s - 60 * std::pow(s, 3) + 30 * std::pow(s, 4)) / duration;
        const double acc = (60 * s - 180 * s * s + 120 * std::pow(s, 3)) / (duration * duration);
        Point y(from.size()), yd(from.size()), ydd(from.size());
        for (std::size_t d = 0; d < from.size(); ++d) {
            const double h = bump.empty() ? 0.0 : bump[d];
            const double w = pi / duration;
            y[d] = from[d] + (to[d] - from[d]) * pos + h * std::pow(std::sin(pi * s), 2);
            yd[d] = (to[d] - from[d]) * vel + h * w * std::sin(2 * pi * s);
            ydd[d] = (to[d] - from[d]) * acc + h * 2 * w * w * std::cos(2 * pi * s);
        }
        traj.t.push_back(t);
        traj.y.push_back(std::move(y));
        traj.yd.push_back(std::move(yd));
        traj.ydd.push_back(std::move(ydd));
    }
    return traj;
}

/// Root-mean-square distance between equally sampled trajectories.
inline double rmse(const Trajectory& a, const Trajectory& b) {
    require(a.size() == b.size() && a.dims() == b.dims(), ErrorKind::Dimension, "rmse: trajectories differ in shape");
    double total = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t d = 0; d < a.dims(); ++d) total += (a.y[k][d] - b.y[k][d]) * (a.y[k][d] - b.y[k][d]);
    return std::sqrt(total / static_cast<double>(a.size() * a.dims()));
}

/// Writes t, y0.., yd0.. columns.
inline void write_csv(const Trajectory& traj, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::MissingFile, "cannot write " + path.string());
    out << "t";
    for (std::size_t d = 0; d < traj.dims(); ++d) out << ",y" << d;
    for (std::size_t d = 0; d < traj.dims(); ++d) out << ",yd" << d;
    out << '\n';
    out.precision(17);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << traj.t[k];
        for (double v : traj.y[k]) out << ',' << v;
        for (double v : traj.yd[k]) out << ',' << v;
        out << '\n';
    }
}

}  // namespace vidact::dmp
