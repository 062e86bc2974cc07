// Run configuration: one JSON document per run, parsed strictly.
#pragma once

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

#include "se3ham/control.hpp"
#include "se3ham/envs.hpp"
#include "se3ham/training.hpp"

namespace se3ham {

struct PathsConfig {
    std::string dataset;
    std::string checkpoint;
    std::string output_dir;
};

struct ModelConfig {
    NetWidths widths;
    double epsilon = 0.01;
    /// Normalize each control channel by its dataset magnitude.
    bool normalize_controls = true;
};

struct TrajectoryConfig {
    std::string type = "circle"; // circle | hover
    Vec3 center{0.0, 0.0, 1.0};
    double radius = 1.0;
    double period = 8.0;
    double psi = 0.0;
};

struct ControlConfig {
    ControlGains gains;
    ClosedLoopOptions loop;
    /// Pendulum: start and target angle about z.
    double phi0 = 0.1;
    double phi_dot0 = 0.0;
    double phi_target = M_PI;
    /// Rigid body: start pose as position and rotation vector, and the target.
    Vec3 p0 = Vec3::Zero();
    Vec3 rotvec0{1.0, -0.7, 0.5};
    Vec3 p_target{1.0, 2.0, 5.0};
    Vec3 rotvec_target = Vec3::Zero();
    /// Quadrotor trajectory; the run starts on it, level, at its initial velocity.
    TrajectoryConfig trajectory;
    /// RMS position error is reported over t >= rms_from.
    double rms_from = 8.0;
};

struct EvalConfig {
    double horizon = 5.0;
    double dt = 1e-3;
    int sweep_points = 64;
    int held_out_states = 200;
    int structure_states = 50;
};

struct RunConfig {
    SystemId system = SystemId::Pendulum;
    std::uint64_t seed = 0;
    PathsConfig paths;
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    ControlConfig control;
    EvalConfig eval;
};

/// Gains equivalent to the reference ones on the true masses, in M-relative form.
ControlGains default_gains(SystemId system, const DatasetConfig &d);

/// Defaults that depend on the system: dataset size, control gains and horizons.
RunConfig default_config(SystemId system);

/// Throws Config naming the offending key on missing required keys ("system",
/// "seed"), unknown keys and ill-typed values.
RunConfig parse_config(const nlohmann::json &j);
RunConfig load_config(const std::string &path);

} // namespace se3ham
