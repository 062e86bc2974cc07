#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "se3ham/envs.hpp"
#include "se3ham/errors.hpp"
#include "se3ham/odeint.hpp"

namespace se3ham::cli {

using nlohmann::json;

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char *env = std::getenv("SE3HAM_THREADS")) {
        char *end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
        throw Error(ErrorCode::Config, "SE3HAM_THREADS must be a positive integer");
    }
    return 1;
}

HamiltonianModel new_learned_model(const RunConfig &cfg, const Dataset &ds) {
    HamiltonianModel m = make_learned_model(system_kind(cfg.system), control_dim(cfg.system), cfg.model.widths,
                                            cfg.seed + 1, cfg.model.epsilon);
    if (cfg.model.normalize_controls) set_control_scale(m, control_scale(ds));
    return m;
}

TrainOutcome train_model(const RunConfig &cfg, const Dataset &ds, const std::optional<Checkpoint> &resume,
                         int threads) {
    if (ds.system != cfg.system) throw Error(ErrorCode::Config, "dataset was generated for " + system_name(ds.system));
    TrainConfig tc = cfg.train;
    tc.threads = threads;
    HamiltonianModel model;
    if (resume) {
        if (resume->system != cfg.system)
            throw Error(ErrorCode::Config, "checkpoint was trained on " + system_name(resume->system));
        model = resume->model;
        tc.start_iteration = resume->iterations;
        tc.resume_adam = resume->adam;
        tc.pretrain_mass = false;
    } else {
        model = new_learned_model(cfg, ds);
    }
    TrainOutcome out;
    out.result = train(std::move(model), ds, tc);
    out.checkpoint.model = out.result.model;
    out.checkpoint.system = cfg.system;
    out.checkpoint.seed = cfg.seed;
    out.checkpoint.iterations = out.result.iterations_done;
    if (out.result.adam.m.size() == out.result.model.param_count()) out.checkpoint.adam = out.result.adam;
    return out;
}

namespace {

Mat3 rotation_rows(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    return rows_to_matrix<double>(model.kind == SystemKind::SE3 ? Vector9<double>(q.segment<9>(3))
                                                                : Vector9<double>(q.head<9>()));
}

std::vector<std::string> function_columns(const HamiltonianModel &model, const char *first) {
    std::vector<std::string> h{first};
    auto block = [&](const char *name) {
        for (int i = 1; i <= 3; ++i)
            for (int j = 1; j <= 3; ++j) h.push_back(std::string(name) + "_" + std::to_string(i) + std::to_string(j));
    };
    if (model.kind == SystemKind::SE3) block("M1inv");
    block("M2inv");
    h.push_back("V");
    for (int i = 1; i <= model.zdim(); ++i)
        for (int j = 1; j <= model.control_dim; ++j) h.push_back("g_" + std::to_string(i) + "_" + std::to_string(j));
    return h;
}

std::vector<double> function_row(const HamiltonianModel &model, double key, const LearnedSample &s) {
    std::vector<double> r{key};
    auto block = [&](const Mat3 &M) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.push_back(M(i, j));
    };
    if (model.kind == SystemKind::SE3) block(s.M1_inv);
    block(s.M2_inv);
    r.push_back(s.V);
    for (Eigen::Index i = 0; i < s.g.rows(); ++i)
        for (Eigen::Index j = 0; j < s.g.cols(); ++j) r.push_back(s.g(i, j));
    return r;
}

double angle_error(double phi, double target) { return std::abs(std::remainder(phi - target, 2.0 * M_PI)); }

} // namespace

EvalOutcome evaluate_model(const RunConfig &cfg, const HamiltonianModel &model) {
    const EvalConfig &ev = cfg.eval;
    EvalOutcome out;
    json &s = out.summary;
    s["system"] = system_name(cfg.system);

    const Sample start = sample_state(cfg.dataset, 3'000'000'000ULL);
    const long steps = std::lround(ev.horizon / ev.dt);
    std::vector<double> times(static_cast<std::size_t>(steps) + 1);
    for (long k = 0; k <= steps; ++k) times[static_cast<std::size_t>(k)] = static_cast<double>(k) * ev.dt;
    RolloutOptions ro;
    ro.rotation_offset = model.kind == SystemKind::SE3 ? 3 : 0;
    const RolloutResult roll =
        rollout(model_field(model), start.x.flat(), Eigen::VectorXd::Zero(model.control_dim), times, ro);

    double H0 = 0.0, spread = 0.0, hmin = INFINITY, hmax = -INFINITY, orth = 0.0, det = 0.0;
    for (std::size_t k = 0; k < roll.states.size(); ++k) {
        const FullState x = FullState::from_flat(roll.states[k], model.kind);
        const double H = hamiltonian(model, x.q, momentum(model, x.q, x.zeta));
        if (k == 0) H0 = H;
        spread = std::max(spread, std::abs(H - H0) / (1.0 + std::abs(H0)));
        hmin = std::min(hmin, H);
        hmax = std::max(hmax, H);
        const Mat3 R = rotation_rows(model, x.q);
        orth = std::max(orth, orthogonality_error<double>(R));
        det = std::max(det, std::abs(R.determinant() - 1.0));
        out.energy.push_back({roll.times[k], H, orthogonality_error<double>(R), std::abs(R.determinant() - 1.0)});
    }
    s["rollout"] = {{"horizon", ev.horizon}, {"dt", ev.dt},          {"H_min", hmin},     {"H_max", hmax},
                    {"H_rel_spread", spread}, {"max_orth_err", orth}, {"max_det_err", det}};

    if (cfg.system == SystemId::Pendulum) {
        out.function_header = function_columns(model, "phi");
        const PendulumSweep sw = pendulum_sweep(model, cfg.dataset.pendulum, ev.sweep_points);
        std::vector<Eigen::VectorXd> qs;
        for (double phi : sw.phi) qs.push_back(pendulum_state(phi, 0.0).q);
        const auto fs = evaluate_learned_functions(model, qs);
        for (std::size_t i = 0; i < fs.size(); ++i) out.functions.push_back(function_row(model, sw.phi[i], fs[i]));
        s["pendulum"] = {{"mean_product", sw.mean_product},
                         {"beta", sw.beta},
                         {"potential_rms_rel", sw.potential_rms_rel}};
    } else {
        out.function_header = function_columns(model, "t");
        std::vector<Eigen::VectorXd> qs;
        std::vector<double> ts;
        const long every = std::max(1L, std::lround(0.05 / ev.dt));
        for (std::size_t k = 0; k < roll.states.size(); k += static_cast<std::size_t>(every)) {
            qs.push_back(roll.states[k].head(model.qdim()));
            ts.push_back(roll.times[k]);
        }
        const auto fs = evaluate_learned_functions(model, qs);
        for (std::size_t i = 0; i < fs.size(); ++i) out.functions.push_back(function_row(model, ts[i], fs[i]));
        if (cfg.system == SystemId::RigidBody) {
            const RigidBodyStructure st = rigid_body_structure(model, cfg.dataset, ev.structure_states);
            s["rigid_body"] = {{"alpha", st.alpha},
                               {"beta", st.beta},
                               {"M1_offdiag", st.M1_offdiag},
                               {"M2_offdiag", st.M2_offdiag},
                               {"g_offdiag", st.g_offdiag}};
        }
    }
    s["rhs_rel_err"] = rhs_relative_error(model, cfg.dataset, ev.held_out_states);
    return out;
}

ControlOutcome run_control(const RunConfig &cfg, const HamiltonianModel &model) {
    if (model.kind != system_kind(cfg.system) || model.control_dim != control_dim(cfg.system))
        throw Error(ErrorCode::Config, "model does not match the configured system");
    const ControlConfig &cc = cfg.control;
    const DatasetConfig &dc = cfg.dataset;
    const PlantRhs plant = [&dc](const Eigen::VectorXd &q, const Eigen::VectorXd &zeta, const Eigen::VectorXd &u) {
        return ground_truth_rhs(dc, q, zeta, u);
    };
    ControlOutcome out;
    json &s = out.summary;
    s["system"] = system_name(cfg.system);

    auto energy_increase = [](const ClosedLoopResult &r) {
        double inc = -INFINITY;
        for (std::size_t i = 1; i < r.trace.size(); ++i) inc = std::max(inc, r.trace[i].energy - r.trace[i - 1].energy);
        return inc;
    };

    switch (cfg.system) {
    case SystemId::Pendulum: {
        RegulationTarget target;
        target.R = Rotation<double>::about_z(cc.phi_target).matrix();
        const Eigen::VectorXd q_ref = pendulum_state(cc.phi_target, 0.0).q;
        const ResolvedGains gains = resolve_gains(cc.gains, model, q_ref);
        out.result = closed_loop(SystemKind::SO3, plant, make_esdi_controller(model, target, gains),
                                 pendulum_state(cc.phi0, cc.phi_dot0), cc.loop);
        const double phi = pendulum_angle(out.result.final_state.q);
        s["final_phi"] = phi;
        s["final_phi_dot"] = out.result.final_state.zeta(2);
        s["phi_err"] = angle_error(phi, cc.phi_target);
        s["max_energy_increase"] = energy_increase(out.result);
        break;
    }
    case SystemId::RigidBody: {
        RegulationTarget target;
        target.p = cc.p_target;
        target.R = exp_so3<double>(cc.rotvec_target);
        Eigen::VectorXd q0(12);
        q0 << cc.p0, matrix_to_rows<double>(exp_so3<double>(cc.rotvec0));
        Eigen::VectorXd q_ref(12);
        q_ref << target.p, matrix_to_rows<double>(target.R);
        const ResolvedGains gains = resolve_gains(cc.gains, model, q_ref);
        out.result = closed_loop(SystemKind::SE3, plant, make_esdi_controller(model, target, gains),
                                 FullState{q0, Eigen::VectorXd::Zero(6)}, cc.loop);
        const FullState &xf = out.result.final_state;
        s["pos_err"] = (Vec3(xf.q.head<3>()) - target.p).norm();
        s["rot_err"] = rotation_error_scalar<double>(rows_to_matrix<double>(Vector9<double>(xf.q.segment<9>(3))),
                                                     target.R);
        s["max_energy_increase"] = energy_increase(out.result);
        break;
    }
    case SystemId::Quadrotor: {
        if (cc.loop.rate_divisor == 0)
            throw Error(ErrorCode::Config, "quadrotor tracking needs a positive control.rate_divisor");
        const TrajectoryConfig &tc = cc.trajectory;
        const DesiredTrajectory traj = tc.type == "hover"
                                           ? DesiredTrajectory::hover(tc.center, tc.psi)
                                           : DesiredTrajectory::circle(tc.center, tc.radius, tc.period, tc.psi);
        const TrajectoryPoint p0 = traj.at(0.0);
        Eigen::VectorXd q0(12);
        q0 << p0.p, matrix_to_rows<double>(Rotation<double>::about_z(p0.psi).matrix());
        Eigen::VectorXd z0 = Eigen::VectorXd::Zero(6);
        z0.head<3>() = Rotation<double>::about_z(p0.psi).matrix().transpose() * p0.v;
        const ResolvedGains gains = resolve_gains(cc.gains, model, q0);
        out.result =
            closed_loop(SystemKind::SE3, plant, make_tracking_controller(model, traj, gains), FullState{q0, z0}, cc.loop);
        s["rms_pos_err"] = rms_position_error(out.result, cc.rms_from);
        s["mean_ctrl_us"] = cc.loop.timing ? json(out.result.mean_ctrl_us) : json(nullptr);
        break;
    }
    }
    return out;
}

int exit_code(const Error &e) {
    switch (e.code()) {
    case ErrorCode::Config:
    case ErrorCode::DimMismatch:
    case ErrorCode::ShapeMismatch: return 2;
    case ErrorCode::Io: return 3;
    case ErrorCode::NonFinite:
    case ErrorCode::Divergence:
    case ErrorCode::SingularMass:
    case ErrorCode::DegenerateThrust:
    case ErrorCode::GimbalDegenerate: return 4;
    default: return 1;
    }
}

namespace {

std::string loss_path_for(const std::string &checkpoint) {
    std::filesystem::path p(checkpoint);
    p.replace_extension(".loss.csv");
    return p.string();
}

std::string in_dir(const std::string &dir, const char *name) { return (std::filesystem::path(dir) / name).string(); }

HamiltonianModel controller_model(const RunConfig &cfg, const std::string &model_path) {
    if (model_path.empty()) return ground_truth_model(cfg.dataset);
    const Checkpoint ck = load_checkpoint(model_path);
    if (ck.system != cfg.system) throw Error(ErrorCode::Config, "checkpoint was trained on " + system_name(ck.system));
    return ck.model;
}

} // namespace

int cli_main(int argc, char **argv) {
    CLI::App app{"Learn port-Hamiltonian dynamics on SE(3) and control with them."};
    app.require_subcommand(1);
    int threads = 0;
    std::string config, out, data, model, resume, loss;

    auto *gen = app.add_subcommand("gen-data", "Generate a JSON-lines trajectory dataset");
    gen->add_option("--config", config)->required();
    gen->add_option("--out", out)->required();
    gen->add_option("--threads", threads);

    auto *tr = app.add_subcommand("train", "Train a model and write a checkpoint with its loss history");
    tr->add_option("--config", config)->required();
    tr->add_option("--data", data)->required();
    tr->add_option("--out", out)->required();
    tr->add_option("--resume", resume, "Checkpoint to continue from");
    tr->add_option("--loss", loss, "Loss CSV path (default: next to the checkpoint)");
    tr->add_option("--threads", threads);

    auto *evc = app.add_subcommand("eval", "Learned-function sweeps and conservation rollouts");
    evc->add_option("--model", model)->required();
    evc->add_option("--config", config)->required();
    evc->add_option("--out", out)->required();
    evc->add_option("--threads", threads);

    auto *ctl = app.add_subcommand("control", "Closed-loop control run on the ground-truth plant");
    ctl->add_option("--model", model, "Checkpoint behind the controller (default: closed-form model)");
    ctl->add_option("--config", config)->required();
    ctl->add_option("--out", out)->required();
    ctl->add_option("--threads", threads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const int nthreads = resolve_threads(threads);
        const RunConfig cfg = load_config(config);

        if (*gen) {
            save_dataset(out, generate_dataset(cfg.dataset, nthreads));
            return 0;
        }
        if (*tr) {
            const Dataset ds = load_dataset(data);
            std::optional<Checkpoint> ck;
            if (!resume.empty()) ck = load_checkpoint(resume);
            const TrainOutcome res = train_model(cfg, ds, ck, nthreads);
            save_checkpoint(out, res.checkpoint);
            const std::string lp = loss.empty() ? loss_path_for(out) : loss;
            if (ck)
                append_loss_csv(lp, res.result.history);
            else
                write_loss_csv(lp, res.result.history);
            if (res.result.diverged) {
                std::cerr << "training diverged: " << res.result.message << "\n";
                return 4;
            }
            return 0;
        }
        if (*evc) {
            const Checkpoint ck = load_checkpoint(model);
            if (ck.system != cfg.system)
                throw Error(ErrorCode::Config, "checkpoint was trained on " + system_name(ck.system));
            const EvalOutcome ev = evaluate_model(cfg, ck.model);
            write_csv(in_dir(out, "functions.csv"), ev.function_header, ev.functions);
            write_csv(in_dir(out, "energy.csv"), {"t", "H", "orth_err", "det_err"}, ev.energy);
            write_json(in_dir(out, "summary.json"), ev.summary);
            return 0;
        }
        if (*ctl) {
            const ControlOutcome res = run_control(cfg, controller_model(cfg, model));
            write_trace_csv(in_dir(out, "trace.csv"), res.result);
            write_json(in_dir(out, "summary.json"), res.summary);
            return 0;
        }
    } catch (const Error &e) {
        std::cerr << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace se3ham::cli
