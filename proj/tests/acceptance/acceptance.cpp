// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails. Pass criterion numbers as
// arguments to run a subset.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "commands.hpp"
#include "se3ham/config.hpp"
#include "se3ham/control.hpp"
#include "se3ham/envs.hpp"
#include "se3ham/errors.hpp"
#include "se3ham/geometry.hpp"
#include "se3ham/hammodel.hpp"
#include "se3ham/io.hpp"
#include "se3ham/nn.hpp"
#include "se3ham/odeint.hpp"
#include "se3ham/training.hpp"

using namespace se3ham;
namespace fs = std::filesystem;

namespace {

const std::string kSourceDir = SE3HAM_SOURCE_DIR;
const std::string kCli = SE3HAM_CLI_PATH;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(3);
    os << x;
    return os.str();
}

struct Verdict {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string &what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [miss]");
    }
};

RunConfig config_for(const std::string &system) { return load_config(kSourceDir + "/configs/" + system + ".json"); }

// Trained checkpoints are shared between criteria.
struct Trained {
    RunConfig cfg;
    HamiltonianModel model;
    TrainResult result;
    double seconds = 0.0;
};

std::map<std::string, Trained> g_trained;

const Trained &trained(const std::string &system) {
    auto it = g_trained.find(system);
    if (it != g_trained.end()) return it->second;
    Trained t;
    t.cfg = config_for(system);
    const auto t0 = Clock::now();
    const Dataset ds = generate_dataset(t.cfg.dataset);
    cli::TrainOutcome out = cli::train_model(t.cfg, ds, std::nullopt, 1);
    t.seconds = seconds_since(t0);
    if (out.result.diverged) throw Error(ErrorCode::Divergence, system + " training: " + out.result.message);
    t.model = out.result.model;
    t.result = std::move(out.result);
    return g_trained.emplace(system, std::move(t)).first->second;
}

Mat3 random_rotation(std::mt19937_64 &rng, double max_angle) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> A(0.0, max_angle);
    return exp_so3<double>(Vec3(N(rng), N(rng), N(rng)).normalized() * A(rng));
}

Vec3 uniform3(std::mt19937_64 &rng, double b) {
    std::uniform_real_distribution<double> U(-b, b);
    return {U(rng), U(rng), U(rng)};
}

// 1. Geometry suite.
Verdict geometry_suite() {
    Verdict v;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double hat_err = 0.0, vee_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 w = uniform3(rng, 1.0), x = uniform3(rng, 1.0);
        hat_err = std::max(hat_err, (hat3<double>(w) * x - w.cross(x)).cwiseAbs().maxCoeff());
        vee_err = std::max(vee_err, (vee3<double>(hat3<double>(w)) - w).cwiseAbs().maxCoeff());
    }
    v.check(hat_err <= 1e-14 && vee_err == 0.0, "hat/cross " + fmt(hat_err) + " <= 1e-14, vee(hat) exact");

    double log_err = 0.0;
    std::uniform_real_distribution<double> A(0.0, M_PI - 0.1);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 w = Vec3(N(rng), N(rng), N(rng)).normalized() * A(rng);
        log_err = std::max(log_err, (log_so3<double>(exp_so3<double>(w)) - w).norm());
    }
    v.check(log_err <= 1e-9, "exp/log " + fmt(log_err) + " <= 1e-9");

    double q_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Mat3 R = random_rotation(rng, M_PI);
        const Vec3 p = uniform3(rng, 2.0), vel = uniform3(rng, 2.0), om = uniform3(rng, 2.0);
        Eigen::Matrix4d T = Eigen::Matrix4d::Identity(), Z = Eigen::Matrix4d::Zero();
        T.topLeftCorner<3, 3>() = R;
        T.topRightCorner<3, 1>() = p;
        Z.topLeftCorner<3, 3>() = hat3<double>(om);
        Z.topRightCorner<3, 1>() = vel;
        const Eigen::Matrix4d Td = T * Z;
        Vector6<double> z;
        z << vel, om;
        const Vector12<double> qd = q_cross<double>(R) * z;
        Vector12<double> ref;
        ref << Td.topRightCorner<3, 1>(), matrix_to_rows<double>(Mat3(Td.topLeftCorner<3, 3>()));
        q_err = std::max(q_err, (qd - ref).cwiseAbs().maxCoeff());
    }
    v.check(q_err <= 1e-13, "q_cross vs T*hat(zeta) " + fmt(q_err) + " <= 1e-13");

    bool skew = true;
    for (int i = 0; i < 1000; ++i) {
        Vector6<double> p;
        p << uniform3(rng, 5.0), uniform3(rng, 5.0);
        const Matrix6<double> X = p_cross<double>(p);
        skew = skew && (X + X.transpose()).isZero(0.0);
    }
    v.check(skew, "p_cross bitwise skew");

    double rot0 = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Mat3 R = random_rotation(rng, M_PI);
        const Mat3 K = (uniform3(rng, 1.0).cwiseAbs() + Vec3::Constant(0.1)).asDiagonal();
        rot0 = std::max(rot0, rotation_error_vec<double>(R, R, K).norm());
    }
    v.check(rot0 <= 1e-15, "rotation error at R=R* " + fmt(rot0));
    const double secs = seconds_since(t0);
    v.check(secs < 5.0, "runtime " + fmt(secs) + " s < 5 s");
    return v;
}

// Worst mixed error: relative where |ref| >= 1e-2, absolute (scaled by
// 1e-7 / 1e-5) below it.
double mixed_error(double ad, double fd) {
    const double mag = std::max(std::abs(ad), std::abs(fd));
    if (mag >= 1e-2) return std::abs(ad - fd) / mag;
    return std::abs(ad - fd) * (1e-5 / 1e-7);
}

// 2. Autodiff suite.
Verdict autodiff_suite() {
    Verdict v;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> width(2, 24), depth(1, 3), outs(1, 6), ins(1, 12);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        MlpSpec spec;
        spec.widths.push_back(ins(rng));
        for (int l = depth(rng); l > 0; --l) spec.widths.push_back(width(rng));
        spec.widths.push_back(outs(rng));
        Mlp net(spec);
        net.init_uniform(1000 + static_cast<std::uint64_t>(trial));
        Eigen::MatrixXd x(spec.inputs(), 1);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 2.0 * U(rng);
        for (int o = 0; o < spec.outputs(); ++o) {
            Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(spec.outputs(), 1);
            seed(o) = 1.0;
            const MlpVjp g = mlp_vjp(net, x, seed);
            for (Eigen::Index k = 0; k < net.params.size(); ++k) {
                Mlp a = net, b = net;
                a.params(k) += h;
                b.params(k) -= h;
                const double fd = (mlp_forward(a, x)(o) - mlp_forward(b, x)(o)) / (2 * h);
                worst = std::max(worst, mixed_error(g.grad_params(k), fd));
            }
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                Eigen::MatrixXd xa = x, xb = x;
                xa(i) += h;
                xb(i) -= h;
                const double fd = (mlp_forward(net, xa)(o) - mlp_forward(net, xb)(o)) / (2 * h);
                worst = std::max(worst, mixed_error(g.grad_x(i), fd));
            }
        }
    }
    v.check(worst <= 1e-5, "50 nets, worst rel err " + fmt(worst) + " <= 1e-5");

    // Loss -> rollout -> parameters, ten random parameters per system.
    double pipe = 0.0;
    for (SystemId sys : {SystemId::Pendulum, SystemId::RigidBody, SystemId::Quadrotor}) {
        DatasetConfig dc;
        dc.system = sys;
        dc.records = 4;
        dc.intervals = 5;
        dc.seed = 7;
        if (sys == SystemId::Quadrotor) dc.sampler.position_center = Vec3(0, 0, 1);
        const Dataset ds = generate_dataset(dc);
        NetWidths w;
        w.mass = {16, 16};
        w.potential = {16};
        w.input = {16};
        HamiltonianModel m = make_learned_model(system_kind(sys), control_dim(sys), w, 31);
        if (sys != SystemId::Pendulum) set_control_scale(m, control_scale(ds));
        TrainConfig tc;
        const std::vector<int> idx{0, 1, 2, 3};
        const BatchEvaluation ev = evaluate_batch(m, ds, idx, tc, true);
        const ParamVector p = m.params();
        std::uniform_int_distribution<Eigen::Index> pick(0, p.size() - 1);
        for (int r = 0; r < 10; ++r) {
            const Eigen::Index k = pick(rng);
            const double hk = 1e-5 * std::max(1.0, std::abs(p(k)));
            ParamVector pp = p;
            pp(k) += hk;
            m.set_params(pp);
            const double lp = evaluate_batch(m, ds, idx, tc, false).loss.total;
            pp(k) -= 2 * hk;
            m.set_params(pp);
            const double lm = evaluate_batch(m, ds, idx, tc, false).loss.total;
            m.set_params(p);
            const double fd = (lp - lm) / (2 * hk), ad = ev.grad(k);
            const double mag = std::max(std::abs(ad), std::abs(fd));
            if (mag > 0.0) pipe = std::max(pipe, std::abs(ad - fd) / mag);
        }
    }
    v.check(pipe <= 1e-3, "pipeline rel err " + fmt(pipe) + " <= 1e-3");
    const double secs = seconds_since(t0);
    v.check(secs < 60.0, "runtime " + fmt(secs) + " s < 60 s");
    return v;
}

struct ConservationStats {
    double spread = 0.0;
    double orth = 0.0;
    double det = 0.0;
};

ConservationStats zero_input_rollout(const HamiltonianModel &model, const FullState &x0, bool relative_to_H0) {
    std::vector<double> times;
    for (int k = 0; k <= 5000; ++k) times.push_back(k * 1e-3);
    RolloutOptions ro;
    ro.rotation_offset = model.kind == SystemKind::SE3 ? 3 : 0;
    const RolloutResult r = rollout(model_field(model), x0.flat(), Eigen::VectorXd::Zero(model.control_dim), times, ro);
    ConservationStats s;
    double H0 = 0.0;
    for (std::size_t k = 0; k < r.states.size(); ++k) {
        const FullState x = FullState::from_flat(r.states[k], model.kind);
        const double H = hamiltonian(model, x.q, momentum(model, x.q, x.zeta));
        if (k == 0) H0 = H;
        const double denom = relative_to_H0 ? std::abs(H0) : 1.0 + std::abs(H0);
        s.spread = std::max(s.spread, std::abs(H - H0) / denom);
    }
    for (double d : r.orthogonality_drift) s.orth = std::max(s.orth, d);
    for (double d : r.determinant_drift) s.det = std::max(s.det, d);
    return s;
}

// 3. Structural energy conservation of untrained models.
Verdict structural_conservation() {
    Verdict v;
    const auto t0 = Clock::now();
    ConservationStats worst;
    for (SystemId sys : {SystemId::Pendulum, SystemId::RigidBody, SystemId::Quadrotor}) {
        const RunConfig cfg = default_config(sys);
        const HamiltonianModel m = make_learned_model(system_kind(sys), control_dim(sys), cfg.model.widths, 404);
        const ConservationStats s = zero_input_rollout(m, sample_state(cfg.dataset, 5).x, false);
        worst.spread = std::max(worst.spread, s.spread);
        worst.orth = std::max(worst.orth, s.orth);
        worst.det = std::max(worst.det, s.det);
    }
    v.check(worst.spread <= 1e-4, "H spread " + fmt(worst.spread) + " <= 1e-4");
    v.check(worst.orth <= 1e-5, "|RR^T-I| " + fmt(worst.orth) + " <= 1e-5");
    v.check(worst.det <= 1e-5, "|det R-1| " + fmt(worst.det) + " <= 1e-5");
    const double secs = seconds_since(t0);
    v.check(secs < 30.0, "runtime " + fmt(secs) + " s < 30 s");
    return v;
}

// 4. Ground-truth conservation.
Verdict ground_truth_conservation() {
    Verdict v;
    const RunConfig cfg = default_config(SystemId::RigidBody);
    const HamiltonianModel m = analytic_rigid_body_model(cfg.dataset.rigid_body);
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s)
        worst = std::max(worst, zero_input_rollout(m, sample_state(cfg.dataset, 10 + s).x, true).spread);
    v.check(worst <= 1e-6, "relative H drift " + fmt(worst) + " <= 1e-6");
    return v;
}

// 5. Pendulum learning.
Verdict pendulum_learning() {
    Verdict v;
    const Trained &t = trained("pendulum");
    const PendulumSweep sw = pendulum_sweep(t.model, t.cfg.dataset.pendulum, t.cfg.eval.sweep_points);
    const double rhs_err = rhs_relative_error(t.model, t.cfg.dataset, 200);
    const double first = t.result.history.front().loss.total, last = t.result.history.back().loss.total;
    v.check(sw.mean_product >= 2.7 && sw.mean_product <= 3.3, "[M2^-1]33[g]3 = " + fmt(sw.mean_product) + " in [2.7, 3.3]");
    v.check(rhs_err <= 0.05, "rhs rel err " + fmt(rhs_err) + " <= 0.05");
    v.check(sw.potential_rms_rel <= 0.10, "V rms rel " + fmt(sw.potential_rms_rel) + " <= 0.10 (beta " + fmt(sw.beta) + ")");
    v.check(t.cfg.model.widths.mass.front() == 64 && t.cfg.dataset.records == 512 && t.cfg.train.iterations <= 1000,
            "D=512, width 64, " + std::to_string(t.cfg.train.iterations) + " iterations");
    v.check(t.seconds < 900.0, "training " + fmt(t.seconds) + " s < 900 s");
    v.check(first / last >= 10.0, "loss " + fmt(first) + " -> " + fmt(last));
    return v;
}

// 6. Rigid-body learning.
Verdict rigid_body_learning() {
    Verdict v;
    const Trained &t = trained("rigidbody");
    const RigidBodyStructure st = rigid_body_structure(t.model, t.cfg.dataset, t.cfg.eval.structure_states);
    const double rhs_err = rhs_relative_error(t.model, t.cfg.dataset, 200);
    v.check(st.M1_offdiag <= 0.1, "M1^-1 off-diag " + fmt(st.M1_offdiag) + " <= 0.1");
    v.check(st.M2_offdiag <= 0.1, "M2^-1 off-diag " + fmt(st.M2_offdiag) + " <= 0.1");
    v.check(st.g_offdiag <= 0.1, "g off-target " + fmt(st.g_offdiag) + " <= 0.1");
    v.check(rhs_err <= 0.05, "rhs rel err " + fmt(rhs_err) + " <= 0.05");
    v.check(true, "training " + fmt(t.seconds) + " s");
    return v;
}

struct ControlRun {
    nlohmann::json summary;
    double seconds = 0.0;
};

ControlRun control_run(const RunConfig &cfg, const HamiltonianModel &model) {
    const auto t0 = Clock::now();
    const cli::ControlOutcome out = cli::run_control(cfg, model);
    return {out.summary, seconds_since(t0)};
}

// 7. Control with the closed-form models.
Verdict analytic_control() {
    Verdict v;
    const RunConfig pc = config_for("pendulum");
    const ControlRun p = control_run(pc, ground_truth_model(pc.dataset));
    const double phi_err = p.summary["phi_err"], phi_dot = p.summary["final_phi_dot"];
    v.check(pc.control.gains.KR == Vec3::Ones() && pc.control.gains.Kw == Vec3::Constant(0.4) &&
                !pc.control.gains.mass_relative && pc.control.loop.horizon == 10.0,
            "K_R=I, K_d=0.4I, 10 s");
    v.check(phi_err <= 0.05, "pendulum |phi-pi| " + fmt(phi_err) + " <= 0.05");
    v.check(std::abs(phi_dot) <= 0.05, "|phi_dot| " + fmt(std::abs(phi_dot)) + " <= 0.05");
    v.check(p.seconds < 30.0, fmt(p.seconds) + " s");

    const RunConfig rc = config_for("rigidbody");
    const ControlRun r = control_run(rc, ground_truth_model(rc.dataset));
    const double pos = r.summary["pos_err"], rot = r.summary["rot_err"], inc = r.summary["max_energy_increase"];
    v.check(rc.control.loop.horizon == 20.0 && rc.control.p_target == Vec3(1, 2, 5), "p*=[1,2,5], 20 s");
    v.check(pos <= 0.01, "rigid body |p-p*| " + fmt(pos) + " <= 0.01");
    v.check(rot <= 1e-3, "tr(I-R*^T R) " + fmt(rot) + " <= 1e-3");
    v.check(inc <= 1e-6, "max dHd per step " + fmt(inc) + " <= 1e-6");
    v.check(r.seconds < 30.0, fmt(r.seconds) + " s");
    return v;
}

// 8. Control with the learned models.
Verdict learned_control() {
    Verdict v;
    const Trained &p = trained("pendulum");
    const ControlRun pr = control_run(p.cfg, p.model);
    const double phi_err = pr.summary["phi_err"];
    v.check(phi_err <= 0.1, "pendulum |phi-pi| " + fmt(phi_err) + " <= 0.1");
    const Trained &r = trained("rigidbody");
    const ControlRun rr = control_run(r.cfg, r.model);
    const double pos = rr.summary["pos_err"], rot = rr.summary["rot_err"];
    v.check(pos <= 0.05, "rigid body |p-p*| " + fmt(pos) + " <= 0.05");
    v.check(rot <= 1e-3, "tr(I-R*^T R) " + fmt(rot) + " <= 1e-3");
    return v;
}

// 9. Quadrotor tracking.
Verdict quadrotor_tracking() {
    Verdict v;
    RunConfig cfg = config_for("quadrotor");
    const ControlGains &g = cfg.control.gains;
    v.check(g.mass_relative && g.Kp == Vec3::Constant(5) && g.Kv == Vec3::Constant(2.5) && g.KR == Vec3::Constant(250) &&
                g.Kw == Vec3::Constant(20) && cfg.control.trajectory.radius == 1.0 &&
                cfg.control.trajectory.period == 8.0 && cfg.control.rms_from == 8.0,
            "K=5M1,2.5M1,250M2,20M2; r=1 m, T=8 s");
    const ControlRun a = control_run(cfg, ground_truth_model(cfg.dataset));
    const double rms_a = a.summary["rms_pos_err"];
    v.check(rms_a <= 0.2, "analytic rms " + fmt(rms_a) + " <= 0.2 m");
    cfg.control.loop.timing = true;
    try {
        const Trained &t = trained("quadrotor");
        const ControlRun l = control_run(cfg, t.model);
        const double rms_l = l.summary["rms_pos_err"], us = l.summary["mean_ctrl_us"];
        v.check(rms_l <= 0.3, "learned rms " + fmt(rms_l) + " <= 0.3 m");
        v.check(us <= 10000.0, "mean controller latency " + fmt(us / 1000.0) + " ms <= 10 ms");
    } catch (const Error &e) {
        v.check(false, std::string("learned run failed: ") + e.what());
    }
    return v;
}

// 10. Matching-equation residuals.
Verdict matching_residuals() {
    Verdict v;
    const RunConfig cfg = config_for("rigidbody");
    const HamiltonianModel m = analytic_rigid_body_model(cfg.dataset.rigid_body);
    std::mt19937_64 rng(1010);
    double c1 = 0.0, c2 = 0.0, esdi = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Sample s = sample_state(cfg.dataset, 50'000 + static_cast<std::uint64_t>(i));
        TrackingTarget t;
        t.p = uniform3(rng, 1.0);
        t.p_dot = uniform3(rng, 1.0);
        t.p_ddot = uniform3(rng, 1.0);
        t.R = random_rotation(rng, M_PI - 0.1);
        t.omega = uniform3(rng, 1.0);
        t.omega_dot = uniform3(rng, 1.0);
        const ResolvedGains gains = resolve_gains(cfg.control.gains, m, s.x.q);
        const MatchingResiduals r = tracking_matching_residuals(m, s.x.q, s.x.zeta, t, gains);
        c1 = std::max(c1, r.cond1);
        c2 = std::max(c2, r.cond2);
        RegulationTarget rt;
        rt.p = t.p;
        rt.R = t.R;
        esdi = std::max(esdi, esdi_matching_residual(m, s.x.q, s.x.zeta, rt, gains));
    }
    v.check(c1 <= 1e-8, "cond1 " + fmt(c1) + " <= 1e-8");
    v.check(c2 <= 1e-8, "cond2 " + fmt(c2) + " <= 1e-8");
    v.check(esdi <= 1e-8, "regulation " + fmt(esdi) + " <= 1e-8");
    return v;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Exit status of cmd, with its stderr kept in err_path so it can be compared too.
int shell(const std::string &cmd, const std::string &err_path) {
    const int rc = std::system((cmd + " > /dev/null 2> " + err_path).c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// 11. Determinism of every command.
Verdict determinism() {
    Verdict v;
    const fs::path root = fs::temp_directory_path() / "se3ham_acceptance_det";
    fs::remove_all(root);
    const std::map<std::string, std::string> configs{
        {"pendulum", R"({"system": "pendulum", "seed": 11, "dataset": {"records": 16},
            "train": {"iterations": 10, "batch_size": 8}, "control": {"horizon": 2.0}, "eval": {"horizon": 1.0}})"},
        {"rigidbody", R"({"system": "rigidbody", "seed": 12, "dataset": {"records": 16},
            "train": {"iterations": 5, "batch_size": 8, "pretrain_iterations": 50},
            "control": {"horizon": 2.0}, "eval": {"horizon": 1.0}})"},
        {"quadrotor", R"({"system": "quadrotor", "seed": 13, "dataset": {"records": 8},
            "train": {"iterations": 5, "batch_size": 8, "pretrain_iterations": 50},
            "control": {"horizon": 2.0, "rms_from": 1.0}, "eval": {"horizon": 1.0}})"},
    };
    // Learned control on a barely trained model may legitimately stop with a
    // numerical error; it must then stop the same way in both runs.
    int files = 0, mismatched = 0, failures = 0, code_mismatch = 0;
    for (const auto &[name, text] : configs) {
        const fs::path dir = root / name;
        fs::create_directories(dir);
        const std::string cfg = (dir / "config.json").string();
        std::ofstream(cfg) << text;
        std::vector<int> codes[2];
        for (int run = 0; run < 2; ++run) {
            const fs::path out = dir / ("run" + std::to_string(run));
            fs::create_directories(out);
            const std::string o = out.string();
            const std::string base = kCli + " ";
            const std::string thr = " --threads 1";
            const std::vector<std::pair<std::string, std::string>> commands{
                {"gen-data", "gen-data --config " + cfg + " --out " + o + "/data.jsonl"},
                {"train", "train --config " + cfg + " --data " + o + "/data.jsonl --out " + o + "/model.json"},
                {"eval", "eval --model " + o + "/model.json --config " + cfg + " --out " + o + "/eval"},
                {"control", "control --config " + cfg + " --out " + o + "/control"},
                {"control_learned",
                 "control --model " + o + "/model.json --config " + cfg + " --out " + o + "/control_learned"},
            };
            for (const auto &[tag, args] : commands) {
                const int rc = shell(base + args + thr, o + "/" + tag + ".stderr");
                codes[run].push_back(rc);
                if (rc != 0 && tag != "control_learned") ++failures;
            }
        }
        if (codes[0] != codes[1]) ++code_mismatch;
        for (const auto &entry : fs::recursive_directory_iterator(dir / "run0")) {
            if (!entry.is_regular_file()) continue;
            const fs::path rel = fs::relative(entry.path(), dir / "run0");
            ++files;
            if (!fs::exists(dir / "run1" / rel) || slurp(entry.path()) != slurp(dir / "run1" / rel)) ++mismatched;
        }
    }
    v.check(code_mismatch == 0, "exit codes agree");
    v.check(failures == 0, std::to_string(failures) + " command failures");
    v.check(files >= 40 && mismatched == 0,
            std::to_string(files) + " output files compared, " + std::to_string(mismatched) + " differ");
    return v;
}

} // namespace

int main(int argc, char **argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"geometry suite", geometry_suite},
        {"autodiff suite", autodiff_suite},
        {"structural energy conservation", structural_conservation},
        {"ground-truth conservation", ground_truth_conservation},
        {"pendulum learning", pendulum_learning},
        {"rigid-body learning", rigid_body_learning},
        {"control, analytic models", analytic_control},
        {"control, learned models", learned_control},
        {"quadrotor tracking", quadrotor_tracking},
        {"matching-equation residuals", matching_residuals},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception &e) {
            v.pass = false;
            v.detail = std::string("error: ") + e.what();
        }
        if (!v.pass) ++failed;
        std::cout << (v.pass ? "PASS" : "FAIL") << " " << n << " " << criteria[i].first << ": " << v.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
