#include "se3ham/config.hpp"

#include <set>

#include "se3ham/errors.hpp"
#include "se3ham/io.hpp"

namespace se3ham {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class Section {
  public:
    Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error(ErrorCode::Config, where() + " must be an object");
    }

    bool has(const char *key) const { return j_.contains(key); }

    const json &require(const char *key) {
        if (!j_.contains(key)) throw Error(ErrorCode::Config, "missing required key '" + name(key) + "'");
        seen_.insert(key);
        return j_.at(key);
    }

    void get(const char *key, double &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (!v.is_number()) throw Error(ErrorCode::Config, "'" + name(key) + "' must be a number");
        out = v.get<double>();
    }

    void get(const char *key, int &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (!v.is_number_integer()) throw Error(ErrorCode::Config, "'" + name(key) + "' must be an integer");
        out = v.get<int>();
    }

    void get(const char *key, std::uint64_t &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (!v.is_number_unsigned()) throw Error(ErrorCode::Config, "'" + name(key) + "' must be a nonnegative integer");
        out = v.get<std::uint64_t>();
    }

    void get(const char *key, bool &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (!v.is_boolean()) throw Error(ErrorCode::Config, "'" + name(key) + "' must be true or false");
        out = v.get<bool>();
    }

    void get(const char *key, std::string &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (!v.is_string()) throw Error(ErrorCode::Config, "'" + name(key) + "' must be a string");
        out = v.get<std::string>();
    }

    /// A 3-vector, or a single number broadcast to all three entries.
    void get(const char *key, Vec3 &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (v.is_number()) {
            out = Vec3::Constant(v.get<double>());
            return;
        }
        if (!v.is_array() || v.size() != 3)
            throw Error(ErrorCode::Config, "'" + name(key) + "' must be a number or a 3-vector");
        for (int i = 0; i < 3; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number())
                throw Error(ErrorCode::Config, "'" + name(key) + "' must hold numbers");
            out(i) = v[static_cast<std::size_t>(i)].get<double>();
        }
    }

    void get(const char *key, std::vector<int> &out) {
        if (!has(key)) return;
        const json &v = require(key);
        if (!v.is_array() || v.empty()) throw Error(ErrorCode::Config, "'" + name(key) + "' must be a nonempty array");
        out.clear();
        for (const auto &x : v) {
            if (!x.is_number_integer() || x.get<int>() <= 0)
                throw Error(ErrorCode::Config, "'" + name(key) + "' must hold positive integers");
            out.push_back(x.get<int>());
        }
    }

    std::optional<Section> sub(const char *key) {
        if (!has(key)) return std::nullopt;
        return Section(require(key), name(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw Error(ErrorCode::Config, "unknown key '" + name(it.key()) + "'");
    }

  private:
    std::string name(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

void positive(double x, const char *key) {
    if (!(x > 0.0)) throw Error(ErrorCode::Config, std::string("'") + key + "' must be positive");
}

void positive(int x, const char *key) {
    if (x <= 0) throw Error(ErrorCode::Config, std::string("'") + key + "' must be positive");
}

void parse_env(Section s, RunConfig &c) {
    if (auto p = s.sub("pendulum")) {
        p->get("a", c.dataset.pendulum.a);
        p->get("b", c.dataset.pendulum.b);
        p->finish();
    }
    if (auto r = s.sub("rigid_body")) {
        r->get("mass", c.dataset.rigid_body.mass);
        r->get("inertia", c.dataset.rigid_body.inertia);
        r->get("gravity", c.dataset.rigid_body.gravity);
        r->finish();
        positive(c.dataset.rigid_body.mass, "env.rigid_body.mass");
    }
    if (auto q = s.sub("quadrotor")) {
        QuadrotorParams &p = c.dataset.quadrotor;
        q->get("mass", p.mass);
        q->get("inertia", p.inertia);
        q->get("gravity", p.gravity);
        q->get("arm", p.arm);
        q->get("thrust_coeff", p.thrust_coeff);
        q->get("torque_coeff", p.torque_coeff);
        q->finish();
        positive(p.mass, "env.quadrotor.mass");
    }
    s.finish();
}

void parse_dataset(Section s, DatasetConfig &d) {
    s.get("records", d.records);
    s.get("intervals", d.intervals);
    s.get("dt", d.dt);
    s.get("sim_substeps", d.sim_substeps);
    if (auto b = s.sub("sampler")) {
        SamplerConfig &x = d.sampler;
        b->get("position", x.position);
        b->get("position_center", x.position_center);
        b->get("rotation_angle", x.rotation_angle);
        b->get("velocity", x.velocity);
        b->get("angular_velocity", x.angular_velocity);
        b->get("phi_dot", x.phi_dot);
        b->get("pendulum_u", x.pendulum_u);
        b->get("force_mg", x.force_mg);
        b->get("torque", x.torque);
        b->get("thrust_lo", x.thrust_lo);
        b->get("thrust_hi", x.thrust_hi);
        b->get("quad_torque", x.quad_torque);
        b->finish();
        if (!(x.thrust_lo <= x.thrust_hi)) throw Error(ErrorCode::Config, "'dataset.sampler.thrust_lo' exceeds thrust_hi");
    }
    s.finish();
    positive(d.records, "dataset.records");
    positive(d.intervals, "dataset.intervals");
    positive(d.dt, "dataset.dt");
    positive(d.sim_substeps, "dataset.sim_substeps");
}

void parse_model(Section s, ModelConfig &m) {
    s.get("mass_widths", m.widths.mass);
    s.get("potential_widths", m.widths.potential);
    s.get("input_widths", m.widths.input);
    s.get("epsilon", m.epsilon);
    s.get("normalize_controls", m.normalize_controls);
    s.finish();
    positive(m.epsilon, "model.epsilon");
}

void parse_train(Section s, TrainConfig &t) {
    s.get("iterations", t.iterations);
    s.get("batch_size", t.batch_size);
    s.get("shard_size", t.shard_size);
    s.get("substeps", t.substeps);
    s.get("optimizer", t.optimizer);
    s.get("lr", t.adam.lr);
    s.get("beta1", t.adam.beta1);
    s.get("beta2", t.adam.beta2);
    s.get("adam_eps", t.adam.eps);
    s.get("sgd_lr", t.sgd_lr);
    s.get("pretrain_mass", t.pretrain_mass);
    s.get("pretrain_iterations", t.pretrain_iterations);
    s.get("pretrain_batch", t.pretrain_batch);
    s.get("pretrain_lr", t.pretrain_lr);
    s.get("divergence_threshold", t.divergence_threshold);
    s.finish();
    if (t.optimizer != "adam" && t.optimizer != "sgd")
        throw Error(ErrorCode::Config, "'train.optimizer' must be \"adam\" or \"sgd\"");
    if (t.iterations < 0) throw Error(ErrorCode::Config, "'train.iterations' must be nonnegative");
    if (t.adam.lr < 0.0 || t.sgd_lr < 0.0) throw Error(ErrorCode::Config, "learning rates must be nonnegative");
    positive(t.shard_size, "train.shard_size");
    positive(t.substeps, "train.substeps");
    positive(t.pretrain_batch, "train.pretrain_batch");
}

void parse_control(Section s, ControlConfig &c) {
    if (auto g = s.sub("gains")) {
        g->get("Kp", c.gains.Kp);
        g->get("Kv", c.gains.Kv);
        g->get("KR", c.gains.KR);
        g->get("Kw", c.gains.Kw);
        g->get("mass_relative", c.gains.mass_relative);
        g->finish();
        for (const Vec3 *k : {&c.gains.Kp, &c.gains.Kv, &c.gains.KR, &c.gains.Kw})
            if ((k->array() < 0.0).any()) throw Error(ErrorCode::Config, "'control.gains' must be nonnegative");
    }
    s.get("horizon", c.loop.horizon);
    s.get("dt", c.loop.dt);
    s.get("rate_divisor", c.loop.rate_divisor);
    s.get("timing", c.loop.timing);
    s.get("phi0", c.phi0);
    s.get("phi_dot0", c.phi_dot0);
    s.get("phi_target", c.phi_target);
    s.get("p0", c.p0);
    s.get("rotvec0", c.rotvec0);
    s.get("p_target", c.p_target);
    s.get("rotvec_target", c.rotvec_target);
    s.get("rms_from", c.rms_from);
    if (auto t = s.sub("trajectory")) {
        t->get("type", c.trajectory.type);
        t->get("center", c.trajectory.center);
        t->get("radius", c.trajectory.radius);
        t->get("period", c.trajectory.period);
        t->get("psi", c.trajectory.psi);
        t->finish();
        if (c.trajectory.type != "circle" && c.trajectory.type != "hover")
            throw Error(ErrorCode::Config, "'control.trajectory.type' must be \"circle\" or \"hover\"");
        positive(c.trajectory.period, "control.trajectory.period");
    }
    s.finish();
    positive(c.loop.horizon, "control.horizon");
    positive(c.loop.dt, "control.dt");
    if (c.loop.rate_divisor < 0) throw Error(ErrorCode::Config, "'control.rate_divisor' must be nonnegative");
}

void parse_eval(Section s, EvalConfig &e) {
    s.get("horizon", e.horizon);
    s.get("dt", e.dt);
    s.get("sweep_points", e.sweep_points);
    s.get("held_out_states", e.held_out_states);
    s.get("structure_states", e.structure_states);
    s.finish();
    positive(e.horizon, "eval.horizon");
    positive(e.dt, "eval.dt");
    positive(e.sweep_points, "eval.sweep_points");
    positive(e.held_out_states, "eval.held_out_states");
    positive(e.structure_states, "eval.structure_states");
}

} // namespace

ControlGains default_gains(SystemId system, const DatasetConfig &d) {
    ControlGains g;
    g.mass_relative = true;
    switch (system) {
    case SystemId::Pendulum:
        // A learned pendulum never sees rotations off the hinge axis, so its
        // mass is unidentified there and only absolute gains are meaningful.
        g.mass_relative = false;
        g.KR = Vec3::Constant(1.0);
        g.Kw = Vec3::Constant(0.4);
        break;
    case SystemId::RigidBody: {
        const RigidBodyParams &p = d.rigid_body;
        g.Kp = Vec3::Constant(0.5 / p.mass);
        g.Kv = Vec3::Constant(0.25 / p.mass);
        g.KR = 0.5 * p.inertia.cwiseInverse();
        g.Kw = 0.25e-3 * p.inertia.cwiseInverse();
        break;
    }
    case SystemId::Quadrotor:
        g.Kp = Vec3::Constant(5.0);
        g.Kv = Vec3::Constant(2.5);
        g.KR = Vec3::Constant(250.0);
        g.Kw = Vec3::Constant(20.0);
        break;
    }
    return g;
}

RunConfig default_config(SystemId system) {
    RunConfig c;
    c.system = system;
    c.dataset.system = system;
    switch (system) {
    case SystemId::Pendulum:
        c.dataset.records = 512;
        c.dataset.intervals = 5;
        c.model.normalize_controls = false;
        c.train.pretrain_mass = false;
        c.control.loop.horizon = 10.0;
        break;
    case SystemId::RigidBody:
        c.dataset.records = 1024;
        c.dataset.intervals = 1;
        c.train.pretrain_mass = true;
        c.dataset.sampler.position_center = Vec3(0.5, 1.0, 2.5);
        c.dataset.sampler.position = 3.0;
        c.control.loop.horizon = 20.0;
        c.control.loop.rate_divisor = 0;
        break;
    case SystemId::Quadrotor:
        c.dataset.records = 256;
        c.dataset.intervals = 5;
        c.train.pretrain_mass = true;
        c.dataset.sampler.position_center = Vec3(0.0, 0.0, 1.0);
        c.dataset.sampler.position = 1.5;
        c.control.loop.horizon = 16.0;
        break;
    }
    c.control.gains = default_gains(system, c.dataset);
    return c;
}

RunConfig parse_config(const json &j) {
    Section root(j, "");
    const json &sys = root.require("system");
    if (!sys.is_string()) throw Error(ErrorCode::Config, "'system' must be a string");
    RunConfig c = default_config(parse_system(sys.get<std::string>()));
    const json &seed = root.require("seed");
    if (!seed.is_number_unsigned()) throw Error(ErrorCode::Config, "'seed' must be a nonnegative integer");
    c.seed = seed.get<std::uint64_t>();

    if (auto p = root.sub("paths")) {
        p->get("dataset", c.paths.dataset);
        p->get("checkpoint", c.paths.checkpoint);
        p->get("output_dir", c.paths.output_dir);
        p->finish();
    }
    if (auto s = root.sub("env")) {
        parse_env(*s, c);
        c.control.gains = default_gains(c.system, c.dataset);
    }
    if (auto s = root.sub("dataset")) parse_dataset(*s, c.dataset);
    if (auto s = root.sub("model")) parse_model(*s, c.model);
    if (auto s = root.sub("train")) parse_train(*s, c.train);
    if (auto s = root.sub("control")) parse_control(*s, c.control);
    if (auto s = root.sub("eval")) parse_eval(*s, c.eval);
    root.finish();

    c.dataset.system = c.system;
    c.dataset.seed = c.seed;
    c.train.seed = c.seed;
    return c;
}

RunConfig load_config(const std::string &path) {
    json j;
    try {
        j = read_json(path);
    } catch (const Error &e) {
        if (std::string(e.what()).find("not valid JSON") != std::string::npos) throw Error(ErrorCode::Config, e.what());
        throw;
    }
    return parse_config(j);
}

} // namespace se3ham
