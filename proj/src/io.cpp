#include "se3ham/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "se3ham/errors.hpp"

namespace se3ham {

using nlohmann::json;

namespace {

std::vector<int> iota_rows(int start, int count) {
    std::vector<int> r(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) r[static_cast<std::size_t>(i)] = start + i;
    return r;
}

json vec_to_json(const Eigen::VectorXd &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vec_from_json(const json &j, const char *what) {
    if (!j.is_array()) throw Error(ErrorCode::Io, std::string(what) + " must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error(ErrorCode::Io, std::string(what) + " must hold numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

const json &field(const json &j, const char *key) {
    if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::Io, std::string("missing key '") + key + "'");
    return j.at(key);
}

json net_to_json(const Field &f) {
    json j;
    j["widths"] = f.net.spec.widths;
    j["params"] = vec_to_json(f.net.params);
    if (f.output_scale.size() > 0) j["output_scale"] = vec_to_json(f.output_scale);
    return j;
}

Field net_from_json(const json &j, std::vector<int> rows, bool cholesky, const char *name) {
    MlpSpec spec;
    spec.widths = field(j, "widths").get<std::vector<int>>();
    if (spec.widths.size() < 2) throw Error(ErrorCode::Io, std::string(name) + " needs at least two widths");
    Mlp net(spec);
    const Eigen::VectorXd p = vec_from_json(field(j, "params"), "params");
    if (p.size() != spec.param_count())
        throw Error(ErrorCode::DimMismatch, std::string(name) + " has " + std::to_string(p.size()) +
                                                " parameters, widths imply " + std::to_string(spec.param_count()));
    net.params = p;
    if (spec.inputs() != static_cast<int>(rows.size()))
        throw Error(ErrorCode::DimMismatch, std::string(name) + " input width does not match the system");
    Field f = Field::learned(std::move(net), std::move(rows), cholesky);
    if (j.contains("output_scale")) f.output_scale = vec_from_json(j.at("output_scale"), "output_scale");
    return f;
}

std::ofstream open_out(const std::string &path, std::ios::openmode mode = std::ios::trunc) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::out | mode);
    if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    return in;
}

void finish(std::ofstream &out, const std::string &path) {
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

json rows_to_json(const std::vector<Eigen::VectorXd> &rows) {
    json a = json::array();
    for (const auto &r : rows) a.push_back(vec_to_json(r));
    return a;
}

} // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

json checkpoint_to_json(const Checkpoint &ck) {
    const HamiltonianModel &m = ck.model;
    if (!m.V.is_learned() || !m.g.is_learned() || !m.M2_inv.is_learned() ||
        (m.kind == SystemKind::SE3 && !m.M1_inv.is_learned()))
        throw Error(ErrorCode::Config, "only fully learned models can be checkpointed");
    json j;
    j["version"] = kCheckpointVersion;
    j["epsilon"] = m.epsilon;
    json nets;
    if (m.kind == SystemKind::SE3) nets["M1_inv_L"] = net_to_json(m.M1_inv);
    nets["M2_inv_L"] = net_to_json(m.M2_inv);
    nets["V"] = net_to_json(m.V);
    nets["g"] = net_to_json(m.g);
    j["nets"] = nets;
    j["metadata"] = {{"system", system_name(ck.system)}, {"seed", ck.seed}, {"iterations", ck.iterations}};
    if (ck.adam) j["optimizer"] = {{"m", vec_to_json(ck.adam->m)}, {"v", vec_to_json(ck.adam->v)}, {"t", ck.adam->t}};
    return j;
}

Checkpoint checkpoint_from_json(const json &j) {
    try {
        const int version = field(j, "version").get<int>();
        if (version != kCheckpointVersion)
            throw Error(ErrorCode::Io, "unsupported checkpoint version " + std::to_string(version));
        const json &meta = field(j, "metadata");
        Checkpoint ck;
        try {
            ck.system = parse_system(field(meta, "system").get<std::string>());
        } catch (const Error &e) {
            throw Error(ErrorCode::Io, e.what());
        }
        ck.seed = field(meta, "seed").get<std::uint64_t>();
        ck.iterations = field(meta, "iterations").get<int>();

        HamiltonianModel &m = ck.model;
        m.kind = system_kind(ck.system);
        m.control_dim = control_dim(ck.system);
        m.epsilon = field(j, "epsilon").get<double>();
        const json &nets = field(j, "nets");
        const int qd = m.qdim();
        if (m.kind == SystemKind::SE3) {
            m.M1_inv = net_from_json(field(nets, "M1_inv_L"), iota_rows(0, 3), true, "M1_inv_L");
            m.M2_inv = net_from_json(field(nets, "M2_inv_L"), iota_rows(3, 9), true, "M2_inv_L");
        } else {
            m.M1_inv = constant_mass_inverse(Eigen::Matrix3d::Identity());
            m.M2_inv = net_from_json(field(nets, "M2_inv_L"), iota_rows(0, 9), true, "M2_inv_L");
        }
        m.V = net_from_json(field(nets, "V"), iota_rows(0, qd), false, "V");
        m.g = net_from_json(field(nets, "g"), iota_rows(0, qd), false, "g");
        m.validate();

        if (j.contains("optimizer")) {
            const json &o = j.at("optimizer");
            AdamState a;
            a.m = vec_from_json(field(o, "m"), "optimizer.m");
            a.v = vec_from_json(field(o, "v"), "optimizer.v");
            a.t = field(o, "t").get<long>();
            if (a.m.size() != m.param_count() || a.v.size() != m.param_count())
                throw Error(ErrorCode::DimMismatch, "optimizer state does not match the parameter count");
            ck.adam = std::move(a);
        }
        return ck;
    } catch (const json::exception &e) {
        throw Error(ErrorCode::Io, std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string &path, const Checkpoint &ck) { write_json(path, checkpoint_to_json(ck)); }

Checkpoint load_checkpoint(const std::string &path) { return checkpoint_from_json(read_json(path)); }

std::string record_to_line(const Record &r) {
    json j;
    j["t"] = r.t;
    j["q"] = rows_to_json(r.q);
    j["zeta"] = rows_to_json(r.zeta);
    j["u"] = vec_to_json(r.u);
    return j.dump();
}

Record record_from_line(const std::string &line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception &e) {
        throw Error(ErrorCode::Io, std::string("malformed dataset line: ") + e.what());
    }
    Record r;
    try {
        r.t = field(j, "t").get<std::vector<double>>();
        for (const auto &q : field(j, "q")) r.q.push_back(vec_from_json(q, "q"));
        for (const auto &z : field(j, "zeta")) r.zeta.push_back(vec_from_json(z, "zeta"));
        r.u = vec_from_json(field(j, "u"), "u");
    } catch (const json::exception &e) {
        throw Error(ErrorCode::Io, std::string("malformed dataset line: ") + e.what());
    }
    if (r.t.size() < 2 || r.q.size() != r.t.size() || r.zeta.size() != r.t.size())
        throw Error(ErrorCode::Io, "dataset record needs matching t, q and zeta lengths of at least 2");
    return r;
}

void save_dataset(const std::string &path, const Dataset &ds) {
    std::ofstream out = open_out(path);
    for (const auto &r : ds.records) out << record_to_line(r) << '\n';
    finish(out, path);
}

Dataset load_dataset(const std::string &path) {
    std::ifstream in = open_in(path);
    Dataset ds;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            ds.records.push_back(record_from_line(line));
        } catch (const Error &e) {
            throw Error(ErrorCode::Io, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (ds.records.empty()) throw Error(ErrorCode::Io, "'" + path + "' holds no records");

    const Record &r0 = ds.records.front();
    const auto qd = r0.q.front().size(), zd = r0.zeta.front().size(), m = r0.u.size();
    if (qd == 9 && zd == 3 && m == 1)
        ds.system = SystemId::Pendulum;
    else if (qd == 12 && zd == 6 && m == 6)
        ds.system = SystemId::RigidBody;
    else if (qd == 12 && zd == 6 && m == 4)
        ds.system = SystemId::Quadrotor;
    else
        throw Error(ErrorCode::Io, "record dimensions match no known system");
    for (const auto &r : ds.records) {
        bool ok = r.u.size() == m;
        for (std::size_t k = 0; k < r.t.size(); ++k) ok = ok && r.q[k].size() == qd && r.zeta[k].size() == zd;
        if (!ok) throw Error(ErrorCode::Io, "records in '" + path + "' have mixed dimensions");
    }
    return ds;
}

namespace {

void loss_rows(std::ostream &out, const std::vector<HistoryRow> &history) {
    for (const auto &h : history)
        out << h.iteration << ',' << format_double(h.loss.L_R) << ',' << format_double(h.loss.L_p) << ','
            << format_double(h.loss.L_zeta) << ',' << format_double(h.loss.total) << '\n';
}

constexpr const char *kLossHeader = "iteration,L_R,L_p,L_zeta,total\n";

} // namespace

void write_loss_csv(const std::string &path, const std::vector<HistoryRow> &history) {
    std::ofstream out = open_out(path);
    out << kLossHeader;
    loss_rows(out, history);
    finish(out, path);
}

void append_loss_csv(const std::string &path, const std::vector<HistoryRow> &history) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out = open_out(path, std::ios::app);
    if (fresh) out << kLossHeader;
    loss_rows(out, history);
    finish(out, path);
}

void write_trace_csv(const std::string &path, const ClosedLoopResult &res) {
    std::ofstream out = open_out(path);
    const Eigen::Index m = res.trace.empty() ? 0 : res.trace.front().u.size();
    out << "t,px,py,pz,px*,py*,pz*,tr_err,v_err,w_err";
    for (Eigen::Index j = 0; j < m; ++j) out << ",u" << j;
    out << ",ctrl_us\n";
    for (const auto &r : res.trace) {
        out << format_double(r.t);
        for (int i = 0; i < 3; ++i) out << ',' << format_double(r.p(i));
        for (int i = 0; i < 3; ++i) out << ',' << format_double(r.p_star(i));
        out << ',' << format_double(r.rot_err) << ',' << format_double(r.v_err) << ',' << format_double(r.w_err);
        for (Eigen::Index j = 0; j < m; ++j) out << ',' << format_double(r.u(j));
        out << ',' << format_double(r.ctrl_us) << '\n';
    }
    finish(out, path);
}

void write_json(const std::string &path, const json &j) {
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

json read_json(const std::string &path) {
    std::ifstream in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw Error(ErrorCode::Io, "'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_csv(const std::string &path, const std::vector<std::string> &header,
               const std::vector<std::vector<double>> &rows) {
    std::ofstream out = open_out(path);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto &row : rows) {
        if (row.size() != header.size()) throw Error(ErrorCode::ShapeMismatch, "csv row width differs from header");
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << '\n';
    }
    finish(out, path);
}

} // namespace se3ham
