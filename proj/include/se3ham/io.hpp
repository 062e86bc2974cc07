// File formats: JSON checkpoints, JSON-lines datasets and the CSV tables the
// commands emit.
#pragma once

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "se3ham/control.hpp"
#include "se3ham/envs.hpp"
#include "se3ham/training.hpp"

namespace se3ham {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    HamiltonianModel model;
    SystemId system = SystemId::Pendulum;
    std::uint64_t seed = 0;
    int iterations = 0;
    /// Present when the writer had optimizer state to hand over.
    std::optional<AdamState> adam;
};

nlohmann::json checkpoint_to_json(const Checkpoint &ck);
/// Throws Io on malformed documents and DimMismatch when the networks do not
/// fit the named system.
Checkpoint checkpoint_from_json(const nlohmann::json &j);

void save_checkpoint(const std::string &path, const Checkpoint &ck);
Checkpoint load_checkpoint(const std::string &path);

/// One record per line: {"t":[...],"q":[[...]...],"zeta":[[...]...],"u":[...]}.
std::string record_to_line(const Record &r);
Record record_from_line(const std::string &line);

void save_dataset(const std::string &path, const Dataset &ds);
/// The system is inferred from the record dimensions.
Dataset load_dataset(const std::string &path);

void write_loss_csv(const std::string &path, const std::vector<HistoryRow> &history);
/// Appends rows to an existing file, or writes a header first when it is new.
void append_loss_csv(const std::string &path, const std::vector<HistoryRow> &history);

/// t, px, py, pz, px*, py*, pz*, tr_err, v_err, w_err, u0.., ctrl_us
void write_trace_csv(const std::string &path, const ClosedLoopResult &res);

void write_json(const std::string &path, const nlohmann::json &j);
nlohmann::json read_json(const std::string &path);

/// Writes a table with a header row; each row must match the header width.
void write_csv(const std::string &path, const std::vector<std::string> &header,
               const std::vector<std::vector<double>> &rows);

/// Shortest round-trip decimal form, so equal values always print equally.
std::string format_double(double x);

} // namespace se3ham
