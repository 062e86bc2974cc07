#pragma once

#include <stdexcept>
#include <string>

namespace se3ham {

enum class ErrorCode {
    NotSkew,
    NotRotation,
    Degenerate,
    DimMismatch,
    ShapeMismatch,
    RankDeficient,
    SingularMass,
    TapeOverflow,
    NonFinite,
    Divergence,
    DegenerateThrust,
    GimbalDegenerate,
    Config,
    Io,
};

inline const char *error_name(ErrorCode c) {
    switch (c) {
    case ErrorCode::NotSkew: return "NotSkew";
    case ErrorCode::NotRotation: return "NotRotation";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularMass: return "SingularMass";
    case ErrorCode::TapeOverflow: return "TapeOverflow";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::DegenerateThrust: return "DegenerateThrust";
    case ErrorCode::GimbalDegenerate: return "GimbalDegenerate";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string &what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

} // namespace se3ham
