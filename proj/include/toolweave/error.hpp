#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace toolweave {

enum class ErrorCode {
  // schema ingest
  MalformedRecord,
  EmptyToolName,
  DuplicateArgumentName,
  DuplicatePayloadField,
  DuplicateToolId,
  DuplicateDocId,
  EmptyAfterNormalization,
  NotEnoughRecords,
  UnknownLevel,
  // dependency extraction
  TooFewTools,
  InvalidConfig,
  // graph
  UnknownToolInDependency,
  UnknownNode,
  EmptySeeds,
  InvalidSeeds,
  UnknownSeedNode,
  // retrieval
  WrongRelation,
  EmptyText,
  DimsMismatch,
  DuplicateEntry,
  // planning
  EmptySubgraph,
  GenerationRejected,
  StoreWriteError,
  // evaluation
  JudgeProtocolError,
  // gateway
  MissingFixture,
  ProviderHttpError,
  Timeout,
  FingerprintCollision,
  GatewayError,
  // synthetic corpus
  InfeasibleSpec,
  // cli / io
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyToolName: return "EmptyToolName";
    case ErrorCode::DuplicateArgumentName: return "DuplicateArgumentName";
    case ErrorCode::DuplicatePayloadField: return "DuplicatePayloadField";
    case ErrorCode::DuplicateToolId: return "DuplicateToolId";
    case ErrorCode::DuplicateDocId: return "DuplicateDocId";
    case ErrorCode::EmptyAfterNormalization: return "EmptyAfterNormalization";
    case ErrorCode::NotEnoughRecords: return "NotEnoughRecords";
    case ErrorCode::UnknownLevel: return "UnknownLevel";
    case ErrorCode::TooFewTools: return "TooFewTools";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownToolInDependency: return "UnknownToolInDependency";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::EmptySeeds: return "EmptySeeds";
    case ErrorCode::InvalidSeeds: return "InvalidSeeds";
    case ErrorCode::UnknownSeedNode: return "UnknownSeedNode";
    case ErrorCode::WrongRelation: return "WrongRelation";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DimsMismatch: return "DimsMismatch";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::EmptySubgraph: return "EmptySubgraph";
    case ErrorCode::GenerationRejected: return "GenerationRejected";
    case ErrorCode::StoreWriteError: return "StoreWriteError";
    case ErrorCode::JudgeProtocolError: return "JudgeProtocolError";
    case ErrorCode::MissingFixture: return "MissingFixture";
    case ErrorCode::ProviderHttpError: return "ProviderHttpError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::FingerprintCollision: return "FingerprintCollision";
    case ErrorCode::GatewayError: return "GatewayError";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Gateway and IO failures map to CLI exit code 2; everything else is a
/// validation failure (exit code 1).
inline bool is_gateway_or_io(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFixture:
    case ErrorCode::ProviderHttpError:
    case ErrorCode::Timeout:
    case ErrorCode::GatewayError:
    case ErrorCode::IoError:
    case ErrorCode::StoreWriteError:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// what() without the code prefix, for re-wrapping with more context.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace toolweave
