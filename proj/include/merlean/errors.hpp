#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace merlean {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input bytes. byte_pos is the offset reported by the JSON parser
// (npos when unknown).
struct ParseError : Error {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  explicit ParseError(const std::string& msg, std::size_t pos = npos)
      : Error(msg), byte_pos(pos) {}
  std::size_t byte_pos;
};

// Structurally valid JSON that violates the document schema.
struct SchemaError : Error {
  using Error::Error;
};

// Dependency cycle detected; carries one witnessed cycle as an id list.
struct CycleError : Error {
  CycleError(const std::string& msg, std::vector<std::string> witness)
      : Error(msg), cycle(std::move(witness)) {}
  std::vector<std::string> cycle;
};

struct IoError : Error {
  using Error::Error;
};

// Toolchain or host problem, distinct from a failing build or statement.
struct EnvironmentError : Error {
  using Error::Error;
};

struct WorkspaceError : Error {
  using Error::Error;
};

struct GatewayError : Error {
  using Error::Error;
};

struct ReplayMissError : GatewayError {
  using GatewayError::GatewayError;
};

struct ScriptedUnderflowError : GatewayError {
  using GatewayError::GatewayError;
};

struct ExtractionError : Error {
  explicit ExtractionError(const std::string& msg, std::string reply = "")
      : Error(msg), last_reply(std::move(reply)) {}
  std::string last_reply;
};

// An engine invariant violation surfaced through data (e.g. a histogram
// event past the attempt bound).
struct DataError : Error {
  using Error::Error;
};

}  // namespace merlean
