#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prunelab {

enum class ErrorKind {
  alignment,
  domain,
  single_use,
  oracle_failure,
  degenerate_step,
  spec,
  empty_network,
  degenerate_flow,
  infeasible_sparsity,
  too_small,
  training_diverged,
  missing_checkpoint,
  parse,
  schema,
  io,
  usage,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::domain: return "domain";
    case ErrorKind::single_use: return "single-use";
    case ErrorKind::oracle_failure: return "oracle-failure";
    case ErrorKind::degenerate_step: return "degenerate-step";
    case ErrorKind::spec: return "spec";
    case ErrorKind::empty_network: return "empty-network";
    case ErrorKind::degenerate_flow: return "degenerate-flow";
    case ErrorKind::infeasible_sparsity: return "infeasible-sparsity";
    case ErrorKind::too_small: return "too-small";
    case ErrorKind::training_diverged: return "training-diverged";
    case ErrorKind::missing_checkpoint: return "missing-checkpoint";
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so callers (and the CLI)
// can branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, const std::string& message)
      : Error(ErrorKind::training_diverged, message), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace prunelab
