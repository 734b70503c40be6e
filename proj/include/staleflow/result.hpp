// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace staleflow {

// Error codes shared by all services. The wire protocol transmits these as
// the stable strings returned by errc_name().
enum class Errc : std::uint16_t {
  Ok = 0,
  // transfer queue
  DuplicateWrite,
  VersionRegression,
  NotReady,
  Shutdown,
  UnknownBatch,
  StepStillReferenced,
  UnknownGroup,
  UnknownSample,
  StepBoundary,
  // staleness gate
  NonMonotonicVersion,
  UnknownReplica,
  // weight sync
  VersionConflict,
  EmptyStore,
  ReplicaTimeout,
  ChecksumMismatch,
  // health / recovery
  UnknownRole,
  RoleNotFailed,
  InvalidTransition,
  RecoveryFailedPermanently,
  // controller / config
  InvalidSpec,
  ConfigError,
  NonDeterministicConfig,
  // wire / io
  FrameTooLarge,
  BadFrame,
  IoError,
  Internal,
};

const char* errc_name(Errc c);
Errc errc_from_name(const std::string& name);

struct Error {
  Errc code = Errc::Internal;
  std::string message;
};

inline Error make_error(Errc code, std::string message) {
  return Error{code, std::move(message)};
}

// Minimal expected-style result. Ops that can fail per their contract return
// Result<T>; programming errors throw.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}  // NOLINT: implicit by design
  Result(Error e) : v_(std::move(e)) {}      // NOLINT

  static Result err(Errc code, std::string message = {}) {
    return Result(Error{code, std::move(message)});
  }

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() {
    if (!ok()) throw std::runtime_error("Result::value on error: " + error().message);
    return std::get<T>(v_);
  }
  const T& value() const {
    if (!ok()) throw std::runtime_error("Result::value on error: " + error().message);
    return std::get<T>(v_);
  }
  T&& take() { return std::move(value()); }

  const Error& error() const { return std::get<Error>(v_); }
  Errc code() const { return ok() ? Errc::Ok : error().code; }

 private:
  std::variant<T, Error> v_;
};

struct Unit {};
using Status = Result<Unit>;

inline Status ok_status() { return Status(Unit{}); }

}  // namespace staleflow
