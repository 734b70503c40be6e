// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <stdexcept>

#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::Ok: return "OK";
    case Errc::DuplicateWrite: return "DUPLICATE_WRITE";
    case Errc::VersionRegression: return "VERSION_REGRESSION";
    case Errc::NotReady: return "NOT_READY";
    case Errc::Shutdown: return "SHUTDOWN";
    case Errc::UnknownBatch: return "UNKNOWN_BATCH";
    case Errc::StepStillReferenced: return "STEP_STILL_REFERENCED";
    case Errc::UnknownGroup: return "UNKNOWN_GROUP";
    case Errc::UnknownSample: return "UNKNOWN_SAMPLE";
    case Errc::StepBoundary: return "STEP_BOUNDARY";
    case Errc::NonMonotonicVersion: return "NON_MONOTONIC_VERSION";
    case Errc::UnknownReplica: return "UNKNOWN_REPLICA";
    case Errc::VersionConflict: return "VERSION_CONFLICT";
    case Errc::EmptyStore: return "EMPTY_STORE";
    case Errc::ReplicaTimeout: return "REPLICA_TIMEOUT";
    case Errc::ChecksumMismatch: return "CHECKSUM_MISMATCH";
    case Errc::UnknownRole: return "UNKNOWN_ROLE";
    case Errc::RoleNotFailed: return "ROLE_NOT_FAILED";
    case Errc::InvalidTransition: return "INVALID_TRANSITION";
    case Errc::RecoveryFailedPermanently: return "RECOVERY_FAILED_PERMANENTLY";
    case Errc::InvalidSpec: return "INVALID_SPEC";
    case Errc::ConfigError: return "CONFIG_ERROR";
    case Errc::NonDeterministicConfig: return "NON_DETERMINISTIC_CONFIG";
    case Errc::FrameTooLarge: return "FRAME_TOO_LARGE";
    case Errc::BadFrame: return "BAD_FRAME";
    case Errc::IoError: return "IO_ERROR";
    case Errc::Internal: return "INTERNAL";
  }
  return "INTERNAL";
}

Errc errc_from_name(const std::string& name) {
  for (int i = 0; i <= int(Errc::Internal); ++i) {
    Errc c = Errc(i);
    if (name == errc_name(c)) return c;
  }
  return Errc::Internal;
}

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Image: return "image";
    case Modality::Audio: return "audio";
    case Modality::Video: return "video";
    case Modality::Scalar: return "scalar";
  }
  return "scalar";
}

Modality modality_from_name(const std::string& s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  if (s == "audio") return Modality::Audio;
  if (s == "video") return Modality::Video;
  if (s == "scalar") return Modality::Scalar;
  throw std::invalid_argument("unknown modality: " + s);
}

const char* role_kind_name(RoleKind k) {
  switch (k) {
    case RoleKind::Actor: return "actor";
    case RoleKind::Rollout: return "rollout";
    case RoleKind::ActorFwd: return "actor_fwd";
    case RoleKind::Critic: return "critic";
    case RoleKind::Advantages: return "advantages";
    case RoleKind::RefLogP: return "ref_logp";
    case RoleKind::Reward: return "reward";
  }
  return "actor";
}

RoleKind role_kind_from_name(const std::string& s) {
  if (s == "actor") return RoleKind::Actor;
  if (s == "rollout") return RoleKind::Rollout;
  if (s == "actor_fwd") return RoleKind::ActorFwd;
  if (s == "critic") return RoleKind::Critic;
  if (s == "advantages") return RoleKind::Advantages;
  if (s == "ref_logp") return RoleKind::RefLogP;
  if (s == "reward") return RoleKind::Reward;
  throw std::invalid_argument("unknown role kind: " + s);
}

const char* training_mode_name(TrainingMode m) {
  switch (m) {
    case TrainingMode::OnPolicy: return "on_policy";
    case TrainingMode::NearOnPolicy: return "near_on_policy";
    case TrainingMode::FullyAsync: return "fully_async";
  }
  return "on_policy";
}

Version MicroBatch::min_producer_version() const {
  Version m = -1;
  for (Version v : producer_versions) m = (m < 0 || v < m) ? v : m;
  return m;
}

}  // namespace staleflow
