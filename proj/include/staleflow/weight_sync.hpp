// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "staleflow/result.hpp"
#include "staleflow/tcp.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

struct ShardMeta {
  std::uint32_t shard_id = 0;
  std::uint64_t byte_length = 0;
  std::uint64_t checksum = 0;  // FNV-1a 64 over the exact payload bytes
};

struct CheckpointMeta {
  Version version = 0;
  std::vector<ShardMeta> shards;
  std::uint64_t full_checksum = 0;  // over the concatenated shard payloads
  TimePoint created_at = 0.0;
  // Durable checkpoints are the restart tier; non-durable registrations exist
  // only so every published version can be broadcast.
  bool durable = true;
};

// Directory-backed checkpoint store: <root>/<version>/<shard_id>.bin plus
// <root>/<version>/manifest.json.
class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path root);

  Result<CheckpointMeta> register_checkpoint(Version version, const std::vector<Bytes>& shards,
                                             bool durable = true, TimePoint created_at = 0.0);
  Result<CheckpointMeta> meta(Version version) const;
  Result<Bytes> read_shard(Version version, std::uint32_t shard_id) const;
  Result<std::vector<Bytes>> read_all_shards(Version version) const;
  Result<Version> latest(bool durable_only = false) const;
  std::vector<Version> versions() const;
  // Keeps the newest keep_last versions; the newest durable version is always
  // retained so a global restart has somewhere to go.
  std::vector<Version> gc_checkpoints(int keep_last);

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path version_dir(Version v) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<Version, CheckpointMeta> metas_;
};

struct WeightAck {
  std::string replica_id;
  Version version = 0;
  bool ok = false;
  std::string error;
};

// A rollout replica's receiving side, behind either transport.
class ReplicaEndpoint {
 public:
  virtual ~ReplicaEndpoint() = default;
  virtual const std::string& id() const = 0;
  virtual Result<WeightAck> deliver(const CheckpointMeta& meta,
                                    const std::vector<Bytes>& shards) = 0;
};

// In-process endpoint: verifies checksums and records the loaded version.
class InProcessReplica : public ReplicaEndpoint {
 public:
  explicit InProcessReplica(std::string id) : id_(std::move(id)) {}

  const std::string& id() const override { return id_; }
  Result<WeightAck> deliver(const CheckpointMeta& meta, const std::vector<Bytes>& shards) override;

  Version loaded_version() const;
  std::uint64_t loaded_full_checksum() const;
  // Fault injection: when set, deliveries fail as if the replica were down.
  void set_unreachable(bool v) { unreachable_ = v; }

 private:
  std::string id_;
  std::atomic<bool> unreachable_{false};
  mutable std::mutex mu_;
  Version loaded_ = -1;
  std::uint64_t full_checksum_ = 0;
};

// Replica-side TCP receiver: accepts OFFER + SHARD frames, verifies, ACKs.
class WeightReceiverServer {
 public:
  static Result<std::unique_ptr<WeightReceiverServer>> start(std::string replica_id,
                                                             std::uint16_t port);
  ~WeightReceiverServer();

  std::uint16_t port() const { return port_; }
  Version loaded_version() const;
  std::uint64_t loaded_full_checksum() const;
  void stop();

 private:
  WeightReceiverServer() = default;
  void accept_loop();
  void serve(TcpSocket sock);

  std::string replica_id_;
  TcpListener listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  mutable std::mutex mu_;
  Version loaded_ = -1;
  std::uint64_t full_checksum_ = 0;
};

// Coordinator-side TCP endpoint speaking to a WeightReceiverServer.
class TcpReplicaEndpoint : public ReplicaEndpoint {
 public:
  TcpReplicaEndpoint(std::string id, std::string host, std::uint16_t port, double timeout_sec = 5.0)
      : id_(std::move(id)), host_(std::move(host)), port_(port), timeout_(timeout_sec) {}

  const std::string& id() const override { return id_; }
  Result<WeightAck> deliver(const CheckpointMeta& meta, const std::vector<Bytes>& shards) override;

 private:
  std::string id_;
  std::string host_;
  std::uint16_t port_;
  double timeout_;
};

enum class BarrierOutcome : std::uint8_t { Open, Complete, Aborted };

struct BarrierReport {
  Version version = 0;
  BarrierOutcome state = BarrierOutcome::Open;
  std::vector<std::string> acked;
  std::vector<std::string> missing;
  double duration = 0.0;
};

// Registers versions, runs one synchronization barrier at a time, and pushes
// weight payloads to every registered replica.
class WeightSyncCoordinator {
 public:
  WeightSyncCoordinator(CheckpointStore& store, NowFn now = {});

  void add_replica(std::shared_ptr<ReplicaEndpoint> replica);
  Status remove_replica(const std::string& replica_id);
  std::vector<std::string> replica_ids() const;

  // Barrier Complete iff every registered replica verified and acked.
  Result<BarrierReport> broadcast_weights(Version version);
  // Sends the latest registered version to one replica (scale-out, restarts).
  Result<Version> load_latest(const std::string& replica_id, bool durable_only = false);

  // Concatenate-and-resplit for shard-count mismatch between trainer and
  // replica sides. Reassembling the parts always yields the original bytes.
  static std::vector<Bytes> resplit(const std::vector<Bytes>& shards, int parts);

  // Hooks into the version clock and health store.
  std::function<void(const std::string&, Version)> on_replica_version;
  std::function<void(const std::string&, const std::string&)> on_replica_fault;

  // When >0, deliveries to replicas run resplit into this many parts.
  void set_replica_shard_count(int n) { replica_shard_count_ = n; }

 private:
  CheckpointStore& store_;
  NowFn now_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<ReplicaEndpoint>> replicas_;
  int replica_shard_count_ = 0;
};

}  // namespace staleflow
