// SPDX-License-Identifier: Apache-2.0
#include "staleflow/weight_sync.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "json.hpp"
#include "staleflow/hash.hpp"
#include "staleflow/log.hpp"
#include "staleflow/wire.hpp"

namespace staleflow {

using nlohmann::json;

namespace {

NowFn default_now() {
  auto start = std::chrono::steady_clock::now();
  return [start] {
    auto d = std::chrono::steady_clock::now() - start;
    return std::chrono::duration<double>(d).count();
  };
}

json meta_to_json(const CheckpointMeta& m) {
  json shards = json::array();
  for (const auto& s : m.shards)
    shards.push_back(
        {{"shard_id", s.shard_id}, {"byte_length", s.byte_length}, {"checksum", s.checksum}});
  return json{{"version", m.version},
              {"shards", shards},
              {"full_checksum", m.full_checksum},
              {"created_at", m.created_at},
              {"durable", m.durable}};
}

}  // namespace

CheckpointStore::CheckpointStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path CheckpointStore::version_dir(Version v) const {
  return root_ / std::to_string(v);
}

Result<CheckpointMeta> CheckpointStore::register_checkpoint(Version version,
                                                            const std::vector<Bytes>& shards,
                                                            bool durable, TimePoint created_at) {
  std::lock_guard<std::mutex> lock(mu_);
  Version latest = metas_.empty() ? -1 : metas_.rbegin()->first;
  if (metas_.count(version) || version <= latest)
    return Result<CheckpointMeta>::err(Errc::VersionConflict,
                                       "version " + std::to_string(version) +
                                           " already registered or behind latest " +
                                           std::to_string(latest));
  CheckpointMeta meta;
  meta.version = version;
  meta.created_at = created_at;
  meta.durable = durable;
  Fnv1a64 full;
  auto dir = version_dir(version);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    return Result<CheckpointMeta>::err(Errc::IoError, "create " + dir.string() + ": " + ec.message());
  for (std::uint32_t i = 0; i < shards.size(); ++i) {
    const Bytes& payload = shards[i];
    ShardMeta sm;
    sm.shard_id = i;
    sm.byte_length = payload.size();
    sm.checksum = fnv1a64(payload);
    full.update(payload);
    meta.shards.push_back(sm);
    std::ofstream out(dir / (std::to_string(i) + ".bin"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
    if (!out)
      return Result<CheckpointMeta>::err(Errc::IoError, "failed writing shard " + std::to_string(i));
  }
  meta.full_checksum = full.digest();
  std::ofstream mf(dir / "manifest.json");
  mf << meta_to_json(meta).dump(2) << "\n";
  if (!mf) return Result<CheckpointMeta>::err(Errc::IoError, "failed writing manifest");
  metas_.emplace(version, meta);
  return meta;
}

Result<CheckpointMeta> CheckpointStore::meta(Version version) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = metas_.find(version);
  if (it == metas_.end())
    return Result<CheckpointMeta>::err(Errc::EmptyStore,
                                       "version " + std::to_string(version) + " not in store");
  return it->second;
}

Result<Bytes> CheckpointStore::read_shard(Version version, std::uint32_t shard_id) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!metas_.count(version))
      return Result<Bytes>::err(Errc::EmptyStore, "version not in store");
  }
  std::ifstream in(version_dir(version) / (std::to_string(shard_id) + ".bin"), std::ios::binary);
  if (!in) return Result<Bytes>::err(Errc::IoError, "missing shard file");
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

Result<std::vector<Bytes>> CheckpointStore::read_all_shards(Version version) const {
  auto m = meta(version);
  if (!m.ok()) return Result<std::vector<Bytes>>(m.error());
  std::vector<Bytes> out;
  for (const auto& s : m.value().shards) {
    auto b = read_shard(version, s.shard_id);
    if (!b.ok()) return Result<std::vector<Bytes>>(b.error());
    if (fnv1a64(b.value()) != s.checksum)
      return Result<std::vector<Bytes>>::err(Errc::ChecksumMismatch,
                                             "stored shard " + std::to_string(s.shard_id) +
                                                 " fails checksum");
    out.push_back(std::move(b.value()));
  }
  return out;
}

Result<Version> CheckpointStore::latest(bool durable_only) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto it = metas_.rbegin(); it != metas_.rend(); ++it)
    if (!durable_only || it->second.durable) return it->first;
  return Result<Version>::err(Errc::EmptyStore, "no checkpoint registered");
}

std::vector<Version> CheckpointStore::versions() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Version> out;
  for (const auto& [v, m] : metas_) out.push_back(v);
  return out;
}

std::vector<Version> CheckpointStore::gc_checkpoints(int keep_last) {
  if (keep_last < 1) keep_last = 1;
  std::lock_guard<std::mutex> lock(mu_);
  Version newest_durable = -1;
  for (auto it = metas_.rbegin(); it != metas_.rend(); ++it)
    if (it->second.durable) {
      newest_durable = it->first;
      break;
    }
  std::vector<Version> removed;
  while (int(metas_.size()) > keep_last) {
    auto oldest = metas_.begin();
    if (oldest->first == newest_durable) {
      // Never drop the restart anchor; try the next-oldest instead.
      auto next = std::next(oldest);
      bool dropped = false;
      while (next != metas_.end() && int(metas_.size()) > keep_last) {
        if (next->first != newest_durable) {
          removed.push_back(next->first);
          std::filesystem::remove_all(version_dir(next->first));
          next = metas_.erase(next);
          dropped = true;
        } else {
          ++next;
        }
      }
      if (!dropped) break;
      continue;
    }
    removed.push_back(oldest->first);
    std::filesystem::remove_all(version_dir(oldest->first));
    metas_.erase(oldest);
  }
  return removed;
}

Result<WeightAck> InProcessReplica::deliver(const CheckpointMeta& meta,
                                            const std::vector<Bytes>& shards) {
  if (unreachable_.load())
    return Result<WeightAck>::err(Errc::ReplicaTimeout, "replica '" + id_ + "' unreachable");
  if (shards.size() != meta.shards.size())
    return Result<WeightAck>::err(Errc::ChecksumMismatch, "shard count mismatch");
  Fnv1a64 full;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (fnv1a64(shards[i]) != meta.shards[i].checksum ||
        shards[i].size() != meta.shards[i].byte_length)
      return Result<WeightAck>::err(Errc::ChecksumMismatch,
                                    "shard " + std::to_string(i) + " fails checksum");
    full.update(shards[i]);
  }
  if (full.digest() != meta.full_checksum)
    return Result<WeightAck>::err(Errc::ChecksumMismatch, "full payload checksum mismatch");
  {
    std::lock_guard<std::mutex> lock(mu_);
    loaded_ = meta.version;
    full_checksum_ = full.digest();
  }
  return WeightAck{id_, meta.version, true, {}};
}

Version InProcessReplica::loaded_version() const {
  std::lock_guard<std::mutex> lock(mu_);
  return loaded_;
}

std::uint64_t InProcessReplica::loaded_full_checksum() const {
  std::lock_guard<std::mutex> lock(mu_);
  return full_checksum_;
}

// ---------------------------------------------------------------------------
// TCP weight transport
// ---------------------------------------------------------------------------

Result<std::unique_ptr<WeightReceiverServer>> WeightReceiverServer::start(std::string replica_id,
                                                                          std::uint16_t port) {
  auto listener = TcpListener::bind_loopback(port);
  if (!listener.ok()) return Result<std::unique_ptr<WeightReceiverServer>>(listener.error());
  std::unique_ptr<WeightReceiverServer> server(new WeightReceiverServer());
  server->replica_id_ = std::move(replica_id);
  server->listener_ = std::move(listener.value());
  server->port_ = server->listener_.port();
  server->accept_thread_ = std::thread([s = server.get()] { s->accept_loop(); });
  return Result<std::unique_ptr<WeightReceiverServer>>(std::move(server));
}

WeightReceiverServer::~WeightReceiverServer() { stop(); }

void WeightReceiverServer::stop() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) return;
  listener_.close();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
}

void WeightReceiverServer::accept_loop() {
  for (;;) {
    auto sock = listener_.accept();
    if (!sock.ok()) return;
    std::lock_guard<std::mutex> lock(workers_mu_);
    if (stopping_.load()) return;
    workers_.emplace_back([this, s = std::make_shared<TcpSocket>(std::move(sock.value()))]() mutable {
      serve(std::move(*s));
    });
  }
}

Version WeightReceiverServer::loaded_version() const {
  std::lock_guard<std::mutex> lock(mu_);
  return loaded_;
}

std::uint64_t WeightReceiverServer::loaded_full_checksum() const {
  std::lock_guard<std::mutex> lock(mu_);
  return full_checksum_;
}

void WeightReceiverServer::serve(TcpSocket sock) {
  FrameReader reader;
  auto offer = sock.recv_frame(reader);
  if (!offer.ok() || offer.value().type != MsgType::WeightOffer) {
    sock.send_frame(Frame::error(Errc::BadFrame, "expected WEIGHT_OFFER"));
    return;
  }
  Version version = 0;
  std::vector<ShardMeta> shards;
  std::uint64_t full_expected = 0;
  try {
    const json& h = offer.value().header;
    version = h.at("version").get<Version>();
    full_expected = h.at("full_checksum").get<std::uint64_t>();
    for (const auto& s : h.at("shards"))
      shards.push_back(ShardMeta{s.at("shard_id").get<std::uint32_t>(),
                                 s.at("byte_length").get<std::uint64_t>(),
                                 s.at("checksum").get<std::uint64_t>()});
  } catch (const json::exception& e) {
    sock.send_frame(Frame::error(Errc::BadFrame, std::string("malformed offer: ") + e.what()));
    return;
  }

  Fnv1a64 full;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    auto frame = sock.recv_frame(reader);
    if (!frame.ok() || frame.value().type != MsgType::WeightShard) {
      sock.send_frame(Frame::error(Errc::BadFrame, "expected WEIGHT_SHARD"));
      return;
    }
    const Bytes& payload = frame.value().payload;
    std::uint32_t shard_id = frame.value().header.value("shard_id", std::uint32_t(0));
    if (shard_id != shards[i].shard_id || payload.size() != shards[i].byte_length ||
        fnv1a64(payload) != shards[i].checksum) {
      Frame nack;
      nack.type = MsgType::WeightAck;
      nack.header = {{"replica_id", replica_id_}, {"version", version}, {"ok", false},
                     {"error", "shard " + std::to_string(shard_id) + " fails checksum"}};
      sock.send_frame(nack);
      return;
    }
    full.update(payload);
  }
  bool ok = full.digest() == full_expected;
  if (ok) {
    std::lock_guard<std::mutex> lock(mu_);
    loaded_ = version;
    full_checksum_ = full.digest();
  }
  Frame ack;
  ack.type = MsgType::WeightAck;
  ack.header = {{"replica_id", replica_id_}, {"version", version}, {"ok", ok},
                {"error", ok ? "" : "full checksum mismatch"}};
  sock.send_frame(ack);
}

Result<WeightAck> TcpReplicaEndpoint::deliver(const CheckpointMeta& meta,
                                              const std::vector<Bytes>& shards) {
  auto sock = TcpSocket::connect(host_, port_, timeout_);
  if (!sock.ok())
    return Result<WeightAck>::err(Errc::ReplicaTimeout,
                                  "replica '" + id_ + "': " + sock.error().message);
  sock.value().set_recv_timeout(timeout_);

  Frame offer;
  offer.type = MsgType::WeightOffer;
  json shard_list = json::array();
  for (const auto& s : meta.shards)
    shard_list.push_back(
        {{"shard_id", s.shard_id}, {"byte_length", s.byte_length}, {"checksum", s.checksum}});
  offer.header = {{"version", meta.version},
                  {"shards", shard_list},
                  {"full_checksum", meta.full_checksum}};
  if (auto st = sock.value().send_frame(offer); !st.ok()) return Result<WeightAck>(st.error());

  for (std::size_t i = 0; i < shards.size(); ++i) {
    Frame f;
    f.type = MsgType::WeightShard;
    f.header = {{"version", meta.version}, {"shard_id", meta.shards[i].shard_id},
                {"checksum", meta.shards[i].checksum}};
    f.payload = shards[i];
    if (auto st = sock.value().send_frame(f); !st.ok()) return Result<WeightAck>(st.error());
  }

  FrameReader reader;
  auto ack = sock.value().recv_frame(reader);
  if (!ack.ok()) return Result<WeightAck>(ack.error());
  if (ack.value().type == MsgType::Error)
    return Result<WeightAck>::err(Errc::ChecksumMismatch,
                                  ack.value().header.value("message", std::string()));
  if (ack.value().type != MsgType::WeightAck)
    return Result<WeightAck>::err(Errc::BadFrame, "expected WEIGHT_ACK");
  WeightAck out;
  out.replica_id = ack.value().header.value("replica_id", id_);
  out.version = ack.value().header.value("version", Version(-1));
  out.ok = ack.value().header.value("ok", false);
  out.error = ack.value().header.value("error", std::string());
  if (!out.ok) return Result<WeightAck>::err(Errc::ChecksumMismatch, out.error);
  return out;
}

// ---------------------------------------------------------------------------
// Coordinator
// ---------------------------------------------------------------------------

WeightSyncCoordinator::WeightSyncCoordinator(CheckpointStore& store, NowFn now)
    : store_(store), now_(now ? std::move(now) : default_now()) {}

void WeightSyncCoordinator::add_replica(std::shared_ptr<ReplicaEndpoint> replica) {
  std::lock_guard<std::mutex> lock(mu_);
  replicas_.push_back(std::move(replica));
}

Status WeightSyncCoordinator::remove_replica(const std::string& replica_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = std::find_if(replicas_.begin(), replicas_.end(),
                         [&](const auto& r) { return r->id() == replica_id; });
  if (it == replicas_.end())
    return Status::err(Errc::UnknownReplica, "replica '" + replica_id + "' not registered");
  replicas_.erase(it);
  return ok_status();
}

std::vector<std::string> WeightSyncCoordinator::replica_ids() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& r : replicas_) out.push_back(r->id());
  return out;
}

std::vector<Bytes> WeightSyncCoordinator::resplit(const std::vector<Bytes>& shards, int parts) {
  Bytes all;
  for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());
  std::vector<Bytes> out;
  if (parts < 1) parts = 1;
  std::size_t base = all.size() / std::size_t(parts);
  std::size_t extra = all.size() % std::size_t(parts);
  std::size_t off = 0;
  for (int i = 0; i < parts; ++i) {
    std::size_t len = base + (std::size_t(i) < extra ? 1 : 0);
    out.emplace_back(all.begin() + std::ptrdiff_t(off), all.begin() + std::ptrdiff_t(off + len));
    off += len;
  }
  return out;
}

Result<BarrierReport> WeightSyncCoordinator::broadcast_weights(Version version) {
  auto meta = store_.meta(version);
  if (!meta.ok()) return Result<BarrierReport>(meta.error());
  auto shards = store_.read_all_shards(version);
  if (!shards.ok()) return Result<BarrierReport>(shards.error());

  CheckpointMeta send_meta = meta.value();
  std::vector<Bytes> send_shards = std::move(shards.value());
  if (replica_shard_count_ > 0 && replica_shard_count_ != int(send_shards.size())) {
    send_shards = resplit(send_shards, replica_shard_count_);
    send_meta.shards.clear();
    for (std::uint32_t i = 0; i < send_shards.size(); ++i)
      send_meta.shards.push_back(
          ShardMeta{i, send_shards[i].size(), fnv1a64(send_shards[i])});
    // full_checksum is unchanged: resplit preserves the concatenated bytes.
  }

  std::vector<std::shared_ptr<ReplicaEndpoint>> replicas;
  {
    std::lock_guard<std::mutex> lock(mu_);
    replicas = replicas_;
  }

  BarrierReport report;
  report.version = version;
  double start = now_();
  std::vector<Result<WeightAck>> acks(replicas.size(), Result<WeightAck>(WeightAck{}));
  std::vector<std::thread> threads;
  threads.reserve(replicas.size());
  for (std::size_t i = 0; i < replicas.size(); ++i)
    threads.emplace_back([&, i] { acks[i] = replicas[i]->deliver(send_meta, send_shards); });
  for (auto& t : threads) t.join();
  report.duration = now_() - start;

  for (std::size_t i = 0; i < replicas.size(); ++i) {
    if (acks[i].ok() && acks[i].value().ok) {
      report.acked.push_back(replicas[i]->id());
      if (on_replica_version) on_replica_version(replicas[i]->id(), version);
    } else {
      report.missing.push_back(replicas[i]->id());
      if (on_replica_fault)
        on_replica_fault(replicas[i]->id(),
                         acks[i].ok() ? acks[i].value().error : acks[i].error().message);
    }
  }
  report.state = report.missing.empty() ? BarrierOutcome::Complete : BarrierOutcome::Aborted;
  if (report.state == BarrierOutcome::Aborted) {
    SF_LOG_WARN("barrier for version %lld aborted: %zu of %zu replicas acked",
                (long long)version, report.acked.size(), replicas.size());
    Result<BarrierReport> out(report);
    return out;
  }
  return report;
}

Result<Version> WeightSyncCoordinator::load_latest(const std::string& replica_id,
                                                   bool durable_only) {
  auto latest = store_.latest(durable_only);
  if (!latest.ok()) return latest;
  auto meta = store_.meta(latest.value());
  if (!meta.ok()) return Result<Version>(meta.error());
  auto shards = store_.read_all_shards(latest.value());
  if (!shards.ok()) return Result<Version>(shards.error());

  std::shared_ptr<ReplicaEndpoint> target;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& r : replicas_)
      if (r->id() == replica_id) target = r;
  }
  if (!target)
    return Result<Version>::err(Errc::UnknownReplica, "replica '" + replica_id + "' not registered");
  auto ack = target->deliver(meta.value(), shards.value());
  if (!ack.ok()) return Result<Version>(ack.error());
  if (on_replica_version) on_replica_version(replica_id, latest.value());
  return latest.value();
}

}  // namespace staleflow
