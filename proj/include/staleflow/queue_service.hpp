// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "staleflow/tcp.hpp"
#include "staleflow/transfer_queue.hpp"

namespace staleflow {

// Serves a TransferQueue over the framed wire protocol. One thread per
// connection; a SUBSCRIBE request turns its connection into an event stream.
class QueueServer {
 public:
  // port 0 picks an ephemeral port.
  static Result<std::unique_ptr<QueueServer>> start(std::shared_ptr<TransferQueue> queue,
                                                    std::uint16_t port);
  ~QueueServer();

  std::uint16_t port() const { return port_; }
  TransferQueue& queue() { return *queue_; }
  void stop();

 private:
  QueueServer() = default;
  void accept_loop();
  void serve_connection(TcpSocket sock);
  Frame handle_request(const Frame& req);

  std::shared_ptr<TransferQueue> queue_;
  TcpListener listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

// Bus implementation that talks to a QueueServer. One connection carries the
// request/response traffic; each subscription opens its own connection.
class TcpQueueClient : public Bus {
 public:
  static Result<std::unique_ptr<TcpQueueClient>> connect(const std::string& host,
                                                         std::uint16_t port);

  Result<PutAck> put_field(const SampleMeta& meta, const FieldKey& key, Bytes payload,
                           const std::vector<std::string>& expected_fields = {}) override;
  Status register_group(const std::string& group_id) override;
  Result<MicroBatch> get_ready_batch(const std::string& group_id,
                                     std::vector<std::string> field_set, int batch_size,
                                     bool blocking, bool with_payload,
                                     std::optional<Step> step_filter = std::nullopt) override;
  Result<std::unique_ptr<EventStream>> subscribe(const std::string& group_id,
                                                 std::vector<std::string> field_set) override;
  Status mark_consumed(const std::string& group_id, BatchId batch_id) override;
  Result<GcReport> gc_before(Step before_step) override;
  Result<QueueStats> stats() override;
  void shutdown() override;

 private:
  TcpQueueClient(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}
  Result<Frame> roundtrip(const Frame& req);

  class TcpEventStream;

  std::string host_;
  std::uint16_t port_ = 0;
  std::mutex mu_;  // serializes request/response on the shared connection
  TcpSocket sock_;
  FrameReader reader_;
};

}  // namespace staleflow
