// SPDX-License-Identifier: Apache-2.0
#include "staleflow/queue_service.hpp"

namespace staleflow {

using nlohmann::json;

namespace {

Error error_from_frame(const Frame& f) {
  Error e;
  e.code = errc_from_name(f.header.value("code", std::string("INTERNAL")));
  e.message = f.header.value("message", std::string());
  return e;
}

}  // namespace

Result<std::unique_ptr<TcpQueueClient>> TcpQueueClient::connect(const std::string& host,
                                                                std::uint16_t port) {
  auto sock = TcpSocket::connect(host, port);
  if (!sock.ok()) return Result<std::unique_ptr<TcpQueueClient>>(sock.error());
  std::unique_ptr<TcpQueueClient> client(new TcpQueueClient(host, port));
  client->sock_ = std::move(sock.value());
  return Result<std::unique_ptr<TcpQueueClient>>(std::move(client));
}

Result<Frame> TcpQueueClient::roundtrip(const Frame& req) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!sock_.valid()) return Result<Frame>::err(Errc::IoError, "client closed");
  auto sent = sock_.send_frame(req);
  if (!sent.ok()) return Result<Frame>(sent.error());
  return sock_.recv_frame(reader_);
}

Result<PutAck> TcpQueueClient::put_field(const SampleMeta& meta, const FieldKey& key,
                                         Bytes payload,
                                         const std::vector<std::string>& expected_fields) {
  Frame req;
  req.type = MsgType::PutField;
  req.header = {{"sample_id", meta.sample_id},
                {"global_step", meta.global_step},
                {"producer_version", meta.producer_version},
                {"micro_batch_id", meta.micro_batch_id},
                {"field", key.name},
                {"modality", modality_name(key.modality)},
                {"expected_fields", expected_fields}};
  req.payload = std::move(payload);
  auto resp = roundtrip(req);
  if (!resp.ok()) return Result<PutAck>(resp.error());
  if (resp.value().type == MsgType::Error) return Result<PutAck>(error_from_frame(resp.value()));
  return PutAck{resp.value().header.value("ready_fields", 0)};
}

Status TcpQueueClient::register_group(const std::string& group_id) {
  // Registration happens server-side on first use; issue a stats round-trip so
  // connectivity problems surface here.
  (void)group_id;
  auto st = stats();
  if (!st.ok()) return Status(st.error());
  return ok_status();
}

Result<MicroBatch> TcpQueueClient::get_ready_batch(const std::string& group_id,
                                                   std::vector<std::string> field_set,
                                                   int batch_size, bool blocking,
                                                   bool with_payload,
                                                   std::optional<Step> step_filter) {
  Frame req;
  req.type = MsgType::GetBatch;
  req.header = {{"group_id", group_id},       {"field_set", field_set},
                {"batch_size", batch_size},   {"blocking", blocking},
                {"with_payload", with_payload}};
  if (step_filter) req.header["step"] = *step_filter;
  auto resp = roundtrip(req);
  if (!resp.ok()) return Result<MicroBatch>(resp.error());
  const Frame& f = resp.value();
  if (f.type == MsgType::Error) return Result<MicroBatch>(error_from_frame(f));
  MicroBatch b;
  try {
    b.batch_id = f.header.at("batch_id").get<BatchId>();
    b.sample_ids = f.header.at("sample_ids").get<std::vector<SampleId>>();
    b.producer_versions = f.header.at("producer_versions").get<std::vector<Version>>();
    b.global_steps = f.header.at("global_steps").get<std::vector<Step>>();
    b.field_set = f.header.at("field_set").get<std::vector<std::string>>();
    const auto& lens = f.header.at("payload_lens");
    std::size_t off = 0;
    for (const auto& row : lens) {
      std::vector<Bytes> out_row;
      for (const auto& len : row) {
        std::size_t n = len.get<std::size_t>();
        if (off + n > f.payload.size())
          return Result<MicroBatch>::err(Errc::BadFrame, "payload shorter than declared");
        out_row.emplace_back(f.payload.begin() + std::ptrdiff_t(off),
                             f.payload.begin() + std::ptrdiff_t(off + n));
        off += n;
      }
      b.payloads.push_back(std::move(out_row));
    }
  } catch (const json::exception& e) {
    return Result<MicroBatch>::err(Errc::BadFrame, std::string("malformed response: ") + e.what());
  }
  return b;
}

class TcpQueueClient::TcpEventStream : public EventStream {
 public:
  TcpEventStream(TcpSocket sock) : sock_(std::move(sock)) {}
  Result<ReadyEvent> next(bool blocking) override {
    if (!blocking) {
      // The TCP stream is inherently push-based; non-blocking polls use a
      // short receive timeout.
      sock_.set_recv_timeout(0.01);
    } else {
      sock_.set_recv_timeout(0.0);  // no timeout
    }
    auto frame = sock_.recv_frame(reader_);
    if (!frame.ok()) {
      if (frame.error().code == Errc::ReplicaTimeout)
        return Result<ReadyEvent>::err(Errc::NotReady, "no event within poll window");
      return Result<ReadyEvent>(frame.error());
    }
    const Frame& f = frame.value();
    if (f.type == MsgType::Error) return Result<ReadyEvent>(error_from_frame(f));
    if (f.type != MsgType::Event)
      return Result<ReadyEvent>::err(Errc::BadFrame, "expected EVENT frame");
    ReadyEvent ev;
    ev.sample_id = f.header.value("sample_id", SampleId(0));
    ev.producer_version = f.header.value("producer_version", Version(0));
    ev.global_step = f.header.value("global_step", Step(0));
    ev.ready_at = f.header.value("ready_at", 0.0);
    return ev;
  }

 private:
  TcpSocket sock_;
  FrameReader reader_;
};

Result<std::unique_ptr<EventStream>> TcpQueueClient::subscribe(
    const std::string& group_id, std::vector<std::string> field_set) {
  auto sock = TcpSocket::connect(host_, port_);
  if (!sock.ok()) return Result<std::unique_ptr<EventStream>>(sock.error());
  Frame req;
  req.type = MsgType::Subscribe;
  req.header = {{"group_id", group_id}, {"field_set", field_set}};
  auto sent = sock.value().send_frame(req);
  if (!sent.ok()) return Result<std::unique_ptr<EventStream>>(sent.error());
  std::unique_ptr<EventStream> stream =
      std::make_unique<TcpEventStream>(std::move(sock.value()));
  return Result<std::unique_ptr<EventStream>>(std::move(stream));
}

Status TcpQueueClient::mark_consumed(const std::string& group_id, BatchId batch_id) {
  Frame req;
  req.type = MsgType::MarkConsumed;
  req.header = {{"group_id", group_id}, {"batch_id", batch_id}};
  auto resp = roundtrip(req);
  if (!resp.ok()) return Status(resp.error());
  if (resp.value().type == MsgType::Error) return Status(error_from_frame(resp.value()));
  return ok_status();
}

Result<GcReport> TcpQueueClient::gc_before(Step before_step) {
  Frame req;
  req.type = MsgType::Gc;
  req.header = {{"before_step", before_step}};
  auto resp = roundtrip(req);
  if (!resp.ok()) return Result<GcReport>(resp.error());
  if (resp.value().type == MsgType::Error) return Result<GcReport>(error_from_frame(resp.value()));
  GcReport r;
  r.freed_samples = resp.value().header.value("freed_samples", std::uint64_t(0));
  r.freed_bytes = resp.value().header.value("freed_bytes", std::uint64_t(0));
  return r;
}

Result<QueueStats> TcpQueueClient::stats() {
  Frame req;
  req.type = MsgType::Stats;
  req.header = json::object();
  auto resp = roundtrip(req);
  if (!resp.ok()) return Result<QueueStats>(resp.error());
  if (resp.value().type == MsgType::Error)
    return Result<QueueStats>(error_from_frame(resp.value()));
  QueueStats s;
  try {
    const json& j = resp.value().header.at("stats");
    for (const auto& [k, v] : j.at("per_step_counts").items())
      s.per_step_counts[std::stoll(k)] = v.get<std::uint64_t>();
    for (const auto& [k, v] : j.at("per_field_ready").items())
      s.per_field_ready[k] = v.get<std::uint64_t>();
    s.bytes_stored = j.value("bytes_stored", std::uint64_t(0));
    s.oldest_producer_version = j.value("oldest_producer_version", Version(-1));
    s.produced = j.value("produced", std::uint64_t(0));
    s.delivered_retained = j.value("delivered_retained", std::uint64_t(0));
    s.ready_undelivered = j.value("ready_undelivered", std::uint64_t(0));
    s.pending = j.value("pending", std::uint64_t(0));
    s.gced = j.value("gced", std::uint64_t(0));
    s.gced_bytes = j.value("gced_bytes", std::uint64_t(0));
  } catch (const json::exception& e) {
    return Result<QueueStats>::err(Errc::BadFrame, std::string("malformed stats: ") + e.what());
  }
  return s;
}

void TcpQueueClient::shutdown() {
  std::lock_guard<std::mutex> lock(mu_);
  sock_.close();
}

}  // namespace staleflow
