// SPDX-License-Identifier: Apache-2.0
#include "staleflow/queue_service.hpp"

#include "staleflow/log.hpp"

namespace staleflow {

using nlohmann::json;

Result<std::unique_ptr<QueueServer>> QueueServer::start(std::shared_ptr<TransferQueue> queue,
                                                        std::uint16_t port) {
  auto listener = TcpListener::bind_loopback(port);
  if (!listener.ok()) return Result<std::unique_ptr<QueueServer>>(listener.error());
  std::unique_ptr<QueueServer> server(new QueueServer());
  server->queue_ = std::move(queue);
  server->listener_ = std::move(listener.value());
  server->port_ = server->listener_.port();
  server->accept_thread_ = std::thread([s = server.get()] { s->accept_loop(); });
  SF_LOG_INFO("queue server listening on 127.0.0.1:%u", unsigned(server->port_));
  return Result<std::unique_ptr<QueueServer>>(std::move(server));
}

QueueServer::~QueueServer() { stop(); }

void QueueServer::stop() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) return;
  queue_->shutdown();  // wake blocked readers
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

void QueueServer::accept_loop() {
  for (;;) {
    auto sock = listener_.accept();
    if (!sock.ok()) return;  // listener closed
    std::lock_guard<std::mutex> lock(workers_mu_);
    if (stopping_.load()) return;
    workers_.emplace_back(
        [this, s = std::make_shared<TcpSocket>(std::move(sock.value()))]() mutable {
          serve_connection(std::move(*s));
        });
  }
}

namespace {

Frame error_frame(const Error& e) { return Frame::error(e.code, e.message); }

json stats_to_json(const QueueStats& s) {
  json per_step = json::object();
  for (const auto& [step, n] : s.per_step_counts) per_step[std::to_string(step)] = n;
  json per_field = json::object();
  for (const auto& [f, n] : s.per_field_ready) per_field[f] = n;
  return json{{"per_step_counts", per_step},
              {"per_field_ready", per_field},
              {"bytes_stored", s.bytes_stored},
              {"oldest_producer_version", s.oldest_producer_version},
              {"produced", s.produced},
              {"delivered_retained", s.delivered_retained},
              {"ready_undelivered", s.ready_undelivered},
              {"pending", s.pending},
              {"gced", s.gced},
              {"gced_bytes", s.gced_bytes}};
}

}  // namespace

Frame QueueServer::handle_request(const Frame& req) {
  const json& h = req.header;
  try {
    switch (req.type) {
      case MsgType::PutField: {
        SampleMeta meta;
        meta.sample_id = h.at("sample_id").get<SampleId>();
        meta.global_step = h.value("global_step", Step(0));
        meta.producer_version = h.at("producer_version").get<Version>();
        meta.micro_batch_id = h.value("micro_batch_id", std::string());
        FieldKey key{h.at("field").get<std::string>(),
                     modality_from_name(h.value("modality", std::string("scalar")))};
        std::vector<std::string> expected = h.value("expected_fields", std::vector<std::string>{});
        auto ack = queue_->put_field(meta, key, req.payload, expected);
        if (!ack.ok()) return error_frame(ack.error());
        Frame resp;
        resp.type = MsgType::PutField;
        resp.header = {{"ok", true}, {"ready_fields", ack.value().ready_fields}};
        return resp;
      }
      case MsgType::GetBatch: {
        std::string group = h.at("group_id").get<std::string>();
        queue_->register_group(group);
        std::optional<Step> step;
        if (h.contains("step") && !h.at("step").is_null()) step = h.at("step").get<Step>();
        auto batch = queue_->get_ready_batch(
            group, h.at("field_set").get<std::vector<std::string>>(),
            h.at("batch_size").get<int>(), h.value("blocking", false),
            h.value("with_payload", true), step);
        if (!batch.ok()) return error_frame(batch.error());
        const MicroBatch& b = batch.value();
        Frame resp;
        resp.type = MsgType::GetBatch;
        json lens = json::array();
        for (const auto& row : b.payloads) {
          json r = json::array();
          for (const auto& bytes : row) {
            r.push_back(bytes.size());
            resp.payload.insert(resp.payload.end(), bytes.begin(), bytes.end());
          }
          lens.push_back(std::move(r));
        }
        resp.header = {{"ok", true},
                       {"batch_id", b.batch_id},
                       {"sample_ids", b.sample_ids},
                       {"producer_versions", b.producer_versions},
                       {"global_steps", b.global_steps},
                       {"field_set", b.field_set},
                       {"payload_lens", lens}};
        return resp;
      }
      case MsgType::MarkConsumed: {
        std::string group = h.at("group_id").get<std::string>();
        auto st = queue_->mark_consumed(group, h.at("batch_id").get<BatchId>());
        if (!st.ok()) return error_frame(st.error());
        Frame resp;
        resp.type = MsgType::MarkConsumed;
        resp.header = {{"ok", true}};
        return resp;
      }
      case MsgType::Stats: {
        auto st = queue_->stats();
        if (!st.ok()) return error_frame(st.error());
        Frame resp;
        resp.type = MsgType::Stats;
        resp.header = {{"ok", true}, {"stats", stats_to_json(st.value())}};
        return resp;
      }
      case MsgType::Gc: {
        auto report = queue_->gc_before(h.at("before_step").get<Step>());
        if (!report.ok()) return error_frame(report.error());
        Frame resp;
        resp.type = MsgType::Gc;
        resp.header = {{"ok", true},
                       {"freed_samples", report.value().freed_samples},
                       {"freed_bytes", report.value().freed_bytes}};
        return resp;
      }
      default:
        return Frame::error(Errc::BadFrame, "unexpected message type on request channel");
    }
  } catch (const json::exception& e) {
    return Frame::error(Errc::BadFrame, std::string("malformed header: ") + e.what());
  } catch (const std::exception& e) {
    return Frame::error(Errc::Internal, e.what());
  }
}

void QueueServer::serve_connection(TcpSocket sock) {
  FrameReader reader;
  for (;;) {
    auto req = sock.recv_frame(reader);
    if (!req.ok()) {
      // Protocol violations get a final ERROR frame; disconnects just end the session.
      if (req.error().code == Errc::BadFrame || req.error().code == Errc::FrameTooLarge)
        sock.send_frame(error_frame(req.error()));
      return;
    }
    if (req.value().type == MsgType::Subscribe) {
      // The connection becomes a one-way event stream.
      std::string group;
      std::vector<std::string> fields;
      try {
        group = req.value().header.at("group_id").get<std::string>();
        fields = req.value().header.at("field_set").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        sock.send_frame(Frame::error(Errc::BadFrame, std::string("malformed header: ") + e.what()));
        return;
      }
      queue_->register_group(group);
      auto stream = queue_->subscribe(group, fields);
      if (!stream.ok()) {
        sock.send_frame(error_frame(stream.error()));
        return;
      }
      for (;;) {
        auto ev = stream.value()->next(true);
        if (!ev.ok()) {
          sock.send_frame(error_frame(ev.error()));
          return;
        }
        Frame f;
        f.type = MsgType::Event;
        f.header = {{"sample_id", ev.value().sample_id},
                    {"producer_version", ev.value().producer_version},
                    {"global_step", ev.value().global_step},
                    {"ready_at", ev.value().ready_at}};
        if (!sock.send_frame(f).ok()) return;  // subscriber went away
      }
    }
    Frame resp = handle_request(req.value());
    if (!sock.send_frame(resp).ok()) return;
  }
}

}  // namespace staleflow
