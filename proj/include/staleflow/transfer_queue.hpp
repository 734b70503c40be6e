// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

// One readiness-event stream. Every subscription gets its own stream: events
// for samples whose field set became fully ready, in completion order, with a
// catch-up replay of samples already ready at attach time.
class EventStream {
 public:
  virtual ~EventStream() = default;
  // blocking=false: NotReady when no event is queued. Shutdown once the queue
  // is draining and the stream is exhausted.
  virtual Result<ReadyEvent> next(bool blocking) = 0;
};

// The operation contract shared by the in-process queue and the TCP client.
class Bus {
 public:
  virtual ~Bus() = default;

  virtual Result<PutAck> put_field(const SampleMeta& meta, const FieldKey& key, Bytes payload,
                                   const std::vector<std::string>& expected_fields) = 0;
  virtual Status register_group(const std::string& group_id) = 0;
  virtual Result<MicroBatch> get_ready_batch(const std::string& group_id,
                                             std::vector<std::string> field_set, int batch_size,
                                             bool blocking, bool with_payload,
                                             std::optional<Step> step_filter = std::nullopt) = 0;
  virtual Result<std::unique_ptr<EventStream>> subscribe(const std::string& group_id,
                                                         std::vector<std::string> field_set) = 0;
  virtual Status mark_consumed(const std::string& group_id, BatchId batch_id) = 0;
  virtual Result<GcReport> gc_before(Step before_step) = 0;
  virtual Result<QueueStats> stats() = 0;
  virtual void shutdown() = 0;
};

// Field-addressable in-memory queue. All operations are linearizable: one
// controller mutex guards state, and blocking reads wait on a condition
// variable so writers are never starved.
class TransferQueue : public Bus {
 public:
  explicit TransferQueue(NowFn now = {});
  ~TransferQueue() override;

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

  // Ready-and-undelivered count for a group, optionally step-scoped. Drives
  // loader readiness checks without consuming anything.
  int ready_count(const std::string& group_id, const std::vector<std::string>& field_set,
                  std::optional<Step> step_filter = std::nullopt);

  // Recovery hook: returns a consumer's delivered-but-unconsumed batches to
  // the undelivered pool. The exactly-once guarantee is scoped to batches the
  // consumer acknowledged; an in-place restart provably never used these.
  std::size_t requeue_unconsumed(const std::string& group_id);

  bool draining() const;

 private:
  struct FieldRec {
    Modality modality = Modality::Scalar;
    FieldState state = FieldState::Pending;
    Bytes payload;
    std::uint64_t size_bytes = 0;
    TimePoint ready_at = 0.0;
  };
  struct SampleRec {
    SampleMeta meta;
    std::map<std::string, FieldRec> fields;
    std::set<std::string> delivered_to;
    std::set<std::string> consumed_by;
    bool all_ready() const;
  };
  struct FsIndex {
    std::vector<std::string> fields;  // sorted, unique
    // (completion time, sample id): FIFO by readiness, ties by ascending id
    std::set<std::pair<TimePoint, SampleId>> ready_order;
  };
  struct GroupRec {
    std::set<SampleId> delivered;
    std::map<BatchId, std::vector<SampleId>> outstanding;
  };
  struct SubState {
    std::string group;
    std::string sig;
    std::deque<ReadyEvent> events;
    bool closed = false;
  };
  class InProcEventStream;

  static std::string signature(const std::vector<std::string>& fields);
  FsIndex& index_for_locked(const std::vector<std::string>& sorted_fields);
  bool sample_complete_for(const SampleRec& rec, const std::vector<std::string>& fields) const;
  std::vector<std::pair<TimePoint, SampleId>> eligible_locked(const GroupRec& group,
                                                              const FsIndex& idx, int limit,
                                                              std::optional<Step> step_filter);

  NowFn now_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool draining_ = false;

  std::map<SampleId, SampleRec> samples_;
  std::map<std::string, FsIndex> indexes_;
  std::map<std::string, GroupRec> groups_;
  std::vector<std::shared_ptr<SubState>> subs_;
  BatchId next_batch_id_ = 1;

  std::uint64_t produced_ = 0;
  std::uint64_t gced_ = 0;
  std::uint64_t gced_bytes_ = 0;
  std::uint64_t bytes_stored_ = 0;
};

}  // namespace staleflow
