// SPDX-License-Identifier: Apache-2.0
#include "staleflow/transfer_queue.hpp"

#include <algorithm>
#include <chrono>

namespace staleflow {

namespace {

NowFn default_now() {
  auto start = std::chrono::steady_clock::now();
  return [start] {
    auto d = std::chrono::steady_clock::now() - start;
    return std::chrono::duration<double>(d).count();
  };
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

bool TransferQueue::SampleRec::all_ready() const {
  for (const auto& [name, rec] : fields)
    if (rec.state != FieldState::Ready) return false;
  return true;
}

class TransferQueue::InProcEventStream : public EventStream {
 public:
  InProcEventStream(TransferQueue* q, std::shared_ptr<SubState> sub) : q_(q), sub_(std::move(sub)) {}
  ~InProcEventStream() override {
    std::lock_guard<std::mutex> lock(q_->mu_);
    sub_->closed = true;
  }
  Result<ReadyEvent> next(bool blocking) override {
    std::unique_lock<std::mutex> lock(q_->mu_);
    for (;;) {
      if (!sub_->events.empty()) {
        ReadyEvent ev = sub_->events.front();
        sub_->events.pop_front();
        return ev;
      }
      if (q_->draining_) return Result<ReadyEvent>::err(Errc::Shutdown, "queue draining");
      if (!blocking) return Result<ReadyEvent>::err(Errc::NotReady, "no event queued");
      q_->cv_.wait(lock);
    }
  }

 private:
  TransferQueue* q_;
  std::shared_ptr<SubState> sub_;
};

TransferQueue::TransferQueue(NowFn now) : now_(now ? std::move(now) : default_now()) {}

TransferQueue::~TransferQueue() { shutdown(); }

std::string TransferQueue::signature(const std::vector<std::string>& fields) {
  std::string sig;
  for (const auto& f : fields) {
    sig += f;
    sig += '\x1f';
  }
  return sig;
}

bool TransferQueue::sample_complete_for(const SampleRec& rec,
                                        const std::vector<std::string>& fields) const {
  for (const auto& f : fields) {
    auto it = rec.fields.find(f);
    if (it == rec.fields.end() || it->second.state != FieldState::Ready) return false;
  }
  return true;
}

TransferQueue::FsIndex& TransferQueue::index_for_locked(
    const std::vector<std::string>& sorted_fields) {
  std::string sig = signature(sorted_fields);
  auto it = indexes_.find(sig);
  if (it != indexes_.end()) return it->second;
  // Lazily built: seed with samples that already satisfy the field set.
  FsIndex idx;
  idx.fields = sorted_fields;
  for (const auto& [id, rec] : samples_) {
    if (!sample_complete_for(rec, sorted_fields)) continue;
    TimePoint completed = 0.0;
    for (const auto& f : sorted_fields) completed = std::max(completed, rec.fields.at(f).ready_at);
    idx.ready_order.emplace(completed, id);
  }
  return indexes_.emplace(sig, std::move(idx)).first->second;
}

Result<PutAck> TransferQueue::put_field(const SampleMeta& meta, const FieldKey& key, Bytes payload,
                                        const std::vector<std::string>& expected_fields) {
  std::unique_lock<std::mutex> lock(mu_);
  if (draining_) return Result<PutAck>::err(Errc::Shutdown, "queue draining");
  if (key.name.empty()) return Result<PutAck>::err(Errc::BadFrame, "field name must be nonempty");
  if (meta.producer_version < 0)
    return Result<PutAck>::err(Errc::VersionRegression, "producer_version must be >= 0");

  auto [sit, inserted] = samples_.try_emplace(meta.sample_id);
  SampleRec& rec = sit->second;
  if (inserted) {
    rec.meta = meta;
    for (const auto& f : expected_fields) rec.fields.try_emplace(f);  // Pending placeholders
    ++produced_;
  } else {
    if (meta.producer_version < rec.meta.producer_version)
      return Result<PutAck>::err(
          Errc::VersionRegression,
          "producer_version " + std::to_string(meta.producer_version) + " behind recorded " +
              std::to_string(rec.meta.producer_version));
    if (meta.producer_version > rec.meta.producer_version)
      return Result<PutAck>::err(Errc::VersionRegression,
                                 "producer_version is immutable after sample creation");
  }

  auto [fit, field_new] = rec.fields.try_emplace(key.name);
  FieldRec& frec = fit->second;
  if (!field_new && frec.state == FieldState::Ready)
    return Result<PutAck>::err(Errc::DuplicateWrite,
                               "field '" + key.name + "' already written for sample " +
                                   std::to_string(meta.sample_id));
  TimePoint now = now_();
  frec.modality = key.modality;  // fixed at first write
  frec.state = FieldState::Ready;
  frec.size_bytes = payload.size();
  frec.ready_at = now;
  bytes_stored_ += payload.size();
  frec.payload = std::move(payload);

  int ready = 0;
  for (const auto& [name, f] : rec.fields)
    if (f.state == FieldState::Ready) ++ready;

  // Update every index whose field set this write may have completed.
  for (auto& [sig, idx] : indexes_) {
    if (std::find(idx.fields.begin(), idx.fields.end(), key.name) == idx.fields.end()) continue;
    if (!sample_complete_for(rec, idx.fields)) continue;
    idx.ready_order.emplace(now, meta.sample_id);
    for (auto& sub : subs_) {
      if (sub->closed || sub->sig != sig) continue;
      sub->events.push_back(
          ReadyEvent{meta.sample_id, rec.meta.producer_version, rec.meta.global_step, now});
    }
  }
  cv_.notify_all();
  return PutAck{ready};
}

Status TransferQueue::register_group(const std::string& group_id) {
  std::lock_guard<std::mutex> lock(mu_);
  groups_.try_emplace(group_id);
  return ok_status();
}

std::vector<std::pair<TimePoint, SampleId>> TransferQueue::eligible_locked(
    const GroupRec& group, const FsIndex& idx, int limit, std::optional<Step> step_filter) {
  std::vector<std::pair<TimePoint, SampleId>> out;
  for (const auto& entry : idx.ready_order) {
    if (int(out.size()) >= limit) break;
    if (group.delivered.count(entry.second)) continue;
    if (step_filter) {
      auto sit = samples_.find(entry.second);
      if (sit == samples_.end() || sit->second.meta.global_step != *step_filter) continue;
    }
    out.push_back(entry);
  }
  return out;
}

Result<MicroBatch> TransferQueue::get_ready_batch(const std::string& group_id,
                                                  std::vector<std::string> field_set,
                                                  int batch_size, bool blocking, bool with_payload,
                                                  std::optional<Step> step_filter) {
  if (batch_size < 1)
    return Result<MicroBatch>::err(Errc::BadFrame, "batch_size must be >= 1");
  field_set = sorted_unique(std::move(field_set));
  std::unique_lock<std::mutex> lock(mu_);
  auto git = groups_.find(group_id);
  if (git == groups_.end())
    return Result<MicroBatch>::err(Errc::UnknownGroup, "group '" + group_id + "' not registered");

  for (;;) {
    if (draining_) return Result<MicroBatch>::err(Errc::Shutdown, "queue draining");
    FsIndex& idx = index_for_locked(field_set);
    auto picked = eligible_locked(git->second, idx, batch_size, step_filter);
    if (int(picked.size()) >= batch_size) {
      MicroBatch batch;
      batch.batch_id = next_batch_id_++;
      batch.field_set = field_set;
      for (const auto& [t, id] : picked) {
        const SampleRec& rec = samples_.at(id);
        batch.sample_ids.push_back(id);
        batch.producer_versions.push_back(rec.meta.producer_version);
        batch.global_steps.push_back(rec.meta.global_step);
        if (with_payload) {
          std::vector<Bytes> row;
          row.reserve(field_set.size());
          for (const auto& f : field_set) row.push_back(rec.fields.at(f).payload);
          batch.payloads.push_back(std::move(row));
        }
        git->second.delivered.insert(id);
        samples_.at(id).delivered_to.insert(group_id);
      }
      git->second.outstanding.emplace(batch.batch_id, batch.sample_ids);
      return batch;
    }
    if (!blocking)
      return Result<MicroBatch>::err(Errc::NotReady,
                                     "only " + std::to_string(picked.size()) + " of " +
                                         std::to_string(batch_size) + " samples ready");
    cv_.wait(lock);
  }
}

Result<std::unique_ptr<EventStream>> TransferQueue::subscribe(const std::string& group_id,
                                                              std::vector<std::string> field_set) {
  field_set = sorted_unique(std::move(field_set));
  std::lock_guard<std::mutex> lock(mu_);
  if (draining_)
    return Result<std::unique_ptr<EventStream>>::err(Errc::Shutdown, "queue draining");
  if (!groups_.count(group_id))
    return Result<std::unique_ptr<EventStream>>::err(Errc::UnknownGroup,
                                                     "group '" + group_id + "' not registered");
  auto sub = std::make_shared<SubState>();
  sub->group = group_id;
  sub->sig = signature(field_set);
  // Catch-up: everything already complete for this field set, in completion order.
  FsIndex& idx = index_for_locked(field_set);
  for (const auto& [t, id] : idx.ready_order) {
    const SampleRec& rec = samples_.at(id);
    sub->events.push_back(ReadyEvent{id, rec.meta.producer_version, rec.meta.global_step, t});
  }
  subs_.push_back(sub);
  std::unique_ptr<EventStream> stream = std::make_unique<InProcEventStream>(this, sub);
  return Result<std::unique_ptr<EventStream>>(std::move(stream));
}

Status TransferQueue::mark_consumed(const std::string& group_id, BatchId batch_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto git = groups_.find(group_id);
  if (git == groups_.end())
    return Status::err(Errc::UnknownGroup, "group '" + group_id + "' not registered");
  auto bit = git->second.outstanding.find(batch_id);
  if (bit == git->second.outstanding.end())
    return Status::err(Errc::UnknownBatch,
                       "batch " + std::to_string(batch_id) + " not outstanding for group");
  for (SampleId id : bit->second) {
    auto sit = samples_.find(id);
    if (sit != samples_.end()) sit->second.consumed_by.insert(group_id);
  }
  git->second.outstanding.erase(bit);
  return ok_status();
}

Result<GcReport> TransferQueue::gc_before(Step before_step) {
  std::lock_guard<std::mutex> lock(mu_);
  // Every retained sample older than the cutoff must be consumed by every
  // registered group before anything is reclaimed.
  for (const auto& [id, rec] : samples_) {
    if (rec.meta.global_step >= before_step) continue;
    for (const auto& [gid, group] : groups_) {
      if (!rec.consumed_by.count(gid))
        return Result<GcReport>::err(Errc::StepStillReferenced,
                                     "step " + std::to_string(rec.meta.global_step) +
                                         " not yet consumed by group '" + gid + "'");
    }
  }
  GcReport report;
  for (auto it = samples_.begin(); it != samples_.end();) {
    if (it->second.meta.global_step >= before_step) {
      ++it;
      continue;
    }
    std::uint64_t bytes = 0;
    for (const auto& [name, f] : it->second.fields) bytes += f.size_bytes;
    report.freed_samples += 1;
    report.freed_bytes += bytes;
    bytes_stored_ -= bytes;
    for (auto& [sig, idx] : indexes_) {
      for (auto oit = idx.ready_order.begin(); oit != idx.ready_order.end();) {
        if (oit->second == it->first)
          oit = idx.ready_order.erase(oit);
        else
          ++oit;
      }
    }
    for (auto& [gid, group] : groups_) group.delivered.erase(it->first);
    it = samples_.erase(it);
  }
  gced_ += report.freed_samples;
  gced_bytes_ += report.freed_bytes;
  return report;
}

Result<QueueStats> TransferQueue::stats() {
  std::lock_guard<std::mutex> lock(mu_);
  QueueStats s;
  s.produced = produced_;
  s.gced = gced_;
  s.gced_bytes = gced_bytes_;
  s.bytes_stored = bytes_stored_;
  for (const auto& [id, rec] : samples_) {
    s.per_step_counts[rec.meta.global_step] += 1;
    for (const auto& [name, f] : rec.fields)
      if (f.state == FieldState::Ready) s.per_field_ready[name] += 1;
    if (s.oldest_producer_version < 0 || rec.meta.producer_version < s.oldest_producer_version)
      s.oldest_producer_version = rec.meta.producer_version;
    if (!rec.delivered_to.empty())
      s.delivered_retained += 1;
    else if (rec.all_ready())
      s.ready_undelivered += 1;
    else
      s.pending += 1;
  }
  return s;
}

int TransferQueue::ready_count(const std::string& group_id,
                               const std::vector<std::string>& field_set,
                               std::optional<Step> step_filter) {
  auto fields = sorted_unique(field_set);
  std::lock_guard<std::mutex> lock(mu_);
  auto git = groups_.find(group_id);
  if (git == groups_.end()) return 0;
  FsIndex& idx = index_for_locked(fields);
  int n = 0;
  for (const auto& entry : idx.ready_order) {
    if (git->second.delivered.count(entry.second)) continue;
    if (step_filter) {
      auto sit = samples_.find(entry.second);
      if (sit == samples_.end() || sit->second.meta.global_step != *step_filter) continue;
    }
    ++n;
  }
  return n;
}

std::size_t TransferQueue::requeue_unconsumed(const std::string& group_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto git = groups_.find(group_id);
  if (git == groups_.end()) return 0;
  std::size_t count = 0;
  for (const auto& [batch_id, ids] : git->second.outstanding) {
    for (SampleId id : ids) {
      git->second.delivered.erase(id);
      auto sit = samples_.find(id);
      if (sit != samples_.end()) sit->second.delivered_to.erase(group_id);
      ++count;
    }
  }
  git->second.outstanding.clear();
  cv_.notify_all();
  return count;
}

bool TransferQueue::draining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return draining_;
}

void TransferQueue::shutdown() {
  std::lock_guard<std::mutex> lock(mu_);
  draining_ = true;
  cv_.notify_all();
}

}  // namespace staleflow
