// SPDX-License-Identifier: Apache-2.0
#include "staleflow/sim.hpp"

#include <stdexcept>

namespace staleflow {

void SimEngine::schedule(TimePoint t, Fn fn) {
  if (t < now_) t = now_;  // never schedule into the past
  events_.push(Ev{t, next_seq_++, std::move(fn)});
}

bool SimEngine::run(const std::function<bool()>& stop, std::uint64_t max_events) {
  while (!events_.empty()) {
    if (stop && stop()) return true;
    if (processed_ >= max_events) return false;
    Ev ev = std::move(const_cast<Ev&>(events_.top()));
    events_.pop();
    now_ = ev.t;
    ++processed_;
    ev.fn();
    if (post_event_) post_event_();
  }
  return true;
}

void SimPool::acquire(SimEngine& engine, const std::string& group,
                      const std::string& trainer_group, std::function<void()> granted) {
  if (!multiplexed_) {
    engine.schedule_now([g = std::move(granted)] { g(); });
    return;
  }
  if (occupant_.empty() || occupant_ == group) {
    bool charge = occupant_.empty() && group == trainer_group && !last_occupant_.empty() &&
                  last_occupant_ != trainer_group;
    occupant_ = group;
    last_occupant_ = group;
    ++active_;
    if (charge) {
      if (on_switch_) on_switch_(switch_overhead_);
      engine.schedule(engine.now() + switch_overhead_, [g = std::move(granted)] { g(); });
    } else {
      engine.schedule_now([g = std::move(granted)] { g(); });
    }
    return;
  }
  waiters_.emplace_back(group, std::move(granted));
}

void SimPool::release(SimEngine& engine, const std::string& group,
                      const std::string& trainer_group) {
  if (!multiplexed_) return;
  if (occupant_ != group || active_ <= 0)
    throw std::logic_error("pool release without matching acquire on " + id_);
  if (--active_ == 0) {
    occupant_.clear();
    grant_next(engine, trainer_group);
  }
}

void SimPool::grant_next(SimEngine& engine, const std::string& trainer_group) {
  if (waiters_.empty()) return;
  // Admit the front waiter's group and every queued member of it.
  std::string group = waiters_.front().first;
  bool charge =
      group == trainer_group && !last_occupant_.empty() && last_occupant_ != trainer_group;
  occupant_ = group;
  last_occupant_ = group;
  if (charge && on_switch_) on_switch_(switch_overhead_);
  std::deque<std::pair<std::string, std::function<void()>>> rest;
  for (auto& [g, fn] : waiters_) {
    if (g == group) {
      ++active_;
      if (charge) {
        engine.schedule(engine.now() + switch_overhead_, [f = std::move(fn)] { f(); });
      } else {
        engine.schedule_now([f = std::move(fn)] { f(); });
      }
    } else {
      rest.emplace_back(g, std::move(fn));
    }
  }
  waiters_.swap(rest);
}

void SimPool::reset() {
  occupant_.clear();
  last_occupant_.clear();
  active_ = 0;
  waiters_.clear();
}

}  // namespace staleflow
