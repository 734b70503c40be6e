// SPDX-License-Identifier: Apache-2.0
#include "staleflow/metrics.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace staleflow {

using nlohmann::json;

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::StageStart: return "stage_start";
    case EventKind::StageEnd: return "stage_end";
    case EventKind::PermitWait: return "permit_wait";
    case EventKind::DataWait: return "data_wait";
    case EventKind::Switch: return "switch";
    case EventKind::Fault: return "fault";
    case EventKind::Recovery: return "recovery";
    case EventKind::Barrier: return "barrier";
  }
  return "stage_start";
}

Result<EventKind> event_kind_from_name(const std::string& s) {
  for (int i = 0; i <= int(EventKind::Barrier); ++i)
    if (s == event_kind_name(EventKind(i))) return EventKind(i);
  return Result<EventKind>::err(Errc::BadFrame, "unknown event kind: " + s);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

void MetricsReport::finalize() {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = std::size_t(warmup_steps); i < step_times.size(); ++i) {
    sum += step_times[i];
    ++n;
  }
  mean_step = n > 0 ? sum / n : 0.0;
  steps_per_hour = mean_step > 0.0 ? 3600.0 / mean_step : 0.0;
}

json metrics_to_json(const MetricsReport& m) {
  json hist = json::object();
  for (const auto& [s, count] : m.staleness_hist) hist[std::to_string(s)] = count;
  json recoveries = json::array();
  for (const auto& r : m.recoveries)
    recoveries.push_back({{"at", r.at},
                          {"plan", plan_kind_name(r.plan)},
                          {"role", r.role},
                          {"downtime", r.downtime},
                          {"restored_version", r.restored_version}});
  return json{{"mode", m.mode},
              {"max_staleness", m.max_staleness},
              {"seed", m.seed},
              {"steps", m.steps},
              {"step_times", m.step_times},
              {"warmup_steps", m.warmup_steps},
              {"mean_step", m.mean_step},
              {"steps_per_hour", m.steps_per_hour},
              {"idle_ratio", m.idle_ratio},
              {"data_wait_per_step", m.data_wait_per_step},
              {"staleness_hist", hist},
              {"switch_total", m.switch_total},
              {"recoveries", recoveries},
              {"total_time", m.total_time}};
}

std::string timeline_to_csv(const std::vector<TimelineEvent>& trace) {
  std::string out = "time,seq,kind,role,step,duration\n";
  for (const auto& ev : trace) {
    out += format_double(ev.time);
    out += ',';
    out += std::to_string(ev.seq);
    out += ',';
    out += event_kind_name(ev.kind);
    out += ',';
    out += ev.role;
    out += ',';
    out += std::to_string(ev.step);
    out += ',';
    out += format_double(ev.duration);
    out += '\n';
  }
  return out;
}

json timeline_to_json(const std::vector<TimelineEvent>& trace) {
  json arr = json::array();
  for (const auto& ev : trace)
    arr.push_back({{"time", ev.time},
                   {"seq", ev.seq},
                   {"kind", event_kind_name(ev.kind)},
                   {"role", ev.role},
                   {"step", ev.step},
                   {"duration", ev.duration}});
  return arr;
}

Result<std::vector<TimelineEvent>> parse_timeline_csv(const std::string& csv) {
  using R = Result<std::vector<TimelineEvent>>;
  std::vector<TimelineEvent> out;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "time,seq,kind,role,step,duration")
    return R::err(Errc::BadFrame, "missing or malformed CSV header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        cols.push_back(line.substr(start));
        break;
      }
      cols.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (cols.size() != 6)
      return R::err(Errc::BadFrame, "line " + std::to_string(lineno) + ": expected 6 columns");
    TimelineEvent ev;
    ev.time = std::strtod(cols[0].c_str(), nullptr);
    ev.seq = std::strtoull(cols[1].c_str(), nullptr, 10);
    auto kind = event_kind_from_name(cols[2]);
    if (!kind.ok()) return R(kind.error());
    ev.kind = kind.value();
    ev.role = cols[3];
    ev.step = std::strtoll(cols[4].c_str(), nullptr, 10);
    ev.duration = std::strtod(cols[5].c_str(), nullptr);
    out.push_back(std::move(ev));
  }
  return out;
}

Status write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return Status::err(Errc::IoError, "cannot open " + path + " for writing");
  out.write(contents.data(), std::streamsize(contents.size()));
  if (!out) return Status::err(Errc::IoError, "short write to " + path);
  return ok_status();
}

}  // namespace staleflow
