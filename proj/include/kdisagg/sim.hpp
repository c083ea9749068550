// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Discrete-event model of GPUs executing placements. Time is kept in integer
// nanoseconds. Each GPU runs one kernel at a time; each request has one
// in-order stream per GPU; each ordered GPU pair has one serialized channel.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/problem.hpp"

namespace kdisagg {

using Nanos = std::int64_t;

inline Nanos to_nanos(double seconds) { return static_cast<Nanos>(std::llround(seconds * 1e9)); }
inline double to_seconds(Nanos t) { return static_cast<double>(t) * 1e-9; }

/// fifo: earliest-arrived request wins a GPU or channel. equal: round robin.
enum class Priority { fifo, equal };

inline const char* to_string(Priority p) { return p == Priority::fifo ? "fifo-priority" : "equal"; }

inline Priority priority_from(const std::string& s) {
  if (s == "fifo-priority" || s == "fifo") return Priority::fifo;
  if (s == "equal") return Priority::equal;
  throw Error("unknown priority policy '" + s + "' (expected fifo-priority or equal)");
}

/// One execution pattern: its problem (latencies, edges, links) and placement.
struct SimPattern {
  std::string id;
  PlacementProblem problem;
  std::vector<int> assign;
};

struct Arrival {
  double time = 0;  // seconds
  std::size_t pattern = 0;
};

struct Workload {
  enum class Kind { closed, open };
  Kind kind = Kind::closed;
  /// closed: requests kept in flight. open: admission cap, 0 for none.
  std::size_t inflight = 1;
  /// closed: pattern of request i is mix[i % mix.size()].
  std::vector<std::size_t> mix{0};
  std::vector<Arrival> arrivals;  // open
  double tokens_per_request = 1;
};

struct SimConfig {
  std::vector<SimPattern> patterns;
  Workload workload;
  double warmup = 0;   // seconds
  double measure = 1;  // seconds
  Priority priority = Priority::fifo;
  double overhead = 0.001;  // background replication, fraction of every duration
  bool record_events = false;

  void validate() const {
    if (patterns.empty()) throw SimulationError("simulation has no patterns");
    const std::size_t G = patterns.front().problem.gpu_count();
    for (const auto& sp : patterns) {
      sp.problem.validate();
      if (sp.problem.gpu_count() != G)
        throw SimulationError("pattern '" + sp.id + "' uses a different GPU count");
      if (sp.assign.size() != sp.problem.node_count())
        throw SimulationError("placement of pattern '" + sp.id + "' does not cover every node");
      for (int g : sp.assign)
        if (g < 0 || static_cast<std::size_t>(g) >= G)
          throw SimulationError("placement of pattern '" + sp.id + "' names an unknown GPU");
    }
    if (workload.kind == Workload::Kind::closed && workload.inflight < 1)
      throw SimulationError("closed-loop workload needs at least one request in flight");
    if (workload.kind == Workload::Kind::closed && workload.mix.empty())
      throw SimulationError("closed-loop workload has an empty pattern mix");
    for (auto m : workload.mix)
      if (m >= patterns.size()) throw SimulationError("workload names an unknown pattern");
    for (const auto& a : workload.arrivals) {
      if (a.pattern >= patterns.size()) throw SimulationError("arrival names an unknown pattern");
      if (!(a.time >= 0) || !std::isfinite(a.time))
        throw SimulationError("arrival times must be finite and non-negative");
    }
    if (!(warmup >= 0) || !(measure > 0) || !std::isfinite(warmup) || !std::isfinite(measure))
      throw SimulationError("warmup must be non-negative and the measurement window positive");
    if (!(overhead >= 0 && overhead <= 0.01))
      throw SimulationError("replication overhead must lie in [0, 0.01]");
    if (!(workload.tokens_per_request > 0))
      throw SimulationError("tokens per request must be positive");
  }
};

enum class EventKind {
  kernel_start,
  kernel_end,
  send_start,
  recv_end,
  request_arrival,
  request_done,
  policy_switch_barrier
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kernel_start: return "kernel-start";
    case EventKind::kernel_end: return "kernel-end";
    case EventKind::send_start: return "send-start";
    case EventKind::recv_end: return "recv-end";
    case EventKind::request_arrival: return "request-arrival";
    case EventKind::request_done: return "request-done";
    case EventKind::policy_switch_barrier: return "policy-switch-barrier";
  }
  return "?";
}

/// Payload: kernels carry (request, node, gpu); transfers (request, src node,
/// dst node, from, to); barriers use `node` as phase 0 requested, 1 drained,
/// 2 resumed.
struct SimEvent {
  Nanos time = 0;
  EventKind kind = EventKind::kernel_start;
  std::int64_t request = -1;
  std::int64_t node = -1;
  std::int64_t aux = -1;
  std::int64_t from = -1;
  std::int64_t to = -1;

  bool operator==(const SimEvent&) const = default;
};

struct RequestRecord {
  std::uint64_t id = 0;
  std::size_t pattern = 0;
  std::size_t version = 0;  // placement version the request ran under
  Nanos arrival = 0, start = 0, completion = 0;
  std::vector<Nanos> groups;  // kernel-group latencies, summing to completion - start

  double exec_latency() const { return to_seconds(completion - start); }
  double request_latency() const { return to_seconds(completion - arrival); }
  bool operator==(const RequestRecord&) const = default;
};

struct GpuBreakdown {
  double compute = 0, comm = 0, idle = 1;
  bool operator==(const GpuBreakdown&) const = default;
};

struct SimReport {
  std::vector<RequestRecord> requests;  // in completion order
  Nanos window_start = 0, window_end = 0, end_time = 0;
  std::size_t completed_in_window = 0;
  double throughput = 0;  // requests per second
  double tokens_per_second = 0;
  double mean_request_latency = 0, mean_exec_latency = 0;
  std::vector<GpuBreakdown> gpus;
  std::vector<std::vector<double>> channel_utilization;  // [from][to]
  std::vector<double> group_means;
  std::vector<SimEvent> events;

  /// GPU with the largest compute fraction (lowest index on ties).
  std::size_t bottleneck_gpu() const {
    std::size_t b = 0;
    for (std::size_t g = 1; g < gpus.size(); ++g)
      if (gpus[g].compute > gpus[b].compute) b = g;
    return b;
  }
  bool operator==(const SimReport&) const = default;
};

namespace detail {

using Interval = std::pair<Nanos, Nanos>;

inline Nanos measure(const std::vector<Interval>& v) {
  Nanos s = 0;
  for (const auto& [a, b] : v) s += b - a;
  return s;
}

/// Sorted, disjoint union.
inline std::vector<Interval> merge(std::vector<Interval> v) {
  std::sort(v.begin(), v.end());
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (iv.first >= iv.second) continue;
    if (!out.empty() && iv.first <= out.back().second)
      out.back().second = std::max(out.back().second, iv.second);
    else
      out.push_back(iv);
  }
  return out;
}

/// Measure of the intersection of two sorted disjoint lists.
inline Nanos overlap(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  Nanos s = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const Nanos lo = std::max(a[i].first, b[j].first), hi = std::min(a[i].second, b[j].second);
    if (lo < hi) s += hi - lo;
    (a[i].second < b[j].second) ? ++i : ++j;
  }
  return s;
}

struct OutEdge {
  std::size_t dst;
  bool remote;
  Nanos duration;  // transfer time, remote edges only
};

/// A pattern under one placement, in the form the event loop consumes.
struct CompiledPattern {
  std::vector<std::size_t> gpu;                   // per node
  std::vector<Nanos> duration;                    // per node
  std::vector<std::vector<OutEdge>> out;          // per node
  std::vector<std::uint32_t> in_degree;           // per node
  std::vector<std::vector<std::size_t>> streams;  // per GPU, nodes in seq order
  std::vector<std::size_t> stream_pos;            // per node, index in its stream
  std::vector<std::size_t> group;                 // per node
  std::size_t groups = 1;
};

inline CompiledPattern compile(const PlacementProblem& p, const std::vector<int>& assign,
                               double overhead) {
  const std::size_t K = p.node_count(), G = p.gpu_count();
  const double scale = 1.0 + overhead;
  CompiledPattern c;
  c.gpu.resize(K);
  c.duration.resize(K);
  c.out.resize(K);
  c.in_degree.assign(K, 0);
  c.streams.resize(G);
  c.stream_pos.resize(K);
  c.group.assign(K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    c.gpu[k] = static_cast<std::size_t>(assign[k]);
    c.duration[k] = to_nanos(p.t[k][c.gpu[k]] * scale);
    c.stream_pos[k] = c.streams[c.gpu[k]].size();
    c.streams[c.gpu[k]].push_back(k);
  }
  std::vector<bool> receives(K, false);
  for (const auto& e : p.edges) {
    const std::size_t u = c.gpu[e.src], g = c.gpu[e.dst];
    const bool remote = u != g;
    c.out[e.src].push_back(
        {e.dst, remote, remote ? to_nanos(e.weight * p.comm_cost(u, g, e.bytes) * scale) : 0});
    ++c.in_degree[e.dst];
    if (remote) receives[e.dst] = true;
  }
  std::size_t grp = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (k > 0 && receives[k]) ++grp;
    c.group[k] = grp;
  }
  c.groups = grp + 1;
  return c;
}

}  // namespace detail

/// Event loop with an explicit clock so a driver (the monitor) can stop at
/// window boundaries and inject placement switches.
class Simulator {
 public:
  explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    G_ = cfg_.patterns.front().problem.gpu_count();
    window_start_ = to_nanos(cfg_.warmup);
    window_end_ = window_start_ + to_nanos(cfg_.measure);
    std::vector<std::vector<int>> assigns;
    for (const auto& sp : cfg_.patterns) assigns.push_back(sp.assign);
    install(assigns);
    inflight_cap_ = cfg_.workload.inflight;
    gpu_.resize(G_);
    channels_.resize(G_ * G_);
    compute_.resize(G_);
    busy_channel_.resize(G_ * G_);
    if (cfg_.workload.kind == Workload::Kind::closed) {
      for (std::size_t i = 0; i < cfg_.workload.inflight; ++i) new_arrival(0, next_mix());
    } else {
      std::vector<Arrival> arr = cfg_.workload.arrivals;
      std::stable_sort(arr.begin(), arr.end(),
                       [](const Arrival& a, const Arrival& b) { return a.time < b.time; });
      for (const auto& a : arr) new_arrival(to_nanos(a.time), a.pattern);
    }
  }

  Nanos now() const { return now_; }
  Nanos window_start() const { return window_start_; }
  Nanos window_end() const { return window_end_; }
  const SimConfig& config() const { return cfg_; }
  std::size_t version() const { return versions_.size() - 1; }
  std::size_t inflight() const { return inflight_; }
  bool switching() const { return switch_phase_ != 0; }
  const std::vector<RequestRecord>& completed() const { return done_; }

  /// True once nothing remains to do. Closed loops never finish.
  bool finished() const { return events_.empty() && inflight_ == 0 && waiting_.empty(); }

  /// Processes every event strictly before `limit` and advances the clock.
  void run_until(Nanos limit) {
    while (!events_.empty() && events_.top().time < limit) {
      const Nanos t = events_.top().time;
      now_ = t;
      while (!events_.empty() && events_.top().time == t) {
        Pending e = events_.top();
        events_.pop();
        handle(e);
      }
      dispatch();
    }
    if (events_.empty() && inflight_ > 0) deadlock();
    now_ = std::max(now_, limit);
  }

  /// Runs an open-loop workload to completion.
  void run_to_completion() {
    while (!events_.empty()) run_until(events_.top().time + 1);
    if (inflight_ > 0 || !waiting_.empty()) deadlock();
  }

  /// Stops admission, lets in-flight requests finish, idles for `stall`, then
  /// resumes with the new placements and admission cap.
  void begin_switch(const std::vector<std::vector<int>>& assigns, std::size_t inflight_cap,
                    Nanos stall) {
    if (switch_phase_ != 0) throw SimulationError("a policy switch is already in progress");
    if (assigns.size() != cfg_.patterns.size())
      throw SimulationError("switch placements do not cover every pattern");
    next_assigns_ = assigns;
    next_cap_ = inflight_cap;
    stall_ = stall;
    switch_phase_ = 1;
    log({now_, EventKind::policy_switch_barrier, -1, 0});
    if (inflight_ == 0) drained();
  }

  SimReport report() const {
    SimReport r;
    r.requests = done_;
    r.window_start = window_start_;
    r.window_end = window_end_;
    r.end_time = now_;
    const Nanos span = window_end_ - window_start_;
    double req = 0, exec = 0;
    std::vector<double> gsum;
    std::vector<std::size_t> gcount;
    for (const auto& q : done_) {
      if (q.completion < window_start_ || q.completion >= window_end_) continue;
      ++r.completed_in_window;
      req += q.request_latency();
      exec += q.exec_latency();
      if (gsum.size() < q.groups.size()) {
        gsum.resize(q.groups.size(), 0);
        gcount.resize(q.groups.size(), 0);
      }
      for (std::size_t i = 0; i < q.groups.size(); ++i) {
        gsum[i] += to_seconds(q.groups[i]);
        ++gcount[i];
      }
    }
    if (r.completed_in_window > 0) {
      r.mean_request_latency = req / static_cast<double>(r.completed_in_window);
      r.mean_exec_latency = exec / static_cast<double>(r.completed_in_window);
    }
    for (std::size_t i = 0; i < gsum.size(); ++i)
      r.group_means.push_back(gsum[i] / static_cast<double>(gcount[i]));
    r.throughput = static_cast<double>(r.completed_in_window) / to_seconds(span);
    r.tokens_per_second = r.throughput * cfg_.workload.tokens_per_request;
    r.channel_utilization.assign(G_, std::vector<double>(G_, 0));
    for (std::size_t g = 0; g < G_; ++g) {
      auto busy = detail::merge(clip(compute_[g]));
      std::vector<detail::Interval> incoming;
      for (std::size_t u = 0; u < G_; ++u) {
        auto c = clip(busy_channel_[u * G_ + g]);
        r.channel_utilization[u][g] =
            static_cast<double>(detail::measure(c)) / static_cast<double>(span);
        incoming.insert(incoming.end(), c.begin(), c.end());
      }
      auto in = detail::merge(std::move(incoming));
      const Nanos compute = detail::measure(busy);
      const Nanos comm = detail::measure(in) - detail::overlap(in, busy);
      GpuBreakdown b;
      b.compute = static_cast<double>(compute) / static_cast<double>(span);
      b.comm = static_cast<double>(comm) / static_cast<double>(span);
      b.idle = 1.0 - b.compute - b.comm;
      r.gpus.push_back(b);
    }
    r.events = log_;
    return r;
  }

 private:
  enum Rank : int { kEnd = 0, kRecv = 1, kResume = 2, kArrive = 3 };

  struct Pending {
    Nanos time;
    int rank;
    std::uint64_t request;
    std::size_t node;
    std::uint64_t order;
    std::size_t aux = 0;  // arrival: pattern; recv: dst node
    bool operator>(const Pending& o) const {
      return std::tie(time, rank, request, node, order) >
             std::tie(o.time, o.rank, o.request, o.node, o.order);
    }
  };

  struct Request {
    std::uint64_t id = 0;
    std::size_t pattern = 0, version = 0;
    Nanos arrival = 0, start = -1;
    std::vector<std::uint32_t> missing;  // unsatisfied inputs per node
    std::vector<std::size_t> head;       // per GPU stream position
    std::vector<bool> running;           // per GPU, head kernel executing
    std::vector<Nanos> end;              // per node
    std::size_t remaining = 0;
    bool admitted = false, complete = false;
  };

  struct Gpu {
    bool busy = false;
    std::set<std::uint64_t> ready;  // request ids with a runnable stream head
    std::uint64_t last = std::numeric_limits<std::uint64_t>::max();
  };

  struct Transfer {
    std::uint64_t request;
    std::size_t src, dst;
    Nanos duration;
    std::uint64_t order;
  };

  struct Channel {
    bool busy = false;
    std::vector<Transfer> queue;
  };

  const detail::CompiledPattern& compiled(const Request& r) const {
    return versions_[r.version][r.pattern];
  }

  void install(const std::vector<std::vector<int>>& assigns) {
    std::vector<detail::CompiledPattern> v;
    for (std::size_t i = 0; i < cfg_.patterns.size(); ++i) {
      const auto& p = cfg_.patterns[i].problem;
      if (assigns[i].size() != p.node_count())
        throw SimulationError("placement of pattern '" + cfg_.patterns[i].id +
                              "' does not cover every node");
      for (int g : assigns[i])
        if (g < 0 || static_cast<std::size_t>(g) >= G_)
          throw SimulationError("placement names an unknown GPU");
      v.push_back(detail::compile(p, assigns[i], cfg_.overhead));
    }
    versions_.push_back(std::move(v));
  }

  std::size_t next_mix() {
    const auto& mix = cfg_.workload.mix;
    return mix[mix_cursor_++ % mix.size()];
  }

  void push(Nanos t, int rank, std::uint64_t req, std::size_t node, std::size_t aux = 0) {
    events_.push({t, rank, req, node, order_++, aux});
  }

  void log(const SimEvent& e) {
    if (cfg_.record_events) log_.push_back(e);
  }

  void new_arrival(Nanos t, std::size_t pattern) {
    const std::uint64_t id = requests_.size();
    Request r;
    r.id = id;
    r.pattern = pattern;
    r.arrival = t;
    requests_.push_back(std::move(r));
    push(t, kArrive, id, 0, pattern);
  }

  bool may_admit() const {
    if (switch_phase_ != 0) return false;
    return inflight_cap_ == 0 || inflight_ < inflight_cap_;
  }

  void admit_waiting() {
    while (!waiting_.empty() && may_admit()) {
      const std::uint64_t id = waiting_.front();
      waiting_.erase(waiting_.begin());
      admit(requests_[id]);
    }
  }

  void admit(Request& r) {
    r.admitted = true;
    r.version = version();
    const auto& c = compiled(r);
    r.missing = c.in_degree;
    r.head.assign(G_, 0);
    r.running.assign(G_, false);
    r.end.assign(c.gpu.size(), -1);
    r.remaining = c.gpu.size();
    ++inflight_;
    if (r.remaining == 0) {
      r.start = now_;
      finish(r);
      return;
    }
    for (std::size_t g = 0; g < G_; ++g) mark_if_ready(r, g);
  }

  void mark_if_ready(const Request& r, std::size_t g) {
    const auto& s = compiled(r).streams[g];
    if (!r.running[g] && r.head[g] < s.size() && r.missing[s[r.head[g]]] == 0)
      gpu_[g].ready.insert(r.id);
  }

  void handle(const Pending& e) {
    switch (e.rank) {
      case kArrive: {
        Request& r = requests_[e.request];
        log({e.time, EventKind::request_arrival, static_cast<std::int64_t>(r.id), -1,
             static_cast<std::int64_t>(r.pattern)});
        waiting_.push_back(r.id);
        admit_waiting();
        break;
      }
      case kEnd: kernel_end(requests_[e.request], e.node); break;
      case kRecv: recv_end(requests_[e.request], e.node, e.aux); break;
      case kResume: resume(); break;
    }
  }

  void kernel_end(Request& r, std::size_t k) {
    const auto& c = compiled(r);
    const std::size_t g = c.gpu[k];
    log({now_, EventKind::kernel_end, static_cast<std::int64_t>(r.id),
         static_cast<std::int64_t>(k), static_cast<std::int64_t>(g)});
    gpu_[g].busy = false;
    r.end[k] = now_;
    r.running[g] = false;
    ++r.head[g];
    for (const auto& o : c.out[k]) {
      if (o.remote) {
        channels_[g * G_ + c.gpu[o.dst]].queue.push_back({r.id, k, o.dst, o.duration, order_++});
      } else {
        --r.missing[o.dst];
      }
    }
    mark_if_ready(r, g);
    if (--r.remaining == 0) finish(r);
  }

  void recv_end(Request& r, std::size_t src, std::size_t dst) {
    const auto& c = compiled(r);
    const std::size_t u = c.gpu[src], g = c.gpu[dst];
    log({now_, EventKind::recv_end, static_cast<std::int64_t>(r.id),
         static_cast<std::int64_t>(src), static_cast<std::int64_t>(dst),
         static_cast<std::int64_t>(u), static_cast<std::int64_t>(g)});
    channels_[u * G_ + g].busy = false;
    --r.missing[dst];
    mark_if_ready(r, g);
  }

  void finish(Request& r) {
    r.complete = true;
    --inflight_;
    log({now_, EventKind::request_done, static_cast<std::int64_t>(r.id)});
    RequestRecord rec;
    rec.id = r.id;
    rec.pattern = r.pattern;
    rec.version = r.version;
    rec.arrival = r.arrival;
    rec.start = r.start;
    rec.completion = now_;
    const auto& c = compiled(r);
    std::vector<Nanos> group_end(c.groups, r.start);
    for (std::size_t k = 0; k < r.end.size(); ++k)
      group_end[c.group[k]] = std::max(group_end[c.group[k]], r.end[k]);
    Nanos prev = r.start;
    for (std::size_t i = 0; i < c.groups && !r.end.empty(); ++i) {
      const Nanos e = std::max(prev, group_end[i]);
      rec.groups.push_back(e - prev);
      prev = e;
    }
    done_.push_back(std::move(rec));
    r.missing = {};
    r.head = {};
    r.running = {};
    r.end = {};
    if (cfg_.workload.kind == Workload::Kind::closed) new_arrival(now_, next_mix());
    if (switch_phase_ == 1 && inflight_ == 0) drained();
    admit_waiting();
  }

  void drained() {
    switch_phase_ = 2;
    log({now_, EventKind::policy_switch_barrier, -1, 1});
    push(now_ + stall_, kResume, 0, 0);
  }

  void resume() {
    install(next_assigns_);
    inflight_cap_ = next_cap_;
    switch_phase_ = 0;
    log({now_, EventKind::policy_switch_barrier, -1, 2});
    admit_waiting();
  }

  template <typename Pick>
  std::size_t pick(const std::vector<Transfer>& q, Pick better) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.size(); ++i)
      if (better(q[i], q[best])) best = i;
    return best;
  }

  void dispatch() {
    for (std::size_t ch = 0; ch < channels_.size(); ++ch) {
      Channel& c = channels_[ch];
      if (c.busy || c.queue.empty()) continue;
      const std::size_t i =
          cfg_.priority == Priority::fifo
              ? pick(c.queue, [](const Transfer& a, const Transfer& b) {
                  return std::tie(a.request, a.order) < std::tie(b.request, b.order);
                })
              : pick(c.queue, [](const Transfer& a, const Transfer& b) { return a.order < b.order; });
      const Transfer t = c.queue[i];
      c.queue.erase(c.queue.begin() + static_cast<std::ptrdiff_t>(i));
      c.busy = true;
      const std::size_t u = ch / G_, g = ch % G_;
      log({now_, EventKind::send_start, static_cast<std::int64_t>(t.request),
           static_cast<std::int64_t>(t.src), static_cast<std::int64_t>(t.dst),
           static_cast<std::int64_t>(u), static_cast<std::int64_t>(g)});
      busy_channel_[ch].push_back({now_, now_ + t.duration});
      push(now_ + t.duration, kRecv, t.request, t.src, t.dst);
    }
    for (std::size_t g = 0; g < G_; ++g) {
      Gpu& gp = gpu_[g];
      if (gp.busy || gp.ready.empty()) continue;
      auto it = gp.ready.begin();
      if (cfg_.priority == Priority::equal && gp.last != std::numeric_limits<std::uint64_t>::max()) {
        it = gp.ready.upper_bound(gp.last);
        if (it == gp.ready.end()) it = gp.ready.begin();
      }
      Request& r = requests_[*it];
      gp.ready.erase(it);
      gp.last = r.id;
      gp.busy = true;
      r.running[g] = true;
      const auto& c = compiled(r);
      const std::size_t k = c.streams[g][r.head[g]];
      if (r.start < 0) r.start = now_;
      log({now_, EventKind::kernel_start, static_cast<std::int64_t>(r.id),
           static_cast<std::int64_t>(k), static_cast<std::int64_t>(g)});
      compute_[g].push_back({now_, now_ + c.duration[k]});
      push(now_ + c.duration[k], kEnd, r.id, k);
    }
  }

  std::vector<detail::Interval> clip(const std::vector<detail::Interval>& v) const {
    std::vector<detail::Interval> out;
    for (auto [a, b] : v) {
      a = std::max(a, window_start_);
      b = std::min(b, window_end_);
      if (a < b) out.push_back({a, b});
    }
    return out;
  }

  [[noreturn]] void deadlock() const {
    std::string frontier;
    std::size_t shown = 0;
    for (const auto& r : requests_) {
      if (!r.admitted || r.complete) continue;
      const auto& c = compiled(r);
      for (std::size_t g = 0; g < G_ && shown < 8; ++g) {
        if (r.head[g] >= c.streams[g].size()) continue;
        const std::size_t k = c.streams[g][r.head[g]];
        frontier += " request " + std::to_string(r.id) + " node " + std::to_string(k) +
                    " on gpu " + std::to_string(g) + " waits for " +
                    std::to_string(r.missing[k]) + " input(s);";
        ++shown;
      }
    }
    throw SimulationError("deadlock at t=" + std::to_string(now_) +
                          " ns with requests outstanding:" + frontier);
  }

  SimConfig cfg_;
  std::size_t G_ = 0;
  Nanos now_ = 0, window_start_ = 0, window_end_ = 0;
  std::vector<std::vector<detail::CompiledPattern>> versions_;
  std::vector<Request> requests_;
  std::vector<std::uint64_t> waiting_;
  std::vector<RequestRecord> done_;
  std::size_t inflight_ = 0, inflight_cap_ = 0, mix_cursor_ = 0;
  std::vector<Gpu> gpu_;
  std::vector<Channel> channels_;
  std::vector<std::vector<detail::Interval>> compute_, busy_channel_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> events_;
  std::uint64_t order_ = 0;
  std::vector<SimEvent> log_;
  int switch_phase_ = 0;  // 0 none, 1 draining, 2 stalling
  std::vector<std::vector<int>> next_assigns_;
  std::size_t next_cap_ = 0;
  Nanos stall_ = 0;
};

/// Closed loops run to the end of the measurement window; open loops run
/// until every arrival has completed.
inline SimReport simulate(const SimConfig& cfg) {
  Simulator s(cfg);
  if (cfg.workload.kind == Workload::Kind::closed)
    s.run_until(s.window_end());
  else
    s.run_to_completion();
  return s.report();
}

struct PolicyReports {
  SimReport latency, throughput;
};

/// Same workload under both placements; the latency placement runs one
/// request at a time, the throughput placement keeps the configured depth.
inline PolicyReports compare_policies(const SimConfig& cfg,
                                      const std::vector<std::vector<int>>& latency,
                                      const std::vector<std::vector<int>>& throughput) {
  if (latency.size() != cfg.patterns.size() || throughput.size() != cfg.patterns.size())
    throw SimulationError("placements do not cover every pattern");
  PolicyReports out;
  SimConfig a = cfg;
  for (std::size_t i = 0; i < a.patterns.size(); ++i) a.patterns[i].assign = latency[i];
  a.workload.inflight = 1;
  out.latency = simulate(a);
  SimConfig b = cfg;
  for (std::size_t i = 0; i < b.patterns.size(); ++i) b.patterns[i].assign = throughput[i];
  out.throughput = simulate(b);
  return out;
}

struct Ablation {
  SimReport no_pipeline, naive, priority;
};

inline Ablation ablate_pipeline(const SimConfig& cfg) {
  Ablation out;
  SimConfig c = cfg;
  c.workload.inflight = 1;
  c.priority = Priority::fifo;
  out.no_pipeline = simulate(c);
  c = cfg;
  c.priority = Priority::equal;
  out.naive = simulate(c);
  c.priority = Priority::fifo;
  out.priority = simulate(c);
  return out;
}

// ---- workload files and generators -----------------------------------------

inline constexpr const char* kWorkloadFormat = "kdisagg.workload";
inline constexpr const char* kSimReportFormat = "kdisagg.simreport";
inline constexpr int kSimFileVersion = 1;

/// One stretch of a piecewise-constant arrival process.
struct ArrivalSegment {
  double duration = 0;  // seconds
  double rate = 0;      // requests per second
  bool periodic = false;  // evenly spaced instead of Poisson
};

/// Segments laid end to end from t = 0; Poisson segments draw from one
/// generator seeded with `seed`.
inline std::vector<Arrival> segment_arrivals(const std::vector<ArrivalSegment>& segments,
                                             std::uint64_t seed, std::size_t pattern = 0) {
  std::mt19937_64 rng(seed);
  std::vector<Arrival> out;
  double begin = 0;
  for (const auto& sg : segments) {
    if (!(sg.duration > 0) || !(sg.rate >= 0)) throw SimulationError("invalid arrival segment");
    const double end = begin + sg.duration;
    if (sg.rate > 0 && sg.periodic) {
      for (std::size_t i = 0;; ++i) {
        const double t = begin + static_cast<double>(i) / sg.rate;
        if (t >= end) break;
        out.push_back({t, pattern});
      }
    } else if (sg.rate > 0) {
      std::exponential_distribution<double> gap(sg.rate);
      for (double t = begin + gap(rng); t < end; t += gap(rng)) out.push_back({t, pattern});
    }
    begin = end;
  }
  return out;
}

/// Workload file; patterns are referenced by id and resolved against `patterns`.
inline Workload workload_from_json(const json& j, const std::vector<std::string>& patterns,
                                   const std::string& where = "workload") {
  check_envelope(j, kWorkloadFormat, kSimFileVersion, where);
  auto resolve = [&](const std::string& id) {
    for (std::size_t i = 0; i < patterns.size(); ++i)
      if (patterns[i] == id) return i;
    throw FormatError(where + ": unknown pattern '" + id + "'");
  };
  Workload w;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    w.tokens_per_request = j.value("tokens_per_request", 1.0);
    if (kind == "closed") {
      w.kind = Workload::Kind::closed;
      w.inflight = j.at("inflight").get<std::size_t>();
      w.mix.clear();
      for (const auto& m : j.at("mix")) w.mix.push_back(resolve(m.get<std::string>()));
    } else if (kind == "open") {
      w.kind = Workload::Kind::open;
      w.inflight = j.value("inflight", std::size_t{0});
      if (j.contains("arrivals")) {
        for (const auto& a : j.at("arrivals"))
          w.arrivals.push_back({a.at("t").get<double>(), resolve(a.at("pattern").get<std::string>())});
      } else {
        std::vector<ArrivalSegment> seg;
        for (const auto& s : j.at("segments")) {
          const std::string process = s.value("process", std::string("poisson"));
          if (process != "poisson" && process != "periodic")
            throw FormatError(where + ": process must be poisson or periodic");
          seg.push_back({s.at("duration_s").get<double>(), s.at("rate").get<double>(),
                         process == "periodic"});
        }
        w.arrivals = segment_arrivals(seg, j.value("seed", std::uint64_t{0}),
                                      resolve(j.at("pattern").get<std::string>()));
      }
    } else {
      throw FormatError(where + ": kind must be closed or open");
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return w;
}

/// Sets the workload plus any warmup_s / measure_s carried by the file.
inline void apply_workload(const json& j, SimConfig& cfg, const std::string& where = "workload") {
  std::vector<std::string> ids;
  for (const auto& sp : cfg.patterns) ids.push_back(sp.id);
  cfg.workload = workload_from_json(j, ids, where);
  try {
    cfg.warmup = j.value("warmup_s", cfg.warmup);
    cfg.measure = j.value("measure_s", cfg.measure);
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

/// Pattern from a problem file and a placement file; the id is the
/// placement's pattern name.
inline SimPattern load_pattern(const std::filesystem::path& problem,
                               const std::filesystem::path& placement) {
  SimPattern sp;
  sp.problem = problem_from_json(read_versioned(problem, kProblemFormat, kPlannerFileVersion),
                                 problem.string());
  const json pj = read_versioned(placement, kPlacementFormat, kPlannerFileVersion);
  sp.id = pj.value("pattern", std::string("pattern"));
  sp.assign = assignment_from_json(pj, sp.problem.gpus, placement.string());
  if (sp.assign.size() != sp.problem.node_count())
    throw FormatError(placement.string() + ": placement does not match the problem's nodes");
  return sp;
}

inline json report_to_json(const SimConfig& cfg, const SimReport& r) {
  json j;
  j["format"] = kSimReportFormat;
  j["version"] = kSimFileVersion;
  j["priority"] = to_string(cfg.priority);
  j["overhead"] = cfg.overhead;
  j["window"] = {{"start_s", to_seconds(r.window_start)}, {"end_s", to_seconds(r.window_end)}};
  j["end_time_s"] = to_seconds(r.end_time);
  j["requests_completed"] = r.requests.size();
  j["completed_in_window"] = r.completed_in_window;
  j["throughput_rps"] = r.throughput;
  j["tokens_per_s"] = r.tokens_per_second;
  j["mean_request_latency_s"] = r.mean_request_latency;
  j["mean_exec_latency_s"] = r.mean_exec_latency;
  j["bottleneck_gpu"] = r.bottleneck_gpu();
  const auto& gpus = cfg.patterns.front().problem.gpus;
  j["gpus"] = json::array();
  for (std::size_t g = 0; g < r.gpus.size(); ++g)
    j["gpus"].push_back({{"gpu", g < gpus.size() ? gpus[g].id : std::to_string(g)},
                         {"compute", r.gpus[g].compute},
                         {"comm", r.gpus[g].comm},
                         {"idle", r.gpus[g].idle}});
  j["channel_utilization"] = r.channel_utilization;
  j["group_means_s"] = r.group_means;
  return j;
}

inline std::string requests_csv(const SimReport& r) {
  std::string s = "id,pattern,version,arrival_s,start_s,completion_s,exec_s,request_s,groups\n";
  for (const auto& q : r.requests) {
    s += std::to_string(q.id) + "," + std::to_string(q.pattern) + "," +
         std::to_string(q.version) + "," + format_fixed(to_seconds(q.arrival), 9) + "," +
         format_fixed(to_seconds(q.start), 9) + "," + format_fixed(to_seconds(q.completion), 9) +
         "," + format_fixed(q.exec_latency(), 9) + "," + format_fixed(q.request_latency(), 9) +
         "," + std::to_string(q.groups.size()) + "\n";
  }
  return s;
}

inline std::string events_csv(const std::vector<SimEvent>& events) {
  std::string s = "time_ns,kind,request,node,aux,from,to\n";
  for (const auto& e : events)
    s += std::to_string(e.time) + "," + to_string(e.kind) + "," + std::to_string(e.request) + "," +
         std::to_string(e.node) + "," + std::to_string(e.aux) + "," + std::to_string(e.from) +
         "," + std::to_string(e.to) + "\n";
  return s;
}

}  // namespace kdisagg
