#include "rpclink/traffic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>

#include "rpclink/error.hpp"
#include "rpclink/ledger.hpp"

namespace rpclink {

std::string_view to_string(LabelRole role) noexcept {
  switch (role) {
    case LabelRole::Target: return "Target";
    case LabelRole::Noise: return "Noise";
    case LabelRole::Other: return "Other";
    case LabelRole::Nil: return "Nil";
  }
  return "Other";
}

std::string PacketLabel::to_string() const { return api + "/" + std::string(rpclink::to_string(role)); }

PacketLabel PacketLabel::parse(std::string_view text) {
  const auto slash = text.rfind('/');
  if (slash == std::string_view::npos || slash == 0)
    throw Error(ErrorKind::Malformed, "label '" + std::string(text) + "' is not api/role");
  PacketLabel label{std::string(text.substr(0, slash)), LabelRole::Other};
  const std::string_view role = text.substr(slash + 1);
  if (role == "Target") label.role = LabelRole::Target;
  else if (role == "Noise") label.role = LabelRole::Noise;
  else if (role == "Other") label.role = LabelRole::Other;
  else if (role == "Nil") label.role = LabelRole::Nil;
  else throw Error(ErrorKind::Malformed, "unknown label role '" + std::string(role) + "'");
  return label;
}

void PacketTrace::validate() const {
  double last = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const PacketRecord& r = records[i];
    if (r.flow >= flows.size()) throw Error(ErrorKind::Validation, "trace record " + std::to_string(i) + " has unknown flow");
    if (r.size == 0) throw Error(ErrorKind::Validation, "trace record " + std::to_string(i) + " has zero size");
    if (!std::isfinite(r.timestamp)) throw Error(ErrorKind::Validation, "trace record " + std::to_string(i) + " has bad timestamp");
    if (r.timestamp < last) throw Error(ErrorKind::Validation, "trace timestamps decrease at record " + std::to_string(i));
    last = r.timestamp;
  }
}

double JitterModel::sample(Rng& rng) const {
  if (max <= 0.0) return 0.0;
  return truncated_normal(rng, mean, stddev, 0.0, max);
}

BlockClock BlockClock::uniform(double interval, double genesis) {
  if (!(interval > 0.0)) throw Error(ErrorKind::InvalidArgument, "block clock: interval must be positive");
  BlockClock c;
  c.interval_ = interval;
  c.genesis_ = genesis;
  return c;
}

BlockClock BlockClock::from_ledger(const Ledger& ledger) {
  BlockClock c;
  c.interval_ = ledger.block_time();
  c.genesis_ = ledger.first_timestamp();
  c.stamps_.reserve(ledger.blocks().size());
  for (const Block& b : ledger.blocks()) c.stamps_.push_back(b.timestamp);
  return c;
}

bool BlockClock::on_boundary(double t) const {
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (!stamps_.empty()) {
    auto it = std::lower_bound(stamps_.begin(), stamps_.end(), t - tol);
    return it != stamps_.end() && std::abs(*it - t) <= tol;
  }
  const double q = (t - genesis_) / interval_;
  return q > -1e-9 && std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
}

std::int64_t BlockClock::height_at(double t) const {
  if (!stamps_.empty())
    return static_cast<std::int64_t>(std::upper_bound(stamps_.begin(), stamps_.end(), t) - stamps_.begin());
  if (t < genesis_) return 0;
  return static_cast<std::int64_t>(std::floor((t - genesis_) / interval_ + 1e-9)) + 1;
}

void SessionPlan::validate() const {
  profile.validate();
  if (!(end > start)) throw Error(ErrorKind::InvalidConfig, "session: end must follow start");
  if (!(jitter.mean >= 0.0 && jitter.stddev >= 0.0 && jitter.max >= 0.0))
    throw Error(ErrorKind::InvalidConfig, "session: jitter parameters must be >= 0");
  if (!(noise_rate >= 0.0)) throw Error(ErrorKind::InvalidConfig, "session: noise rate must be >= 0");
  for (const TxEvent& ev : tx_events) {
    if (ev.send_time < start || ev.send_time >= end)
      throw Error(ErrorKind::InvalidConfig, "session: send time outside the session span");
    if (ev.confirm_time) {
      if (!(*ev.confirm_time > ev.send_time))
        throw Error(ErrorKind::Validation, "session: confirm time must follow send time");
      if (!clock.on_boundary(*ev.confirm_time))
        throw Error(ErrorKind::Validation, "session: confirm time is not on a block boundary");
    }
  }
}

namespace {

constexpr std::uint32_t kRpcFlow = 0;

struct Call {
  std::string api;
  LabelRole role;
  std::uint32_t request;
  std::uint32_t response;
};

struct Job {
  enum class Kind { Send, Background, Notify };
  double ready = 0.0;
  std::uint64_t seq = 0;
  Kind kind = Kind::Background;
  std::size_t tx = 0;
  std::string api;
  bool deferred = false;
  std::vector<double> rtts;
  std::vector<double> gaps;
};

struct JobOrder {
  bool operator()(const Job& a, const Job& b) const {
    if (a.ready != b.ready) return a.ready > b.ready;
    return a.seq > b.seq;
  }
};

class SessionBuilder {
 public:
  SessionBuilder(const SessionPlan& plan, std::uint64_t seed)
      : plan_(plan),
        p_(plan.profile),
        timing_(derive_seed(seed, 1)),
        sizes_(derive_seed(seed, 2)),
        sched_(derive_seed(seed, 3)),
        noise_(derive_seed(seed, 4)) {}

  PacketTrace build() {
    add_flows();
    pending_.assign(plan_.tx_events.size(), TxState{});
    schedule_jobs();
    run_rpc_flow();
    add_vendor_flow();
    add_noise_flows();
    std::stable_sort(out_.begin(), out_.end(), [](const Tagged& a, const Tagged& b) {
      if (a.rec.timestamp != b.rec.timestamp) return a.rec.timestamp < b.rec.timestamp;
      return a.seq < b.seq;
    });
    trace_.records.reserve(out_.size());
    for (Tagged& t : out_) trace_.records.push_back(std::move(t.rec));
    return std::move(trace_);
  }

 private:
  struct TxState {
    bool submitted = false;
    bool queried = false;
    bool answered = false;
  };
  struct Tagged {
    PacketRecord rec;
    std::uint64_t seq;
  };

  void add_flows() {
    const auto port = [&] { return static_cast<std::uint16_t>(std::uniform_int_distribution<int>(49152, 65535)(sched_)); };
    trace_.flows.push_back({"rpc-0", "10.0.0.2", port(), "198.51.100.10", 443, "rpc"});
    if (p_.vendor_poll_period > 0.0)
      trace_.flows.push_back({"vendor-0", "10.0.0.2", port(), "198.51.100.20", 443, "wallet-vendor"});
    if (plan_.noise_rate > 0.0) {
      trace_.flows.push_back({"other-0", "10.0.0.2", port(), "203.0.113.5", 443, "other"});
      trace_.flows.push_back({"other-1", "10.0.0.2", port(), "203.0.113.6", 443, "other"});
    }
  }

  std::uint32_t draw(const SizeRange& r) {
    const std::uint32_t hi = r.max ? *r.max : r.min + 1000;
    return std::uniform_int_distribution<std::uint32_t>(r.min, hi)(sizes_);
  }

  LabelRole role_of(const ApiSpec& api) const {
    switch (api.role) {
      case ApiRole::Target: return LabelRole::Target;
      case ApiRole::Noise: return LabelRole::Noise;
      default: return LabelRole::Other;
    }
  }

  Call make_call(const std::string& name) {
    const ApiSpec& api = p_.api(name);
    const std::uint32_t oh = p_.overhead.total();
    return {name, role_of(api), draw(api.wallet_request) + oh, draw(api.wallet_response) + oh};
  }

  Call nil_call() {
    const ApiSpec& api = p_.target();
    return {api.name, LabelRole::Nil, draw(api.wallet_request) + p_.overhead.total(), draw(p_.nil_response)};
  }

  double processing() { return uniform_real(timing_, 0.001, 0.010); }

  void emit(std::uint32_t flow, double t, std::uint32_t size, Direction dir, const std::string& api, LabelRole role) {
    out_.push_back({PacketRecord{flow, t, size, dir, PacketLabel{api, role}}, seq_++});
  }

  /// Issues one call at `t`; returns the client-side response time.
  double issue(const Call& call, double t, double rtt) {
    emit(kRpcFlow, t, call.request, Direction::Request, call.api, call.role);
    const double done = t + rtt;
    emit(kRpcFlow, done, call.response, Direction::Response, call.api, call.role);
    return done;
  }

  std::size_t job_calls(const Job& job) const {
    switch (job.kind) {
      case Job::Kind::Send: return p_.calls.send.size() + p_.calls.after_send.size();
      case Job::Kind::Background: return 1;
      case Job::Kind::Notify: return p_.calls.pre_status.size() + 1 + p_.calls.post_status.size();
    }
    return 0;
  }

  void push(Job job) {
    job.seq = job_seq_++;
    jobs_.push(std::move(job));
  }

  void schedule_jobs() {
    for (std::size_t i = 0; i < plan_.tx_events.size(); ++i) {
      Job send;
      send.kind = Job::Kind::Send;
      send.ready = plan_.tx_events[i].send_time;
      send.tx = i;
      push(std::move(send));
    }
    for (const BackgroundTask& task : p_.background) {
      for (double t = plan_.start + uniform_real(sched_, 0.0, task.period); t < plan_.end; t += task.period) {
        Job job;
        job.kind = Job::Kind::Background;
        job.ready = t;
        job.api = task.api;
        push(std::move(job));
      }
    }
  }

  void prepare(Job& job) {
    if (!job.rtts.empty()) return;
    const std::size_t n = job_calls(job);
    for (std::size_t i = 0; i < n; ++i) {
      job.rtts.push_back(plan_.jitter.sample(timing_));
      job.gaps.push_back(processing());
    }
  }

  double duration(const Job& job) const {
    double d = 0.0;
    for (std::size_t i = 0; i < job.rtts.size(); ++i) d += job.rtts[i] + job.gaps[i];
    return d;
  }

  void run_job(Job& job, double t) {
    std::vector<Call> calls;
    switch (job.kind) {
      case Job::Kind::Send:
        for (const std::string& a : p_.calls.send) calls.push_back(make_call(a));
        for (const std::string& a : p_.calls.after_send) calls.push_back(make_call(a));
        break;
      case Job::Kind::Background:
        calls.push_back(make_call(job.api));
        break;
      case Job::Kind::Notify:
        for (const std::string& a : p_.calls.pre_status) calls.push_back(make_call(a));
        calls.push_back(make_call(p_.calls.status_query));
        for (const std::string& a : p_.calls.post_status) calls.push_back(make_call(a));
        break;
    }
    for (std::size_t i = 0; i < calls.size(); ++i) {
      t = issue(calls[i], t, job.rtts[i]);
      if (job.kind == Job::Kind::Send && i + 1 == p_.calls.send.size()) submit(job.tx, t);
      t += job.gaps[i];
    }
    free_at_ = t;
  }

  void submit(std::size_t tx, double t) {
    pending_[tx].submitted = true;
    const TxEvent& ev = plan_.tx_events[tx];
    if (p_.method == QueryMethod::Subscription && ev.confirm_time) {
      const double push_at = std::max(*ev.confirm_time, t) + plan_.jitter.sample(timing_) / 2.0;
      Job job;
      job.kind = Job::Kind::Notify;
      job.ready = push_at;
      job.tx = tx;
      push(std::move(job));
    }
  }

  bool awaiting_receipt() const {
    for (std::size_t i = 0; i < pending_.size(); ++i)
      if (plan_.tx_events[i].confirm_time && !pending_[i].answered) return true;
    return false;
  }

  /// One poll tick of a periodic wallet.
  void run_tick(double t) {
    bool advanced = false;
    for (const std::string& a : p_.calls.poll) {
      const double rtt = plan_.jitter.sample(timing_);
      const std::int64_t head = plan_.clock.height_at(t + rtt / 2.0);
      advanced = advanced || head > last_head_;
      last_head_ = std::max(last_head_, head);
      t = issue(make_call(a), t, rtt) + processing();
    }
    for (const TxState& s : pending_) advanced = advanced || (s.submitted && !s.queried);
    if (advanced) {
      for (std::size_t i = 0; i < pending_.size(); ++i) {
        if (!pending_[i].submitted || pending_[i].answered) continue;
        pending_[i].queried = true;
        const double rtt = plan_.jitter.sample(timing_);
        const auto& confirm = plan_.tx_events[i].confirm_time;
        if (confirm && *confirm <= t + rtt / 2.0) {
          pending_[i].answered = true;
          t = issue(make_call(p_.calls.status_query), t, rtt) + processing();
          for (const std::string& a : p_.calls.post_status)
            t = issue(make_call(a), t, plan_.jitter.sample(timing_)) + processing();
        } else {
          t = issue(nil_call(), t, rtt) + processing();
        }
      }
      for (const std::string& a : p_.calls.on_new_block)
        t = issue(make_call(a), t, plan_.jitter.sample(timing_)) + processing();
    }
    free_at_ = t;
  }

  void run_notification(Job& job, double t) {
    const ApiSpec& api = p_.api(p_.calls.notification);
    emit(kRpcFlow, t, draw(api.wallet_response) + p_.overhead.total(), Direction::Response, api.name, LabelRole::Other);
    pending_[job.tx].answered = true;
    prepare(job);
    run_job(job, t + processing());
  }

  void run_rpc_flow() {
    const bool periodic = p_.method == QueryMethod::Periodic;
    const double inf = std::numeric_limits<double>::infinity();
    double next_tick = periodic ? plan_.start + uniform_real(sched_, 0.0, p_.cycle) : inf;
    free_at_ = plan_.start;
    last_head_ = plan_.clock.height_at(plan_.start);

    auto ticks_live = [&] { return periodic && (next_tick < plan_.end || awaiting_receipt()); };

    while (true) {
      const bool tick_due = ticks_live();
      if (jobs_.empty()) {
        if (!tick_due) break;
        run_tick(std::max(next_tick, free_at_));
        next_tick += p_.cycle;
        continue;
      }
      Job job = jobs_.top();
      const double start = std::max(job.ready, free_at_);
      if (job.kind == Job::Kind::Notify) {
        if (tick_due && next_tick <= start) {
          run_tick(std::max(next_tick, free_at_));
          next_tick += p_.cycle;
          continue;
        }
        jobs_.pop();
        run_notification(job, start);
        continue;
      }
      if (!tick_due || start < next_tick) {
        jobs_.pop();
        prepare(job);
        if (!tick_due || job.deferred || start + duration(job) <= next_tick) {
          run_job(job, start);
        } else {
          job.deferred = true;
          jobs_.push(std::move(job));
          run_tick(std::max(next_tick, free_at_));
          next_tick += p_.cycle;
        }
        continue;
      }
      run_tick(std::max(next_tick, free_at_));
      next_tick += p_.cycle;
    }
  }

  void add_vendor_flow() {
    if (p_.vendor_poll_period <= 0.0) return;
    const std::uint32_t flow = 1;
    for (double t = plan_.start + uniform_real(sched_, 0.0, p_.vendor_poll_period); t < plan_.end;
         t += p_.vendor_poll_period) {
      const std::uint32_t req = std::uniform_int_distribution<std::uint32_t>(300, 420)(noise_);
      const std::uint32_t resp = std::uniform_int_distribution<std::uint32_t>(700, 1300)(noise_);
      const double rtt = plan_.jitter.sample(noise_);
      emit(flow, t, req, Direction::Request, "vendor.gasPrices", LabelRole::Other);
      emit(flow, t + rtt, resp, Direction::Response, "vendor.gasPrices", LabelRole::Other);
    }
  }

  void add_noise_flows() {
    if (plan_.noise_rate <= 0.0) return;
    const std::uint32_t first = p_.vendor_poll_period > 0.0 ? 2 : 1;
    std::exponential_distribution<double> gap(plan_.noise_rate);
    std::uniform_int_distribution<std::uint32_t> size(40, 1500);
    for (double t = plan_.start + gap(noise_); t < plan_.end; t += gap(noise_)) {
      const std::uint32_t flow = first + (bernoulli(noise_, 0.5) ? 1 : 0);
      const Direction dir = bernoulli(noise_, 0.5) ? Direction::Request : Direction::Response;
      out_.push_back({PacketRecord{flow, t, size(noise_), dir, std::nullopt}, seq_++});
    }
  }

  const SessionPlan& plan_;
  const WalletProfile& p_;
  Rng timing_;
  Rng sizes_;
  Rng sched_;
  Rng noise_;
  PacketTrace trace_;
  std::vector<Tagged> out_;
  std::uint64_t seq_ = 0;
  std::priority_queue<Job, std::vector<Job>, JobOrder> jobs_;
  std::uint64_t job_seq_ = 0;
  std::vector<TxState> pending_;
  double free_at_ = 0.0;
  std::int64_t last_head_ = 0;
};

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

PacketTrace synth_session(const SessionPlan& plan, std::uint64_t seed) {
  plan.validate();
  return SessionBuilder(plan, seed).build();
}

PacketTrace filter_rpc_flows(const PacketTrace& trace) {
  PacketTrace out;
  std::vector<std::int64_t> remap(trace.flows.size(), -1);
  for (std::size_t i = 0; i < trace.flows.size(); ++i) {
    if (trace.flows[i].service != "rpc") continue;
    remap[i] = static_cast<std::int64_t>(out.flows.size());
    out.flows.push_back(trace.flows[i]);
  }
  for (const PacketRecord& r : trace.records) {
    if (r.flow >= remap.size() || remap[r.flow] < 0) continue;
    PacketRecord copy = r;
    copy.flow = static_cast<std::uint32_t>(remap[r.flow]);
    out.records.push_back(std::move(copy));
  }
  return out;
}

std::vector<double> ground_truth_tq(const PacketTrace& trace) {
  std::vector<double> out;
  for (const PacketRecord& r : trace.records)
    if (r.direction == Direction::Response && r.label && r.label->role == LabelRole::Target) out.push_back(r.timestamp);
  std::sort(out.begin(), out.end());
  return out;
}

void write_trace_csv(std::ostream& out, const PacketTrace& trace) {
  out << "flow_id,timestamp,size,direction,label\n";
  for (const PacketRecord& r : trace.records) {
    out << trace.flows.at(r.flow).id << ',' << format_double(r.timestamp) << ',' << r.size << ','
        << (r.direction == Direction::Request ? "request" : "response") << ',';
    if (r.label) out << r.label->to_string();
    out << '\n';
  }
}

nlohmann::json flow_sidecar(const PacketTrace& trace) {
  nlohmann::json flows = nlohmann::json::object();
  for (const Flow& f : trace.flows) {
    flows[f.id] = {{"service", f.service},
                   {"src_ip", f.src_ip},
                   {"src_port", f.src_port},
                   {"dst_ip", f.dst_ip},
                   {"dst_port", f.dst_port}};
  }
  return {{"flows", std::move(flows)}};
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

}  // namespace

PacketTrace read_trace_csv(std::istream& csv, const nlohmann::json& sidecar) {
  PacketTrace trace;
  std::unordered_map<std::string, std::uint32_t> index;
  const nlohmann::json& flows = sidecar.contains("flows") ? sidecar["flows"] : sidecar;
  if (!flows.is_object()) throw Error(ErrorKind::Malformed, "trace sidecar: expected an object of flows");
  for (auto it = flows.begin(); it != flows.end(); ++it) {
    Flow f;
    f.id = it.key();
    if (it.value().is_string()) {
      f.service = it.value().get<std::string>();
    } else {
      const auto& v = it.value();
      f.service = v.at("service").get<std::string>();
      f.src_ip = v.value("src_ip", std::string());
      f.src_port = v.value("src_port", std::uint16_t{0});
      f.dst_ip = v.value("dst_ip", std::string());
      f.dst_port = v.value("dst_port", std::uint16_t{0});
    }
    index.emplace(f.id, static_cast<std::uint32_t>(trace.flows.size()));
    trace.flows.push_back(std::move(f));
  }

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(csv, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("flow_id,", 0) == 0) continue;
    const std::string where = "trace csv line " + std::to_string(line_no) + ": ";
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw Error(ErrorKind::Malformed, where + "expected 5 columns");
    auto flow = index.find(std::string(cells[0]));
    if (flow == index.end()) throw Error(ErrorKind::Malformed, where + "flow not listed in sidecar");
    PacketRecord r;
    r.flow = flow->second;
    auto ts = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), r.timestamp);
    if (ts.ec != std::errc() || ts.ptr != cells[1].data() + cells[1].size())
      throw Error(ErrorKind::Malformed, where + "bad timestamp");
    auto sz = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), r.size);
    if (sz.ec != std::errc() || sz.ptr != cells[2].data() + cells[2].size())
      throw Error(ErrorKind::Malformed, where + "bad size");
    if (cells[3] == "request") r.direction = Direction::Request;
    else if (cells[3] == "response") r.direction = Direction::Response;
    else throw Error(ErrorKind::Malformed, where + "direction must be request or response");
    if (!cells[4].empty()) r.label = PacketLabel::parse(cells[4]);
    trace.records.push_back(std::move(r));
  }
  trace.validate();
  return trace;
}

void write_trace_files(const std::string& csv_path, const std::string& sidecar_path, const PacketTrace& trace) {
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorKind::Io, "cannot write '" + csv_path + "'");
  write_trace_csv(csv, trace);
  std::ofstream side(sidecar_path);
  if (!side) throw Error(ErrorKind::Io, "cannot write '" + sidecar_path + "'");
  side << flow_sidecar(trace).dump(2) << '\n';
}

PacketTrace read_trace_files(const std::string& csv_path, const std::string& sidecar_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw Error(ErrorKind::Io, "cannot open '" + csv_path + "'");
  std::ifstream side(sidecar_path);
  if (!side) throw Error(ErrorKind::Io, "cannot open '" + sidecar_path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(side);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Malformed, std::string("trace sidecar: ") + e.what());
  }
  return read_trace_csv(csv, doc);
}

}  // namespace rpclink
