#include <coopsar/comms.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace coopsar {

bool LinkModel::partitioned(double t0, double t1) const {
  for (const auto& [a, b] : partitions) {
    if (t0 < b && t1 >= a) return true;
  }
  return false;
}

void LinkModel::validate() const {
  if (!(drop >= 0.0 && drop <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "drop probability outside [0, 1]");
  if (!(latency_min >= 0.0 && latency_max >= latency_min))
    throw Error(ErrorCode::ConfigInvalid, "latency range must satisfy 0 <= min <= max");
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    if (!(partitions[i].second > partitions[i].first)) throw Error(ErrorCode::ConfigInvalid, "empty partition interval");
    if (i > 0 && partitions[i].first < partitions[i - 1].second)
      throw Error(ErrorCode::ConfigInvalid, "partition intervals must be sorted and disjoint");
  }
}

std::vector<std::pair<double, double>> periodic_partitions(double first, double period, double length, double until) {
  if (!(period > 0.0 && length > 0.0 && length < period))
    throw Error(ErrorCode::ConfigInvalid, "partition length must be in (0, period)");
  std::vector<std::pair<double, double>> out;
  for (double s = first; s < until; s += period) out.emplace_back(s, s + length);
  return out;
}

Bus::Bus(std::uint64_t seed, LinkModel default_link) : rng_(seed), default_link_(std::move(default_link)) {
  default_link_.validate();
}

void Bus::add_node(const std::string& ns) {
  if (ns.size() < 2 || ns[0] != '/' || ns.find('/', 1) != std::string::npos)
    throw Error(ErrorCode::ConfigInvalid, "namespace must look like /name: '" + ns + "'");
  if (!nodes_.emplace(ns, Node{}).second) throw Error(ErrorCode::ConfigInvalid, "duplicate namespace " + ns);
}

void Bus::declare_topic(const std::string& ns, const std::string& name) {
  auto it = nodes_.find(ns);
  if (it == nodes_.end()) throw Error(ErrorCode::ConfigInvalid, "unknown namespace " + ns);
  it->second.topics.insert(ns + "/" + name);
}

bool Bus::declared(const std::string& topic) const {
  const auto slash = topic.find('/', 1);
  if (topic.empty() || topic[0] != '/' || slash == std::string::npos) return false;
  const auto it = nodes_.find(topic.substr(0, slash));
  return it != nodes_.end() && it->second.topics.count(topic) != 0;
}

void Bus::add_sync_rule(const std::string& ns, const std::string& topic) {
  auto it = nodes_.find(ns);
  if (it == nodes_.end()) throw Error(ErrorCode::ConfigInvalid, "unknown namespace " + ns);
  if (!declared(topic)) throw Error(ErrorCode::UndeclaredTopic, "sync rule for undeclared topic " + topic);
  it->second.rules.insert(topic);
}

bool Bus::bridged(const std::string& ns, const std::string& topic) const {
  const auto it = nodes_.find(ns);
  return it != nodes_.end() && it->second.rules.count(topic) != 0 && declared(topic) &&
         topic.compare(0, ns.size() + 1, ns + "/") != 0;
}

void Bus::set_link(const std::string& a, const std::string& b, const LinkModel& link, bool one_way) {
  link.validate();
  links_[{a, b}] = link;
  if (!one_way) links_[{b, a}] = link;
}

const LinkModel& Bus::link(const std::string& a, const std::string& b) const {
  const auto it = links_.find({a, b});
  return it == links_.end() ? default_link_ : it->second;
}

std::size_t Bus::subscribe(const std::string& ns, const std::string& topic, Handler h) {
  handlers_.emplace(next_handler_, std::make_tuple(ns, topic, std::move(h)));
  return next_handler_++;
}

void Bus::unsubscribe(std::size_t id) { handlers_.erase(id); }

void Bus::log(double t, const std::string& src, const std::string& topic, const std::string& event, std::size_t bytes) {
  log_.push_back({t, src, topic, event, bytes});
}

std::uint64_t Bus::publish(const std::string& ns, const std::string& name, std::vector<std::uint8_t> data, double t) {
  const std::string topic = ns + "/" + name;
  if (!declared(topic)) throw Error(ErrorCode::UndeclaredTopic, "publish on undeclared topic " + topic);
  if (t < now_) throw Error(ErrorCode::NonMonotonicTimestamp, "publish before current bus time");

  Message msg{ns, topic, next_seq_[topic]++, t, std::move(data)};
  log(t, ns, topic, "publish", msg.data.size());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (const auto& [dst, node] : nodes_) {
    if (dst == ns || !bridged(dst, topic)) continue;
    const LinkModel& l = link(ns, dst);
    // Both draws are always taken so one link's settings do not shift the stream.
    const bool lost = u01(rng_) < l.drop;
    const double latency = l.latency_min + (l.latency_max - l.latency_min) * u01(rng_);
    if (lost) {
      log(t, ns, topic, "drop", msg.data.size());
      continue;
    }
    const auto key = std::make_tuple(ns, topic, dst);
    double arrival = t + latency;
    if (auto it = last_arrival_.find(key); it != last_arrival_.end()) arrival = std::max(arrival, it->second);
    if (l.partitioned(t, arrival)) {
      log(t, ns, topic, "partition", msg.data.size());
      continue;
    }
    last_arrival_[key] = arrival;
    schedule(arrival, [d = Delivery{arrival, dst, msg}](Bus& bus) {
      bus.log(d.t, d.msg.src, d.msg.topic, "deliver", d.msg.data.size());
      bus.delivered_[{d.msg.topic, d.dst}].push_back(d.msg.seq);
      if (bus.collecting_) bus.pending_.push_back(d);
      // Copy matching handlers first; a handler may (un)subscribe.
      std::vector<Handler> hs;
      for (const auto& [id, h] : bus.handlers_) {
        if (std::get<0>(h) == d.dst && std::get<1>(h) == d.msg.topic) hs.push_back(std::get<2>(h));
      }
      for (const auto& h : hs) h(bus, d);
    });
  }
  return msg.seq;
}

void Bus::schedule(double t, std::function<void(Bus&)> fn) {
  if (t < now_) throw Error(ErrorCode::NonMonotonicTimestamp, "event scheduled in the past");
  queue_.push({t, order_++, std::move(fn)});
}

bool Bus::step() {
  if (queue_.empty()) return false;
  Queued q = queue_.top();
  queue_.pop();
  now_ = q.t;
  q.fn(*this);
  return true;
}

std::vector<Delivery> Bus::run_until(double t) {
  pending_.clear();
  collecting_ = true;
  while (!queue_.empty() && queue_.top().t <= t) step();
  collecting_ = false;
  now_ = std::max(now_, t);
  return std::exchange(pending_, {});
}

void write_events_csv(std::ostream& out, const std::vector<BusEvent>& events) {
  out << "t,src,topic,event,bytes\n" << std::fixed << std::setprecision(6);
  for (const auto& e : events) out << e.t << ',' << e.src << ',' << e.topic << ',' << e.event << ',' << e.bytes << '\n';
  out.unsetf(std::ios::floatfield);
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* to_string(TransferState s) {
  switch (s) {
    case TransferState::Active: return "ACTIVE";
    case TransferState::Stalled: return "STALLED";
    case TransferState::Complete: return "COMPLETE";
  }
  return "?";
}

std::size_t TransferSession::acked_count() const { return static_cast<std::size_t>(std::count(acked.begin(), acked.end(), true)); }

namespace {

// Chunk and ack messages start with payload id and chunk index, little endian.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> header(std::uint32_t id, std::uint32_t index) {
  std::vector<std::uint8_t> h;
  put_u32(h, id);
  put_u32(h, index);
  return h;
}

struct TransferCtx {
  TransferSession s;
  std::vector<std::uint8_t> payload;
  TransferConfig cfg;
  std::string sender, receiver, data_topic;
  std::vector<bool> have;  // receiver side

  std::pair<std::size_t, std::size_t> span(std::size_t i) const {
    const std::size_t begin = i * cfg.chunk_size;
    return {begin, std::min(payload.size(), begin + cfg.chunk_size)};
  }
};

// Sends chunk i now and arms its retransmit timer. Timers hold a weak
// reference so they lapse once the transfer call returns.
void send_chunk(Bus& bus, const std::shared_ptr<TransferCtx>& ctx, std::size_t i) {
  auto msg = header(ctx->s.payload_id, static_cast<std::uint32_t>(i));
  const auto [lo, hi] = ctx->span(i);
  msg.insert(msg.end(), ctx->payload.begin() + lo, ctx->payload.begin() + hi);
  bus.publish(ctx->sender, ctx->cfg.data_topic, std::move(msg), bus.now());
  ++ctx->s.transmissions;
  std::weak_ptr<TransferCtx> weak = ctx;
  bus.schedule(bus.now() + ctx->cfg.retransmit_timeout, [weak, i](Bus& b) {
    const auto c = weak.lock();
    if (!c) return;
    TransferSession& s = c->s;
    if (s.state != TransferState::Active || s.acked[i]) return;
    if (s.retries[i] >= c->cfg.max_retries) {
      s.state = TransferState::Stalled;
      s.error = ErrorCode::MaxRetriesExceeded;
      s.finished = b.now();
      b.log(b.now(), c->sender, c->data_topic, "stalled", 0);
      return;
    }
    ++s.retries[i];
    ++s.retransmits;
    b.log(b.now(), c->sender, c->data_topic, "retransmit", c->span(i).second - c->span(i).first);
    send_chunk(b, c, i);
  });
}

}  // namespace

TransferSession chunked_transfer(Bus& bus, const std::string& sender, const std::string& receiver,
                                 const std::vector<std::uint8_t>& payload, double t, std::uint32_t payload_id,
                                 const TransferConfig& cfg) {
  if (cfg.chunk_size == 0 || cfg.max_retries < 0 || !(cfg.retransmit_timeout > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "invalid transfer configuration");
  const std::string data_topic = sender + "/" + cfg.data_topic;
  const std::string ack_topic = receiver + "/" + cfg.ack_topic;
  if (!bus.declared(data_topic)) bus.declare_topic(sender, cfg.data_topic);
  if (!bus.declared(ack_topic)) bus.declare_topic(receiver, cfg.ack_topic);
  if (!bus.bridged(receiver, data_topic)) bus.add_sync_rule(receiver, data_topic);
  if (!bus.bridged(sender, ack_topic)) bus.add_sync_rule(sender, ack_topic);

  auto ctx = std::make_shared<TransferCtx>();
  ctx->payload = payload;
  ctx->cfg = cfg;
  ctx->sender = sender;
  ctx->receiver = receiver;
  ctx->data_topic = data_topic;
  TransferSession& s = ctx->s;
  s.payload_id = payload_id;
  s.total_bytes = payload.size();
  s.chunk_size = cfg.chunk_size;
  const std::size_t n = std::max<std::size_t>(1, (payload.size() + cfg.chunk_size - 1) / cfg.chunk_size);
  s.acked.assign(n, false);
  s.retries.assign(n, 0);
  s.payload_hash = fnv1a64(payload);
  s.received.assign(payload.size(), 0);
  ctx->have.assign(n, false);

  std::weak_ptr<TransferCtx> weak = ctx;
  const std::size_t rx = bus.subscribe(receiver, data_topic, [weak](Bus& b, const Delivery& d) {
    const auto c = weak.lock();
    if (!c || d.msg.data.size() < 8 || get_u32(d.msg.data, 0) != c->s.payload_id) return;
    const std::size_t i = get_u32(d.msg.data, 4);
    if (i >= c->have.size()) return;
    if (!c->have[i]) {
      c->have[i] = true;
      std::copy(d.msg.data.begin() + 8, d.msg.data.end(), c->s.received.begin() + c->span(i).first);
    }
    // Duplicates are acked again; the sender ignores repeated acks.
    b.publish(c->receiver, c->cfg.ack_topic, header(c->s.payload_id, static_cast<std::uint32_t>(i)), d.t);
  });
  const std::size_t tx = bus.subscribe(sender, ack_topic, [weak](Bus& b, const Delivery& d) {
    const auto c = weak.lock();
    if (!c || d.msg.data.size() < 8 || get_u32(d.msg.data, 0) != c->s.payload_id) return;
    TransferSession& ss = c->s;
    const std::size_t i = get_u32(d.msg.data, 4);
    if (i >= ss.acked.size() || ss.acked[i] || ss.state != TransferState::Active) return;
    ss.acked[i] = true;
    if (ss.acked_count() == ss.acked.size()) {
      ss.state = TransferState::Complete;
      ss.finished = d.t;
      b.log(d.t, c->sender, c->data_topic, "complete", ss.total_bytes);
    }
  });

  bus.run_until(t);
  s.started = bus.now();
  bus.log(bus.now(), sender, data_topic, "transfer_start", payload.size());
  for (std::size_t i = 0; i < n; ++i) send_chunk(bus, ctx, i);
  while (s.state == TransferState::Active && bus.step()) {
  }
  bus.unsubscribe(rx);
  bus.unsubscribe(tx);
  s.received_hash = fnv1a64(s.received);
  return s;
}

}  // namespace coopsar
