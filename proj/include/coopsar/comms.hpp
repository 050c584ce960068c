#pragma once

// Simulated multi-master message bus on a virtual clock: per-node
// namespaces, selective topic bridging, lossy partitioned links, and a
// chunked acknowledged transfer for bulk payloads.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <coopsar/error.hpp>

namespace coopsar {

struct LinkModel {
  double latency_min = 0.010;  // s, uniform
  double latency_max = 0.050;
  double drop = 0.05;
  std::vector<std::pair<double, double>> partitions;  // [start, end) s, sorted, disjoint

  /// True when [t0, t1] touches a partition interval.
  bool partitioned(double t0, double t1) const;
  /// Throws ConfigInvalid.
  void validate() const;
};

/// Outages of `length` s starting at `first`, `first + period`, ... before `until`.
std::vector<std::pair<double, double>> periodic_partitions(double first, double period, double length, double until);

struct Message {
  std::string src;    // publishing namespace
  std::string topic;  // fully qualified, e.g. /uav/map
  std::uint64_t seq = 0;  // per (src, topic), from 0
  double sent = 0.0;
  std::vector<std::uint8_t> data;
};

struct Delivery {
  double t = 0.0;
  std::string dst;
  Message msg;
};

struct BusEvent {
  double t = 0.0;
  std::string src;
  std::string topic;
  std::string event;  // publish, deliver, drop, partition, plus transfer events
  std::size_t bytes = 0;
};

class Bus;
using Handler = std::function<void(Bus&, const Delivery&)>;

class Bus {
 public:
  explicit Bus(std::uint64_t seed, LinkModel default_link = {});

  /// Namespaces look like "/uav"; throws ConfigInvalid on duplicates.
  void add_node(const std::string& ns);
  void declare_topic(const std::string& ns, const std::string& name);
  /// Bridge a remote fully qualified topic into `ns`; throws UndeclaredTopic.
  void add_sync_rule(const std::string& ns, const std::string& topic);
  /// Whether `topic` published elsewhere reaches `ns`.
  bool bridged(const std::string& ns, const std::string& topic) const;
  bool has_node(const std::string& ns) const { return nodes_.count(ns) != 0; }
  bool declared(const std::string& topic) const;

  /// Link used from `a` to `b`; set for both directions unless `one_way`.
  void set_link(const std::string& a, const std::string& b, const LinkModel& link, bool one_way = false);
  const LinkModel& link(const std::string& a, const std::string& b) const;

  /// Handler for deliveries of `topic` at `ns`; returns an id for unsubscribe.
  std::size_t subscribe(const std::string& ns, const std::string& topic, Handler h);
  void unsubscribe(std::size_t id);

  /// Publishes local topic `name` of `ns` at time t >= now(). Throws
  /// UndeclaredTopic or NonMonotonicTimestamp. Returns the sequence number.
  std::uint64_t publish(const std::string& ns, const std::string& name, std::vector<std::uint8_t> data, double t);

  /// Runs `fn` at virtual time t (timers).
  void schedule(double t, std::function<void(Bus&)> fn);

  /// Processes the next queued event; false when the queue is empty.
  bool step();
  /// Processes every event with time <= t and advances the clock to t.
  std::vector<Delivery> run_until(double t);

  double now() const { return now_; }
  bool idle() const { return queue_.empty(); }
  const std::vector<BusEvent>& events() const { return log_; }
  void log(double t, const std::string& src, const std::string& topic, const std::string& event, std::size_t bytes);
  /// Delivered sequence numbers per (src topic, dst), in delivery order.
  const std::map<std::pair<std::string, std::string>, std::vector<std::uint64_t>>& delivered() const {
    return delivered_;
  }

 private:
  struct Node {
    std::set<std::string> topics;  // fully qualified
    std::set<std::string> rules;
  };
  struct Queued {
    double t;
    std::uint64_t order;
    std::function<void(Bus&)> fn;
    bool operator>(const Queued& o) const { return t != o.t ? t > o.t : order > o.order; }
  };

  std::mt19937_64 rng_;
  LinkModel default_link_;
  std::map<std::string, Node> nodes_;
  std::map<std::pair<std::string, std::string>, LinkModel> links_;
  std::map<std::size_t, std::tuple<std::string, std::string, Handler>> handlers_;
  std::size_t next_handler_ = 0;
  std::map<std::string, std::uint64_t> next_seq_;
  std::map<std::tuple<std::string, std::string, std::string>, double> last_arrival_;
  std::map<std::pair<std::string, std::string>, std::vector<std::uint64_t>> delivered_;
  std::priority_queue<Queued, std::vector<Queued>, std::greater<>> queue_;
  std::uint64_t order_ = 0;
  double now_ = 0.0;
  std::vector<Delivery> pending_;  // deliveries collected by run_until
  bool collecting_ = false;
  std::vector<BusEvent> log_;
};

void write_events_csv(std::ostream& out, const std::vector<BusEvent>& events);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);

enum class TransferState { Active, Stalled, Complete };
const char* to_string(TransferState s);

struct TransferConfig {
  std::size_t chunk_size = 64 * 1024;
  double retransmit_timeout = 0.5;  // s
  int max_retries = 100;            // per chunk
  std::string data_topic = "transfer_data";
  std::string ack_topic = "transfer_ack";
};

struct TransferSession {
  std::uint32_t payload_id = 0;
  std::size_t total_bytes = 0;
  std::size_t chunk_size = 0;
  std::vector<bool> acked;
  std::vector<int> retries;
  TransferState state = TransferState::Active;
  std::optional<ErrorCode> error;
  std::size_t transmissions = 0;
  std::size_t retransmits = 0;
  double started = 0.0;
  double finished = 0.0;
  std::uint64_t payload_hash = 0;
  std::uint64_t received_hash = 0;
  std::vector<std::uint8_t> received;  // reassembled at the receiver

  std::size_t chunk_count() const { return acked.size(); }
  std::size_t acked_count() const;
};

/// Sends `payload` from `sender` to `receiver` starting at `t`, runs the bus
/// until the session completes or stalls (MaxRetriesExceeded), and returns
/// it. Declares the transfer topics and sync rules when missing.
TransferSession chunked_transfer(Bus& bus, const std::string& sender, const std::string& receiver,
                                 const std::vector<std::uint8_t>& payload, double t, std::uint32_t payload_id = 1,
                                 const TransferConfig& cfg = {});

}  // namespace coopsar
