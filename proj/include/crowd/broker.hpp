#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "crowd/time.hpp"
#include "crowd/topology.hpp"

namespace crowd {

inline constexpr const char* kSnifferEntityType = "nle:WiFiSniffer";
inline constexpr const char* kCrowdAttributeName = "CrowdEstimation";
inline constexpr const char* kCrowdAttributeType = "nle:CrowdEstimation";

struct CrowdEstimationAttribute {
    std::int64_t context_value = 0;
    Instant start_time{};
    Instant end_time{};
    // Unrounded calibrated value and bootstrap flag, carried as extra metadata.
    std::optional<double> estimated_value;
    std::optional<bool> fallback;

    friend bool operator==(const CrowdEstimationAttribute&, const CrowdEstimationAttribute&) = default;
};

struct ContextEntity {
    std::string id;
    std::string type = kSnifferEntityType;
    std::string mac_address;
    GeoLocation geolocation;
    std::optional<CrowdEstimationAttribute> attribute;
};

/// A rejected broker request; `status` is the HTTP status to answer with.
class BrokerError : public std::runtime_error {
public:
    BrokerError(int status, const std::string& reason) : std::runtime_error(reason), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

nlohmann::json to_json(const ContextEntity& entity);
/// Throws BrokerError(400) describing the first structural problem.
ContextEntity entity_from_json(const nlohmann::json& j);

/// Entity for a zone's sniffer, without an estimate yet.
ContextEntity entity_for_zone(const Zone& zone);

struct EntitySelector {
    std::optional<std::string> id;
    std::optional<std::string> type;

    bool matches(const ContextEntity& entity) const;
};

nlohmann::json to_json(const EntitySelector& selector);
EntitySelector selector_from_json(const nlohmann::json& j);

struct Subscription {
    std::string subscription_id;
    std::vector<EntitySelector> entities;
    std::string reference_url;
    std::optional<Instant> expires;
};

nlohmann::json to_json(const Subscription& s);
Subscription subscription_from_json(const nlohmann::json& j);

bool is_valid_reference_url(const std::string& url);

/// Notification body sent to a subscriber for one changed entity.
nlohmann::json notification_payload(const Subscription& s, const ContextEntity& entity);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
};

struct BrokerMetrics {
    std::uint64_t updates = 0;
    std::uint64_t notifications_delivered = 0;
    std::uint64_t notification_failures = 0;  // attempts that failed
    std::uint64_t notifications_dropped = 0;  // gave up after the retry budget
};

nlohmann::json to_json(const BrokerMetrics& m);

/// Delivers a JSON body to a URL; returns true on a 2xx answer.
using NotificationSender = std::function<bool(const std::string& url, const std::string& body)>;

/// HTTP POST sender backed by cpp-httplib.
NotificationSender http_sender(std::chrono::milliseconds timeout = std::chrono::milliseconds{2000});

/// In-process thin broker: latest value per entity, history, subscriptions
/// and asynchronous notification with bounded retry.
class ContextBroker {
public:
    struct Options {
        std::optional<std::filesystem::path> store_dir;
        // When set, updates must span exactly one window.
        std::optional<std::chrono::seconds> window_duration;
        RetryPolicy retry;
        std::function<Instant()> clock;
    };

    explicit ContextBroker(Options options, NotificationSender sender = http_sender());
    ~ContextBroker();

    ContextBroker(const ContextBroker&) = delete;
    ContextBroker& operator=(const ContextBroker&) = delete;

    void register_entity(const ContextEntity& entity);

    /// Validates, replaces the latest value, appends history and queues
    /// notifications. Throws BrokerError(400) for malformed entities.
    void update(const ContextEntity& entity);
    std::vector<ContextEntity> query(const EntitySelector& selector) const;
    std::vector<ContextEntity> history(const std::string& entity_id) const;

    /// Throws BrokerError(400) for an invalid reference URL.
    std::string subscribe(Subscription subscription);
    bool unsubscribe(const std::string& subscription_id);
    std::vector<Subscription> subscriptions() const;

    /// Blocks until no notification is queued or in flight.
    void wait_idle();
    BrokerMetrics metrics() const;

private:
    struct Job {
        std::string subscription_id;
        std::string url;
        std::string body;
        int attempts = 0;
        std::chrono::steady_clock::time_point due;
    };

    void dispatch_loop();
    void purge_expired_locked(Instant now);
    void persist_subscriptions_locked() const;
    void load_persisted();
    Instant now() const;

    Options options_;
    NotificationSender sender_;

    mutable std::mutex mutex_;
    std::map<std::string, ContextEntity> latest_;
    std::map<std::string, std::vector<ContextEntity>> history_;
    std::map<std::string, Subscription> subscriptions_;
    std::uint64_t next_subscription_ = 1;
    BrokerMetrics metrics_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::condition_variable idle_cv_;
    std::deque<Job> jobs_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    std::thread dispatcher_;
};

}  // namespace crowd
