#include "crowd/broker.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <regex>

namespace crowd {

namespace {

using nlohmann::json;

constexpr const char* kHistoryFile = "broker_history.ndjson";
constexpr const char* kSubscriptionsFile = "subscriptions.json";

json metadata(const std::string& name, const std::string& type, json value) {
    return {{"name", name}, {"type", type}, {"value", std::move(value)}};
}

[[noreturn]] void bad_request(const std::string& reason) { throw BrokerError(400, reason); }

const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) bad_request(std::string("missing field '") + key + "'");
    return j[key];
}

std::string require_string(const json& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_string()) bad_request(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

Instant require_time(const json& v, const std::string& name) {
    if (!v.is_string()) bad_request(name + " must be a timestamp string");
    try {
        return parse_timestamp(v.get<std::string>());
    } catch (const std::exception& e) {
        bad_request(name + ": " + e.what());
    }
}

CrowdEstimationAttribute attribute_from_json(const json& a) {
    if (require_string(a, "name") != kCrowdAttributeName) {
        bad_request("attribute name must be 'CrowdEstimation'");
    }
    if (require_string(a, "type") != kCrowdAttributeType) {
        bad_request("attribute type must be 'nle:CrowdEstimation'");
    }
    const auto& value = require(a, "contextValue");
    if (!value.is_number_integer()) bad_request("contextValue must be an integer");
    CrowdEstimationAttribute attr;
    attr.context_value = value.get<std::int64_t>();
    if (attr.context_value < 0) bad_request("contextValue must be non-negative");

    bool have_start = false, have_end = false;
    const auto& meta = require(a, "metadata");
    if (!meta.is_array()) bad_request("attribute metadata must be an array");
    for (const auto& m : meta) {
        const auto name = require_string(m, "name");
        const auto& v = require(m, "value");
        if (name == "StartTime") {
            attr.start_time = require_time(v, name);
            have_start = true;
        } else if (name == "EndTime") {
            attr.end_time = require_time(v, name);
            have_end = true;
        } else if (name == "EstimatedValue") {
            if (!v.is_number()) bad_request("EstimatedValue must be a number");
            attr.estimated_value = v.get<double>();
        } else if (name == "Fallback") {
            if (!v.is_boolean()) bad_request("Fallback must be a boolean");
            attr.fallback = v.get<bool>();
        }
    }
    if (!have_start || !have_end) bad_request("attribute metadata needs StartTime and EndTime");
    if (attr.start_time >= attr.end_time) bad_request("StartTime must precede EndTime");
    return attr;
}

}  // namespace

json to_json(const ContextEntity& e) {
    json attributes = json::array();
    if (e.attribute) {
        const auto& a = *e.attribute;
        json meta = json::array({metadata("StartTime", "DateTime", format_timestamp(a.start_time)),
                                 metadata("EndTime", "DateTime", format_timestamp(a.end_time))});
        if (a.estimated_value) meta.push_back(metadata("EstimatedValue", "Float", *a.estimated_value));
        if (a.fallback) meta.push_back(metadata("Fallback", "Boolean", *a.fallback));
        attributes.push_back({{"name", kCrowdAttributeName},
                              {"type", kCrowdAttributeType},
                              {"contextValue", a.context_value},
                              {"metadata", meta}});
    }
    return {{"entityId", {{"id", e.id}, {"type", e.type}, {"isPattern", false}}},
            {"domainMetadata",
             json::array({metadata("MacAddress", "String", e.mac_address),
                          metadata("nle:SimpleGeolocation", "nle:SimpleGeolocation",
                                   {{"latitude", e.geolocation.latitude},
                                    {"longitude", e.geolocation.longitude}})})},
            {"attributes", attributes}};
}

ContextEntity entity_from_json(const json& j) {
    const auto& eid = require(j, "entityId");
    ContextEntity e;
    e.id = require_string(eid, "id");
    if (e.id.empty()) bad_request("entity id must not be empty");
    e.type = require_string(eid, "type");
    if (e.type != kSnifferEntityType) bad_request("entity type must be 'nle:WiFiSniffer'");
    if (eid.contains("isPattern") && eid["isPattern"].is_boolean() && eid["isPattern"].get<bool>()) {
        bad_request("updates must name a concrete entity");
    }

    if (j.contains("domainMetadata")) {
        const auto& dm = j["domainMetadata"];
        if (!dm.is_array()) bad_request("domainMetadata must be an array");
        for (const auto& m : dm) {
            const auto name = require_string(m, "name");
            const auto& v = require(m, "value");
            if (name == "MacAddress") {
                if (!v.is_string()) bad_request("MacAddress must be a string");
                e.mac_address = v.get<std::string>();
            } else if (name == "nle:SimpleGeolocation") {
                const auto& lat = require(v, "latitude");
                const auto& lon = require(v, "longitude");
                if (!lat.is_number() || !lon.is_number()) bad_request("geolocation must be numeric");
                e.geolocation = {lat.get<double>(), lon.get<double>()};
            }
        }
    }

    if (j.contains("attributes")) {
        const auto& attrs = j["attributes"];
        if (!attrs.is_array()) bad_request("attributes must be an array");
        if (attrs.size() > 1) bad_request("a sniffer entity carries one CrowdEstimation attribute");
        if (!attrs.empty()) e.attribute = attribute_from_json(attrs[0]);
    }
    return e;
}

ContextEntity entity_for_zone(const Zone& zone) {
    ContextEntity e;
    e.id = zone.sniffer_id;
    e.mac_address = zone.sniffer_mac;
    e.geolocation = zone.geolocation;
    return e;
}

bool EntitySelector::matches(const ContextEntity& entity) const {
    if (id && *id != entity.id && *id != ".*") return false;
    if (type && *type != entity.type) return false;
    return true;
}

json to_json(const EntitySelector& s) {
    json j{{"isPattern", !s.id.has_value()}};
    if (s.id) j["id"] = *s.id;
    if (s.type) j["type"] = *s.type;
    return j;
}

EntitySelector selector_from_json(const json& j) {
    if (!j.is_object()) bad_request("entity selector must be an object");
    EntitySelector s;
    if (j.contains("id") && j["id"].is_string()) s.id = j["id"].get<std::string>();
    if (j.contains("type") && j["type"].is_string()) s.type = j["type"].get<std::string>();
    if (!s.id && !s.type) bad_request("entity selector needs an id or a type");
    return s;
}

json to_json(const Subscription& s) {
    json entities = json::array();
    for (const auto& sel : s.entities) entities.push_back(to_json(sel));
    json j{{"subscriptionId", s.subscription_id}, {"entities", entities}, {"reference", s.reference_url}};
    if (s.expires) j["expires"] = format_timestamp(*s.expires);
    return j;
}

Subscription subscription_from_json(const json& j) {
    Subscription s;
    if (j.contains("subscriptionId") && j["subscriptionId"].is_string()) {
        s.subscription_id = j["subscriptionId"].get<std::string>();
    }
    const auto& entities = require(j, "entities");
    if (!entities.is_array() || entities.empty()) bad_request("entities must be a non-empty array");
    for (const auto& e : entities) s.entities.push_back(selector_from_json(e));
    s.reference_url = require_string(j, "reference");
    if (j.contains("expires") && !j["expires"].is_null()) s.expires = require_time(j["expires"], "expires");
    return s;
}

bool is_valid_reference_url(const std::string& url) {
    static const std::regex pattern(R"(^https?://[A-Za-z0-9.\-]+(:[0-9]{1,5})?(/[^\s]*)?$)");
    return std::regex_match(url, pattern);
}

json notification_payload(const Subscription& s, const ContextEntity& entity) {
    return {{"subscriptionId", s.subscription_id},
            {"originator", "crowd-thin-broker"},
            {"contextResponses",
             json::array({{{"contextElement", to_json(entity)},
                           {"statusCode", {{"code", 200}, {"reasonPhrase", "OK"}}}}})}};
}

json to_json(const BrokerMetrics& m) {
    return {{"updates", m.updates},
            {"notifications_delivered", m.notifications_delivered},
            {"notification_failures", m.notification_failures},
            {"notifications_dropped", m.notifications_dropped}};
}

NotificationSender http_sender(std::chrono::milliseconds timeout) {
    return [timeout](const std::string& url, const std::string& body) {
        static const std::regex split(R"(^(https?://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(url, m, split)) return false;
        httplib::Client client(m[1].str());
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        const std::string path = m[2].matched ? m[2].str() : "/";
        auto res = client.Post(path, body, "application/json");
        return res && res->status >= 200 && res->status < 300;
    };
}

ContextBroker::ContextBroker(Options options, NotificationSender sender)
    : options_(std::move(options)), sender_(std::move(sender)) {
    if (options_.store_dir) {
        std::filesystem::create_directories(*options_.store_dir);
        load_persisted();
    }
    dispatcher_ = std::thread([this] { dispatch_loop(); });
}

ContextBroker::~ContextBroker() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    dispatcher_.join();
}

Instant ContextBroker::now() const {
    if (options_.clock) return options_.clock();
    return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now());
}

void ContextBroker::load_persisted() {
    const auto subs_path = *options_.store_dir / kSubscriptionsFile;
    if (std::ifstream in(subs_path); in) {
        const auto j = json::parse(in);
        for (const auto& s : j.at("subscriptions")) {
            auto sub = subscription_from_json(s);
            subscriptions_[sub.subscription_id] = sub;
        }
        next_subscription_ = j.value("next_id", std::uint64_t{1});
    }
    if (std::ifstream in(*options_.store_dir / kHistoryFile); in) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto entity = entity_from_json(json::parse(line));
            history_[entity.id].push_back(entity);
            latest_[entity.id] = std::move(entity);
        }
    }
}

void ContextBroker::persist_subscriptions_locked() const {
    if (!options_.store_dir) return;
    json subs = json::array();
    for (const auto& [_, s] : subscriptions_) subs.push_back(to_json(s));
    const auto path = *options_.store_dir / kSubscriptionsFile;
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << json{{"subscriptions", subs}, {"next_id", next_subscription_}}.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

void ContextBroker::register_entity(const ContextEntity& entity) {
    std::lock_guard lock(mutex_);
    latest_.try_emplace(entity.id, entity);
}

void ContextBroker::update(const ContextEntity& entity) {
    // Round-trip through the wire form so programmatic updates get the same checks.
    const json doc = to_json(entity);
    const ContextEntity checked = entity_from_json(doc);
    if (!checked.attribute) throw BrokerError(400, "update carries no CrowdEstimation attribute");
    if (options_.window_duration &&
        checked.attribute->end_time - checked.attribute->start_time != *options_.window_duration) {
        throw BrokerError(400, "EndTime - StartTime must equal the window duration");
    }

    std::vector<Job> jobs;
    {
        std::lock_guard lock(mutex_);
        latest_[checked.id] = checked;
        history_[checked.id].push_back(checked);
        ++metrics_.updates;
        if (options_.store_dir) {
            std::ofstream out(*options_.store_dir / kHistoryFile, std::ios::app);
            out << doc.dump() << '\n';
        }
        purge_expired_locked(now());
        for (const auto& [id, sub] : subscriptions_) {
            const bool match = std::any_of(sub.entities.begin(), sub.entities.end(),
                                           [&](const EntitySelector& s) { return s.matches(checked); });
            if (match) {
                jobs.push_back({id, sub.reference_url, notification_payload(sub, checked).dump(), 0,
                                std::chrono::steady_clock::now()});
            }
        }
    }
    if (!jobs.empty()) {
        {
            std::lock_guard lock(queue_mutex_);
            for (auto& j : jobs) jobs_.push_back(std::move(j));
        }
        queue_cv_.notify_all();
    }
}

std::vector<ContextEntity> ContextBroker::query(const EntitySelector& selector) const {
    std::lock_guard lock(mutex_);
    std::vector<ContextEntity> out;
    for (const auto& [_, e] : latest_) {
        if (selector.matches(e)) out.push_back(e);
    }
    return out;
}

std::vector<ContextEntity> ContextBroker::history(const std::string& entity_id) const {
    std::lock_guard lock(mutex_);
    auto it = history_.find(entity_id);
    return it == history_.end() ? std::vector<ContextEntity>{} : it->second;
}

std::string ContextBroker::subscribe(Subscription subscription) {
    if (!is_valid_reference_url(subscription.reference_url)) {
        throw BrokerError(400, "invalid reference URL '" + subscription.reference_url + "'");
    }
    if (subscription.entities.empty()) throw BrokerError(400, "subscription needs an entity pattern");
    std::lock_guard lock(mutex_);
    subscription.subscription_id = "sub-" + std::to_string(next_subscription_++);
    const auto id = subscription.subscription_id;
    subscriptions_[id] = std::move(subscription);
    persist_subscriptions_locked();
    return id;
}

bool ContextBroker::unsubscribe(const std::string& subscription_id) {
    std::lock_guard lock(mutex_);
    if (subscriptions_.erase(subscription_id) == 0) return false;
    persist_subscriptions_locked();
    return true;
}

std::vector<Subscription> ContextBroker::subscriptions() const {
    std::lock_guard lock(mutex_);
    std::vector<Subscription> out;
    for (const auto& [_, s] : subscriptions_) out.push_back(s);
    return out;
}

void ContextBroker::purge_expired_locked(Instant at) {
    bool changed = false;
    for (auto it = subscriptions_.begin(); it != subscriptions_.end();) {
        if (it->second.expires && *it->second.expires <= at) {
            it = subscriptions_.erase(it);
            changed = true;
        } else {
            ++it;
        }
    }
    if (changed) persist_subscriptions_locked();
}

void ContextBroker::dispatch_loop() {
    std::unique_lock lock(queue_mutex_);
    while (true) {
        if (stopping_) return;
        if (jobs_.empty()) {
            queue_cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
            continue;
        }
        auto next = std::min_element(jobs_.begin(), jobs_.end(),
                                     [](const Job& a, const Job& b) { return a.due < b.due; });
        if (next->due > std::chrono::steady_clock::now()) {
            queue_cv_.wait_until(lock, next->due);
            continue;
        }
        Job job = std::move(*next);
        jobs_.erase(next);
        ++in_flight_;
        lock.unlock();

        bool ok = false;
        try {
            ok = sender_(job.url, job.body);
        } catch (const std::exception&) {
            ok = false;
        }
        ++job.attempts;

        {
            std::lock_guard stats(mutex_);
            if (ok) {
                ++metrics_.notifications_delivered;
            } else {
                ++metrics_.notification_failures;
                if (job.attempts >= options_.retry.max_attempts) ++metrics_.notifications_dropped;
            }
        }
        if (!ok) {
            std::cerr << "broker: notification for " << job.subscription_id << " to " << job.url
                      << " failed (attempt " << job.attempts << "/" << options_.retry.max_attempts
                      << ")\n";
        }

        lock.lock();
        --in_flight_;
        if (!ok && job.attempts < options_.retry.max_attempts) {
            job.due = std::chrono::steady_clock::now() +
                      options_.retry.initial_backoff * (1 << (job.attempts - 1));
            jobs_.push_back(std::move(job));
        }
        if (jobs_.empty() && in_flight_ == 0) idle_cv_.notify_all();
    }
}

void ContextBroker::wait_idle() {
    std::unique_lock lock(queue_mutex_);
    idle_cv_.wait(lock, [this] { return jobs_.empty() && in_flight_ == 0; });
}

BrokerMetrics ContextBroker::metrics() const {
    std::lock_guard lock(mutex_);
    return metrics_;
}

}  // namespace crowd
