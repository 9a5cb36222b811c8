#include "crowd/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <iostream>

namespace crowd {

using nlohmann::json;

void QueueSource::push(SourceRecord record) {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(record));
}

std::vector<SourceRecord> QueueSource::poll() {
    std::lock_guard lock(mutex_);
    std::vector<SourceRecord> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
}

NdjsonTailSource::NdjsonTailSource(std::filesystem::path path, RecordKind kind)
    : path_(std::move(path)), kind_(kind) {}

std::vector<SourceRecord> NdjsonTailSource::poll() {
    std::vector<SourceRecord> out;
    std::ifstream in(path_, std::ios::binary);
    if (!in) return out;
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    if (size < offset_) {
        offset_ = 0;  // truncated or rotated
        partial_.clear();
    }
    if (size == offset_) return out;
    in.seekg(offset_);
    std::string chunk(static_cast<std::size_t>(size - offset_), '\0');
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    offset_ = size;
    partial_ += chunk;

    std::size_t begin = 0;
    for (std::size_t nl; (nl = partial_.find('\n', begin)) != std::string::npos; begin = nl + 1) {
        std::string line = partial_.substr(begin, nl - begin);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            out.push_back({kind_, json::parse(line)});
        } catch (const json::exception&) {
            ++skipped_;
        }
    }
    partial_.erase(0, begin);
    return out;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void ngsi_error(httplib::Response& res, int status, const std::string& reason) {
    reply(res, status, {{"errorCode", {{"code", status}, {"reasonPhrase", reason}}}});
}

json context_responses(const std::vector<ContextEntity>& entities) {
    json out = json::array();
    for (const auto& e : entities) {
        out.push_back({{"contextElement", to_json(e)}, {"statusCode", {{"code", 200}, {"reasonPhrase", "OK"}}}});
    }
    return {{"contextResponses", out}};
}

std::optional<json> parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

const char* kOriginFile = "service.json";

}  // namespace

Service::Service(PipelineConfig config, ZoneTopology topology, Options options)
    : config_(std::move(config)), topology_(validate_topology(topology)), options_(std::move(options)) {
    validate(config_);
    validate(config_.salt, config_.window);

    std::optional<std::filesystem::path> root;
    if (!config_.store_path.empty()) {
        root = std::filesystem::path(config_.store_path);
        std::filesystem::create_directories(*root / "broker");
    }

    if (config_.epoch_origin) {
        origin_ = *config_.epoch_origin;
    } else if (root && std::filesystem::exists(*root / kOriginFile)) {
        std::ifstream in(*root / kOriginFile);
        origin_ = parse_timestamp(json::parse(in).at("epoch_origin").get<std::string>());
    } else {
        origin_ = utc_midnight(now());
    }
    if (root) {
        std::ofstream out(*root / kOriginFile, std::ios::trunc);
        out << json{{"epoch_origin", format_timestamp(origin_)}}.dump() << '\n';
    }

    store_ = root ? std::make_unique<EventStore>(*root / "events", EventStore::OpenMode::Resume)
                  : std::make_unique<EventStore>();

    ContextBroker::Options broker_options;
    if (root) broker_options.store_dir = *root / "broker";
    broker_options.window_duration = config_.window;
    broker_options.retry = options_.retry;
    broker_options.clock = options_.clock;
    broker_ = std::make_unique<ContextBroker>(
        broker_options, options_.notification_sender ? options_.notification_sender : http_sender());
    for (const auto& zone : topology_.zones()) broker_->register_entity(entity_for_zone(zone));

    if (config_.broker_endpoint.empty()) {
        publisher_ = std::make_unique<LocalBrokerPublisher>(*broker_);
    } else {
        publisher_ = std::make_unique<HttpBrokerPublisher>(config_.broker_endpoint);
    }

    const WindowGrid grid{origin_, config_.window};
    ingestor_ = std::make_unique<Ingestor>(topology_, config_.salt, grid, *store_);

    // TODO: rebuild calibration tracks from the stored choke measurements so a
    // restart does not re-enter the bootstrap phase.
    const auto finalized = store_->finalized_windows();
    const std::int64_t first = !finalized.empty() ? finalized.back() + 1
                               : now() >= origin_ ? grid.window_for(now()).index
                                                  : 0;
    pipeline_ = std::make_unique<Pipeline>(config_, topology_, *store_, publisher_.get(), origin_, first);

    server_ = std::make_unique<httplib::Server>();
    install_routes();
}

Service::~Service() { stop(); }

Instant Service::now() const {
    if (options_.clock) return options_.clock();
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

void Service::add_source(std::unique_ptr<RecordSource> source) {
    std::lock_guard lock(sources_mutex_);
    sources_.push_back(std::move(source));
}

void Service::ingest(const SourceRecord& record) {
    if (record.kind == RecordKind::Probe) {
        ingestor_->ingest_probe(record.body);
    } else {
        ingestor_->ingest_camera_event(record.body);
    }
}

void Service::tick() {
    {
        std::lock_guard lock(sources_mutex_);
        for (auto& source : sources_) {
            for (const auto& record : source->poll()) ingest(record);
        }
    }
    pipeline_->advance_to(now());
}

void Service::install_routes() {
    auto& s = *server_;

    const auto ingest_route = [this](RecordKind kind) {
        return [this, kind](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            if (!body) {
                reply(res, 400, {{"reason", to_string(RejectReason::MalformedRecord)}, {"detail", "invalid JSON"}});
                return;
            }
            const auto respond = [&](const auto& result) {
                if (const auto* rejection = std::get_if<Rejection>(&result)) {
                    reply(res, 400, {{"reason", to_string(rejection->reason)}, {"detail", rejection->detail}});
                    return;
                }
                const auto& ok = std::get<0>(result);
                reply(res, 202, {{"status", "accepted"},
                                 {"window_index", ok.window_index},
                                 {"duplicate", ok.duplicate},
                                 {"late", ok.late}});
            };
            if (kind == RecordKind::Probe) {
                respond(ingestor_->ingest_probe(*body));
            } else {
                respond(ingestor_->ingest_camera_event(*body));
            }
        };
    };
    s.Post("/ingest/probe", ingest_route(RecordKind::Probe));
    s.Post("/ingest/camera", ingest_route(RecordKind::Camera));

    s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, {{"status", "ok"},
                         {"epoch_origin", format_timestamp(origin_)},
                         {"next_window", pipeline_->next_window()}});
    });
    s.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, metrics()); });

    s.Post("/ngsi10/updateContext", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body || !body->is_object()) return ngsi_error(res, 400, "request body must be a JSON object");
        try {
            std::vector<ContextEntity> entities;
            if (body->contains("contextElements")) {
                const auto& elements = (*body)["contextElements"];
                if (!elements.is_array()) throw BrokerError(400, "contextElements must be an array");
                for (const auto& e : elements) entities.push_back(entity_from_json(e));
            } else {
                entities.push_back(entity_from_json(*body));
            }
            for (const auto& e : entities) broker_->update(e);
            reply(res, 200, context_responses(entities));
        } catch (const BrokerError& e) {
            ngsi_error(res, e.status(), e.what());
        }
    });

    s.Post("/ngsi10/queryContext", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body || !body->is_object()) return ngsi_error(res, 400, "request body must be a JSON object");
        try {
            const auto& selectors = body->contains("entities") ? (*body)["entities"] : json::array();
            if (!selectors.is_array() || selectors.empty()) {
                throw BrokerError(400, "entities must be a non-empty array");
            }
            std::vector<ContextEntity> found;
            for (const auto& sel : selectors) {
                for (auto& e : broker_->query(selector_from_json(sel))) {
                    const bool seen = std::any_of(found.begin(), found.end(),
                                                  [&](const ContextEntity& f) { return f.id == e.id; });
                    if (!seen) found.push_back(std::move(e));
                }
            }
            reply(res, 200, context_responses(found));
        } catch (const BrokerError& e) {
            ngsi_error(res, e.status(), e.what());
        }
    });

    s.Post("/ngsi10/subscribeContext", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body || !body->is_object()) return ngsi_error(res, 400, "request body must be a JSON object");
        try {
            const auto id = broker_->subscribe(subscription_from_json(*body));
            reply(res, 200, {{"subscribeResponse", {{"subscriptionId", id}}}});
        } catch (const BrokerError& e) {
            ngsi_error(res, e.status(), e.what());
        }
    });

    const auto cancel = [this](const std::string& id, httplib::Response& res) {
        if (!broker_->unsubscribe(id)) return ngsi_error(res, 404, "unknown subscription '" + id + "'");
        reply(res, 200, {{"subscriptionId", id}, {"statusCode", {{"code", 200}, {"reasonPhrase", "OK"}}}});
    };
    s.Post("/ngsi10/unsubscribeContext", [cancel](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body || !body->contains("subscriptionId") || !(*body)["subscriptionId"].is_string()) {
            return ngsi_error(res, 400, "subscriptionId is required");
        }
        cancel((*body)["subscriptionId"].get<std::string>(), res);
    });
    s.Delete(R"(/ngsi10/subscription/([^/]+))",
             [cancel](const httplib::Request& req, httplib::Response& res) { cancel(req.matches[1], res); });
}

nlohmann::json Service::metrics() const {
    const auto p = pipeline_->metrics();
    const auto ingest = ingestor_->metrics();
    const auto b = broker_->metrics();
    return {{"finalized_windows", p.finalized_windows},
            {"rejected_records", ingest.rejected_total()},
            {"notification_failures", b.notification_failures},
            {"publish_failures", p.publish_failures},
            {"store_retries", p.store_retries},
            {"next_window", pipeline_->next_window()},
            {"ingest", to_json(ingest)},
            {"broker", to_json(b)}};
}

int Service::start() {
    int port = options_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(options_.host);
    } else if (!server_->bind_to_port(options_.host, port)) {
        port = -1;
    }
    if (port < 0) throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    running_ = true;
    http_thread_ = std::thread([this] { server_->listen_after_bind(); });
    loop_thread_ = std::thread([this] {
        while (running_) {
            try {
                tick();
            } catch (const std::exception& e) {
                std::cerr << "service: " << e.what() << '\n';
            }
            std::this_thread::sleep_for(config_.poll_interval);
        }
    });
    server_->wait_until_ready();
    return port;
}

void Service::wait() {
    if (http_thread_.joinable()) http_thread_.join();
    if (loop_thread_.joinable()) loop_thread_.join();
}

void Service::stop() {
    running_ = false;
    if (server_) server_->stop();
    wait();
    if (store_) store_->flush();
}

}  // namespace crowd
