#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "crowd/broker.hpp"
#include "crowd/ingest.hpp"
#include "crowd/pipeline.hpp"
#include "crowd/store.hpp"
#include "crowd/topology.hpp"

namespace httplib {
class Server;
}

namespace crowd {

enum class RecordKind { Probe, Camera };

struct SourceRecord {
    RecordKind kind;
    nlohmann::json body;
};

/// A queue the service polls for sensor reports.
class RecordSource {
public:
    virtual ~RecordSource() = default;
    /// Returns every record that became available since the previous call.
    virtual std::vector<SourceRecord> poll() = 0;
};

/// Thread-safe in-memory queue.
class QueueSource : public RecordSource {
public:
    void push(SourceRecord record);
    std::vector<SourceRecord> poll() override;

private:
    std::mutex mutex_;
    std::deque<SourceRecord> queue_;
};

/// Follows a growing NDJSON file of one record kind; lines that do not parse
/// are counted and skipped.
class NdjsonTailSource : public RecordSource {
public:
    NdjsonTailSource(std::filesystem::path path, RecordKind kind);
    std::vector<SourceRecord> poll() override;
    std::uint64_t skipped_lines() const { return skipped_; }

private:
    std::filesystem::path path_;
    RecordKind kind_;
    std::streamoff offset_ = 0;
    std::string partial_;
    std::uint64_t skipped_ = 0;
};

/// The live service: HTTP ingestion, the NGSI broker endpoints, and the
/// wall-clock finalization loop.
class Service {
public:
    struct Options {
        std::string host = "0.0.0.0";
        int port = 8080;
        std::function<Instant()> clock;
        NotificationSender notification_sender;
        RetryPolicy retry;
    };

    Service(PipelineConfig config, ZoneTopology topology, Options options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void add_source(std::unique_ptr<RecordSource> source);

    /// Binds, starts the loop and returns the bound port (useful with port 0).
    int start();
    /// Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();

    /// One loop iteration: drain sources and finalize due windows.
    void tick();

    ContextBroker& broker() { return *broker_; }
    Pipeline& pipeline() { return *pipeline_; }
    Ingestor& ingestor() { return *ingestor_; }
    nlohmann::json metrics() const;

private:
    void install_routes();
    void ingest(const SourceRecord& record);
    Instant now() const;

    PipelineConfig config_;
    ValidatedTopology topology_;
    Options options_;
    Instant origin_{};

    std::unique_ptr<EventStore> store_;
    std::unique_ptr<ContextBroker> broker_;
    std::unique_ptr<ContextPublisher> publisher_;
    std::unique_ptr<Ingestor> ingestor_;
    std::unique_ptr<Pipeline> pipeline_;
    std::unique_ptr<httplib::Server> server_;

    std::mutex sources_mutex_;
    std::vector<std::unique_ptr<RecordSource>> sources_;

    std::atomic<bool> running_{false};
    std::thread http_thread_;
    std::thread loop_thread_;
};

}  // namespace crowd
