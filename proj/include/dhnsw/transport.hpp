// Copyright 2026-present the dhnsw project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dhnsw/memory_node.hpp"

namespace dhnsw {

struct FabricStats {
    std::uint64_t round_trips = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t bytes_written = 0;
    // Sub-reads issued inside doorbell batches, and the batches themselves.
    std::uint64_t doorbell_ops = 0;
    std::uint64_t doorbell_batches = 0;
    // Model time: sum over round trips of base_rtt + bytes / bandwidth,
    // plus a per-extra-op penalty inside doorbell batches.
    double simulated_time_us = 0.0;

    FabricStats& operator+=(const FabricStats& o);
    friend FabricStats operator-(FabricStats a, const FabricStats& b);
    friend bool operator==(const FabricStats&, const FabricStats&) = default;
};

struct TransportConfig {
    std::string backend = "inproc";  // "inproc" | "tcp"
    std::string address;             // host:port for tcp
    std::uint32_t doorbell_max = 8;
    double base_rtt_us = 2.0;
    double bandwidth_gbps = 100.0;
    double doorbell_op_penalty_us = 0.0;
};

/// Raw verb executor. Each call is exactly one request/response exchange.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::vector<std::uint8_t> read(std::uint64_t offset, std::uint64_t len) = 0;
    virtual void write(std::uint64_t offset, std::span<const std::uint8_t> data) = 0;
    virtual std::uint32_t fetch_add(std::uint64_t offset, std::int32_t delta) = 0;
    virtual std::vector<std::vector<std::uint8_t>> doorbell(std::span<const ReadSpec> specs) = 0;
    virtual void close() = 0;
    virtual bool connected() const = 0;
};

std::unique_ptr<Backend> make_inproc_backend(std::shared_ptr<Region> region);
// Throws kConnectionRefused when nothing listens at host:port.
std::unique_ptr<Backend> make_tcp_backend(const std::string& address);

enum class VerbKind : std::uint8_t { kRead, kWrite, kFetchAdd, kDoorbell };

struct VerbRecord {
    VerbKind kind = VerbKind::kRead;
    std::vector<ReadSpec> specs;  // read/doorbell targets; one entry for write/faa
    std::uint64_t round_trips = 0;
};

/// A compute worker's handle onto remote memory. Accounts every round trip.
/// Not thread-safe: one worker per handle.
class Transport {
public:
    Transport(std::unique_ptr<Backend> backend, TransportConfig config);

    std::vector<std::uint8_t> read(ReadSpec spec);
    void write(std::uint64_t offset, std::span<const std::uint8_t> data);
    std::uint32_t fetch_add(std::uint64_t offset, std::int32_t delta);

    // ceil(|specs| / doorbell_max) round trips; results match specs by
    // position. Any failing sub-read fails the whole call.
    std::vector<std::vector<std::uint8_t>> doorbell_read(std::span<const ReadSpec> specs,
                                                         std::uint32_t doorbell_max);
    std::vector<std::vector<std::uint8_t>> doorbell_read(std::span<const ReadSpec> specs) {
        return doorbell_read(specs, config_.doorbell_max);
    }

    void disconnect();
    bool connected() const { return backend_ && backend_->connected(); }

    const FabricStats& stats() const { return stats_; }
    const TransportConfig& config() const { return config_; }

    void set_recording(bool on) { recording_ = on; }
    const std::vector<VerbRecord>& log() const { return log_; }
    void clear_log() { log_.clear(); }

private:
    void ensure_connected() const;
    void account(std::uint64_t bytes, std::uint64_t ops);
    void record(VerbKind kind, std::vector<ReadSpec> specs, std::uint64_t trips);

    std::unique_ptr<Backend> backend_;
    TransportConfig config_;
    FabricStats stats_;
    bool recording_ = false;
    std::vector<VerbRecord> log_;
};

// inproc needs the region to attach to; tcp ignores it.
Transport connect(const TransportConfig& config, std::shared_ptr<Region> local = nullptr);

}  // namespace dhnsw
