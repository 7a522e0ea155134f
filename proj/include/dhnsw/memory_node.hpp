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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace dhnsw {

struct ReadSpec {
    std::uint64_t offset = 0;
    std::uint64_t len = 0;

    friend bool operator==(const ReadSpec&, const ReadSpec&) = default;
};

using RegionToken = std::uint64_t;

/// A registered, zero-initialized byte range. Serves raw verbs only; it has
/// no notion of what the bytes mean.
class Region {
public:
    Region(std::uint64_t capacity, RegionToken token);

    std::uint64_t capacity() const { return bytes_.size(); }
    RegionToken token() const { return token_; }

    std::vector<std::uint8_t> serve_read(std::uint64_t offset, std::uint64_t len) const;
    void serve_write(std::uint64_t offset, std::span<const std::uint8_t> data);
    // 32-bit little-endian fetch-and-add; returns the previous value.
    std::uint32_t serve_fetch_add(std::uint64_t offset, std::int32_t delta);
    // All specs are bounds-checked before any byte is copied, so a bad spec
    // fails the whole batch.
    std::vector<std::vector<std::uint8_t>> serve_doorbell(std::span<const ReadSpec> specs) const;

private:
    void check_bounds(std::uint64_t offset, std::uint64_t len) const;

    std::vector<std::uint8_t> bytes_;
    RegionToken token_;
    mutable std::shared_mutex mu_;
};

class MemoryNode {
public:
    std::shared_ptr<Region> register_region(std::uint64_t capacity);
    std::shared_ptr<Region> region(RegionToken token) const;

private:
    mutable std::mutex mu_;
    std::map<RegionToken, std::shared_ptr<Region>> regions_;
    RegionToken next_token_ = 1;
};

/// Serves one region over the length-prefixed TCP protocol. One thread per
/// connection; stop() closes the listener and all live connections.
class MemoryServer {
public:
    MemoryServer(std::shared_ptr<Region> region, const std::string& host, std::uint16_t port);
    ~MemoryServer();

    MemoryServer(const MemoryServer&) = delete;
    MemoryServer& operator=(const MemoryServer&) = delete;

    std::uint16_t port() const { return port_; }
    std::string address() const;
    void stop();
    // Blocks until stop() is called from another thread.
    void wait();

private:
    void accept_loop();
    void serve_connection(int fd);

    std::shared_ptr<Region> region_;
    std::string host_;
    std::uint16_t port_ = 0;
    int listen_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::vector<int> conn_fds_;
    std::vector<std::thread> workers_;
};

}  // namespace dhnsw
