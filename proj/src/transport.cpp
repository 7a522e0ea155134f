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

#include "dhnsw/transport.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"
#include "dhnsw/wire.hpp"

namespace dhnsw {

FabricStats& FabricStats::operator+=(const FabricStats& o) {
    round_trips += o.round_trips;
    bytes_read += o.bytes_read;
    bytes_written += o.bytes_written;
    doorbell_ops += o.doorbell_ops;
    doorbell_batches += o.doorbell_batches;
    simulated_time_us += o.simulated_time_us;
    return *this;
}

FabricStats operator-(FabricStats a, const FabricStats& b) {
    a.round_trips -= b.round_trips;
    a.bytes_read -= b.bytes_read;
    a.bytes_written -= b.bytes_written;
    a.doorbell_ops -= b.doorbell_ops;
    a.doorbell_batches -= b.doorbell_batches;
    a.simulated_time_us -= b.simulated_time_us;
    return a;
}

namespace {

class InprocBackend final : public Backend {
public:
    explicit InprocBackend(std::shared_ptr<Region> region) : region_(std::move(region)) {
        if (!region_) {
            throw_error(ErrorCode::kInvalidArgument, "inproc backend: no region to attach to");
        }
    }

    std::vector<std::uint8_t> read(std::uint64_t offset, std::uint64_t len) override {
        return region_->serve_read(offset, len);
    }
    void write(std::uint64_t offset, std::span<const std::uint8_t> data) override {
        region_->serve_write(offset, data);
    }
    std::uint32_t fetch_add(std::uint64_t offset, std::int32_t delta) override {
        return region_->serve_fetch_add(offset, delta);
    }
    std::vector<std::vector<std::uint8_t>> doorbell(std::span<const ReadSpec> specs) override {
        return region_->serve_doorbell(specs);
    }
    void close() override { region_.reset(); }
    bool connected() const override { return region_ != nullptr; }

private:
    std::shared_ptr<Region> region_;
};

class TcpBackend final : public Backend {
public:
    explicit TcpBackend(const std::string& address) {
        const auto colon = address.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
            throw_error(ErrorCode::kInvalidArgument,
                        "tcp backend: address '" + address + "' is not host:port");
        }
        const std::string host = address.substr(0, colon);
        const std::string port = address.substr(colon + 1);

        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
            throw_error(ErrorCode::kConnectionRefused,
                        "tcp backend: cannot resolve " + address + ": " + ::gai_strerror(rc));
        }
        int last_errno = 0;
        for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
            fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd_ < 0) {
                last_errno = errno;
                continue;
            }
            if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) {
                break;
            }
            last_errno = errno;
            ::close(fd_);
            fd_ = -1;
        }
        ::freeaddrinfo(res);
        if (fd_ < 0) {
            throw_error(ErrorCode::kConnectionRefused,
                        "tcp backend: connect to " + address + " failed: " +
                            std::strerror(last_errno));
        }
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }

    ~TcpBackend() override { close(); }

    std::vector<std::uint8_t> read(std::uint64_t offset, std::uint64_t len) override {
        wire::Request req;
        req.op = wire::Opcode::kRead;
        req.offset = offset;
        req.len = len;
        auto payload = call(req);
        if (payload.size() != len) {
            throw_error(ErrorCode::kTransport, "tcp backend: short read payload");
        }
        return payload;
    }

    void write(std::uint64_t offset, std::span<const std::uint8_t> data) override {
        wire::Request req;
        req.op = wire::Opcode::kWrite;
        req.offset = offset;
        req.data.assign(data.begin(), data.end());
        call(req);
    }

    std::uint32_t fetch_add(std::uint64_t offset, std::int32_t delta) override {
        wire::Request req;
        req.op = wire::Opcode::kFetchAdd;
        req.offset = offset;
        req.delta = delta;
        auto payload = call(req);
        if (payload.size() != 4) {
            throw_error(ErrorCode::kTransport, "tcp backend: bad fetch_add payload");
        }
        return load_u32(payload);
    }

    std::vector<std::vector<std::uint8_t>> doorbell(std::span<const ReadSpec> specs) override {
        wire::Request req;
        req.op = wire::Opcode::kDoorbell;
        req.specs.assign(specs.begin(), specs.end());
        auto payload = call(req);
        std::vector<std::vector<std::uint8_t>> out;
        out.reserve(specs.size());
        std::size_t pos = 0;
        for (const auto& s : specs) {
            if (s.len > payload.size() - pos) {
                throw_error(ErrorCode::kTransport, "tcp backend: short doorbell payload");
            }
            auto first = payload.begin() + static_cast<std::ptrdiff_t>(pos);
            out.emplace_back(first, first + static_cast<std::ptrdiff_t>(s.len));
            pos += s.len;
        }
        if (pos != payload.size()) {
            throw_error(ErrorCode::kTransport, "tcp backend: oversized doorbell payload");
        }
        return out;
    }

    void close() override {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    bool connected() const override { return fd_ >= 0; }

private:
    std::vector<std::uint8_t> call(const wire::Request& req) {
        wire::write_all(fd_, wire::encode_request(req));
        auto resp = wire::decode_response(wire::read_frame(fd_));
        if (resp.op != req.op) {
            throw_error(ErrorCode::kTransport, "tcp backend: response opcode mismatch");
        }
        const std::string message(resp.payload.begin(), resp.payload.end());
        switch (resp.status) {
            case wire::Status::kOk:
                return std::move(resp.payload);
            case wire::Status::kOutOfBounds:
                throw_error(ErrorCode::kOutOfBounds, message);
            case wire::Status::kMisaligned:
                throw_error(ErrorCode::kMisaligned, message);
            case wire::Status::kBadRequest:
                throw_error(ErrorCode::kInvalidArgument, message);
        }
        throw_error(ErrorCode::kTransport, "tcp backend: unknown status");
    }

    int fd_ = -1;
};

}  // namespace

std::unique_ptr<Backend> make_inproc_backend(std::shared_ptr<Region> region) {
    return std::make_unique<InprocBackend>(std::move(region));
}

std::unique_ptr<Backend> make_tcp_backend(const std::string& address) {
    return std::make_unique<TcpBackend>(address);
}

Transport::Transport(std::unique_ptr<Backend> backend, TransportConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {
    if (config_.doorbell_max == 0) {
        throw_error(ErrorCode::kInvalidArgument, "transport: doorbell_max must be at least 1");
    }
    if (config_.bandwidth_gbps <= 0.0) {
        throw_error(ErrorCode::kInvalidArgument, "transport: bandwidth must be positive");
    }
}

void Transport::ensure_connected() const {
    if (!connected()) {
        throw_error(ErrorCode::kTransport, "transport: not connected");
    }
}

void Transport::account(std::uint64_t bytes, std::uint64_t ops) {
    stats_.round_trips += 1;
    // 1 Gb/s moves 1000 bits per microsecond.
    stats_.simulated_time_us += config_.base_rtt_us +
                                static_cast<double>(bytes) * 8.0 / (config_.bandwidth_gbps * 1e3) +
                                config_.doorbell_op_penalty_us * static_cast<double>(ops - 1);
}

void Transport::record(VerbKind kind, std::vector<ReadSpec> specs, std::uint64_t trips) {
    if (recording_) {
        log_.push_back({kind, std::move(specs), trips});
    }
}

std::vector<std::uint8_t> Transport::read(ReadSpec spec) {
    ensure_connected();
    if (spec.len == 0) {
        throw_error(ErrorCode::kInvalidArgument, "transport: zero-length read");
    }
    auto out = backend_->read(spec.offset, spec.len);
    account(spec.len, 1);
    stats_.bytes_read += spec.len;
    record(VerbKind::kRead, {spec}, 1);
    return out;
}

void Transport::write(std::uint64_t offset, std::span<const std::uint8_t> data) {
    ensure_connected();
    backend_->write(offset, data);
    account(data.size(), 1);
    stats_.bytes_written += data.size();
    record(VerbKind::kWrite, {{offset, data.size()}}, 1);
}

std::uint32_t Transport::fetch_add(std::uint64_t offset, std::int32_t delta) {
    ensure_connected();
    const std::uint32_t prev = backend_->fetch_add(offset, delta);
    account(4, 1);
    record(VerbKind::kFetchAdd, {{offset, 4}}, 1);
    return prev;
}

std::vector<std::vector<std::uint8_t>> Transport::doorbell_read(std::span<const ReadSpec> specs,
                                                                std::uint32_t doorbell_max) {
    ensure_connected();
    if (specs.empty()) {
        throw_error(ErrorCode::kInvalidArgument, "transport: empty doorbell batch");
    }
    if (doorbell_max == 0) {
        throw_error(ErrorCode::kInvalidArgument, "transport: doorbell_max must be at least 1");
    }
    for (const auto& s : specs) {
        if (s.len == 0) {
            throw_error(ErrorCode::kInvalidArgument, "transport: zero-length read in doorbell");
        }
    }

    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(specs.size());
    std::uint64_t trips = 0;
    for (std::size_t first = 0; first < specs.size(); first += doorbell_max) {
        auto chunk = specs.subspan(first, std::min<std::size_t>(doorbell_max, specs.size() - first));
        std::vector<std::vector<std::uint8_t>> part;
        std::uint64_t bytes = 0;
        for (const auto& s : chunk) {
            bytes += s.len;
        }
        if (chunk.size() == 1) {
            // A lone read goes out as a plain READ and is accounted as one.
            part.push_back(backend_->read(chunk[0].offset, chunk[0].len));
        } else {
            part = backend_->doorbell(chunk);
            stats_.doorbell_batches += 1;
            stats_.doorbell_ops += chunk.size();
        }
        account(bytes, chunk.size());
        stats_.bytes_read += bytes;
        ++trips;
        for (auto& p : part) {
            out.push_back(std::move(p));
        }
    }
    record(VerbKind::kDoorbell, {specs.begin(), specs.end()}, trips);
    return out;
}

void Transport::disconnect() {
    if (backend_) {
        backend_->close();
    }
}

Transport connect(const TransportConfig& config, std::shared_ptr<Region> local) {
    if (config.backend == "inproc") {
        return Transport(make_inproc_backend(std::move(local)), config);
    }
    if (config.backend == "tcp") {
        return Transport(make_tcp_backend(config.address), config);
    }
    throw_error(ErrorCode::kInvalidArgument, "transport: unknown backend '" + config.backend + "'");
}

}  // namespace dhnsw
