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

#include "dhnsw/memory_node.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"
#include "dhnsw/wire.hpp"

namespace dhnsw {

Region::Region(std::uint64_t capacity, RegionToken token) : token_(token) {
    if (capacity == 0) {
        throw_error(ErrorCode::kInvalidArgument, "register: capacity must be positive");
    }
    bytes_.assign(capacity, 0);
}

void Region::check_bounds(std::uint64_t offset, std::uint64_t len) const {
    if (offset > bytes_.size() || len > bytes_.size() - offset) {
        throw_error(ErrorCode::kOutOfBounds, "region: [" + std::to_string(offset) + ", +" +
                                                 std::to_string(len) + ") exceeds capacity " +
                                                 std::to_string(bytes_.size()));
    }
}

std::vector<std::uint8_t> Region::serve_read(std::uint64_t offset, std::uint64_t len) const {
    check_bounds(offset, len);
    std::shared_lock lock(mu_);
    auto first = bytes_.begin() + static_cast<std::ptrdiff_t>(offset);
    return {first, first + static_cast<std::ptrdiff_t>(len)};
}

void Region::serve_write(std::uint64_t offset, std::span<const std::uint8_t> data) {
    check_bounds(offset, data.size());
    std::unique_lock lock(mu_);
    std::copy(data.begin(), data.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(offset));
}

std::uint32_t Region::serve_fetch_add(std::uint64_t offset, std::int32_t delta) {
    if (offset % 4 != 0) {
        throw_error(ErrorCode::kMisaligned,
                    "region: fetch_add offset " + std::to_string(offset) + " is not 4-byte aligned");
    }
    check_bounds(offset, 4);
    std::unique_lock lock(mu_);
    auto word = std::span<std::uint8_t>(bytes_).subspan(offset, 4);
    const std::uint32_t previous = load_u32(word);
    store_u32(word, previous + static_cast<std::uint32_t>(delta));
    return previous;
}

std::vector<std::vector<std::uint8_t>> Region::serve_doorbell(
    std::span<const ReadSpec> specs) const {
    for (const auto& s : specs) {
        check_bounds(s.offset, s.len);
    }
    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(specs.size());
    std::shared_lock lock(mu_);
    for (const auto& s : specs) {
        auto first = bytes_.begin() + static_cast<std::ptrdiff_t>(s.offset);
        out.emplace_back(first, first + static_cast<std::ptrdiff_t>(s.len));
    }
    return out;
}

std::shared_ptr<Region> MemoryNode::register_region(std::uint64_t capacity) {
    std::lock_guard lock(mu_);
    auto region = std::make_shared<Region>(capacity, next_token_);
    regions_.emplace(next_token_, region);
    ++next_token_;
    return region;
}

std::shared_ptr<Region> MemoryNode::region(RegionToken token) const {
    std::lock_guard lock(mu_);
    auto it = regions_.find(token);
    if (it == regions_.end()) {
        throw_error(ErrorCode::kInvalidArgument, "memory node: unknown region token " +
                                                     std::to_string(token));
    }
    return it->second;
}

// ---- TCP server ------------------------------------------------------------

MemoryServer::MemoryServer(std::shared_ptr<Region> region, const std::string& host,
                           std::uint16_t port)
    : region_(std::move(region)), host_(host) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw_error(ErrorCode::kTransport, std::string("serve: socket: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw_error(ErrorCode::kInvalidArgument, "serve: bad IPv4 address '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw_error(ErrorCode::kTransport, "serve: cannot listen on " + host + ":" +
                                               std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

MemoryServer::~MemoryServer() {
    stop();
}

std::string MemoryServer::address() const {
    return host_ + ":" + std::to_string(port_);
}

void MemoryServer::stop() {
    if (stopping_.exchange(true)) {
        wait();
        return;
    }
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    {
        std::lock_guard lock(conn_mu_);
        for (int fd : conn_fds_) {
            ::shutdown(fd, SHUT_RDWR);
        }
    }
    wait();
}

void MemoryServer::wait() {
    if (acceptor_.joinable()) {
        acceptor_.join();
    }
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(conn_mu_);
        workers.swap(workers_);
    }
    for (auto& t : workers) {
        if (t.joinable()) {
            t.join();
        }
    }
}

void MemoryServer::accept_loop() {
    while (!stopping_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        std::lock_guard lock(conn_mu_);
        if (stopping_) {
            ::close(fd);
            break;
        }
        conn_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

namespace {

wire::Response dispatch(Region& region, const wire::Request& req) {
    wire::Response resp;
    resp.op = req.op;
    switch (req.op) {
        case wire::Opcode::kRead:
            resp.payload = region.serve_read(req.offset, req.len);
            break;
        case wire::Opcode::kWrite:
            region.serve_write(req.offset, req.data);
            break;
        case wire::Opcode::kFetchAdd: {
            const std::uint32_t prev = region.serve_fetch_add(req.offset, req.delta);
            resp.payload.resize(4);
            store_u32(resp.payload, prev);
            break;
        }
        case wire::Opcode::kDoorbell: {
            auto parts = region.serve_doorbell(req.specs);
            for (const auto& p : parts) {
                resp.payload.insert(resp.payload.end(), p.begin(), p.end());
            }
            break;
        }
    }
    return resp;
}

wire::Response failure(wire::Opcode op, wire::Status status, const std::string& message) {
    return {op, status, std::vector<std::uint8_t>(message.begin(), message.end())};
}

}  // namespace

void MemoryServer::serve_connection(int fd) {
    std::vector<std::uint8_t> body;
    try {
        while (!stopping_ && wire::try_read_frame(fd, body)) {
            wire::Response resp;
            wire::Opcode op = body.empty() ? wire::Opcode::kRead
                                           : static_cast<wire::Opcode>(body.front());
            try {
                resp = dispatch(*region_, wire::decode_request(body));
            } catch (const Error& e) {
                switch (e.code()) {
                    case ErrorCode::kOutOfBounds:
                        resp = failure(op, wire::Status::kOutOfBounds, e.what());
                        break;
                    case ErrorCode::kMisaligned:
                        resp = failure(op, wire::Status::kMisaligned, e.what());
                        break;
                    default:
                        resp = failure(op, wire::Status::kBadRequest, e.what());
                        break;
                }
                if (body.empty() || body.front() < 1 || body.front() > 4) {
                    resp.op = wire::Opcode::kRead;
                }
            }
            wire::write_all(fd, wire::encode_response(resp));
        }
    } catch (const Error&) {
        // Peer went away mid-frame; drop the connection.
    }
    std::lock_guard lock(conn_mu_);
    conn_fds_.erase(std::remove(conn_fds_.begin(), conn_fds_.end(), fd), conn_fds_.end());
    ::close(fd);
}

}  // namespace dhnsw
