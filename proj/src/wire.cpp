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

#include "dhnsw/wire.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"

namespace dhnsw::wire {
namespace {

std::vector<std::uint8_t> frame(ByteWriter& body) {
    if (body.size() > kMaxFrame) {
        throw_error(ErrorCode::kTransport, "wire: frame exceeds maximum size");
    }
    ByteWriter out(body.size() + 4);
    out.u32(static_cast<std::uint32_t>(body.size()));
    out.bytes(body.buffer());
    return out.take();
}

Opcode to_opcode(std::uint8_t raw) {
    if (raw < 1 || raw > 4) {
        throw_error(ErrorCode::kInvalidArgument, "wire: unknown opcode " + std::to_string(raw));
    }
    return static_cast<Opcode>(raw);
}

}  // namespace

std::vector<std::uint8_t> encode_request(const Request& req) {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(req.op));
    switch (req.op) {
        case Opcode::kRead:
            w.u64(req.offset);
            w.u64(req.len);
            break;
        case Opcode::kWrite:
            w.u64(req.offset);
            w.bytes(req.data);
            break;
        case Opcode::kFetchAdd:
            w.u64(req.offset);
            w.u32(static_cast<std::uint32_t>(req.delta));
            break;
        case Opcode::kDoorbell:
            w.u32(static_cast<std::uint32_t>(req.specs.size()));
            for (const auto& s : req.specs) {
                w.u64(s.offset);
                w.u64(s.len);
            }
            break;
    }
    return frame(w);
}

Request decode_request(std::span<const std::uint8_t> frame_body) {
    ByteReader r(frame_body, "request");
    Request req;
    req.op = to_opcode(r.u8());
    switch (req.op) {
        case Opcode::kRead:
            req.offset = r.u64();
            req.len = r.u64();
            break;
        case Opcode::kWrite: {
            req.offset = r.u64();
            auto rest = r.bytes(r.remaining());
            req.data.assign(rest.begin(), rest.end());
            req.len = req.data.size();
            break;
        }
        case Opcode::kFetchAdd:
            req.offset = r.u64();
            req.delta = static_cast<std::int32_t>(r.u32());
            break;
        case Opcode::kDoorbell: {
            const std::uint32_t count = r.u32();
            if (count > r.remaining() / 16) {
                throw_error(ErrorCode::kTruncated, "request: doorbell spec table truncated");
            }
            req.specs.resize(count);
            for (auto& s : req.specs) {
                s.offset = r.u64();
                s.len = r.u64();
            }
            break;
        }
    }
    if (r.remaining() != 0) {
        throw_error(ErrorCode::kInvalidArgument, "request: trailing bytes");
    }
    return req;
}

std::vector<std::uint8_t> encode_response(const Response& resp) {
    ByteWriter w(resp.payload.size() + 2);
    w.u8(static_cast<std::uint8_t>(resp.op));
    w.u8(static_cast<std::uint8_t>(resp.status));
    w.bytes(resp.payload);
    return frame(w);
}

Response decode_response(std::span<const std::uint8_t> frame_body) {
    ByteReader r(frame_body, "response");
    Response resp;
    resp.op = to_opcode(r.u8());
    const auto status = r.u8();
    if (status > 3) {
        throw_error(ErrorCode::kTransport, "response: unknown status " + std::to_string(status));
    }
    resp.status = static_cast<Status>(status);
    auto rest = r.bytes(r.remaining());
    resp.payload.assign(rest.begin(), rest.end());
    return resp;
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw_error(ErrorCode::kTransport,
                        std::string("wire: send failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

namespace {

// Returns bytes read; stops early only on EOF.
std::size_t read_some_exact(int fd, std::uint8_t* out, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, out + got, n - got, 0);
        if (r < 0 && errno == EINTR) {
            continue;
        }
        if (r < 0) {
            throw_error(ErrorCode::kTransport,
                        std::string("wire: recv failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            break;
        }
        got += static_cast<std::size_t>(r);
    }
    return got;
}

}  // namespace

bool try_read_frame(int fd, std::vector<std::uint8_t>& body) {
    std::uint8_t prefix[4];
    const std::size_t got = read_some_exact(fd, prefix, 4);
    if (got == 0) {
        return false;
    }
    if (got < 4) {
        throw_error(ErrorCode::kTransport, "wire: connection closed inside a length prefix");
    }
    const std::uint32_t len = load_u32(prefix);
    if (len > kMaxFrame) {
        throw_error(ErrorCode::kTransport, "wire: frame of " + std::to_string(len) +
                                               " bytes exceeds the maximum");
    }
    body.resize(len);
    if (read_some_exact(fd, body.data(), len) != len) {
        throw_error(ErrorCode::kTransport, "wire: connection closed inside a frame");
    }
    return true;
}

std::vector<std::uint8_t> read_frame(int fd) {
    std::vector<std::uint8_t> body;
    if (!try_read_frame(fd, body)) {
        throw_error(ErrorCode::kTransport, "wire: connection closed by peer");
    }
    return body;
}

}  // namespace dhnsw::wire
