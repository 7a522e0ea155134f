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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dhnsw/memory_node.hpp"

// TCP framing between compute and memory nodes. Little-endian throughout.
//
//   request  := frame_len u32 | opcode u8 | payload
//   response := frame_len u32 | opcode u8 | status u8 | payload
//
// frame_len counts the bytes after itself. Request payloads:
//   READ     offset u64 | len u64
//   WRITE    offset u64 | data (rest of frame)
//   FAA      offset u64 | delta i32
//   DOORBELL count u32 | count x (offset u64 | len u64)
// Successful response payloads: READ the bytes, WRITE nothing, FAA the
// previous u32, DOORBELL every sub-read's bytes concatenated in order. A
// failed response carries a UTF-8 message.
namespace dhnsw::wire {

enum class Opcode : std::uint8_t { kRead = 1, kWrite = 2, kFetchAdd = 3, kDoorbell = 4 };

enum class Status : std::uint8_t { kOk = 0, kOutOfBounds = 1, kMisaligned = 2, kBadRequest = 3 };

inline constexpr std::uint32_t kMaxFrame = 1u << 30;

struct Request {
    Opcode op = Opcode::kRead;
    std::uint64_t offset = 0;
    std::uint64_t len = 0;
    std::int32_t delta = 0;
    std::vector<std::uint8_t> data;
    std::vector<ReadSpec> specs;
};

struct Response {
    Opcode op = Opcode::kRead;
    Status status = Status::kOk;
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_request(const Request& req);
Request decode_request(std::span<const std::uint8_t> frame_body);

std::vector<std::uint8_t> encode_response(const Response& resp);
Response decode_response(std::span<const std::uint8_t> frame_body);

// Blocking socket helpers. Failures and EOF raise kTransport.
void write_all(int fd, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_frame(int fd);
// Like read_frame, but returns false on a clean EOF before the length prefix.
bool try_read_frame(int fd, std::vector<std::uint8_t>& body);

}  // namespace dhnsw::wire
