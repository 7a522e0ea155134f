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

#include <stdexcept>
#include <string>
#include <string_view>

namespace dhnsw {

enum class ErrorCode {
    kInvalidArgument,
    kDimensionMismatch,
    kEmptyInput,
    kDuplicateId,
    kUnknownCluster,
    kOutOfBounds,
    kMisaligned,
    kBadMagic,
    kChecksum,
    kTruncated,
    kCapacity,
    kTransport,
    kConnectionRefused,
    kStaleDirectory,
    kDataset,
};

std::string_view error_code_name(ErrorCode code);

/// All failures raised by the library. The code is what callers branch on;
/// the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void throw_error(ErrorCode code, const std::string& message);

}  // namespace dhnsw
