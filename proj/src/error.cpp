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

#include "dhnsw/error.hpp"

namespace dhnsw {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument:
            return "invalid_argument";
        case ErrorCode::kDimensionMismatch:
            return "dimension_mismatch";
        case ErrorCode::kEmptyInput:
            return "empty_input";
        case ErrorCode::kDuplicateId:
            return "duplicate_id";
        case ErrorCode::kUnknownCluster:
            return "unknown_cluster";
        case ErrorCode::kOutOfBounds:
            return "out_of_bounds";
        case ErrorCode::kMisaligned:
            return "misaligned";
        case ErrorCode::kBadMagic:
            return "bad_magic";
        case ErrorCode::kChecksum:
            return "checksum";
        case ErrorCode::kTruncated:
            return "truncated";
        case ErrorCode::kCapacity:
            return "capacity";
        case ErrorCode::kTransport:
            return "transport";
        case ErrorCode::kConnectionRefused:
            return "connection_refused";
        case ErrorCode::kStaleDirectory:
            return "stale_directory";
        case ErrorCode::kDataset:
            return "dataset";
    }
    return "unknown";
}

void throw_error(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace dhnsw
