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
#include <filesystem>
#include <span>
#include <vector>

#include "dhnsw/hnsw.hpp"

namespace dhnsw {

// fvecs / ivecs: each record is a little-endian int32 d followed by d
// little-endian 32-bit values. All records in a file share d.
std::vector<std::vector<float>> load_fvecs(const std::filesystem::path& path);
std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path);
void write_fvecs(const std::filesystem::path& path, std::span<const std::vector<float>> rows);
void write_ivecs(const std::filesystem::path& path, std::span<const std::vector<std::int32_t>> rows);

struct Dataset {
    std::vector<std::vector<float>> base;
    std::vector<std::vector<float>> queries;
    std::vector<std::vector<VectorId>> truth;  // optional; per query, nearest first
    std::uint32_t dim = 0;

    // Base vectors with id = row index.
    std::vector<VectorRecord> records() const;
};

// Exhaustive top-k by squared L2, ties by smaller id. Base ids are row
// indices.
std::vector<std::vector<VectorId>> ground_truth(std::span<const std::vector<float>> base,
                                                std::span<const std::vector<float>> queries,
                                                std::size_t k);

double recall_at_k(std::span<const VectorId> result, std::span<const VectorId> truth, std::size_t k);
double recall_at_k(std::span<const std::vector<VectorId>> results,
                   std::span<const std::vector<VectorId>> truth, std::size_t k);

struct SyntheticSpec {
    std::size_t num_base = 20000;
    std::size_t num_queries = 2000;
    std::uint32_t dim = 32;
    std::size_t blobs = 64;
    double spread = 1.0;        // per-coordinate stddev around a center
    double center_range = 10.0;  // centers uniform in [-range, range]^dim
    std::uint64_t seed = 7;
};

// Seeded Gaussian mixture. Base and query points pick their blob uniformly.
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace dhnsw
