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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dhnsw/compute_node.hpp"
#include "dhnsw/dataset.hpp"
#include "dhnsw/memory_node.hpp"
#include "dhnsw/transport.hpp"

namespace dhnsw {

struct IndexConfig {
    std::size_t partitions = 64;
    std::uint64_t overflow_capacity = 64 * 1024;
    std::size_t M = 16;
    std::size_t ef_construction = 200;
    std::uint64_t seed = 42;
};

struct BuiltIndex {
    std::shared_ptr<const MetaIndex> meta;
    PartitionResult parts;
    IndexImage image;
};

BuiltIndex build_index(std::span<const VectorRecord> records, const IndexConfig& config);

// The full region contents a memory node should hold for this image.
std::vector<std::uint8_t> render_region(const IndexImage& image, std::uint64_t version = 1);

// Copies a rendered region to remote memory, directory last.
void upload_region(Transport& transport, std::span<const std::uint8_t> region);

struct BenchConfig {
    IndexConfig index;
    TransportConfig transport;

    std::size_t b = 4;
    std::size_t k = 10;
    std::vector<std::size_t> ef_sweep{48};
    std::vector<ExecMode> modes{ExecMode::kNaive, ExecMode::kNoDoorbell, ExecMode::kFull};
    std::size_t cache_clusters = 0;
    double cache_fraction = 0.0;
    std::size_t ef_meta = 0;
    std::size_t batch_size = 2000;
    std::size_t workers = 1;
    bool dump_results = false;
};

struct ReportRow {
    std::string mode;
    std::size_t ef_search = 0;
    std::size_t queries = 0;
    std::size_t batches = 0;
    double recall = 0.0;
    // Per query; a query's latency is its batch's wall time over the batch
    // size.
    double latency_mean_us = 0.0;
    double latency_p50_us = 0.0;
    double latency_p95_us = 0.0;
    double latency_p99_us = 0.0;
    double round_trips_per_query = 0.0;
    double bytes_per_query = 0.0;
    double simulated_us_per_query = 0.0;
    PhaseTimes phases_per_query;
    FabricStats stats;  // summed over workers
    std::size_t clusters_fetched = 0;
    std::size_t cache_hits = 0;
    double wall_seconds = 0.0;
    std::vector<std::vector<VectorId>> results;  // filled when dump_results
};

struct RunReport {
    std::size_t num_base = 0;
    std::size_t num_queries = 0;
    std::uint32_t dim = 0;
    std::size_t partitions = 0;
    std::size_t b = 0;
    std::size_t k = 0;
    std::size_t batch_size = 0;
    std::size_t workers = 0;
    std::size_t cache_capacity = 0;
    std::string backend;
    std::vector<ReportRow> rows;
};

// Runs every (mode, ef) pair over the query set. Engines start cold for
// each row. `local` is the region inproc workers attach to; tcp workers
// connect to config.transport.address. Ground truth comes from
// dataset.truth and is computed when absent.
RunReport run_experiment(const BenchConfig& config, const Dataset& dataset,
                         std::shared_ptr<const MetaIndex> meta, std::shared_ptr<Region> local);

// Builds the index, loads it into a fresh in-process region (or uploads it
// when the backend is tcp) and runs the sweep.
RunReport run_experiment(const BenchConfig& config, const Dataset& dataset);

std::string report_json(const RunReport& report);
std::string report_csv(const RunReport& report);

}  // namespace dhnsw
