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
#include <list>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dhnsw/hnsw.hpp"
#include "dhnsw/layout.hpp"
#include "dhnsw/partition.hpp"
#include "dhnsw/transport.hpp"

namespace dhnsw {

// kNaive: one plain READ per (query, cluster), no dedup, no cache.
// kNoDoorbell: batch dedup and cache, one READ per fetched cluster.
// kFull: batch dedup, cache, doorbell-grouped fetches and a per-batch
//        directory version check.
enum class ExecMode { kNaive, kNoDoorbell, kFull };

std::string_view mode_name(ExecMode mode);
ExecMode parse_mode(std::string_view name);

struct QueryBatch {
    std::vector<std::vector<float>> queries;
    std::size_t k = 10;
    std::size_t b = 4;
    std::size_t ef_search = 48;
};

/// A decoded cluster plus the overflow entries its slot owns. Immutable
/// once loaded, so it can be shared between the cache and in-flight work.
struct LoadedCluster {
    PartitionId partition = 0;
    HnswGraph graph;
    std::vector<layout::OverflowEntry> overflow;
};

LoadedCluster load_cluster(const layout::DirectoryEntry& entry, PartitionId partition,
                           std::span<const std::uint8_t> extent, std::uint32_t dim);

// Top-k of one cluster for one query: graph search plus an exhaustive scan
// of the overflow entries. Appends to `out` unsorted.
void probe_cluster(const LoadedCluster& cluster, std::span<const float> query,
                   const SearchParams& params, std::vector<Neighbor>& out);

/// Keeps the c most recently loaded clusters. A hit does not refresh an
/// entry's position; only a load does.
class ClusterCache {
public:
    explicit ClusterCache(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(PartitionId p) const { return entries_.contains(p); }
    std::shared_ptr<const LoadedCluster> get(PartitionId p) const;
    void put(std::shared_ptr<const LoadedCluster> cluster);
    void erase(PartitionId p);
    void clear();
    // Oldest load first.
    std::vector<PartitionId> resident() const { return {order_.begin(), order_.end()}; }

private:
    struct Slot {
        std::shared_ptr<const LoadedCluster> cluster;
        std::list<PartitionId>::iterator position;
    };

    std::size_t capacity_;
    std::list<PartitionId> order_;
    std::unordered_map<PartitionId, Slot> entries_;
};

struct BatchPlan {
    std::vector<std::vector<PartitionId>> required;  // per query, nearest first
    std::vector<PartitionId> fetch_list;             // first-needed order, unique
    std::vector<std::vector<PartitionId>> doorbell_groups;
    std::vector<PartitionId> cache_hits;             // first-needed order, unique
};

std::vector<std::vector<PartitionId>> required_partitions(const MetaIndex& meta,
                                                          const QueryBatch& batch,
                                                          std::size_t ef_meta);

BatchPlan plan_batch(std::vector<std::vector<PartitionId>> required, const ClusterCache& cache,
                     std::uint32_t doorbell_max);

BatchPlan plan_batch(const MetaIndex& meta, const ClusterCache& cache, const QueryBatch& batch,
                     std::size_t ef_meta, std::uint32_t doorbell_max);

struct PhaseTimes {
    double network_us = 0.0;
    double sub_hnsw_us = 0.0;
    double meta_hnsw_us = 0.0;

    PhaseTimes& operator+=(const PhaseTimes& o) {
        network_us += o.network_us;
        sub_hnsw_us += o.sub_hnsw_us;
        meta_hnsw_us += o.meta_hnsw_us;
        return *this;
    }
};

struct QueryResult {
    std::vector<std::vector<Neighbor>> neighbors;  // per query, ascending
    FabricStats stats;                             // delta over this call
    PhaseTimes phases;
    double total_us = 0.0;
    std::size_t clusters_fetched = 0;
    std::size_t cache_hits = 0;
    bool retried = false;
};

struct EngineConfig {
    std::size_t cache_clusters = 0;
    // When positive, overrides cache_clusters with ceil(fraction * R).
    double cache_fraction = 0.0;
    // 0 selects default_ef_meta(b).
    std::size_t ef_meta = 0;
};

std::size_t cache_capacity_for(const EngineConfig& config, std::size_t partitions);

/// One compute worker: cached meta index and directory, its own transport
/// handle and cluster cache. Not thread-safe; run one engine per worker.
class ComputeEngine {
public:
    // Loads the remote directory, which costs one or two round trips.
    ComputeEngine(std::shared_ptr<const MetaIndex> meta, Transport transport,
                  EngineConfig config = {});

    QueryResult execute(ExecMode mode, const QueryBatch& batch);
    QueryResult execute_batch(const QueryBatch& batch) { return execute(ExecMode::kFull, batch); }
    QueryResult execute_nodoorbell(const QueryBatch& batch) {
        return execute(ExecMode::kNoDoorbell, batch);
    }
    QueryResult execute_naive(const QueryBatch& batch) { return execute(ExecMode::kNaive, batch); }

    BatchPlan plan(const QueryBatch& batch) const;

    // Appends the vector to its partition's overflow slot. Throws
    // kCapacity when the slot is full and kDuplicateId when the partition
    // already holds the id.
    PartitionId insert_vector(const VectorRecord& record);

    // Adopts the remote directory iff its version is newer. Returns the
    // active version.
    std::uint64_t refresh_directory();

    const layout::ClusterDirectory& directory() const { return directory_; }
    const MetaIndex& meta() const { return *meta_; }
    const ClusterCache& cache() const { return cache_; }
    ClusterCache& cache() { return cache_; }
    Transport& transport() { return transport_; }
    const Transport& transport() const { return transport_; }
    std::size_t ef_meta_for(std::size_t b) const;

private:
    void validate(const QueryBatch& batch) const;
    void run(ExecMode mode, const QueryBatch& batch, QueryResult& out);
    void run_naive(const QueryBatch& batch, const std::vector<std::vector<PartitionId>>& required,
                   QueryResult& out);

    std::shared_ptr<const MetaIndex> meta_;
    Transport transport_;
    EngineConfig config_;
    ClusterCache cache_;
    layout::ClusterDirectory directory_;
    bool have_directory_ = false;
};

/// Serialized clusters plus the directory that places them.
struct IndexImage {
    layout::ClusterDirectory directory;
    std::vector<std::vector<std::uint8_t>> blobs;  // per partition; empty when unpopulated

    std::uint64_t region_bytes() const { return directory.end_offset(); }
};

IndexImage make_image(const PartitionResult& parts, std::uint32_t dim,
                      std::uint64_t overflow_capacity, std::uint64_t base_offset = 0);

// Writes clusters, zeroed overflow headers and finally the directory with
// the given version.
void publish(Transport& transport, IndexImage image, std::uint64_t version);

}  // namespace dhnsw
