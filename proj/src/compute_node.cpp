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

#include "dhnsw/compute_node.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <unordered_set>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"

namespace dhnsw {
namespace {

using Clock = std::chrono::steady_clock;

class Stopwatch {
public:
    explicit Stopwatch(double& sink) : sink_(sink), start_(Clock::now()) {}
    ~Stopwatch() {
        sink_ += std::chrono::duration<double, std::micro>(Clock::now() - start_).count();
    }
    Stopwatch(const Stopwatch&) = delete;
    Stopwatch& operator=(const Stopwatch&) = delete;

private:
    double& sink_;
    Clock::time_point start_;
};

// Symptoms of reading a cluster through offsets that no longer match
// remote memory.
bool stale_symptom(ErrorCode code) {
    switch (code) {
        case ErrorCode::kBadMagic:
        case ErrorCode::kChecksum:
        case ErrorCode::kTruncated:
        case ErrorCode::kStaleDirectory:
        case ErrorCode::kOutOfBounds:
            return true;
        default:
            return false;
    }
}

void finish(std::vector<Neighbor>& list, std::size_t k) {
    std::sort(list.begin(), list.end(), neighbor_less);
    if (list.size() > k) {
        list.resize(k);
    }
}

}  // namespace

std::string_view mode_name(ExecMode mode) {
    switch (mode) {
        case ExecMode::kNaive:
            return "naive";
        case ExecMode::kNoDoorbell:
            return "nodoorbell";
        case ExecMode::kFull:
            return "full";
    }
    return "unknown";
}

ExecMode parse_mode(std::string_view name) {
    if (name == "naive") {
        return ExecMode::kNaive;
    }
    if (name == "nodoorbell") {
        return ExecMode::kNoDoorbell;
    }
    if (name == "full") {
        return ExecMode::kFull;
    }
    throw_error(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(name) + "'");
}

LoadedCluster load_cluster(const layout::DirectoryEntry& entry, PartitionId partition,
                           std::span<const std::uint8_t> extent, std::uint32_t dim) {
    const auto view = layout::split_extent(entry, extent);
    LoadedCluster out{partition, HnswGraph(dim), {}};
    if (entry.cluster_len > 0) {
        auto sub = layout::decode_cluster(view.cluster);
        if (sub.cluster_id != partition) {
            throw_error(ErrorCode::kStaleDirectory,
                        "cluster fetch for partition " + std::to_string(partition) +
                            " returned cluster " + std::to_string(sub.cluster_id));
        }
        if (sub.graph.dim() != dim) {
            throw_error(ErrorCode::kDimensionMismatch, "cluster dim does not match directory");
        }
        out.graph = std::move(sub.graph);
    }
    auto parsed = layout::parse_overflow(view.overflow, dim);
    out.overflow = entry.slot == layout::Slot::kHead ? std::move(parsed.low) : std::move(parsed.high);
    return out;
}

void probe_cluster(const LoadedCluster& cluster, std::span<const float> query,
                   const SearchParams& params, std::vector<Neighbor>& out) {
    if (!cluster.graph.empty()) {
        auto hits = cluster.graph.search_knn(query, params);
        out.insert(out.end(), hits.begin(), hits.end());
    }
    if (cluster.overflow.empty()) {
        return;
    }
    std::vector<Neighbor> scanned;
    scanned.reserve(cluster.overflow.size());
    for (const auto& e : cluster.overflow) {
        scanned.push_back({e.id, distance(query, e.values)});
    }
    const std::size_t keep = std::min(scanned.size(), std::max<std::size_t>(params.k, 1));
    std::partial_sort(scanned.begin(), scanned.begin() + static_cast<std::ptrdiff_t>(keep),
                      scanned.end(), neighbor_less);
    out.insert(out.end(), scanned.begin(), scanned.begin() + static_cast<std::ptrdiff_t>(keep));
}

// ---- cache ------------------------------------------------------------------

std::shared_ptr<const LoadedCluster> ClusterCache::get(PartitionId p) const {
    auto it = entries_.find(p);
    return it == entries_.end() ? nullptr : it->second.cluster;
}

void ClusterCache::put(std::shared_ptr<const LoadedCluster> cluster) {
    if (capacity_ == 0 || !cluster) {
        return;
    }
    const PartitionId p = cluster->partition;
    erase(p);
    order_.push_back(p);
    entries_.emplace(p, Slot{std::move(cluster), std::prev(order_.end())});
    while (entries_.size() > capacity_) {
        entries_.erase(order_.front());
        order_.pop_front();
    }
}

void ClusterCache::erase(PartitionId p) {
    auto it = entries_.find(p);
    if (it == entries_.end()) {
        return;
    }
    order_.erase(it->second.position);
    entries_.erase(it);
}

void ClusterCache::clear() {
    entries_.clear();
    order_.clear();
}

// ---- planning -----------------------------------------------------------------

std::vector<std::vector<PartitionId>> required_partitions(const MetaIndex& meta,
                                                          const QueryBatch& batch,
                                                          std::size_t ef_meta) {
    std::vector<std::vector<PartitionId>> required;
    required.reserve(batch.queries.size());
    for (const auto& q : batch.queries) {
        required.push_back(meta.classify_topb(q, batch.b, ef_meta));
    }
    return required;
}

BatchPlan plan_batch(std::vector<std::vector<PartitionId>> required, const ClusterCache& cache,
                     std::uint32_t doorbell_max) {
    if (doorbell_max == 0) {
        throw_error(ErrorCode::kInvalidArgument, "plan: doorbell_max must be at least 1");
    }
    BatchPlan plan;
    plan.required = std::move(required);
    // Replay the batch against a copy of the cache in first-needed order. A
    // resident cluster only counts as a hit if this batch's own loads have not
    // evicted it by the time it is needed.
    std::unordered_set<PartitionId> seen;
    auto resident = cache.resident();
    for (const auto& per_query : plan.required) {
        for (PartitionId p : per_query) {
            if (!seen.insert(p).second) {
                continue;
            }
            if (std::find(resident.begin(), resident.end(), p) != resident.end()) {
                plan.cache_hits.push_back(p);
                continue;
            }
            plan.fetch_list.push_back(p);
            if (cache.capacity() == 0) {
                continue;
            }
            resident.push_back(p);
            if (resident.size() > cache.capacity()) {
                resident.erase(resident.begin());
            }
        }
    }
    for (std::size_t i = 0; i < plan.fetch_list.size(); i += doorbell_max) {
        const auto end = std::min(plan.fetch_list.size(), i + doorbell_max);
        plan.doorbell_groups.emplace_back(plan.fetch_list.begin() + static_cast<std::ptrdiff_t>(i),
                                          plan.fetch_list.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return plan;
}

BatchPlan plan_batch(const MetaIndex& meta, const ClusterCache& cache, const QueryBatch& batch,
                     std::size_t ef_meta, std::uint32_t doorbell_max) {
    return plan_batch(required_partitions(meta, batch, ef_meta), cache, doorbell_max);
}

// ---- engine -----------------------------------------------------------------------

std::size_t cache_capacity_for(const EngineConfig& config, std::size_t partitions) {
    if (config.cache_fraction > 0.0) {
        const double c = std::ceil(config.cache_fraction * static_cast<double>(partitions) - 1e-9);
        return std::max<std::size_t>(1, static_cast<std::size_t>(c));
    }
    return config.cache_clusters;
}

ComputeEngine::ComputeEngine(std::shared_ptr<const MetaIndex> meta, Transport transport,
                             EngineConfig config)
    : meta_(std::move(meta)),
      transport_(std::move(transport)),
      config_(config),
      cache_(cache_capacity_for(config, meta_ ? meta_->num_partitions() : 0)) {
    if (!meta_) {
        throw_error(ErrorCode::kInvalidArgument, "engine: no meta index");
    }
    refresh_directory();
}

std::size_t ComputeEngine::ef_meta_for(std::size_t b) const {
    return config_.ef_meta > 0 ? config_.ef_meta : default_ef_meta(b);
}

std::uint64_t ComputeEngine::refresh_directory() {
    const auto header_bytes =
        transport_.read({0, layout::ClusterDirectory::kHeaderSize});
    const auto header = layout::ClusterDirectory::decode_header(header_bytes);
    if (have_directory_ && header.version <= directory_.version) {
        return directory_.version;
    }
    auto bytes = transport_.read(
        {0, layout::ClusterDirectory::encoded_size(header.num_clusters)});
    auto dir = layout::ClusterDirectory::decode(bytes);
    if (dir.entries.size() != meta_->num_partitions()) {
        throw_error(ErrorCode::kInvalidArgument,
                    "engine: directory lists " + std::to_string(dir.entries.size()) +
                        " clusters but the meta index has " +
                        std::to_string(meta_->num_partitions()) + " partitions");
    }
    if (dir.dim != meta_->dim()) {
        throw_error(ErrorCode::kDimensionMismatch, "engine: directory dim differs from meta index");
    }
    directory_ = std::move(dir);
    have_directory_ = true;
    cache_.clear();
    return directory_.version;
}

void ComputeEngine::validate(const QueryBatch& batch) const {
    if (batch.queries.empty()) {
        throw_error(ErrorCode::kEmptyInput, "batch: no queries");
    }
    if (batch.b == 0 || batch.k == 0) {
        throw_error(ErrorCode::kInvalidArgument, "batch: b and k must be at least 1");
    }
    if (batch.b > meta_->num_partitions()) {
        throw_error(ErrorCode::kInvalidArgument,
                    "batch: b=" + std::to_string(batch.b) + " exceeds " +
                        std::to_string(meta_->num_partitions()) + " partitions");
    }
    for (const auto& q : batch.queries) {
        if (q.size() != meta_->dim()) {
            throw_error(ErrorCode::kDimensionMismatch,
                        "batch: query dim " + std::to_string(q.size()) + ", expected " +
                            std::to_string(meta_->dim()));
        }
    }
}

BatchPlan ComputeEngine::plan(const QueryBatch& batch) const {
    validate(batch);
    return plan_batch(*meta_, cache_, batch, ef_meta_for(batch.b),
                      transport_.config().doorbell_max);
}

QueryResult ComputeEngine::execute(ExecMode mode, const QueryBatch& batch) {
    validate(batch);
    const FabricStats before = transport_.stats();
    const auto start = Clock::now();
    QueryResult out;
    try {
        run(mode, batch, out);
    } catch (const Error& e) {
        if (!stale_symptom(e.code())) {
            throw;
        }
        const std::uint64_t seen = directory_.version;
        if (refresh_directory() <= seen) {
            throw;
        }
        const PhaseTimes spent = out.phases;
        out = QueryResult{};
        out.phases = spent;
        out.retried = true;
        run(mode, batch, out);
    }
    out.stats = transport_.stats() - before;
    out.total_us = std::chrono::duration<double, std::micro>(Clock::now() - start).count();
    return out;
}

void ComputeEngine::run(ExecMode mode, const QueryBatch& batch, QueryResult& out) {
    const std::size_t s = batch.queries.size();
    const SearchParams params{batch.k, batch.ef_search};

    std::vector<std::vector<PartitionId>> required;
    {
        Stopwatch sw(out.phases.meta_hnsw_us);
        required = required_partitions(*meta_, batch, ef_meta_for(batch.b));
    }

    if (mode == ExecMode::kNaive) {
        run_naive(batch, required, out);
        return;
    }

    if (mode == ExecMode::kFull) {
        Stopwatch sw(out.phases.network_us);
        refresh_directory();
    }

    const std::uint32_t doorbell_max =
        mode == ExecMode::kFull ? transport_.config().doorbell_max : 1;
    const BatchPlan plan = plan_batch(std::move(required), cache_, doorbell_max);

    // Which queries need each partition, in query order.
    std::unordered_map<PartitionId, std::vector<std::size_t>> users;
    for (std::size_t q = 0; q < s; ++q) {
        for (PartitionId p : plan.required[q]) {
            users[p].push_back(q);
        }
    }

    // Partial candidates per query; a query is final once all of its b
    // clusters have been visited.
    std::vector<std::vector<Neighbor>> partial(s);
    auto visit = [&](const LoadedCluster& cluster) {
        for (std::size_t q : users[cluster.partition]) {
            probe_cluster(cluster, batch.queries[q], params, partial[q]);
        }
    };

    // Hits are consumed before any fetch so loads cannot evict them first.
    {
        Stopwatch sw(out.phases.sub_hnsw_us);
        for (PartitionId p : plan.cache_hits) {
            visit(*cache_.get(p));
        }
    }
    out.cache_hits = plan.cache_hits.size();

    for (const auto& group : plan.doorbell_groups) {
        std::vector<ReadSpec> specs;
        specs.reserve(group.size());
        for (PartitionId p : group) {
            const auto extent = layout::contiguous_read_extent(directory_, p);
            specs.push_back({extent.offset, extent.length});
        }
        std::vector<std::vector<std::uint8_t>> blobs;
        {
            Stopwatch sw(out.phases.network_us);
            blobs = transport_.doorbell_read(specs, doorbell_max);
        }
        Stopwatch sw(out.phases.sub_hnsw_us);
        for (std::size_t i = 0; i < group.size(); ++i) {
            auto loaded = std::make_shared<const LoadedCluster>(
                load_cluster(directory_.entry(group[i]), group[i], blobs[i], meta_->dim()));
            visit(*loaded);
            cache_.put(std::move(loaded));
        }
        out.clusters_fetched += group.size();
    }

    {
        Stopwatch sw(out.phases.sub_hnsw_us);
        for (auto& list : partial) {
            finish(list, batch.k);
        }
    }
    out.neighbors = std::move(partial);
}

void ComputeEngine::run_naive(const QueryBatch& batch,
                              const std::vector<std::vector<PartitionId>>& required,
                              QueryResult& out) {
    const SearchParams params{batch.k, batch.ef_search};
    out.neighbors.assign(batch.queries.size(), {});
    for (std::size_t q = 0; q < batch.queries.size(); ++q) {
        auto& list = out.neighbors[q];
        for (PartitionId p : required[q]) {
            const auto extent = layout::contiguous_read_extent(directory_, p);
            std::vector<std::uint8_t> bytes;
            {
                Stopwatch sw(out.phases.network_us);
                bytes = transport_.read({extent.offset, extent.length});
            }
            Stopwatch sw(out.phases.sub_hnsw_us);
            const auto loaded = load_cluster(directory_.entry(p), p, bytes, meta_->dim());
            probe_cluster(loaded, batch.queries[q], params, list);
            ++out.clusters_fetched;
        }
        Stopwatch sw(out.phases.sub_hnsw_us);
        finish(list, batch.k);
    }
}

PartitionId ComputeEngine::insert_vector(const VectorRecord& record) {
    const std::uint32_t dim = meta_->dim();
    if (record.values.size() != dim) {
        throw_error(ErrorCode::kDimensionMismatch,
                    "insert: record " + std::to_string(record.id) + " has dim " +
                        std::to_string(record.values.size()) + ", expected " +
                        std::to_string(dim));
    }
    const PartitionId p = meta_->classify(record.values, ef_meta_for(1));
    const auto& entry = directory_.entry(p);

    {
        const auto extent = layout::contiguous_read_extent(directory_, p);
        const auto bytes = transport_.read({extent.offset, extent.length});
        const auto current = load_cluster(entry, p, bytes, dim);
        const bool present =
            current.graph.find(record.id).has_value() ||
            std::any_of(current.overflow.begin(), current.overflow.end(),
                        [&](const layout::OverflowEntry& e) { return e.id == record.id; });
        if (present) {
            throw_error(ErrorCode::kDuplicateId, "insert: id " + std::to_string(record.id) +
                                                     " already in partition " +
                                                     std::to_string(p));
        }
    }

    const layout::Slot other =
        entry.slot == layout::Slot::kHead ? layout::Slot::kTail : layout::Slot::kHead;
    const std::uint64_t own_counter = entry.overflow_offset + layout::count_offset(entry.slot);
    const std::uint64_t other_counter = entry.overflow_offset + layout::count_offset(other);

    // Reserve first, then look at the other direction. Of two racing
    // reservations that would cross, the later one always sees the earlier.
    const std::uint32_t index = transport_.fetch_add(own_counter, 1);
    const std::uint32_t other_count = load_u32(transport_.read({other_counter, 4}));
    const std::uint64_t limit = layout::overflow_entry_limit(entry.overflow_capacity, dim);
    if (std::uint64_t{index} + 1 + other_count > limit) {
        transport_.fetch_add(own_counter, -1);
        throw_error(ErrorCode::kCapacity, "insert: overflow of partition " + std::to_string(p) +
                                              " is full (" + std::to_string(limit) +
                                              " entries); cluster needs rebuild");
    }

    const std::uint64_t offset =
        entry.overflow_offset +
        layout::overflow_entry_offset(entry.slot, index, entry.overflow_capacity, dim);
    transport_.write(offset, layout::encode_overflow_entry({record.id, record.values}));

    // Bump the directory version so cached copies of this cluster elsewhere
    // get dropped at their next version check.
    transport_.fetch_add(layout::ClusterDirectory::kVersionOffset, 1);
    cache_.erase(p);
    return p;
}

// ---- publishing ---------------------------------------------------------------------

IndexImage make_image(const PartitionResult& parts, std::uint32_t dim,
                      std::uint64_t overflow_capacity, std::uint64_t base_offset) {
    IndexImage image;
    image.blobs.resize(parts.num_partitions);
    for (const auto& c : parts.clusters) {
        image.blobs.at(c.cluster_id) = layout::encode_cluster(c);
    }
    std::vector<std::uint64_t> lens;
    lens.reserve(image.blobs.size());
    for (const auto& b : image.blobs) {
        lens.push_back(b.size());
    }
    image.directory = layout::plan_layout(lens, overflow_capacity, dim,
                                          layout::PairingPolicy::kSequential, base_offset);
    return image;
}

void publish(Transport& transport, IndexImage image, std::uint64_t version) {
    const auto& dir = image.directory;
    const std::vector<std::uint8_t> zero_header(layout::kOverflowHeaderSize, 0);
    for (std::size_t p = 0; p < dir.entries.size(); ++p) {
        const auto& e = dir.entries[p];
        if (!image.blobs[p].empty()) {
            transport.write(e.cluster_offset, image.blobs[p]);
        }
        if (e.slot == layout::Slot::kHead) {
            transport.write(e.overflow_offset, zero_header);
        }
    }
    image.directory.version = version;
    transport.write(0, image.directory.encode());
}

}  // namespace dhnsw
