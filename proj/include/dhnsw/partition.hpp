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
#include <span>
#include <vector>

#include "dhnsw/hnsw.hpp"

namespace dhnsw {

using PartitionId = std::uint32_t;

/// Representative index cached on compute nodes. Its graph is an HNSW
/// capped at three layers whose node ids are partition indices, so every
/// bottom-layer node names one partition.
class MetaIndex {
public:
    static constexpr std::uint32_t kLevelCap = 2;

    MetaIndex(std::vector<VectorRecord> representatives, HnswGraph graph);

    static MetaIndex build(std::vector<VectorRecord> representatives, HnswParams params = {});

    std::uint32_t dim() const { return graph_.dim(); }
    std::size_t num_partitions() const { return representatives_.size(); }
    const std::vector<VectorRecord>& representatives() const { return representatives_; }
    const HnswGraph& graph() const { return graph_; }
    PartitionId entry() const { return static_cast<PartitionId>(graph_.id(graph_.entry_point())); }

    PartitionId classify(std::span<const float> vector, std::size_t ef_meta) const;

    // The b closest partitions, nearest first, ties by smaller index.
    std::vector<PartitionId> classify_topb(std::span<const float> vector, std::size_t b,
                                           std::size_t ef_meta) const;

private:
    std::vector<VectorRecord> representatives_;
    HnswGraph graph_;
};

/// Default meta search width for a given per-query probe count.
inline std::size_t default_ef_meta(std::size_t b) { return b * 2 > 16 ? b * 2 : 16; }

std::vector<VectorRecord> sample_representatives(std::span<const VectorRecord> dataset,
                                                 std::size_t count, std::uint64_t seed);

struct SubCluster {
    PartitionId cluster_id = 0;
    HnswGraph graph;
};

struct PartitionResult {
    // cluster_of[i] is the partition of dataset[i].
    std::vector<PartitionId> cluster_of;
    // One entry per non-empty partition, ascending by cluster_id.
    std::vector<SubCluster> clusters;
    std::size_t num_partitions = 0;
};

/// Classifies every vector through the meta index and builds one sub-HNSW
/// per non-empty partition. The partition's representative, when it is a
/// member, is inserted first at the top level so it becomes the entry.
PartitionResult partition_dataset(const MetaIndex& meta, std::span<const VectorRecord> dataset,
                                  std::size_t ef_meta, HnswParams sub_params = {});

}  // namespace dhnsw
