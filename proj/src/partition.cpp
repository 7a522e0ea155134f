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

#include "dhnsw/partition.hpp"

#include <algorithm>
#include <iterator>
#include <random>
#include <string>

#include "dhnsw/error.hpp"

namespace dhnsw {

MetaIndex::MetaIndex(std::vector<VectorRecord> representatives, HnswGraph graph)
    : representatives_(std::move(representatives)), graph_(std::move(graph)) {
    if (graph_.size() != representatives_.size()) {
        throw_error(ErrorCode::kInvalidArgument,
                    "meta index: graph size does not match representative count");
    }
    if (graph_.max_level() > static_cast<int>(kLevelCap)) {
        throw_error(ErrorCode::kInvalidArgument, "meta index: graph has more than three layers");
    }
}

MetaIndex MetaIndex::build(std::vector<VectorRecord> representatives, HnswParams params) {
    if (representatives.empty()) {
        throw_error(ErrorCode::kEmptyInput, "meta index: no representatives");
    }
    params.level_cap = kLevelCap;
    std::vector<VectorRecord> nodes;
    nodes.reserve(representatives.size());
    for (std::size_t i = 0; i < representatives.size(); ++i) {
        nodes.push_back({static_cast<VectorId>(i), representatives[i].values});
    }
    auto graph = HnswGraph::build(nodes, params);
    return MetaIndex(std::move(representatives), std::move(graph));
}

PartitionId MetaIndex::classify(std::span<const float> vector, std::size_t ef_meta) const {
    return classify_topb(vector, 1, ef_meta).front();
}

std::vector<PartitionId> MetaIndex::classify_topb(std::span<const float> vector, std::size_t b,
                                                  std::size_t ef_meta) const {
    if (b == 0 || b > num_partitions()) {
        throw_error(ErrorCode::kInvalidArgument,
                    "classify: b=" + std::to_string(b) + " outside [1, " +
                        std::to_string(num_partitions()) + "]");
    }
    auto hits = graph_.search_knn(vector, {.k = b, .ef_search = std::max(ef_meta, b)});
    std::vector<PartitionId> out;
    out.reserve(hits.size());
    for (const auto& h : hits) {
        out.push_back(static_cast<PartitionId>(h.id));
    }
    return out;
}

std::vector<VectorRecord> sample_representatives(std::span<const VectorRecord> dataset,
                                                 std::size_t count, std::uint64_t seed) {
    if (count > dataset.size()) {
        throw_error(ErrorCode::kInvalidArgument,
                    "sample: asked for " + std::to_string(count) + " of " +
                        std::to_string(dataset.size()) + " records");
    }
    std::vector<VectorRecord> out;
    out.reserve(count);
    std::mt19937_64 rng(seed);
    std::sample(dataset.begin(), dataset.end(), std::back_inserter(out), count, rng);
    return out;
}

PartitionResult partition_dataset(const MetaIndex& meta, std::span<const VectorRecord> dataset,
                                  std::size_t ef_meta, HnswParams sub_params) {
    PartitionResult result;
    result.num_partitions = meta.num_partitions();
    result.cluster_of.reserve(dataset.size());

    std::vector<std::vector<std::size_t>> members(meta.num_partitions());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset[i].values.size() != meta.dim()) {
            throw_error(ErrorCode::kDimensionMismatch,
                        "partition: record " + std::to_string(dataset[i].id) + " has dim " +
                            std::to_string(dataset[i].values.size()));
        }
        const PartitionId p = meta.classify(dataset[i].values, ef_meta);
        result.cluster_of.push_back(p);
        members[p].push_back(i);
    }

    for (PartitionId p = 0; p < members.size(); ++p) {
        const auto& idx = members[p];
        if (idx.empty()) {
            continue;
        }
        const VectorId rep_id = meta.representatives()[p].id;
        auto pinned = std::find_if(idx.begin(), idx.end(),
                                   [&](std::size_t i) { return dataset[i].id == rep_id; });
        if (pinned == idx.end()) {
            pinned = idx.begin();
        }

        HnswParams params = sub_params;
        params.seed = sub_params.seed + p;
        HnswGraph graph(meta.dim(), params);
        std::vector<int> levels(idx.size());
        for (auto& l : levels) {
            l = graph.draw_level();
        }
        const auto pinned_pos = static_cast<std::size_t>(pinned - idx.begin());
        graph.insert(dataset[*pinned], *std::max_element(levels.begin(), levels.end()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (j != pinned_pos) {
                graph.insert(dataset[idx[j]], levels[j]);
            }
        }
        result.clusters.push_back({p, std::move(graph)});
    }
    return result;
}

}  // namespace dhnsw
