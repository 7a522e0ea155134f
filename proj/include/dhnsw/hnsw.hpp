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
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

namespace dhnsw {

using VectorId = std::uint64_t;

struct VectorRecord {
    VectorId id = 0;
    std::vector<float> values;
};

struct HnswParams {
    std::uint32_t M = 16;
    std::uint32_t ef_construction = 200;
    // Highest layer a node may be assigned to; unset means unbounded.
    std::optional<std::uint32_t> level_cap;
    std::uint64_t seed = 42;
};

struct SearchParams {
    std::size_t k = 10;
    std::size_t ef_search = 48;
};

struct Neighbor {
    VectorId id = 0;
    float distance = 0.0f;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Strict weak order used for every ranked list in the project: by distance,
// then by smaller id.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

/// Squared Euclidean distance. Throws kDimensionMismatch on unequal lengths.
float distance(std::span<const float> a, std::span<const float> b);

/// Unchecked variant for hot loops where the caller owns the length invariant.
float distance_unchecked(const float* a, const float* b, std::size_t dim);

/// Multi-layer proximity graph. Nodes are addressed internally by a dense
/// local index (insertion order); results are reported by external id.
///
/// Writers (insert) must be serialized by the caller. Any number of
/// concurrent search_knn calls are safe while no writer is active.
class HnswGraph {
public:
    using LocalId = std::uint32_t;
    static constexpr LocalId kNoNode = 0xFFFFFFFFu;

    explicit HnswGraph(std::uint32_t dim, HnswParams params = {});

    static HnswGraph build(std::span<const VectorRecord> records, HnswParams params = {});

    void insert(const VectorRecord& record);

    // Inserts with a caller-chosen top layer instead of a random draw. The
    // level is still clamped to level_cap when one is configured.
    void insert(const VectorRecord& record, int level);

    // Next level from the graph's seeded geometric distribution.
    int draw_level();

    std::vector<Neighbor> search_knn(std::span<const float> query, SearchParams params) const;

    std::uint32_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    int max_level() const { return max_level_; }
    LocalId entry_point() const { return entry_point_; }
    const HnswParams& params() const { return params_; }

    VectorId id(LocalId node) const { return ids_[node]; }
    int level(LocalId node) const { return levels_[node]; }
    std::span<const float> vector(LocalId node) const {
        return {data_.data() + static_cast<std::size_t>(node) * dim_, dim_};
    }
    std::span<const LocalId> neighbors(LocalId node, int layer) const {
        return links_[node][static_cast<std::size_t>(layer)];
    }
    std::optional<LocalId> find(VectorId id) const;

    // Max out-degree a node may hold at the given layer.
    std::size_t degree_cap(int layer) const {
        return layer == 0 ? 2 * static_cast<std::size_t>(params_.M) : params_.M;
    }

    /// Raw pieces of a graph, used by the binary codec.
    struct Parts {
        std::uint32_t dim = 0;
        LocalId entry_point = kNoNode;
        int max_level = 0;
        std::vector<std::uint8_t> levels;
        std::vector<std::vector<std::vector<LocalId>>> links;  // [node][layer]
        std::vector<VectorId> ids;
        std::vector<float> data;
    };

    // Reassembles a graph, validating structural invariants. Throws
    // kInvalidArgument when the parts are inconsistent.
    static HnswGraph from_parts(Parts parts, HnswParams params = {});

    // Structural equality: topology, ids and vector data. Build parameters
    // and RNG state are not compared.
    friend bool operator==(const HnswGraph& a, const HnswGraph& b);

private:
    struct Candidate {
        float distance;
        LocalId node;
    };

    bool closer(const Candidate& a, const Candidate& b) const {
        return a.distance < b.distance ||
               (a.distance == b.distance && ids_[a.node] < ids_[b.node]);
    }

    std::vector<Candidate> search_layer(const float* query, const std::vector<LocalId>& entry,
                                        std::size_t ef, int layer) const;
    LocalId greedy_descend(const float* query, int down_to_layer) const;
    void shrink_links(LocalId node, int layer);

    std::uint32_t dim_;
    HnswParams params_;
    double level_mult_;
    std::mt19937_64 rng_;

    std::vector<VectorId> ids_;
    std::vector<float> data_;
    std::vector<std::uint8_t> levels_;
    std::vector<std::vector<std::vector<LocalId>>> links_;
    std::unordered_map<VectorId, LocalId> index_of_;

    LocalId entry_point_ = kNoNode;
    int max_level_ = 0;
};

}  // namespace dhnsw
