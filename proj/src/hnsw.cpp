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

#include "dhnsw/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "dhnsw/error.hpp"

namespace dhnsw {

float distance_unchecked(const float* a, const float* b, std::size_t dim) {
    float sum = 0.0f;
    for (std::size_t i = 0; i < dim; ++i) {
        const float diff = a[i] - b[i];
        sum += diff * diff;
    }
    return sum;
}

float distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw_error(ErrorCode::kDimensionMismatch,
                    "distance: lengths " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()) + " differ");
    }
    return distance_unchecked(a.data(), b.data(), a.size());
}

HnswGraph::HnswGraph(std::uint32_t dim, HnswParams params)
    : dim_(dim), params_(params), rng_(params.seed) {
    if (dim_ == 0) {
        throw_error(ErrorCode::kInvalidArgument, "hnsw: dim must be positive");
    }
    if (params_.M < 2) {
        throw_error(ErrorCode::kInvalidArgument, "hnsw: M must be at least 2");
    }
    params_.ef_construction = std::max(params_.ef_construction, params_.M);
    level_mult_ = 1.0 / std::log(static_cast<double>(params_.M));
}

HnswGraph HnswGraph::build(std::span<const VectorRecord> records, HnswParams params) {
    if (records.empty()) {
        throw_error(ErrorCode::kEmptyInput, "hnsw build: no records");
    }
    const auto dim = static_cast<std::uint32_t>(records.front().values.size());
    for (const auto& r : records) {
        if (r.values.size() != dim) {
            throw_error(ErrorCode::kDimensionMismatch,
                        "hnsw build: record " + std::to_string(r.id) + " has dim " +
                            std::to_string(r.values.size()) + ", expected " +
                            std::to_string(dim));
        }
    }
    HnswGraph graph(dim, params);
    graph.ids_.reserve(records.size());
    graph.data_.reserve(records.size() * dim);
    for (const auto& r : records) {
        graph.insert(r);
    }
    return graph;
}

int HnswGraph::draw_level() {
    // Uniform in (0, 1] from the top 53 bits, so -log never sees zero.
    const double u = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    auto level = static_cast<int>(std::floor(-std::log(u) * level_mult_));
    if (params_.level_cap) {
        level = std::min(level, static_cast<int>(*params_.level_cap));
    }
    return level;
}

std::optional<HnswGraph::LocalId> HnswGraph::find(VectorId id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void HnswGraph::insert(const VectorRecord& record) {
    insert(record, draw_level());
}

void HnswGraph::insert(const VectorRecord& record, int level) {
    if (record.values.size() != dim_) {
        throw_error(ErrorCode::kDimensionMismatch,
                    "hnsw insert: record " + std::to_string(record.id) + " has dim " +
                        std::to_string(record.values.size()) + ", expected " +
                        std::to_string(dim_));
    }
    if (index_of_.contains(record.id)) {
        throw_error(ErrorCode::kDuplicateId,
                    "hnsw insert: id " + std::to_string(record.id) + " already present");
    }
    if (ids_.size() >= kNoNode) {
        throw_error(ErrorCode::kCapacity, "hnsw insert: local index space exhausted");
    }
    level = std::clamp(level, 0, 255);
    if (params_.level_cap) {
        level = std::min(level, static_cast<int>(*params_.level_cap));
    }

    const auto node = static_cast<LocalId>(ids_.size());
    ids_.push_back(record.id);
    data_.insert(data_.end(), record.values.begin(), record.values.end());
    levels_.push_back(static_cast<std::uint8_t>(level));
    links_.emplace_back(static_cast<std::size_t>(level) + 1);
    index_of_.emplace(record.id, node);

    if (entry_point_ == kNoNode) {
        entry_point_ = node;
        max_level_ = level;
        return;
    }

    const float* query = data_.data() + static_cast<std::size_t>(node) * dim_;
    std::vector<LocalId> entry{greedy_descend(query, level + 1)};

    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
        auto found = search_layer(query, entry, params_.ef_construction, layer);
        const std::size_t keep = std::min<std::size_t>(params_.M, found.size());
        auto& own = links_[node][static_cast<std::size_t>(layer)];
        own.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            own.push_back(found[i].node);
        }
        for (LocalId peer : own) {
            auto& back = links_[peer][static_cast<std::size_t>(layer)];
            back.push_back(node);
            if (back.size() > degree_cap(layer)) {
                shrink_links(peer, layer);
            }
        }
        entry.clear();
        for (const auto& c : found) {
            entry.push_back(c.node);
        }
    }

    if (level > max_level_) {
        max_level_ = level;
        entry_point_ = node;
    }
}

void HnswGraph::shrink_links(LocalId node, int layer) {
    auto& list = links_[node][static_cast<std::size_t>(layer)];
    const float* base = data_.data() + static_cast<std::size_t>(node) * dim_;
    std::vector<Candidate> ranked;
    ranked.reserve(list.size());
    for (LocalId peer : list) {
        ranked.push_back({distance_unchecked(base, data_.data() + std::size_t{peer} * dim_, dim_),
                          peer});
    }
    std::sort(ranked.begin(), ranked.end(),
              [this](const Candidate& a, const Candidate& b) { return closer(a, b); });
    ranked.resize(degree_cap(layer));
    list.clear();
    for (const auto& c : ranked) {
        list.push_back(c.node);
    }
}

HnswGraph::LocalId HnswGraph::greedy_descend(const float* query, int down_to_layer) const {
    LocalId current = entry_point_;
    float current_dist =
        distance_unchecked(query, data_.data() + std::size_t{current} * dim_, dim_);
    for (int layer = max_level_; layer >= down_to_layer && layer > 0; --layer) {
        bool moved = true;
        while (moved) {
            moved = false;
            for (LocalId peer : links_[current][static_cast<std::size_t>(layer)]) {
                const float d =
                    distance_unchecked(query, data_.data() + std::size_t{peer} * dim_, dim_);
                if (closer({d, peer}, {current_dist, current})) {
                    current = peer;
                    current_dist = d;
                    moved = true;
                }
            }
        }
    }
    return current;
}

std::vector<HnswGraph::Candidate> HnswGraph::search_layer(const float* query,
                                                          const std::vector<LocalId>& entry,
                                                          std::size_t ef, int layer) const {
    auto farther_first = [this](const Candidate& a, const Candidate& b) { return closer(a, b); };
    auto closer_first = [this](const Candidate& a, const Candidate& b) { return closer(b, a); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(closer_first)> frontier(
        closer_first);
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(farther_first)> best(
        farther_first);
    std::vector<std::uint8_t> visited(ids_.size(), 0);

    for (LocalId e : entry) {
        if (visited[e]) {
            continue;
        }
        visited[e] = 1;
        const Candidate c{distance_unchecked(query, data_.data() + std::size_t{e} * dim_, dim_), e};
        frontier.push(c);
        best.push(c);
        if (best.size() > ef) {
            best.pop();
        }
    }

    while (!frontier.empty()) {
        const Candidate current = frontier.top();
        if (best.size() >= ef && closer(best.top(), current)) {
            break;
        }
        frontier.pop();
        for (LocalId peer : links_[current.node][static_cast<std::size_t>(layer)]) {
            if (visited[peer]) {
                continue;
            }
            visited[peer] = 1;
            const Candidate c{
                distance_unchecked(query, data_.data() + std::size_t{peer} * dim_, dim_), peer};
            if (best.size() < ef || closer(c, best.top())) {
                frontier.push(c);
                best.push(c);
                if (best.size() > ef) {
                    best.pop();
                }
            }
        }
    }

    std::vector<Candidate> out(best.size());
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        *it = best.top();
        best.pop();
    }
    return out;
}

std::vector<Neighbor> HnswGraph::search_knn(std::span<const float> query,
                                            SearchParams params) const {
    if (query.size() != dim_) {
        throw_error(ErrorCode::kDimensionMismatch,
                    "hnsw search: query dim " + std::to_string(query.size()) + ", expected " +
                        std::to_string(dim_));
    }
    if (empty()) {
        throw_error(ErrorCode::kEmptyInput, "hnsw search: graph is empty");
    }
    const std::size_t k = std::max<std::size_t>(params.k, 1);
    const std::size_t ef = std::max(params.ef_search, k);

    std::vector<LocalId> entry{greedy_descend(query.data(), 1)};
    auto found = search_layer(query.data(), entry, ef, 0);

    std::vector<Neighbor> out;
    out.reserve(std::min(k, found.size()));
    for (std::size_t i = 0; i < found.size() && i < k; ++i) {
        out.push_back({ids_[found[i].node], found[i].distance});
    }
    return out;
}

HnswGraph HnswGraph::from_parts(Parts parts, HnswParams params) {
    HnswGraph graph(parts.dim, params);
    const std::size_t n = parts.ids.size();
    auto fail = [](const std::string& what) {
        throw_error(ErrorCode::kInvalidArgument, "hnsw from_parts: " + what);
    };
    if (parts.levels.size() != n || parts.links.size() != n ||
        parts.data.size() != n * parts.dim) {
        fail("array lengths disagree with node count");
    }
    if (n == 0) {
        if (parts.entry_point != kNoNode) {
            fail("empty graph with an entry point");
        }
        return graph;
    }
    if (parts.entry_point >= n) {
        fail("entry point out of range");
    }
    int top = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int level = parts.levels[i];
        top = std::max(top, level);
        if (parts.links[i].size() != static_cast<std::size_t>(level) + 1) {
            fail("node " + std::to_string(i) + " has wrong layer count");
        }
        for (int layer = 0; layer <= level; ++layer) {
            for (LocalId peer : parts.links[i][static_cast<std::size_t>(layer)]) {
                if (peer >= n || peer == i || parts.levels[peer] < layer) {
                    fail("node " + std::to_string(i) + " has an invalid neighbor");
                }
            }
        }
    }
    if (top != parts.max_level || parts.levels[parts.entry_point] != parts.max_level) {
        fail("entry point is not on the top layer");
    }

    graph.ids_ = std::move(parts.ids);
    graph.data_ = std::move(parts.data);
    graph.levels_ = std::move(parts.levels);
    graph.links_ = std::move(parts.links);
    graph.entry_point_ = parts.entry_point;
    graph.max_level_ = parts.max_level;
    graph.index_of_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!graph.index_of_.emplace(graph.ids_[i], static_cast<LocalId>(i)).second) {
            fail("duplicate id " + std::to_string(graph.ids_[i]));
        }
    }
    return graph;
}

bool operator==(const HnswGraph& a, const HnswGraph& b) {
    return a.dim_ == b.dim_ && a.entry_point_ == b.entry_point_ &&
           a.max_level_ == b.max_level_ && a.ids_ == b.ids_ && a.levels_ == b.levels_ &&
           a.links_ == b.links_ && a.data_ == b.data_;
}

}  // namespace dhnsw
