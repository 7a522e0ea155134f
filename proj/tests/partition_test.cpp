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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "dhnsw/error.hpp"
#include "dhnsw/layout.hpp"
#include "dhnsw/partition.hpp"
#include "test_util.hpp"

using namespace dhnsw;
using dhnsw::testing::random_queries;
using dhnsw::testing::random_records;

namespace {

// Partition indices sorted by (distance, index): the exhaustive oracle.
std::vector<PartitionId> oracle_order(const std::vector<VectorRecord>& reps,
                                      const std::vector<float>& q) {
    std::vector<std::pair<double, PartitionId>> scored;
    for (PartitionId p = 0; p < reps.size(); ++p) {
        scored.emplace_back(dhnsw::testing::oracle_distance(reps[p].values, q), p);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<PartitionId> out;
    for (const auto& s : scored) {
        out.push_back(s.second);
    }
    return out;
}

std::vector<VectorRecord> planted(std::initializer_list<std::vector<float>> points) {
    std::vector<VectorRecord> out;
    VectorId id = 0;
    for (const auto& p : points) {
        out.push_back({id++, p});
    }
    return out;
}

}  // namespace

TEST(Sample, WholeDatasetWhenCountEqualsSize) {
    const auto data = random_records(30, 4, 1);
    auto reps = sample_representatives(data, 30, 5);
    std::set<VectorId> ids;
    for (const auto& r : reps) {
        ids.insert(r.id);
    }
    EXPECT_EQ(ids.size(), 30u);
}

TEST(Sample, DeterministicAndDistinct) {
    const auto data = random_records(1000, 4, 1);
    const auto a = sample_representatives(data, 64, 9);
    const auto b = sample_representatives(data, 64, 9);
    ASSERT_EQ(a.size(), 64u);
    std::set<VectorId> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        ids.insert(a[i].id);
    }
    EXPECT_EQ(ids.size(), 64u);
}

TEST(Sample, LargeScaleCount) {
    const auto data = random_records(20000, 2, 3);
    EXPECT_EQ(sample_representatives(data, 500, 1).size(), 500u);
}

TEST(Sample, TooManyThrows) {
    const auto data = random_records(5, 2, 3);
    try {
        sample_representatives(data, 6, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    }
}

TEST(Meta, SingleRepresentative) {
    const auto meta = MetaIndex::build(random_records(1, 3, 1));
    EXPECT_EQ(meta.num_partitions(), 1u);
    EXPECT_EQ(meta.entry(), 0u);
    for (const auto& q : random_queries(10, 3, 2)) {
        EXPECT_EQ(meta.classify(q, 16), 0u);
    }
}

TEST(Meta, LevelCapTwo) {
    const auto meta = MetaIndex::build(random_records(64, 8, 4), HnswParams{2, 50, {}, 1});
    const auto& g = meta.graph();
    for (HnswGraph::LocalId n = 0; n < g.size(); ++n) {
        EXPECT_LE(g.level(n), 2);
    }
    EXPECT_LE(g.max_level(), 2);
}

TEST(Meta, SerializedSizeAtLargeScale) {
    const auto reps = random_records(500, 128, 6);
    const auto meta = MetaIndex::build(reps);
    const double mb = static_cast<double>(layout::encode_meta(meta).size()) / 1e6;
    EXPECT_NEAR(mb, 0.373, 0.373 * 0.25) << mb << " MB";
}

TEST(Meta, SerializedSizeIndependentOfDatasetSize) {
    const auto small = MetaIndex::build(sample_representatives(random_records(1000, 16, 1), 32, 2));
    const auto large = MetaIndex::build(sample_representatives(random_records(20000, 16, 1), 32, 2));
    const double a = static_cast<double>(layout::encode_meta(small).size());
    const double b = static_cast<double>(layout::encode_meta(large).size());
    EXPECT_NEAR(a, b, 0.2 * a);
}

TEST(Classify, PlantedSquare) {
    const auto meta = MetaIndex::build(planted({{0, 0}, {10, 0}, {0, 10}, {10, 10}}));
    EXPECT_EQ(meta.classify(std::vector<float>{9, 1}, 4), 1u);
}

TEST(Classify, ExactWithFullWidth) {
    const auto reps = random_records(64, 8, 12);
    const auto meta = MetaIndex::build(reps);
    for (PartitionId p = 0; p < reps.size(); ++p) {
        EXPECT_EQ(meta.classify(reps[p].values, reps.size()), p);
    }
    for (const auto& q : random_queries(200, 8, 13)) {
        EXPECT_EQ(meta.classify(q, reps.size()), oracle_order(reps, q).front());
    }
}

TEST(ClassifyTopB, AllPartitionsInOracleOrder) {
    const auto reps = random_records(40, 6, 14);
    const auto meta = MetaIndex::build(reps);
    for (const auto& q : random_queries(50, 6, 15)) {
        EXPECT_EQ(meta.classify_topb(q, reps.size(), reps.size()), oracle_order(reps, q));
    }
}

TEST(ClassifyTopB, BOneMatchesClassify) {
    const auto reps = random_records(40, 6, 16);
    const auto meta = MetaIndex::build(reps);
    for (const auto& q : random_queries(50, 6, 17)) {
        EXPECT_EQ(meta.classify_topb(q, 1, 16), (std::vector<PartitionId>{meta.classify(q, 16)}));
    }
}

TEST(ClassifyTopB, DistinctAndSorted) {
    const auto reps = random_records(64, 8, 18);
    const auto meta = MetaIndex::build(reps);
    for (const auto& q : random_queries(50, 8, 19)) {
        const auto top = meta.classify_topb(q, 4, default_ef_meta(4));
        ASSERT_EQ(top.size(), 4u);
        EXPECT_EQ(std::set<PartitionId>(top.begin(), top.end()).size(), 4u);
        for (std::size_t i = 1; i < top.size(); ++i) {
            const double a = dhnsw::testing::oracle_distance(reps[top[i - 1]].values, q);
            const double b = dhnsw::testing::oracle_distance(reps[top[i]].values, q);
            EXPECT_LE(a, b);
        }
    }
}

TEST(ClassifyTopB, TieOrderBySmallerIndex) {
    const auto meta = MetaIndex::build(planted({{1, 0}, {-1, 0}, {0, 1}}));
    EXPECT_EQ(meta.classify_topb(std::vector<float>{0, 0}, 3, 3),
              (std::vector<PartitionId>{0, 1, 2}));
}

// Six partitions S1..S6 (indices 0..5) placed so the four queries need
// q1 {S1,S4}, q2 {S3,S2}, q3 {S4,S5}, q4 {S3,S6}.
TEST(ClassifyTopB, FigureFiveGeometry) {
    const auto meta = MetaIndex::build(
        planted({{0, 0}, {-2, 10}, {0, 10}, {2, 0}, {4, 0}, {2, 10}}));
    EXPECT_EQ(meta.classify_topb(std::vector<float>{0.9f, 0}, 2, 6),
              (std::vector<PartitionId>{0, 3}));
    EXPECT_EQ(meta.classify_topb(std::vector<float>{-0.9f, 10}, 2, 6),
              (std::vector<PartitionId>{2, 1}));
    EXPECT_EQ(meta.classify_topb(std::vector<float>{2.9f, 0}, 2, 6),
              (std::vector<PartitionId>{3, 4}));
    EXPECT_EQ(meta.classify_topb(std::vector<float>{0.9f, 10}, 2, 6),
              (std::vector<PartitionId>{2, 5}));
}

TEST(ClassifyTopB, BTooLargeThrows) {
    const auto meta = MetaIndex::build(random_records(4, 2, 1));
    try {
        meta.classify_topb(std::vector<float>{0, 0}, 5, 16);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    }
}

TEST(Classify, DimensionMismatchThrows) {
    const auto meta = MetaIndex::build(random_records(4, 2, 1));
    try {
        meta.classify(std::vector<float>{0, 0, 0}, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
    }
}

TEST(PartitionDataset, RepresentativesOnlyGiveSingletons) {
    const auto reps = random_records(16, 4, 30);
    const auto meta = MetaIndex::build(reps);
    const auto parts = partition_dataset(meta, reps, reps.size());
    ASSERT_EQ(parts.clusters.size(), 16u);
    for (PartitionId p = 0; p < 16; ++p) {
        EXPECT_EQ(parts.cluster_of[p], p);
        EXPECT_EQ(parts.clusters[p].cluster_id, p);
        ASSERT_EQ(parts.clusters[p].graph.size(), 1u);
        EXPECT_EQ(parts.clusters[p].graph.id(0), reps[p].id);
    }
}

TEST(PartitionDataset, PlantedBlobsAssignedToTheirCenter) {
    const std::vector<std::vector<float>> centers{{0, 0, 0}, {20, 0, 0}, {0, 20, 0}, {0, 0, 20}};
    std::mt19937_64 rng(5);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    std::vector<VectorRecord> data;
    std::vector<std::size_t> blob_of;
    for (std::size_t i = 0; i < 4000; ++i) {
        const std::size_t b = i % 4;
        std::vector<float> v = centers[b];
        for (auto& x : v) {
            x += noise(rng);
        }
        data.push_back({i, v});
        blob_of.push_back(b);
    }
    std::vector<VectorRecord> reps;
    for (std::size_t b = 0; b < 4; ++b) {
        reps.push_back({100000 + b, centers[b]});
    }
    const auto meta = MetaIndex::build(reps);
    const auto parts = partition_dataset(meta, data, default_ef_meta(1));
    std::size_t agree = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        agree += parts.cluster_of[i] == blob_of[i];
    }
    EXPECT_GE(static_cast<double>(agree) / data.size(), 0.99);
}

TEST(PartitionDataset, MembershipIsAPartitionOfTheDataset) {
    const auto data = random_records(3000, 8, 40);
    const auto meta = MetaIndex::build(sample_representatives(data, 32, 1));
    const auto parts = partition_dataset(meta, data, default_ef_meta(1));
    ASSERT_EQ(parts.cluster_of.size(), data.size());
    std::vector<std::size_t> seen(data.size(), 0);
    for (const auto& c : parts.clusters) {
        for (HnswGraph::LocalId n = 0; n < c.graph.size(); ++n) {
            const auto id = c.graph.id(n);
            ++seen[id];
            EXPECT_EQ(parts.cluster_of[id], c.cluster_id);
        }
    }
    for (auto s : seen) {
        EXPECT_EQ(s, 1u);
    }
}

TEST(PartitionDataset, RepresentativeIsSubClusterEntry) {
    const auto data = random_records(2000, 8, 41);
    const auto reps = sample_representatives(data, 16, 3);
    const auto meta = MetaIndex::build(reps);
    const auto parts = partition_dataset(meta, data, default_ef_meta(1));
    for (const auto& c : parts.clusters) {
        const auto& g = c.graph;
        const auto rep_id = reps[c.cluster_id].id;
        if (g.find(rep_id)) {
            EXPECT_EQ(g.id(g.entry_point()), rep_id);
        }
    }
}

TEST(PartitionDataset, EmptyPartitionOmitted) {
    auto data = random_records(200, 2, 42);
    std::vector<VectorRecord> reps{data[0], data[1], {999999, {1000.0f, 1000.0f}}};
    const auto meta = MetaIndex::build(reps);
    const auto parts = partition_dataset(meta, data, 3);
    EXPECT_EQ(parts.num_partitions, 3u);
    for (const auto& c : parts.clusters) {
        EXPECT_NE(c.cluster_id, 2u);
    }
}
