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

#include <cstring>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"
#include "dhnsw/layout.hpp"
#include "test_util.hpp"

using namespace dhnsw;
using namespace dhnsw::layout;
using dhnsw::testing::random_queries;
using dhnsw::testing::random_records;

namespace {

SubCluster random_cluster(std::size_t n, std::uint32_t dim, std::uint64_t seed, PartitionId id) {
    return {id, HnswGraph::build(random_records(n, dim, seed), HnswParams{8, 64, {}, seed})};
}

ErrorCode decode_error(std::span<const std::uint8_t> bytes) {
    try {
        decode_cluster(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(ClusterCodec, EmptyClusterRoundTrips) {
    const SubCluster empty{3, HnswGraph(5)};
    const auto bytes = encode_cluster(empty);
    const auto back = decode_cluster(bytes);
    EXPECT_EQ(back.cluster_id, 3u);
    EXPECT_EQ(back.graph.size(), 0u);
    EXPECT_EQ(back.graph.dim(), 5u);
}

TEST(ClusterCodec, SearchResultsSurviveRoundTrip) {
    const auto c = random_cluster(100, 12, 5, 9);
    const auto back = decode_cluster(encode_cluster(c));
    EXPECT_EQ(back.cluster_id, 9u);
    EXPECT_TRUE(back.graph == c.graph);
    for (const auto& q : random_queries(20, 12, 6)) {
        EXPECT_EQ(back.graph.search_knn(q, {10, 32}), c.graph.search_knn(q, {10, 32}));
    }
}

TEST(ClusterCodec, BitExactHeader) {
    const auto c = random_cluster(3, 2, 1, 7);
    const auto bytes = encode_cluster(c);
    EXPECT_EQ(std::memcmp(bytes.data(), "DSUB", 4), 0);
    EXPECT_EQ(load_u32(std::span(bytes).subspan(4, 4)), 7u);
    EXPECT_EQ(load_u32(std::span(bytes).subspan(8, 4)), 3u);
    EXPECT_EQ(load_u32(std::span(bytes).subspan(12, 4)), 2u);
    EXPECT_EQ(load_u32(std::span(bytes).subspan(16, 4)), c.graph.entry_point());
    EXPECT_EQ(bytes[20], static_cast<std::uint8_t>(c.graph.max_level()));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(bytes[21 + i], static_cast<std::uint8_t>(c.graph.level(static_cast<HnswGraph::LocalId>(i))));
    }
    // ids then floats sit right before the crc trailer.
    const std::size_t floats_at = bytes.size() - 4 - 3 * 2 * 4;
    const std::size_t ids_at = floats_at - 3 * 8;
    ByteReader r{std::span(bytes).subspan(ids_at)};
    for (HnswGraph::LocalId n = 0; n < 3; ++n) {
        EXPECT_EQ(r.u64(), c.graph.id(n));
    }
    for (HnswGraph::LocalId n = 0; n < 3; ++n) {
        for (float v : c.graph.vector(n)) {
            EXPECT_EQ(r.f32(), v);
        }
    }
}

TEST(ClusterCodec, FlippedVectorByteFailsCrc) {
    const auto c = random_cluster(50, 8, 2, 1);
    auto bytes = encode_cluster(c);
    bytes[bytes.size() - 4 - 17] ^= 0x01;
    EXPECT_EQ(decode_error(bytes), ErrorCode::kChecksum);
}

TEST(ClusterCodec, EveryByteCorruptionDetected) {
    const auto c = random_cluster(6, 3, 3, 2);
    const auto clean = encode_cluster(c);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        auto bytes = clean;
        bytes[i] ^= 0x5A;
        const auto code = decode_error(bytes);
        EXPECT_TRUE(code == ErrorCode::kChecksum || code == ErrorCode::kBadMagic) << "byte " << i;
    }
}

TEST(ClusterCodec, TruncationDetected) {
    const auto bytes = encode_cluster(random_cluster(10, 4, 4, 0));
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
        const auto code = decode_error(std::span(bytes).first(cut));
        EXPECT_TRUE(code == ErrorCode::kTruncated || code == ErrorCode::kChecksum) << cut;
    }
}

TEST(MetaCodec, RoundTrip) {
    const auto meta = MetaIndex::build(random_records(40, 6, 1));
    const auto back = decode_meta(encode_meta(meta));
    EXPECT_EQ(back.num_partitions(), 40u);
    EXPECT_TRUE(back.graph() == meta.graph());
    for (const auto& q : random_queries(20, 6, 2)) {
        EXPECT_EQ(back.classify_topb(q, 4, 16), meta.classify_topb(q, 4, 16));
    }
    auto bytes = encode_meta(meta);
    bytes[bytes.size() / 2] ^= 1;
    EXPECT_THROW(decode_meta(bytes), Error);
}

TEST(Directory, EncodeDecodeBitExact) {
    const std::vector<std::uint64_t> lens{100, 200, 300};
    auto dir = plan_layout(lens, 64, 4);
    dir.version = 0x0102030405060708ull;
    const auto bytes = dir.encode();
    ASSERT_EQ(bytes.size(), 24u + 37u * 3);
    EXPECT_EQ(std::memcmp(bytes.data(), "DHNM", 4), 0);
    ByteReader r{std::span(bytes).subspan(4)};
    EXPECT_EQ(r.u64(), dir.version);
    EXPECT_EQ(r.u32(), 4u);
    EXPECT_EQ(r.u32(), 3u);
    EXPECT_EQ(r.u32(), 2u);
    for (const auto& e : dir.entries) {
        EXPECT_EQ(r.u32(), e.group_index);
        EXPECT_EQ(r.u8(), static_cast<std::uint8_t>(e.slot));
        EXPECT_EQ(r.u64(), e.cluster_offset);
        EXPECT_EQ(r.u64(), e.cluster_len);
        EXPECT_EQ(r.u64(), e.overflow_offset);
        EXPECT_EQ(r.u64(), e.overflow_capacity);
    }
    EXPECT_EQ(ClusterDirectory::decode(bytes), dir);
    const auto h = ClusterDirectory::decode_header(bytes);
    EXPECT_EQ(h.version, dir.version);
    EXPECT_EQ(h.num_clusters, 3u);
}

TEST(PlanLayout, FourClustersTwoGroups) {
    const std::vector<std::uint64_t> lens{100, 60, 40, 80};
    const auto dir = plan_layout(lens, 256, 4);
    EXPECT_EQ(dir.num_groups, 2u);
    const auto& h0 = dir.entries[0];
    const auto& t0 = dir.entries[1];
    EXPECT_EQ(h0.slot, Slot::kHead);
    EXPECT_EQ(t0.slot, Slot::kTail);
    EXPECT_EQ(h0.cluster_offset + h0.cluster_len, h0.overflow_offset);
    EXPECT_EQ(t0.overflow_offset, h0.overflow_offset);
    EXPECT_EQ(t0.cluster_offset, h0.overflow_offset + 256);
    const std::uint64_t group0_end = t0.cluster_offset + t0.cluster_len;
    EXPECT_GE(dir.entries[2].cluster_offset, group0_end);
    EXPECT_LT(dir.entries[2].cluster_offset, group0_end + 16);
    EXPECT_EQ(dir.entries[2].group_index, 1u);
    EXPECT_GE(h0.cluster_offset, ClusterDirectory::encoded_size(4));
}

TEST(PlanLayout, OddCountLeavesTailEmpty) {
    const std::vector<std::uint64_t> lens{10, 20, 30, 40, 50};
    const auto dir = plan_layout(lens, 64, 2);
    EXPECT_EQ(dir.num_groups, 3u);
    EXPECT_EQ(dir.entries[4].group_index, 2u);
    EXPECT_EQ(dir.entries[4].slot, Slot::kHead);
    EXPECT_EQ(dir.end_offset(), dir.entries[4].overflow_offset + 64);
}

TEST(PlanLayout, OverflowHeadersAlignedForFetchAdd) {
    std::vector<std::uint64_t> lens;
    for (std::uint64_t i = 0; i < 17; ++i) {
        lens.push_back(1 + 13 * i);
    }
    const auto dir = plan_layout(lens, 100, 3);
    for (const auto& e : dir.entries) {
        EXPECT_EQ(e.overflow_offset % 8, 0u);
    }
}

TEST(PlanLayout, ReferenceOverflowCapacities) {
    const std::uint64_t sift = 786432;     // 0.75 MB
    const std::uint64_t gist = 4110418;    // 3.92 MB
    const std::vector<std::uint64_t> lens{1000, 2000, 3000};
    const auto a = plan_layout(lens, sift, 128);
    const auto b = plan_layout(lens, gist, 960);
    for (const auto& e : a.entries) {
        EXPECT_EQ(e.overflow_capacity, sift);
    }
    for (const auto& e : b.entries) {
        EXPECT_EQ(e.overflow_capacity, gist);
    }
    EXPECT_EQ(overflow_entry_limit(sift, 128), (sift - 8) / (8 + 4 * 128));
    EXPECT_EQ(overflow_entry_limit(gist, 960), (gist - 8) / (8 + 4 * 960));
}

TEST(PlanLayout, Errors) {
    EXPECT_THROW(plan_layout({}, 64, 2), Error);
    const std::vector<std::uint64_t> lens{1};
    EXPECT_THROW(plan_layout(lens, 4, 2), Error);
}

TEST(Extent, HeadAndTailDefinitions) {
    const std::vector<std::uint64_t> lens{100, 60, 40};
    const auto dir = plan_layout(lens, 256, 4);
    const auto h = contiguous_read_extent(dir, 0);
    const auto t = contiguous_read_extent(dir, 1);
    EXPECT_EQ(h, (ReadExtent{dir.entries[0].cluster_offset, 100 + 256}));
    EXPECT_EQ(t, (ReadExtent{dir.entries[1].overflow_offset, 256 + 60}));
    // Overlap of head and tail extents is exactly the overflow region.
    const std::uint64_t lo = std::max(h.offset, t.offset);
    const std::uint64_t hi = std::min(h.offset + h.length, t.offset + t.length);
    EXPECT_EQ(lo, dir.entries[0].overflow_offset);
    EXPECT_EQ(hi - lo, 256u);
    try {
        contiguous_read_extent(dir, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kUnknownCluster);
    }
}

TEST(Extent, DisjointOutsideSharedOverflow) {
    std::vector<std::uint64_t> lens;
    for (std::uint64_t i = 0; i < 9; ++i) {
        lens.push_back(50 + 7 * i);
    }
    const auto dir = plan_layout(lens, 128, 4);
    for (PartitionId a = 0; a < lens.size(); ++a) {
        for (PartitionId b = a + 1; b < lens.size(); ++b) {
            const auto x = contiguous_read_extent(dir, a);
            const auto y = contiguous_read_extent(dir, b);
            const std::uint64_t lo = std::max(x.offset, y.offset);
            const std::uint64_t hi = std::min(x.offset + x.length, y.offset + y.length);
            if (dir.entries[a].group_index == dir.entries[b].group_index) {
                EXPECT_EQ(lo, dir.entries[a].overflow_offset);
                EXPECT_EQ(hi - lo, 128u);
            } else {
                EXPECT_LE(hi, lo) << a << " vs " << b;
            }
        }
    }
}

TEST(Overflow, FreshRegionParsesEmpty) {
    std::vector<std::uint8_t> region(200, 0);
    const auto p = parse_overflow(region, 4);
    EXPECT_TRUE(p.low.empty());
    EXPECT_TRUE(p.high.empty());
}

TEST(Overflow, AppendBothDirections) {
    const std::uint32_t dim = 3;
    std::vector<std::uint8_t> region(8 + 6 * overflow_entry_size(dim), 0);
    for (VectorId i = 0; i < 3; ++i) {
        append_overflow(region, Slot::kHead, {10 + i, {1.0f * i, 2, 3}});
    }
    for (VectorId i = 0; i < 2; ++i) {
        const auto r = append_overflow(region, Slot::kTail, {20 + i, {4, 5.0f * i, 6}});
        EXPECT_EQ(r.write_offset, region.size() - (i + 1) * overflow_entry_size(dim));
    }
    EXPECT_EQ(read_overflow_header(region), (OverflowHeader{3, 2}));
    const auto p = parse_overflow(region, dim);
    ASSERT_EQ(p.low.size(), 3u);
    ASSERT_EQ(p.high.size(), 2u);
    for (VectorId i = 0; i < 3; ++i) {
        EXPECT_EQ(p.low[i], (OverflowEntry{10 + i, {1.0f * i, 2, 3}}));
    }
    for (VectorId i = 0; i < 2; ++i) {
        EXPECT_EQ(p.high[i], (OverflowEntry{20 + i, {4, 5.0f * i, 6}}));
    }
}

TEST(Overflow, CapacityBoundary) {
    const std::uint32_t dim = 2;
    std::vector<std::uint8_t> region(8 + 2 * overflow_entry_size(dim), 0);
    append_overflow(region, Slot::kHead, {1, {0, 0}});
    append_overflow(region, Slot::kTail, {2, {0, 0}});
    try {
        append_overflow(region, Slot::kHead, {3, {0, 0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kCapacity);
    }
    EXPECT_EQ(read_overflow_header(region), (OverflowHeader{1, 1}));
}

TEST(Overflow, OverCountedHeaderIsClamped) {
    const std::uint32_t dim = 2;
    std::vector<std::uint8_t> region(8 + 2 * overflow_entry_size(dim), 0);
    append_overflow(region, Slot::kHead, {1, {0, 0}});
    append_overflow(region, Slot::kTail, {2, {0, 0}});
    store_u32(std::span(region).subspan(4), 2);
    const auto p = parse_overflow(region, dim);
    EXPECT_EQ(p.low.size() + p.high.size(), 2u);
    EXPECT_EQ(p.low.size(), 1u);
}

TEST(Describe, ListsEveryCluster) {
    const std::vector<std::uint64_t> lens{10, 20, 30};
    const auto text = describe(plan_layout(lens, 64, 2));
    EXPECT_NE(text.find("clusters=3"), std::string::npos);
    EXPECT_NE(text.find("tail"), std::string::npos);
}
