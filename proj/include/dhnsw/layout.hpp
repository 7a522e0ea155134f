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
#include <string>
#include <vector>

#include "dhnsw/hnsw.hpp"
#include "dhnsw/partition.hpp"

// Remote-memory layout.
//
// The registered region starts with the cluster directory. Groups follow,
// each laid out as
//
//     [head cluster][overflow region][tail cluster]
//
// The overflow region opens with an 8-byte header {low_count, high_count}.
// Entries owned by the head cluster grow forward from the header, entries
// owned by the tail cluster grow backward from the region end. Either
// cluster's bytes and all of its overflow entries therefore sit in one
// contiguous extent. All integers and floats are little-endian.
namespace dhnsw::layout {

// ---- serialized sub-HNSW --------------------------------------------------
//
//   "DSUB" | cluster_id u32 | num_vectors u32 | dim u32 | entry_point u32
//   | max_level u8 | levels u8[n]
//   | per node, per layer <= level: count u32, count x u32 local index
//   | ids u64[n] | vectors f32[n*dim] | crc32 u32 over everything before it

std::vector<std::uint8_t> encode_cluster(const SubCluster& cluster);

// Throws kBadMagic, kChecksum or kTruncated on damaged input.
SubCluster decode_cluster(std::span<const std::uint8_t> bytes);

// Meta index image: "DMET" | num_partitions u32 | representative ids u64[R]
// | embedded DSUB image of the meta graph | crc32 u32.
std::vector<std::uint8_t> encode_meta(const MetaIndex& meta);
MetaIndex decode_meta(std::span<const std::uint8_t> bytes);

// ---- directory ------------------------------------------------------------

enum class Slot : std::uint8_t { kHead = 0, kTail = 1 };

struct DirectoryEntry {
    std::uint32_t group_index = 0;
    Slot slot = Slot::kHead;
    std::uint64_t cluster_offset = 0;
    std::uint64_t cluster_len = 0;
    std::uint64_t overflow_offset = 0;
    std::uint64_t overflow_capacity = 0;

    friend bool operator==(const DirectoryEntry&, const DirectoryEntry&) = default;
};

struct ReadExtent {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    friend bool operator==(const ReadExtent&, const ReadExtent&) = default;
};

//   "DHNM" | version u64 | dim u32 | num_clusters u32 | num_groups u32
//   | per cluster: group u32, slot u8, cluster_offset u64, cluster_len u64,
//                  overflow_offset u64, overflow_capacity u64
struct ClusterDirectory {
    static constexpr std::size_t kHeaderSize = 24;
    static constexpr std::size_t kEntrySize = 37;
    static constexpr std::size_t kVersionOffset = 4;

    std::uint64_t version = 1;
    std::uint32_t dim = 0;
    std::uint32_t num_groups = 0;
    std::vector<DirectoryEntry> entries;

    struct Header {
        std::uint64_t version = 0;
        std::uint32_t dim = 0;
        std::uint32_t num_clusters = 0;
        std::uint32_t num_groups = 0;
    };

    static std::size_t encoded_size(std::size_t num_clusters) {
        return kHeaderSize + kEntrySize * num_clusters;
    }
    std::size_t encoded_size() const { return encoded_size(entries.size()); }

    std::vector<std::uint8_t> encode() const;
    static ClusterDirectory decode(std::span<const std::uint8_t> bytes);
    static Header decode_header(std::span<const std::uint8_t> bytes);

    const DirectoryEntry& entry(PartitionId cluster) const;

    // One past the last byte any group occupies.
    std::uint64_t end_offset() const;

    friend bool operator==(const ClusterDirectory&, const ClusterDirectory&) = default;
};

enum class PairingPolicy { kSequential };

// Lays clusters out two per group in index order. Groups start at
// base_offset, which defaults to the first 8-byte boundary after the
// directory itself. Each head cluster is shifted forward so that it ends on
// an 8-byte boundary, which keeps every overflow header aligned for
// fetch-add; the only padding is between groups. Zero-length clusters keep
// their slot.
ClusterDirectory plan_layout(std::span<const std::uint64_t> cluster_lens,
                             std::uint64_t overflow_capacity, std::uint32_t dim,
                             PairingPolicy policy = PairingPolicy::kSequential,
                             std::uint64_t base_offset = 0);

// The single span that covers a cluster and its shared overflow region.
ReadExtent contiguous_read_extent(const ClusterDirectory& dir, PartitionId cluster);

// Splits bytes read from contiguous_read_extent into cluster and overflow.
struct ExtentView {
    std::span<const std::uint8_t> cluster;
    std::span<const std::uint8_t> overflow;
};
ExtentView split_extent(const DirectoryEntry& entry, std::span<const std::uint8_t> extent);

std::string describe(const ClusterDirectory& dir);

// ---- overflow -------------------------------------------------------------

inline constexpr std::size_t kOverflowHeaderSize = 8;
inline constexpr std::size_t kLowCountOffset = 0;
inline constexpr std::size_t kHighCountOffset = 4;

struct OverflowHeader {
    std::uint32_t low_count = 0;
    std::uint32_t high_count = 0;

    friend bool operator==(const OverflowHeader&, const OverflowHeader&) = default;
};

struct OverflowEntry {
    VectorId id = 0;
    std::vector<float> values;

    friend bool operator==(const OverflowEntry&, const OverflowEntry&) = default;
};

struct ParsedOverflow {
    std::vector<OverflowEntry> low;
    std::vector<OverflowEntry> high;
};

inline std::size_t overflow_entry_size(std::uint32_t dim) { return 8 + 4 * std::size_t{dim}; }

// Total entries (both directions) a region of this capacity can hold.
std::uint64_t overflow_entry_limit(std::uint64_t capacity, std::uint32_t dim);

// Offset of entry `index` of the given slot, relative to the region start.
std::uint64_t overflow_entry_offset(Slot slot, std::uint64_t index, std::uint64_t capacity,
                                    std::uint32_t dim);

std::size_t count_offset(Slot slot);

OverflowHeader read_overflow_header(std::span<const std::uint8_t> region);

std::vector<std::uint8_t> encode_overflow_entry(const OverflowEntry& entry);

struct AppendResult {
    OverflowHeader header;
    std::uint64_t write_offset = 0;
};

// Appends in place. Throws kCapacity when the two directions would cross.
AppendResult append_overflow(std::span<std::uint8_t> region, Slot slot, const OverflowEntry& entry);

// Header counts larger than the region can hold (a failed reservation that
// has not been rolled back yet) are clamped, low side first.
ParsedOverflow parse_overflow(std::span<const std::uint8_t> region, std::uint32_t dim);

}  // namespace dhnsw::layout
