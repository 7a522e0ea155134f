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

#include "dhnsw/layout.hpp"

#include <zlib.h>

#include <algorithm>
#include <sstream>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"

namespace dhnsw::layout {
namespace {

constexpr char kClusterMagic[5] = "DSUB";
constexpr char kMetaMagic[5] = "DMET";
constexpr char kDirectoryMagic[5] = "DHNM";
constexpr std::uint32_t kMetaClusterId = 0xFFFFFFFFu;

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large blobs.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
        const auto n = std::min(kChunk, bytes.size() - pos);
        crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

void append_crc(ByteWriter& w) {
    w.u32(crc_of(w.buffer()));
}

// Validates magic and trailer, returning the body that precedes the crc.
std::span<const std::uint8_t> checked_body(std::span<const std::uint8_t> bytes,
                                           const char (&magic)[5], const char* what) {
    if (bytes.size() < 4) {
        throw_error(ErrorCode::kTruncated,
                    std::string(what) + ": " + std::to_string(bytes.size()) + " bytes is too short");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (bytes[i] != static_cast<std::uint8_t>(magic[i])) {
            throw_error(ErrorCode::kBadMagic, std::string(what) + ": bad magic");
        }
    }
    if (bytes.size() < 8) {
        throw_error(ErrorCode::kTruncated, std::string(what) + ": missing crc trailer");
    }
    auto body = bytes.first(bytes.size() - 4);
    const std::uint32_t stored = load_u32(bytes.last(4));
    if (crc_of(body) != stored) {
        throw_error(ErrorCode::kChecksum, std::string(what) + ": crc mismatch");
    }
    return body;
}

void write_graph_body(ByteWriter& w, std::uint32_t cluster_id, const HnswGraph& g) {
    const auto n = static_cast<std::uint32_t>(g.size());
    w.u32(cluster_id);
    w.u32(n);
    w.u32(g.dim());
    w.u32(g.empty() ? HnswGraph::kNoNode : g.entry_point());
    w.u8(static_cast<std::uint8_t>(g.max_level()));
    for (std::uint32_t i = 0; i < n; ++i) {
        w.u8(static_cast<std::uint8_t>(g.level(i)));
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        for (int layer = 0; layer <= g.level(i); ++layer) {
            auto peers = g.neighbors(i, layer);
            w.u32(static_cast<std::uint32_t>(peers.size()));
            for (auto p : peers) {
                w.u32(p);
            }
        }
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        w.u64(g.id(i));
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        for (float v : g.vector(i)) {
            w.f32(v);
        }
    }
}

std::size_t graph_body_size_hint(const HnswGraph& g) {
    return 32 + g.size() * (1 + 8 + 4 * (g.dim() + 2 * g.params().M + 1));
}

SubCluster read_graph_body(ByteReader& r) {
    HnswGraph::Parts parts;
    const std::uint32_t cluster_id = r.u32();
    const std::uint32_t n = r.u32();
    parts.dim = r.u32();
    parts.entry_point = r.u32();
    parts.max_level = r.u8();
    auto levels = r.bytes(n);
    parts.levels.assign(levels.begin(), levels.end());
    parts.links.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        parts.links[i].resize(std::size_t{parts.levels[i]} + 1);
        for (auto& list : parts.links[i]) {
            const std::uint32_t count = r.u32();
            if (count > r.remaining() / 4) {
                throw_error(ErrorCode::kTruncated, "cluster: neighbor count runs past the end");
            }
            list.resize(count);
            for (auto& peer : list) {
                peer = r.u32();
            }
        }
    }
    parts.ids.resize(n);
    for (auto& id : parts.ids) {
        id = r.u64();
    }
    const std::size_t floats = std::size_t{n} * parts.dim;
    if (floats > r.remaining() / 4) {
        throw_error(ErrorCode::kTruncated, "cluster: vector data runs past the end");
    }
    parts.data.resize(floats);
    for (auto& v : parts.data) {
        v = r.f32();
    }
    if (parts.dim == 0) {
        throw_error(ErrorCode::kInvalidArgument, "cluster: zero dimension");
    }
    return {cluster_id, HnswGraph::from_parts(std::move(parts))};
}

}  // namespace

std::vector<std::uint8_t> encode_cluster(const SubCluster& cluster) {
    ByteWriter w(graph_body_size_hint(cluster.graph));
    w.tag(kClusterMagic);
    write_graph_body(w, cluster.cluster_id, cluster.graph);
    append_crc(w);
    return w.take();
}

SubCluster decode_cluster(std::span<const std::uint8_t> bytes) {
    auto body = checked_body(bytes, kClusterMagic, "cluster");
    ByteReader r(body.subspan(4), "cluster");
    auto out = read_graph_body(r);
    if (r.remaining() != 0) {
        throw_error(ErrorCode::kTruncated, "cluster: " + std::to_string(r.remaining()) +
                                               " unexpected trailing bytes");
    }
    return out;
}

std::vector<std::uint8_t> encode_meta(const MetaIndex& meta) {
    const auto& g = meta.graph();
    ByteWriter w(graph_body_size_hint(g) + 8 * meta.num_partitions() + 16);
    w.tag(kMetaMagic);
    w.u32(static_cast<std::uint32_t>(meta.num_partitions()));
    for (const auto& rep : meta.representatives()) {
        w.u64(rep.id);
    }
    w.tag(kClusterMagic);
    write_graph_body(w, kMetaClusterId, g);
    append_crc(w);
    return w.take();
}

MetaIndex decode_meta(std::span<const std::uint8_t> bytes) {
    auto body = checked_body(bytes, kMetaMagic, "meta");
    ByteReader r(body.subspan(4), "meta");
    const std::uint32_t count = r.u32();
    if (count > r.remaining() / 8) {
        throw_error(ErrorCode::kTruncated, "meta: representative table runs past the end");
    }
    std::vector<VectorId> rep_ids(count);
    for (auto& id : rep_ids) {
        id = r.u64();
    }
    if (!r.tag(kClusterMagic)) {
        throw_error(ErrorCode::kBadMagic, "meta: embedded graph has bad magic");
    }
    auto sub = read_graph_body(r);
    if (r.remaining() != 0 || sub.graph.size() != count) {
        throw_error(ErrorCode::kTruncated, "meta: graph does not match representative table");
    }
    HnswParams params;
    params.level_cap = MetaIndex::kLevelCap;
    std::vector<VectorRecord> reps(count);
    for (std::uint32_t p = 0; p < count; ++p) {
        auto local = sub.graph.find(p);
        if (!local) {
            throw_error(ErrorCode::kInvalidArgument,
                        "meta: partition " + std::to_string(p) + " missing from graph");
        }
        auto v = sub.graph.vector(*local);
        reps[p] = {rep_ids[p], {v.begin(), v.end()}};
    }
    return MetaIndex(std::move(reps), std::move(sub.graph));
}

std::vector<std::uint8_t> ClusterDirectory::encode() const {
    ByteWriter w(encoded_size());
    w.tag(kDirectoryMagic);
    w.u64(version);
    w.u32(dim);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    w.u32(num_groups);
    for (const auto& e : entries) {
        w.u32(e.group_index);
        w.u8(static_cast<std::uint8_t>(e.slot));
        w.u64(e.cluster_offset);
        w.u64(e.cluster_len);
        w.u64(e.overflow_offset);
        w.u64(e.overflow_capacity);
    }
    return w.take();
}

ClusterDirectory::Header ClusterDirectory::decode_header(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "directory");
    if (!r.tag(kDirectoryMagic)) {
        throw_error(ErrorCode::kBadMagic, "directory: bad magic");
    }
    Header h;
    h.version = r.u64();
    h.dim = r.u32();
    h.num_clusters = r.u32();
    h.num_groups = r.u32();
    return h;
}

ClusterDirectory ClusterDirectory::decode(std::span<const std::uint8_t> bytes) {
    const Header h = decode_header(bytes);
    ByteReader r(bytes.subspan(kHeaderSize), "directory");
    ClusterDirectory dir;
    dir.version = h.version;
    dir.dim = h.dim;
    dir.num_groups = h.num_groups;
    if (h.num_clusters > r.remaining() / kEntrySize) {
        throw_error(ErrorCode::kTruncated, "directory: entry table runs past the end");
    }
    dir.entries.resize(h.num_clusters);
    for (auto& e : dir.entries) {
        e.group_index = r.u32();
        const auto slot = r.u8();
        if (slot > 1) {
            throw_error(ErrorCode::kInvalidArgument, "directory: bad slot byte");
        }
        e.slot = static_cast<Slot>(slot);
        e.cluster_offset = r.u64();
        e.cluster_len = r.u64();
        e.overflow_offset = r.u64();
        e.overflow_capacity = r.u64();
    }
    return dir;
}

const DirectoryEntry& ClusterDirectory::entry(PartitionId cluster) const {
    if (cluster >= entries.size()) {
        throw_error(ErrorCode::kUnknownCluster, "directory: unknown cluster " +
                                                    std::to_string(cluster) + " of " +
                                                    std::to_string(entries.size()));
    }
    return entries[cluster];
}

std::uint64_t ClusterDirectory::end_offset() const {
    std::uint64_t end = encoded_size();
    for (const auto& e : entries) {
        end = std::max(end, e.overflow_offset + e.overflow_capacity);
        end = std::max(end, e.cluster_offset + e.cluster_len);
    }
    return end;
}

namespace {
std::uint64_t align8(std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; }
}  // namespace

ClusterDirectory plan_layout(std::span<const std::uint64_t> cluster_lens,
                             std::uint64_t overflow_capacity, std::uint32_t dim,
                             PairingPolicy policy, std::uint64_t base_offset) {
    if (cluster_lens.empty()) {
        throw_error(ErrorCode::kInvalidArgument, "plan_layout: zero clusters");
    }
    if (overflow_capacity < kOverflowHeaderSize) {
        throw_error(ErrorCode::kInvalidArgument,
                    "plan_layout: overflow capacity " + std::to_string(overflow_capacity) +
                        " is smaller than the overflow header");
    }
    (void)policy;  // kSequential is the only policy: cluster 2g heads group g, 2g+1 tails it.

    ClusterDirectory dir;
    dir.dim = dim;
    dir.entries.resize(cluster_lens.size());
    dir.num_groups = static_cast<std::uint32_t>((cluster_lens.size() + 1) / 2);

    const std::uint64_t dir_end = ClusterDirectory::encoded_size(cluster_lens.size());
    if (base_offset == 0) {
        base_offset = align8(dir_end);
    } else if (base_offset < dir_end || base_offset % 8 != 0) {
        throw_error(ErrorCode::kInvalidArgument,
                    "plan_layout: base offset must be 8-aligned and past the directory");
    }

    std::uint64_t group_start = base_offset;
    for (std::uint32_t g = 0; g < dir.num_groups; ++g) {
        const std::size_t head = 2 * std::size_t{g};
        const std::size_t tail = head + 1;
        const std::uint64_t head_len = cluster_lens[head];
        const std::uint64_t head_offset = group_start + (align8(head_len) - head_len);
        const std::uint64_t overflow_offset = head_offset + head_len;

        dir.entries[head] = {g, Slot::kHead, head_offset, head_len, overflow_offset,
                             overflow_capacity};
        std::uint64_t group_end = overflow_offset + overflow_capacity;
        if (tail < cluster_lens.size()) {
            dir.entries[tail] = {g, Slot::kTail, group_end, cluster_lens[tail], overflow_offset,
                                 overflow_capacity};
            group_end += cluster_lens[tail];
        }
        group_start = align8(group_end);
    }
    return dir;
}

ReadExtent contiguous_read_extent(const ClusterDirectory& dir, PartitionId cluster) {
    const auto& e = dir.entry(cluster);
    if (e.slot == Slot::kHead) {
        return {e.cluster_offset, e.cluster_len + e.overflow_capacity};
    }
    return {e.overflow_offset, e.overflow_capacity + e.cluster_len};
}

ExtentView split_extent(const DirectoryEntry& entry, std::span<const std::uint8_t> extent) {
    if (extent.size() != entry.cluster_len + entry.overflow_capacity) {
        throw_error(ErrorCode::kTruncated, "extent: " + std::to_string(extent.size()) +
                                               " bytes, expected " +
                                               std::to_string(entry.cluster_len +
                                                              entry.overflow_capacity));
    }
    if (entry.slot == Slot::kHead) {
        return {extent.first(entry.cluster_len), extent.subspan(entry.cluster_len)};
    }
    return {extent.subspan(entry.overflow_capacity), extent.first(entry.overflow_capacity)};
}

std::string describe(const ClusterDirectory& dir) {
    std::ostringstream os;
    os << "directory version=" << dir.version << " dim=" << dir.dim
       << " clusters=" << dir.entries.size() << " groups=" << dir.num_groups
       << " bytes=" << dir.encoded_size() << " end=" << dir.end_offset() << '\n';
    os << "cluster  group  slot  cluster_offset  cluster_len  overflow_offset  overflow_cap\n";
    for (std::size_t i = 0; i < dir.entries.size(); ++i) {
        const auto& e = dir.entries[i];
        os << i << "  " << e.group_index << "  " << (e.slot == Slot::kHead ? "head" : "tail")
           << "  " << e.cluster_offset << "  " << e.cluster_len << "  " << e.overflow_offset
           << "  " << e.overflow_capacity << '\n';
    }
    return os.str();
}

std::uint64_t overflow_entry_limit(std::uint64_t capacity, std::uint32_t dim) {
    if (capacity < kOverflowHeaderSize) {
        return 0;
    }
    return (capacity - kOverflowHeaderSize) / overflow_entry_size(dim);
}

std::uint64_t overflow_entry_offset(Slot slot, std::uint64_t index, std::uint64_t capacity,
                                    std::uint32_t dim) {
    const std::uint64_t size = overflow_entry_size(dim);
    if (slot == Slot::kHead) {
        return kOverflowHeaderSize + index * size;
    }
    return capacity - (index + 1) * size;
}

std::size_t count_offset(Slot slot) {
    return slot == Slot::kHead ? kLowCountOffset : kHighCountOffset;
}

OverflowHeader read_overflow_header(std::span<const std::uint8_t> region) {
    if (region.size() < kOverflowHeaderSize) {
        throw_error(ErrorCode::kTruncated, "overflow: region smaller than its header");
    }
    return {load_u32(region.subspan(kLowCountOffset)), load_u32(region.subspan(kHighCountOffset))};
}

std::vector<std::uint8_t> encode_overflow_entry(const OverflowEntry& entry) {
    ByteWriter w(overflow_entry_size(static_cast<std::uint32_t>(entry.values.size())));
    w.u64(entry.id);
    for (float v : entry.values) {
        w.f32(v);
    }
    return w.take();
}

AppendResult append_overflow(std::span<std::uint8_t> region, Slot slot,
                             const OverflowEntry& entry) {
    const auto dim = static_cast<std::uint32_t>(entry.values.size());
    OverflowHeader h = read_overflow_header(region);
    const std::uint64_t limit = overflow_entry_limit(region.size(), dim);
    if (std::uint64_t{h.low_count} + h.high_count + 1 > limit) {
        throw_error(ErrorCode::kCapacity, "overflow full (" + std::to_string(limit) +
                                              " entries); cluster needs rebuild");
    }
    const std::uint32_t index = slot == Slot::kHead ? h.low_count : h.high_count;
    const std::uint64_t offset = overflow_entry_offset(slot, index, region.size(), dim);
    auto bytes = encode_overflow_entry(entry);
    std::copy(bytes.begin(), bytes.end(), region.begin() + static_cast<std::ptrdiff_t>(offset));
    if (slot == Slot::kHead) {
        ++h.low_count;
    } else {
        ++h.high_count;
    }
    store_u32(region.subspan(kLowCountOffset), h.low_count);
    store_u32(region.subspan(kHighCountOffset), h.high_count);
    return {h, offset};
}

ParsedOverflow parse_overflow(std::span<const std::uint8_t> region, std::uint32_t dim) {
    const OverflowHeader h = read_overflow_header(region);
    const std::uint64_t limit = overflow_entry_limit(region.size(), dim);
    const std::uint64_t low = std::min<std::uint64_t>(h.low_count, limit);
    const std::uint64_t high = std::min<std::uint64_t>(h.high_count, limit - low);

    auto read_entry = [&](std::uint64_t offset) {
        ByteReader r(region.subspan(offset, overflow_entry_size(dim)), "overflow entry");
        OverflowEntry e;
        e.id = r.u64();
        e.values.resize(dim);
        for (auto& v : e.values) {
            v = r.f32();
        }
        return e;
    };

    ParsedOverflow out;
    out.low.reserve(low);
    out.high.reserve(high);
    for (std::uint64_t i = 0; i < low; ++i) {
        out.low.push_back(read_entry(overflow_entry_offset(Slot::kHead, i, region.size(), dim)));
    }
    for (std::uint64_t i = 0; i < high; ++i) {
        out.high.push_back(read_entry(overflow_entry_offset(Slot::kTail, i, region.size(), dim)));
    }
    return out;
}

}  // namespace dhnsw::layout
