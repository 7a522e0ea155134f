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

#include "dhnsw/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unordered_set>

#include "dhnsw/bytes.hpp"
#include "dhnsw/error.hpp"

namespace dhnsw {
namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_error(ErrorCode::kDataset, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
std::vector<std::vector<T>> load_vecs(const std::filesystem::path& path) {
    static_assert(sizeof(T) == 4);
    const auto bytes = slurp(path);
    std::vector<std::vector<T>> rows;
    std::size_t pos = 0;
    std::int64_t dim = -1;
    const auto where = [&](std::size_t at) {
        return path.string() + " at byte " + std::to_string(at);
    };
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 4) {
            throw_error(ErrorCode::kDataset, "truncated record header in " + where(pos));
        }
        const auto d = static_cast<std::int32_t>(
            load_u32(std::span<const std::uint8_t>(bytes).subspan(pos, 4)));
        if (d <= 0) {
            throw_error(ErrorCode::kDataset,
                        "non-positive dimension " + std::to_string(d) + " in " + where(pos));
        }
        if (dim >= 0 && d != dim) {
            throw_error(ErrorCode::kDataset, "dimension " + std::to_string(d) + " differs from " +
                                                 std::to_string(dim) + " in " + where(pos));
        }
        dim = d;
        const std::size_t need = 4 * static_cast<std::size_t>(d);
        if (bytes.size() - pos - 4 < need) {
            throw_error(ErrorCode::kDataset, "truncated record in " + where(bytes.size()) +
                                                 "; record starting at byte " +
                                                 std::to_string(pos) + " needs " +
                                                 std::to_string(4 + need) + " bytes");
        }
        std::vector<T> row(static_cast<std::size_t>(d));
        for (std::size_t i = 0; i < row.size(); ++i) {
            const std::uint32_t raw =
                load_u32(std::span<const std::uint8_t>(bytes).subspan(pos + 4 + 4 * i, 4));
            std::memcpy(&row[i], &raw, 4);
        }
        rows.push_back(std::move(row));
        pos += 4 + need;
    }
    return rows;
}

template <typename T>
void write_vecs(const std::filesystem::path& path, std::span<const std::vector<T>> rows) {
    ByteWriter w;
    for (const auto& row : rows) {
        if (row.empty()) {
            throw_error(ErrorCode::kInvalidArgument, "write: empty row");
        }
        w.u32(static_cast<std::uint32_t>(row.size()));
        for (T v : row) {
            std::uint32_t raw;
            std::memcpy(&raw, &v, 4);
            w.u32(raw);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw_error(ErrorCode::kDataset, "cannot write " + path.string());
    }
    const auto& buf = w.buffer();
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw_error(ErrorCode::kDataset, "short write to " + path.string());
    }
}

}  // namespace

std::vector<std::vector<float>> load_fvecs(const std::filesystem::path& path) {
    return load_vecs<float>(path);
}

std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path) {
    return load_vecs<std::int32_t>(path);
}

void write_fvecs(const std::filesystem::path& path, std::span<const std::vector<float>> rows) {
    write_vecs<float>(path, rows);
}

void write_ivecs(const std::filesystem::path& path,
                 std::span<const std::vector<std::int32_t>> rows) {
    write_vecs<std::int32_t>(path, rows);
}

std::vector<VectorRecord> Dataset::records() const {
    std::vector<VectorRecord> out;
    out.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        out.push_back({static_cast<VectorId>(i), base[i]});
    }
    return out;
}

std::vector<std::vector<VectorId>> ground_truth(std::span<const std::vector<float>> base,
                                                std::span<const std::vector<float>> queries,
                                                std::size_t k) {
    std::vector<std::vector<VectorId>> out;
    out.reserve(queries.size());
    std::vector<Neighbor> scored(base.size());
    for (const auto& q : queries) {
        for (std::size_t i = 0; i < base.size(); ++i) {
            scored[i] = {static_cast<VectorId>(i), distance(q, base[i])};
        }
        const std::size_t keep = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                          scored.end(), neighbor_less);
        std::vector<VectorId> ids;
        ids.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            ids.push_back(scored[i].id);
        }
        out.push_back(std::move(ids));
    }
    return out;
}

double recall_at_k(std::span<const VectorId> result, std::span<const VectorId> truth, std::size_t k) {
    if (k == 0) {
        throw_error(ErrorCode::kInvalidArgument, "recall: k must be at least 1");
    }
    if (truth.size() < k) {
        throw_error(ErrorCode::kInvalidArgument, "recall: truth has " +
                                                     std::to_string(truth.size()) +
                                                     " entries, fewer than k=" + std::to_string(k));
    }
    const std::unordered_set<VectorId> want(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(k));
    std::unordered_set<VectorId> seen;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, result.size()); ++i) {
        if (want.contains(result[i]) && seen.insert(result[i]).second) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double recall_at_k(std::span<const std::vector<VectorId>> results,
                   std::span<const std::vector<VectorId>> truth, std::size_t k) {
    if (results.size() != truth.size()) {
        throw_error(ErrorCode::kInvalidArgument, "recall: " + std::to_string(results.size()) +
                                                     " results but " +
                                                     std::to_string(truth.size()) + " truth rows");
    }
    if (results.empty()) {
        throw_error(ErrorCode::kEmptyInput, "recall: no queries");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        sum += recall_at_k(results[i], truth[i], k);
    }
    return sum / static_cast<double>(results.size());
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.dim == 0 || spec.blobs == 0) {
        throw_error(ErrorCode::kInvalidArgument, "synthetic: dim and blobs must be positive");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> center_dist(-spec.center_range, spec.center_range);
    std::normal_distribution<double> noise(0.0, spec.spread);
    std::uniform_int_distribution<std::size_t> pick(0, spec.blobs - 1);

    std::vector<std::vector<float>> centers(spec.blobs, std::vector<float>(spec.dim));
    for (auto& c : centers) {
        for (auto& x : c) {
            x = static_cast<float>(center_dist(rng));
        }
    }
    const auto draw = [&](std::size_t n) {
        std::vector<std::vector<float>> rows(n, std::vector<float>(spec.dim));
        for (auto& row : rows) {
            const auto& c = centers[pick(rng)];
            for (std::size_t j = 0; j < spec.dim; ++j) {
                row[j] = static_cast<float>(c[j] + noise(rng));
            }
        }
        return rows;
    };

    Dataset ds;
    ds.dim = spec.dim;
    ds.base = draw(spec.num_base);
    ds.queries = draw(spec.num_queries);
    return ds;
}

}  // namespace dhnsw
