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

#include <filesystem>
#include <fstream>

#include "dhnsw/bytes.hpp"
#include "dhnsw/dataset.hpp"
#include "dhnsw/error.hpp"
#include "test_util.hpp"

using namespace dhnsw;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() /
           ("dhnsw_" + std::to_string(::getpid()) + "_" + name);
}

void write_raw(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string error_message(const std::function<void()>& fn, ErrorCode want) {
    try {
        fn();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), want);
        return e.what();
    }
    ADD_FAILURE() << "no error";
    return {};
}

}  // namespace

TEST(Fvecs, HandBuiltRecord) {
    ByteWriter w;
    w.u32(2);
    w.f32(1.0f);
    w.f32(2.0f);
    ASSERT_EQ(w.size(), 12u);
    const auto p = temp_file("one.fvecs");
    write_raw(p, w.buffer());
    EXPECT_EQ(load_fvecs(p), (std::vector<std::vector<float>>{{1.0f, 2.0f}}));
    std::filesystem::remove(p);
}

TEST(Fvecs, EmptyFile) {
    const auto p = temp_file("empty.fvecs");
    write_raw(p, {});
    EXPECT_TRUE(load_fvecs(p).empty());
    std::filesystem::remove(p);
}

TEST(Fvecs, TruncationNamesByteOffset) {
    ByteWriter w;
    w.u32(2);
    w.f32(1.0f);
    w.f32(2.0f);
    w.u32(2);
    w.f32(3.0f);
    const auto p = temp_file("cut.fvecs");
    write_raw(p, w.buffer());
    const auto msg = error_message([&] { load_fvecs(p); }, ErrorCode::kDataset);
    EXPECT_NE(msg.find("byte"), std::string::npos);
    EXPECT_NE(msg.find("12"), std::string::npos) << msg;
    std::filesystem::remove(p);
}

TEST(Fvecs, InconsistentAndNonPositiveDim) {
    ByteWriter w;
    w.u32(1);
    w.f32(1.0f);
    w.u32(2);
    w.f32(1.0f);
    w.f32(1.0f);
    const auto p = temp_file("mixed.fvecs");
    write_raw(p, w.buffer());
    error_message([&] { load_fvecs(p); }, ErrorCode::kDataset);

    ByteWriter z;
    z.u32(0);
    write_raw(p, z.buffer());
    error_message([&] { load_fvecs(p); }, ErrorCode::kDataset);
    ByteWriter n;
    n.u32(static_cast<std::uint32_t>(-3));
    write_raw(p, n.buffer());
    error_message([&] { load_fvecs(p); }, ErrorCode::kDataset);
    std::filesystem::remove(p);

    error_message([&] { load_fvecs(temp_file("missing.fvecs")); }, ErrorCode::kDataset);
}

TEST(Vecs, WriteLoadRoundTrip) {
    const std::vector<std::vector<float>> f{{1.5f, -2.0f, 3.25f}, {0.0f, 1e-9f, -7.0f}};
    const std::vector<std::vector<std::int32_t>> i{{1, 2}, {-5, 1 << 30}};
    const auto pf = temp_file("rt.fvecs");
    const auto pi = temp_file("rt.ivecs");
    write_fvecs(pf, f);
    write_ivecs(pi, i);
    EXPECT_EQ(load_fvecs(pf), f);
    EXPECT_EQ(load_ivecs(pi), i);
    EXPECT_EQ(std::filesystem::file_size(pf), 2u * (4 + 12));
    std::filesystem::remove(pf);
    std::filesystem::remove(pi);
}

TEST(GroundTruth, Examples) {
    const auto recs = dhnsw::testing::random_records(20, 4, 1);
    std::vector<std::vector<float>> base;
    for (const auto& r : recs) {
        base.push_back(r.values);
    }
    const std::vector<std::vector<float>> q7{base[7]};
    EXPECT_EQ(ground_truth(base, q7, 1), (std::vector<std::vector<VectorId>>{{7}}));
    const auto all = ground_truth(base, q7, 20);
    EXPECT_EQ(all[0], dhnsw::testing::brute_force(recs, base[7], 20));

    const std::vector<std::vector<float>> pair{{1, 0}, {-1, 0}};
    const std::vector<std::vector<float>> origin{{0, 0}};
    EXPECT_EQ(ground_truth(pair, origin, 2)[0], (std::vector<VectorId>{0, 1}));
    EXPECT_THROW(ground_truth(pair, std::vector<std::vector<float>>{{0, 0, 0}}, 1), Error);
}

TEST(Recall, Examples) {
    const std::vector<VectorId> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const std::vector<VectorId> b{11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
    const std::vector<VectorId> half{1, 2, 3, 4, 5, 16, 17, 18, 19, 20};
    EXPECT_EQ(recall_at_k(a, a, 10), 1.0);
    EXPECT_EQ(recall_at_k(a, b, 10), 0.0);
    EXPECT_EQ(recall_at_k(half, a, 10), 0.5);
    const std::vector<VectorId> short_truth{1, 2};
    EXPECT_THROW(recall_at_k(a, short_truth, 10), Error);
    const std::vector<std::vector<VectorId>> rs{a, b};
    const std::vector<std::vector<VectorId>> ts{a, a};
    EXPECT_EQ(recall_at_k(rs, ts, 10), 0.5);
}

TEST(Synthetic, SeededAndShaped) {
    SyntheticSpec spec;
    spec.num_base = 500;
    spec.num_queries = 20;
    spec.dim = 6;
    const auto a = make_synthetic(spec);
    const auto b = make_synthetic(spec);
    EXPECT_EQ(a.base, b.base);
    EXPECT_EQ(a.queries, b.queries);
    EXPECT_EQ(a.base.size(), 500u);
    EXPECT_EQ(a.queries.size(), 20u);
    EXPECT_EQ(a.dim, 6u);
    spec.seed = 8;
    EXPECT_NE(make_synthetic(spec).base, a.base);
    const auto recs = a.records();
    EXPECT_EQ(recs[17].id, 17u);
}
