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

#include <json.hpp>
#include <sstream>

#include "dhnsw/bench.hpp"
#include "dhnsw/error.hpp"

using namespace dhnsw;

namespace {

Dataset small_dataset() {
    SyntheticSpec spec;
    spec.num_base = 5000;
    spec.num_queries = 300;
    spec.dim = 16;
    spec.blobs = 32;
    return make_synthetic(spec);
}

BenchConfig small_config() {
    BenchConfig c;
    c.index.partitions = 32;
    c.b = 4;
    c.k = 10;
    c.batch_size = 100;
    c.ef_sweep = {1, 8, 48};
    c.dump_results = true;
    return c;
}

}  // namespace

TEST(Experiment, NineRowsAndMonotoneRecall) {
    const auto ds = small_dataset();
    const auto report = run_experiment(small_config(), ds);
    ASSERT_EQ(report.rows.size(), 9u);
    const auto truth = ground_truth(ds.base, ds.queries, 10);
    for (std::size_t m = 0; m < 3; ++m) {
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& row = report.rows[3 * m + i];
            EXPECT_GE(row.recall, 0.0);
            EXPECT_LE(row.recall, 1.0);
            EXPECT_DOUBLE_EQ(row.recall, recall_at_k(row.results, truth, 10));
            const auto& p = row.phases_per_query;
            EXPECT_LE(p.network_us + p.sub_hnsw_us + p.meta_hnsw_us, row.latency_mean_us);
            EXPECT_DOUBLE_EQ(row.round_trips_per_query,
                             static_cast<double>(row.stats.round_trips) / ds.queries.size());
            if (i > 0) {
                EXPECT_GE(row.recall, report.rows[3 * m + i - 1].recall);
            }
        }
    }
}

TEST(Experiment, NaiveAccountingIdentity) {
    SyntheticSpec spec;
    spec.num_base = 3000;
    spec.num_queries = 2000;
    spec.dim = 8;
    const auto ds = make_synthetic(spec);
    BenchConfig c;
    c.index.partitions = 16;
    c.b = 2;
    c.batch_size = 2000;
    c.ef_sweep = {8};
    c.modes = {ExecMode::kNaive};
    const auto report = run_experiment(c, ds);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(report.rows[0].stats.round_trips, 4000u);
}

TEST(Experiment, WorkersSplitAndSum) {
    auto c = small_config();
    c.modes = {ExecMode::kNaive};
    c.ef_sweep = {16};
    c.workers = 3;
    const auto ds = small_dataset();
    const auto r = run_experiment(c, ds);
    EXPECT_EQ(r.rows[0].stats.round_trips, ds.queries.size() * c.b);
    EXPECT_EQ(r.rows[0].results.size(), ds.queries.size());
}

TEST(Experiment, TcpBackendMatchesInproc) {
    auto ds = small_dataset();
    ds.queries.resize(100);
    auto c = small_config();
    c.ef_sweep = {16};
    const auto built = build_index(ds.records(), c.index);
    const auto bytes = render_region(built.image);
    auto local = std::make_shared<Region>(bytes.size(), 0);
    local->serve_write(0, bytes);
    auto remote = std::make_shared<Region>(bytes.size(), 0);
    MemoryServer server(remote, "127.0.0.1", 0);
    TransportConfig tc;
    tc.backend = "tcp";
    tc.address = server.address();
    {
        auto t = connect(tc);
        upload_region(t, bytes);
    }
    EXPECT_EQ(remote->serve_read(0, bytes.size()), bytes);
    const auto a = run_experiment(c, ds, built.meta, local);
    c.transport = tc;
    const auto b = run_experiment(c, ds, built.meta, nullptr);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].results, b.rows[i].results);
        EXPECT_EQ(a.rows[i].stats.round_trips, b.rows[i].stats.round_trips);
    }
}

TEST(Report, JsonAndCsvProjection) {
    auto ds = small_dataset();
    ds.queries.resize(50);
    auto c = small_config();
    c.ef_sweep = {4};
    c.dump_results = false;
    const auto report = run_experiment(c, ds);
    const auto doc = nlohmann::json::parse(report_json(report));
    ASSERT_EQ(doc["rows"].size(), 3u);
    for (const char* key : {"mode", "ef_search", "recall", "latency_mean_us", "round_trips_per_query",
                            "bytes_per_query", "network_us", "sub_hnsw_us", "meta_hnsw_us"}) {
        EXPECT_TRUE(doc["rows"][0].contains(key)) << key;
    }
    EXPECT_FALSE(doc["rows"][0].contains("results"));
    EXPECT_EQ(doc["rows"][2]["mode"], "full");
    const auto csv = report_csv(report);
    std::istringstream in(csv);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        ++lines;
    }
    EXPECT_EQ(lines, 4u);
}

TEST(Experiment, MissingQueriesRejected) {
    Dataset ds;
    ds.dim = 2;
    ds.base = {{0, 0}, {1, 1}};
    try {
        run_experiment(small_config(), ds);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDataset);
    }
}
