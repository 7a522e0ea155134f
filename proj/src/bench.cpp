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

#include "dhnsw/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dhnsw/error.hpp"
#include "dhnsw/layout.hpp"

namespace dhnsw {

BuiltIndex build_index(std::span<const VectorRecord> records, const IndexConfig& config) {
    if (records.empty()) {
        throw_error(ErrorCode::kEmptyInput, "build: no vectors");
    }
    HnswParams params;
    params.M = config.M;
    params.ef_construction = config.ef_construction;
    params.seed = config.seed;

    auto reps = sample_representatives(records, config.partitions, config.seed);
    auto meta = std::make_shared<const MetaIndex>(MetaIndex::build(std::move(reps), params));
    BuiltIndex out{meta, partition_dataset(*meta, records, default_ef_meta(1), params), {}};
    out.image = make_image(out.parts, meta->dim(), config.overflow_capacity);
    return out;
}

std::vector<std::uint8_t> render_region(const IndexImage& image, std::uint64_t version) {
    auto region = std::make_shared<Region>(image.region_bytes(), 0);
    Transport t(make_inproc_backend(region), {});
    publish(t, image, version);
    return region->serve_read(0, region->capacity());
}

void upload_region(Transport& transport, std::span<const std::uint8_t> region) {
    const auto header = layout::ClusterDirectory::decode_header(region);
    const std::size_t dir_end = layout::ClusterDirectory::encoded_size(header.num_clusters);
    if (dir_end > region.size()) {
        throw_error(ErrorCode::kTruncated, "upload: region image shorter than its directory");
    }
    constexpr std::size_t kChunk = 16u << 20;
    for (std::size_t pos = dir_end; pos < region.size(); pos += kChunk) {
        const std::size_t n = std::min(kChunk, region.size() - pos);
        transport.write(pos, region.subspan(pos, n));
    }
    transport.write(0, region.first(dir_end));
}

namespace {

using Clock = std::chrono::steady_clock;

struct WorkerOutput {
    std::vector<std::vector<VectorId>> results;
    std::vector<double> latencies;
    FabricStats stats;
    PhaseTimes phases;
    std::size_t clusters_fetched = 0;
    std::size_t cache_hits = 0;
    std::size_t batches = 0;
    std::exception_ptr error;
};

void run_worker(const BenchConfig& config, const Dataset& dataset,
                const std::shared_ptr<const MetaIndex>& meta, const std::shared_ptr<Region>& local,
                ExecMode mode, std::size_t ef, std::size_t lo, std::size_t hi, WorkerOutput& out) {
    try {
        ComputeEngine engine(meta, connect(config.transport, local),
                             {config.cache_clusters, config.cache_fraction, config.ef_meta});
        for (std::size_t start = lo; start < hi; start += config.batch_size) {
            const std::size_t end = std::min(hi, start + config.batch_size);
            QueryBatch batch;
            batch.queries.assign(dataset.queries.begin() + static_cast<std::ptrdiff_t>(start),
                                 dataset.queries.begin() + static_cast<std::ptrdiff_t>(end));
            batch.k = config.k;
            batch.b = config.b;
            batch.ef_search = ef;

            const auto t0 = Clock::now();
            const auto r = engine.execute(mode, batch);
            const double wall = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();

            for (const auto& list : r.neighbors) {
                std::vector<VectorId> ids;
                ids.reserve(list.size());
                for (const auto& n : list) {
                    ids.push_back(n.id);
                }
                out.results.push_back(std::move(ids));
                out.latencies.push_back(wall / static_cast<double>(batch.queries.size()));
            }
            out.stats += r.stats;
            out.phases += r.phases;
            out.clusters_fetched += r.clusters_fetched;
            out.cache_hits += r.cache_hits;
            ++out.batches;
        }
    } catch (...) {
        out.error = std::current_exception();
    }
}

double percentile(std::vector<double> sorted, double p) {
    if (sorted.empty()) {
        return 0.0;
    }
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

RunReport run_experiment(const BenchConfig& config, const Dataset& dataset,
                         std::shared_ptr<const MetaIndex> meta, std::shared_ptr<Region> local) {
    if (dataset.queries.empty()) {
        throw_error(ErrorCode::kDataset, "bench: dataset has no queries");
    }
    if (config.batch_size == 0 || config.workers == 0) {
        throw_error(ErrorCode::kInvalidArgument, "bench: batch_size and workers must be positive");
    }
    if (config.ef_sweep.empty() || config.modes.empty()) {
        throw_error(ErrorCode::kInvalidArgument, "bench: empty ef sweep or mode list");
    }

    std::vector<std::vector<VectorId>> truth = dataset.truth;
    if (truth.empty()) {
        if (dataset.base.empty()) {
            throw_error(ErrorCode::kDataset, "bench: no ground truth and no base vectors");
        }
        truth = ground_truth(dataset.base, dataset.queries, config.k);
    }
    if (truth.size() != dataset.queries.size()) {
        throw_error(ErrorCode::kDataset, "bench: ground truth has " + std::to_string(truth.size()) +
                                             " rows for " +
                                             std::to_string(dataset.queries.size()) + " queries");
    }

    RunReport report;
    report.num_base = dataset.base.size();
    report.num_queries = dataset.queries.size();
    report.dim = dataset.dim;
    report.partitions = meta->num_partitions();
    report.b = config.b;
    report.k = config.k;
    report.batch_size = config.batch_size;
    report.workers = config.workers;
    report.backend = config.transport.backend;
    report.cache_capacity = cache_capacity_for(
        {config.cache_clusters, config.cache_fraction, config.ef_meta}, meta->num_partitions());

    const std::size_t n = dataset.queries.size();
    const std::size_t workers = std::min(config.workers, n);
    for (ExecMode mode : config.modes) {
        for (std::size_t ef : config.ef_sweep) {
            std::vector<WorkerOutput> outputs(workers);
            std::vector<std::thread> threads;
            const auto t0 = Clock::now();
            for (std::size_t w = 0; w < workers; ++w) {
                const std::size_t lo = n * w / workers;
                const std::size_t hi = n * (w + 1) / workers;
                threads.emplace_back(run_worker, std::cref(config), std::cref(dataset),
                                     std::cref(meta), std::cref(local), mode, ef, lo, hi,
                                     std::ref(outputs[w]));
            }
            for (auto& t : threads) {
                t.join();
            }
            for (const auto& o : outputs) {
                if (o.error) {
                    std::rethrow_exception(o.error);
                }
            }

            ReportRow row;
            row.mode = std::string(mode_name(mode));
            row.ef_search = ef;
            row.queries = n;
            row.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            std::vector<double> latencies;
            for (auto& o : outputs) {
                row.stats += o.stats;
                row.phases_per_query += o.phases;
                row.clusters_fetched += o.clusters_fetched;
                row.cache_hits += o.cache_hits;
                row.batches += o.batches;
                latencies.insert(latencies.end(), o.latencies.begin(), o.latencies.end());
                for (auto& r : o.results) {
                    row.results.push_back(std::move(r));
                }
            }
            const double q = static_cast<double>(n);
            row.recall = recall_at_k(row.results, truth, config.k);
            double sum = 0.0;
            for (double l : latencies) {
                sum += l;
            }
            row.latency_mean_us = sum / q;
            row.latency_p50_us = percentile(latencies, 0.50);
            row.latency_p95_us = percentile(latencies, 0.95);
            row.latency_p99_us = percentile(latencies, 0.99);
            row.round_trips_per_query = static_cast<double>(row.stats.round_trips) / q;
            row.bytes_per_query = static_cast<double>(row.stats.bytes_read) / q;
            row.simulated_us_per_query = row.stats.simulated_time_us / q;
            row.phases_per_query.network_us /= q;
            row.phases_per_query.sub_hnsw_us /= q;
            row.phases_per_query.meta_hnsw_us /= q;
            if (!config.dump_results) {
                row.results.clear();
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

RunReport run_experiment(const BenchConfig& config, const Dataset& dataset) {
    if (dataset.queries.empty()) {
        throw_error(ErrorCode::kDataset, "bench: dataset has no queries");
    }
    const auto built = build_index(dataset.records(), config.index);
    const auto region = render_region(built.image);
    std::shared_ptr<Region> local;
    if (config.transport.backend == "inproc") {
        local = std::make_shared<Region>(region.size(), 0);
        local->serve_write(0, region);
    } else {
        auto t = connect(config.transport);
        upload_region(t, region);
    }
    return run_experiment(config, dataset, built.meta, local);
}

std::string report_json(const RunReport& report) {
    using nlohmann::json;
    json rows = json::array();
    for (const auto& r : report.rows) {
        json row = {
            {"mode", r.mode},
            {"ef_search", r.ef_search},
            {"queries", r.queries},
            {"batches", r.batches},
            {"recall", r.recall},
            {"latency_mean_us", r.latency_mean_us},
            {"latency_p50_us", r.latency_p50_us},
            {"latency_p95_us", r.latency_p95_us},
            {"latency_p99_us", r.latency_p99_us},
            {"round_trips_per_query", r.round_trips_per_query},
            {"bytes_per_query", r.bytes_per_query},
            {"simulated_us_per_query", r.simulated_us_per_query},
            {"network_us", r.phases_per_query.network_us},
            {"sub_hnsw_us", r.phases_per_query.sub_hnsw_us},
            {"meta_hnsw_us", r.phases_per_query.meta_hnsw_us},
            {"round_trips", r.stats.round_trips},
            {"bytes_read", r.stats.bytes_read},
            {"doorbell_ops", r.stats.doorbell_ops},
            {"doorbell_batches", r.stats.doorbell_batches},
            {"clusters_fetched", r.clusters_fetched},
            {"cache_hits", r.cache_hits},
            {"wall_seconds", r.wall_seconds},
        };
        if (!r.results.empty()) {
            row["results"] = r.results;
        }
        rows.push_back(std::move(row));
    }
    json doc = {
        {"num_base", report.num_base},
        {"num_queries", report.num_queries},
        {"dim", report.dim},
        {"partitions", report.partitions},
        {"b", report.b},
        {"k", report.k},
        {"batch_size", report.batch_size},
        {"workers", report.workers},
        {"cache_capacity", report.cache_capacity},
        {"backend", report.backend},
        {"rows", std::move(rows)},
    };
    return doc.dump(2);
}

std::string report_csv(const RunReport& report) {
    std::ostringstream out;
    out << "mode,ef_search,queries,recall,latency_mean_us,latency_p50_us,latency_p95_us,"
           "latency_p99_us,round_trips_per_query,bytes_per_query,simulated_us_per_query,"
           "network_us,sub_hnsw_us,meta_hnsw_us\n";
    for (const auto& r : report.rows) {
        out << r.mode << ',' << r.ef_search << ',' << r.queries << ',' << r.recall << ','
            << r.latency_mean_us << ',' << r.latency_p50_us << ',' << r.latency_p95_us << ','
            << r.latency_p99_us << ',' << r.round_trips_per_query << ',' << r.bytes_per_query
            << ',' << r.simulated_us_per_query << ',' << r.phases_per_query.network_us << ','
            << r.phases_per_query.sub_hnsw_us << ',' << r.phases_per_query.meta_hnsw_us << '\n';
    }
    return out.str();
}

}  // namespace dhnsw
