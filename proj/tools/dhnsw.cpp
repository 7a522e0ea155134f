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

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dhnsw/bench.hpp"
#include "dhnsw/compute_node.hpp"
#include "dhnsw/dataset.hpp"
#include "dhnsw/error.hpp"
#include "dhnsw/layout.hpp"
#include "dhnsw/memory_node.hpp"
#include "dhnsw/transport.hpp"

namespace fs = std::filesystem;
using namespace dhnsw;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDataset = 3;
constexpr int kExitConnection = 4;
constexpr int kExitCapacity = 5;

constexpr const char* kAddressEnv = "DHNSW_MEMORY_ADDR";
constexpr const char* kMetaFile = "meta.bin";
constexpr const char* kRegionFile = "region.bin";

struct DatasetOptions {
    std::string base;
    std::string queries;
    std::string truth;
    SyntheticSpec synthetic;
    bool use_synthetic = false;
};

void add_dataset_options(CLI::App& app, DatasetOptions& o) {
    app.add_option("--base", o.base, "base vectors (.fvecs)");
    app.add_option("--queries", o.queries, "query vectors (.fvecs)");
    app.add_option("--truth", o.truth, "ground truth ids (.ivecs)");
    app.add_flag("--synthetic", o.use_synthetic, "generate a Gaussian-mixture dataset instead");
    app.add_option("--num_base", o.synthetic.num_base)->capture_default_str();
    app.add_option("--num_queries", o.synthetic.num_queries)->capture_default_str();
    app.add_option("--dim", o.synthetic.dim)->capture_default_str();
    app.add_option("--blobs", o.synthetic.blobs)->capture_default_str();
    app.add_option("--spread", o.synthetic.spread)->capture_default_str();
    app.add_option("--center_range", o.synthetic.center_range)->capture_default_str();
    app.add_option("--data_seed", o.synthetic.seed)->capture_default_str();
}

void add_index_options(CLI::App& app, IndexConfig& o) {
    app.add_option("--partitions,--R", o.partitions, "number of partitions")->capture_default_str();
    app.add_option("--overflow_capacity", o.overflow_capacity, "overflow bytes per group")
        ->capture_default_str();
    app.add_option("--M", o.M)->capture_default_str();
    app.add_option("--ef_construction", o.ef_construction)->capture_default_str();
    app.add_option("--seed", o.seed)->capture_default_str();
}

void add_transport_options(CLI::App& app, TransportConfig& o) {
    app.add_option("--backend", o.backend, "inproc or tcp")
        ->check(CLI::IsMember({"inproc", "tcp"}))
        ->capture_default_str();
    app.add_option("--address", o.address, std::string("memory node host:port (env ") +
                                               kAddressEnv + " overrides)");
    app.add_option("--doorbell_max", o.doorbell_max)->capture_default_str();
    app.add_option("--base_rtt_us", o.base_rtt_us)->capture_default_str();
    app.add_option("--bandwidth_gbps", o.bandwidth_gbps)->capture_default_str();
}

void add_compute_options(CLI::App& app, BenchConfig& o) {
    app.add_option("--b", o.b, "partitions probed per query")->capture_default_str();
    app.add_option("--k", o.k)->capture_default_str();
    app.add_option("--cache_clusters", o.cache_clusters)->capture_default_str();
    app.add_option("--cache_fraction", o.cache_fraction)->capture_default_str();
    app.add_option("--ef_meta", o.ef_meta, "0 picks a default from b")->capture_default_str();
    app.add_option("--batch_size", o.batch_size)->capture_default_str();
    app.add_option("--workers", o.workers)->capture_default_str();
}

void apply_address_env(TransportConfig& t) {
    if (const char* addr = std::getenv(kAddressEnv); addr != nullptr && *addr != '\0') {
        t.address = addr;
    }
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_error(ErrorCode::kDataset, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw_error(ErrorCode::kDataset, "cannot write " + path.string());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) {
        throw_error(ErrorCode::kDataset, "cannot write " + path.string());
    }
}

std::vector<std::vector<VectorId>> to_ids(const std::vector<std::vector<std::int32_t>>& rows) {
    std::vector<std::vector<VectorId>> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        std::vector<VectorId> ids;
        for (std::int32_t v : row) {
            if (v < 0) {
                throw_error(ErrorCode::kDataset, "negative id in ground truth");
            }
            ids.push_back(static_cast<VectorId>(v));
        }
        out.push_back(std::move(ids));
    }
    return out;
}

Dataset load_dataset(const DatasetOptions& o, bool need_queries) {
    if (o.use_synthetic) {
        return make_synthetic(o.synthetic);
    }
    Dataset ds;
    if (o.base.empty()) {
        throw_error(ErrorCode::kDataset, "no --base file given (or use --synthetic)");
    }
    ds.base = load_fvecs(o.base);
    if (ds.base.empty()) {
        throw_error(ErrorCode::kDataset, o.base + " holds no vectors");
    }
    ds.dim = static_cast<std::uint32_t>(ds.base.front().size());
    if (!o.queries.empty()) {
        ds.queries = load_fvecs(o.queries);
        if (!ds.queries.empty() && ds.queries.front().size() != ds.dim) {
            throw_error(ErrorCode::kDataset, "query dim differs from base dim");
        }
    } else if (need_queries) {
        throw_error(ErrorCode::kDataset, "no --queries file given");
    }
    if (!o.truth.empty()) {
        ds.truth = to_ids(load_ivecs(o.truth));
    }
    return ds;
}

struct LoadedIndex {
    std::shared_ptr<const MetaIndex> meta;
    std::vector<std::uint8_t> region;
};

LoadedIndex load_index(const fs::path& dir, bool need_region) {
    LoadedIndex out;
    out.meta = std::make_shared<const MetaIndex>(layout::decode_meta(read_file(dir / kMetaFile)));
    if (need_region) {
        out.region = read_file(dir / kRegionFile);
    }
    return out;
}

void check_dim(const std::vector<std::vector<float>>& rows, std::uint32_t dim,
               const std::string& path) {
    if (!rows.empty() && rows.front().size() != dim) {
        throw_error(ErrorCode::kDataset, path + " has dim " + std::to_string(rows.front().size()) +
                                             " but the index has dim " + std::to_string(dim));
    }
}

// For inproc runs the region lives in this process, loaded from the index.
std::shared_ptr<Region> local_region(const TransportConfig& t, const fs::path& index_dir) {
    if (t.backend != "inproc") {
        return nullptr;
    }
    const auto bytes = read_file(index_dir / kRegionFile);
    auto region = std::make_shared<Region>(bytes.size(), 0);
    region->serve_write(0, bytes);
    return region;
}

// Turns `key = value` lines of the --config file into `--key=value`
// arguments for the selected subcommand. Keys given on the command line
// or unknown to the subcommand are skipped.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        }
    }
    if (path.empty()) {
        return args;
    }
    CLI::App* target = &app;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i].rfind("-", 0) == 0) {
            continue;
        }
        CLI::App* sub = nullptr;
        try {
            sub = target->get_subcommand(args[i]);
        } catch (const CLI::OptionNotFound&) {
        }
        if (sub != nullptr) {
            target = sub;
        }
    }
    std::ifstream in(path);
    if (!in) {
        throw CLI::FileError::Missing(path);
    }
    const auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
    };
    std::vector<std::string> extra;
    for (const auto& item : CLI::ConfigINI().from_config(in)) {
        if (item.inputs.empty()) {
            continue;
        }
        const std::string flag = "--" + item.name;
        if (target->get_option_no_throw(flag) == nullptr || given(flag)) {
            continue;
        }
        std::string value;
        for (const auto& v : item.inputs) {
            value += (value.empty() ? "" : ",") + v;
        }
        extra.push_back(flag + "=" + value);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::kDataset:
            return kExitDataset;
        case ErrorCode::kTransport:
        case ErrorCode::kConnectionRefused:
            return kExitConnection;
        case ErrorCode::kCapacity:
            return kExitCapacity;
        default:
            return kExitOther;
    }
}

int cmd_build(const DatasetOptions& data, const IndexConfig& index, TransportConfig transport,
              const std::string& out_dir, bool upload) {
    const Dataset ds = load_dataset(data, false);
    const auto built = build_index(ds.records(), index);
    const auto region = render_region(built.image);
    fs::create_directories(out_dir);
    const auto meta_bytes = layout::encode_meta(*built.meta);
    write_file(fs::path(out_dir) / kMetaFile, meta_bytes);
    write_file(fs::path(out_dir) / kRegionFile, region);
    if (upload) {
        apply_address_env(transport);
        transport.backend = "tcp";
        auto t = connect(transport);
        upload_region(t, region);
    }
    std::cout << "vectors " << ds.base.size() << "\n"
              << "dim " << ds.dim << "\n"
              << "partitions " << built.meta->num_partitions() << " (non-empty "
              << built.parts.clusters.size() << ")\n"
              << "meta_bytes " << meta_bytes.size() << "\n"
              << "region_bytes " << region.size() << "\n";
    return kExitOk;
}

int cmd_serve(const std::string& host, std::uint16_t port, std::uint64_t capacity,
              const std::string& image) {
    std::vector<std::uint8_t> bytes;
    if (!image.empty()) {
        bytes = read_file(image);
    }
    capacity = std::max<std::uint64_t>(capacity, bytes.size());
    if (capacity == 0) {
        throw_error(ErrorCode::kInvalidArgument, "serve: give --capacity or --image");
    }
    MemoryNode node;
    auto region = node.register_region(capacity);
    if (!bytes.empty()) {
        region->serve_write(0, bytes);
    }

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    MemoryServer server(region, host, port);
    std::cout << "listening " << server.address() << " capacity " << capacity << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return kExitOk;
}

int cmd_query(const std::string& index_dir, const std::string& queries_path,
              const std::string& truth_path, TransportConfig transport, const BenchConfig& c,
              std::size_t ef, const std::string& mode) {
    apply_address_env(transport);
    const auto index = load_index(index_dir, false);
    auto queries = load_fvecs(queries_path);
    if (queries.empty()) {
        throw_error(ErrorCode::kDataset, queries_path + " holds no vectors");
    }
    check_dim(queries, index.meta->dim(), queries_path);
    ComputeEngine engine(index.meta, connect(transport, local_region(transport, index_dir)),
                         {c.cache_clusters, c.cache_fraction, c.ef_meta});
    QueryBatch batch{std::move(queries), c.k, c.b, ef};
    const auto r = engine.execute(parse_mode(mode), batch);

    nlohmann::json doc;
    std::vector<std::vector<VectorId>> ids;
    for (const auto& list : r.neighbors) {
        nlohmann::json row = nlohmann::json::array();
        std::vector<VectorId> row_ids;
        for (const auto& n : list) {
            row.push_back({{"id", n.id}, {"distance", n.distance}});
            row_ids.push_back(n.id);
        }
        doc["results"].push_back(std::move(row));
        ids.push_back(std::move(row_ids));
    }
    doc["round_trips"] = r.stats.round_trips;
    doc["bytes_read"] = r.stats.bytes_read;
    doc["clusters_fetched"] = r.clusters_fetched;
    doc["total_us"] = r.total_us;
    if (!truth_path.empty()) {
        doc["recall"] = recall_at_k(ids, to_ids(load_ivecs(truth_path)), c.k);
    }
    std::cout << doc.dump() << "\n";
    return kExitOk;
}

int cmd_insert(const std::string& index_dir, const std::string& vectors_path,
               std::uint64_t first_id, TransportConfig transport) {
    apply_address_env(transport);
    const auto index = load_index(index_dir, false);
    const auto rows = load_fvecs(vectors_path);
    check_dim(rows, index.meta->dim(), vectors_path);
    ComputeEngine engine(index.meta, connect(transport, local_region(transport, index_dir)));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto p = engine.insert_vector({first_id + i, rows[i]});
        std::cout << (first_id + i) << " -> partition " << p << "\n";
    }
    return kExitOk;
}

int cmd_bench(const DatasetOptions& data, BenchConfig config, const std::string& json_path,
              const std::string& csv_path) {
    apply_address_env(config.transport);
    const Dataset ds = load_dataset(data, true);
    const auto report = run_experiment(config, ds);
    const auto json = report_json(report);
    if (json_path.empty()) {
        std::cout << json << "\n";
    } else {
        write_text(json_path, json + "\n");
    }
    if (!csv_path.empty()) {
        write_text(csv_path, report_csv(report));
    }
    if (!json_path.empty()) {
        std::cout << report_csv(report);
    }
    return kExitOk;
}

int cmd_layout_dump(const std::string& index_dir, TransportConfig transport) {
    layout::ClusterDirectory dir;
    if (!index_dir.empty()) {
        const auto region = read_file(fs::path(index_dir) / kRegionFile);
        dir = layout::ClusterDirectory::decode(region);
    } else {
        apply_address_env(transport);
        transport.backend = "tcp";
        auto t = connect(transport);
        const auto h = layout::ClusterDirectory::decode_header(
            t.read({0, layout::ClusterDirectory::kHeaderSize}));
        dir = layout::ClusterDirectory::decode(
            t.read({0, layout::ClusterDirectory::encoded_size(h.num_clusters)}));
    }
    std::cout << layout::describe(dir);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dhnsw: partitioned vector search over disaggregated memory"};
    app.require_subcommand(1);

    DatasetOptions data;
    IndexConfig index;
    BenchConfig config;
    std::string index_dir;
    std::string out_dir;
    std::string queries_path;
    std::string truth_path;
    std::string vectors_path;
    std::string mode = "full";
    std::size_t ef = 48;
    bool upload = false;
    std::uint64_t first_id = 0;
    std::string host = "127.0.0.1";
    std::uint16_t port = 7070;
    std::uint64_t capacity = 0;
    std::string image;
    std::string json_path;
    std::string csv_path;
    std::vector<std::size_t> ef_sweep{1, 8, 48};
    std::vector<std::string> modes{"naive", "nodoorbell", "full"};
    std::string config_path;

    auto* build = app.add_subcommand("build", "partition, serialize and optionally upload an index");
    build->add_option("--config", config_path, "key = value file; command-line flags win");
    add_dataset_options(*build, data);
    add_index_options(*build, index);
    add_transport_options(*build, config.transport);
    build->add_option("--out", out_dir, "index directory")->required();
    build->add_flag("--upload", upload, "copy the region to the memory node at --address");

    auto* serve = app.add_subcommand("serve", "run a standalone memory node");
    serve->add_option("--config", config_path, "key = value file; command-line flags win");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--capacity", capacity, "region bytes");
    serve->add_option("--image", image, "region image to preload (region.bin)");

    auto* query = app.add_subcommand("query", "run one batch of queries");
    query->add_option("--config", config_path, "key = value file; command-line flags win");
    query->add_option("--index", index_dir)->required();
    query->add_option("--queries", queries_path)->required();
    query->add_option("--truth", truth_path);
    query->add_option("--ef_search", ef)->capture_default_str();
    query->add_option("--mode", mode)
        ->check(CLI::IsMember({"naive", "nodoorbell", "full"}))
        ->capture_default_str();
    add_compute_options(*query, config);
    add_transport_options(*query, config.transport);

    auto* insert = app.add_subcommand("insert", "append vectors to overflow space");
    insert->add_option("--config", config_path, "key = value file; command-line flags win");
    insert->add_option("--index", index_dir)->required();
    insert->add_option("--vectors", vectors_path)->required();
    insert->add_option("--first_id", first_id, "id of the first vector")->required();
    add_transport_options(*insert, config.transport);

    auto* bench = app.add_subcommand("bench", "build, upload and sweep modes x ef_search");
    bench->add_option("--config", config_path, "key = value file; command-line flags win");
    add_dataset_options(*bench, data);
    add_index_options(*bench, config.index);
    add_compute_options(*bench, config);
    add_transport_options(*bench, config.transport);
    bench->add_option("--ef_search,--ef_sweep", ef_sweep, "ef_search values")
        ->delimiter(',')
        ->capture_default_str();
    bench->add_option("--modes", modes)
        ->delimiter(',')
        ->check(CLI::IsMember({"naive", "nodoorbell", "full"}))
        ->capture_default_str();
    bench->add_option("--json", json_path, "report output (stdout when omitted)");
    bench->add_option("--csv", csv_path, "CSV projection of the report");
    bench->add_flag("--dump_results", config.dump_results, "include per-query ids in the report");

    auto* layout_cmd = app.add_subcommand("layout", "inspect the remote layout");
    layout_cmd->require_subcommand(1);
    auto* dump = layout_cmd->add_subcommand("dump", "print the cluster directory");
    dump->add_option("--config", config_path, "key = value file; command-line flags win");
    dump->add_option("--index", index_dir, "read the directory from a built index");
    add_transport_options(*dump, config.transport);

    try {
        auto args = expand_config(app, std::vector<std::string>(argv, argv + argc));
        std::reverse(args.begin(), args.end());
        args.pop_back();
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*build) {
            return cmd_build(data, index, config.transport, out_dir, upload);
        }
        if (*serve) {
            return cmd_serve(host, port, capacity, image);
        }
        if (*query) {
            return cmd_query(index_dir, queries_path, truth_path, config.transport, config, ef, mode);
        }
        if (*insert) {
            return cmd_insert(index_dir, vectors_path, first_id, config.transport);
        }
        if (*bench) {
            config.ef_sweep = ef_sweep;
            config.modes.clear();
            for (const auto& m : modes) {
                config.modes.push_back(parse_mode(m));
            }
            return cmd_bench(data, config, json_path, csv_path);
        }
        if (*dump) {
            return cmd_layout_dump(index_dir, config.transport);
        }
    } catch (const Error& e) {
        std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitUsage;
}
