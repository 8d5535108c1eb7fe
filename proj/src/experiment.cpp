#include "cogc/experiment.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace cogc::exp {

namespace {

using ordered_json = nlohmann::ordered_json;

template <typename T>
T get_field(const ordered_json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("field '") + key + "': wrong type");
    }
}

channel::OutageMode parse_mode(const std::string& mode) {
    if (mode == "exact") return channel::OutageMode::exact;
    if (mode == "linearized") return channel::OutageMode::linearized;
    throw ConfigError("field 'channel.mode': expected 'exact' or 'linearized', got '" +
                      mode + "'");
}

fl::PartitionKind parse_partition(const std::string& name) {
    if (name == "iid") return fl::PartitionKind::iid;
    if (name == "label-skew") return fl::PartitionKind::label_skew;
    throw ConfigError("field 'dataset.partition': expected 'iid' or 'label-skew', got '" +
                      name + "'");
}

fl::ModelSpec::Kind parse_model_kind(const std::string& name) {
    if (name == "logistic") return fl::ModelSpec::Kind::logistic;
    if (name == "mlp") return fl::ModelSpec::Kind::mlp;
    throw ConfigError("field 'model.kind': expected 'logistic' or 'mlp', got '" + name +
                      "'");
}

}  // namespace

std::string format_double(double value) {
    // Shortest decimal form that parses back to the same bits.
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
        if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
}

proto::Method parse_method(const std::string& name) {
    if (name == "cogc") return proto::Method::cogc;
    if (name == "qfl") return proto::Method::qfl;
    if (name == "nonblind") return proto::Method::nonblind;
    if (name == "blind") return proto::Method::blind;
    throw ConfigError("field 'methods': unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
    if (schema_version != 1)
        throw ConfigError("field 'schema_version': unsupported version " +
                          std::to_string(schema_version));
    if (methods.empty()) throw ConfigError("field 'methods': must not be empty");
    for (const auto& m : methods) parse_method(m);
    if (clients < 1) throw ConfigError("field 'clients': must be >= 1");
    if (tolerance < 0 || tolerance >= clients)
        throw ConfigError("field 'tolerance': must satisfy 0 <= s < M (s=" +
                          std::to_string(tolerance) + ", M=" + std::to_string(clients) +
                          ")");
    if (rounds < 1) throw ConfigError("field 'rounds': must be >= 1");
    if (local_steps < 1) throw ConfigError("field 'local_steps': must be >= 1");
    if (batch < 1) throw ConfigError("field 'batch': must be >= 1");
    if (!(eta > 0.0)) throw ConfigError("field 'eta': must be positive");
    if (bits < 1 || bits > 16) throw ConfigError("field 'bits': must lie in [1, 16]");
    if (lower < 0.0 || !(upper > lower))
        throw ConfigError("field 'lower'/'upper': need 0 <= lower < upper");
    if (!(channel.rate > 0.0)) throw ConfigError("field 'channel.rate': must be positive");
    if (!(channel.snr_a > 0.0))
        throw ConfigError("field 'channel.snr_a': must be positive");
    if (channel.snr_b >= 0.0 && !(channel.snr_b > 0.0))
        throw ConfigError("field 'channel.snr_b': must be positive or omitted");
    if (!(channel.sigma2_a > 0.0) || !(channel.sigma2_b > 0.0))
        throw ConfigError("field 'channel.sigma2_a'/'sigma2_b': must be positive");
    parse_mode(channel.mode);
    if (dataset.source != "synthetic-blobs" && dataset.source != "idx-files")
        throw ConfigError("field 'dataset.source': expected 'synthetic-blobs' or "
                          "'idx-files', got '" + dataset.source + "'");
    if (dataset.classes < 2) throw ConfigError("field 'dataset.classes': must be >= 2");
    if (dataset.feature_dim < 1)
        throw ConfigError("field 'dataset.feature_dim': must be >= 1");
    if (dataset.samples_per_client < 1)
        throw ConfigError("field 'dataset.samples_per_client': must be >= 1");
    if (dataset.test_samples < 1)
        throw ConfigError("field 'dataset.test_samples': must be >= 1");
    parse_partition(dataset.partition);
    if (dataset.partition == "label-skew" &&
        (dataset.skew_classes < 1 || dataset.skew_classes > dataset.classes))
        throw ConfigError("field 'dataset.skew_classes': must lie in [1, classes]");
    if (!(dataset.center_radius > 0.0) || !(dataset.noise_sigma > 0.0))
        throw ConfigError("field 'dataset.center_radius'/'noise_sigma': must be positive");
    if (dataset.source == "idx-files" &&
        (dataset.train_images.empty() || dataset.train_labels.empty() ||
         dataset.test_images.empty() || dataset.test_labels.empty()))
        throw ConfigError("field 'dataset.train_images'...: idx-files needs all four paths");
    parse_model_kind(model.kind);
    if (model.kind == "mlp" && model.hidden < 1)
        throw ConfigError("field 'model.hidden': must be >= 1");
    if (seeds.empty()) throw ConfigError("field 'seeds': must not be empty");
    if (out_dir.empty()) throw ConfigError("field 'out_dir': must not be empty");
}

ExperimentConfig config_from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.schema_version = get_field(j, "schema_version", cfg.schema_version);
    cfg.name = get_field(j, "name", cfg.name);
    cfg.methods = get_field(j, "methods", cfg.methods);
    cfg.clients = get_field(j, "clients", cfg.clients);
    cfg.tolerance = get_field(j, "tolerance", cfg.tolerance);
    cfg.rounds = get_field(j, "rounds", cfg.rounds);
    cfg.local_steps = get_field(j, "local_steps", cfg.local_steps);
    cfg.batch = get_field(j, "batch", cfg.batch);
    cfg.eta = get_field(j, "eta", cfg.eta);
    cfg.quantize = get_field(j, "quantize", cfg.quantize);
    cfg.bits = get_field(j, "bits", cfg.bits);
    cfg.lower = get_field(j, "lower", cfg.lower);
    cfg.upper = get_field(j, "upper", cfg.upper);
    if (j.contains("channel")) {
        const auto& c = j.at("channel");
        cfg.channel.rate = get_field(c, "rate", cfg.channel.rate);
        cfg.channel.snr_a = get_field(c, "snr_a", cfg.channel.snr_a);
        cfg.channel.snr_b = get_field(c, "snr_b", cfg.channel.snr_b);
        cfg.channel.sigma2_a = get_field(c, "sigma2_a", cfg.channel.sigma2_a);
        cfg.channel.sigma2_b = get_field(c, "sigma2_b", cfg.channel.sigma2_b);
        cfg.channel.mode = get_field(c, "mode", cfg.channel.mode);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.source = get_field(d, "source", cfg.dataset.source);
        cfg.dataset.classes = get_field(d, "classes", cfg.dataset.classes);
        cfg.dataset.feature_dim = get_field(d, "feature_dim", cfg.dataset.feature_dim);
        cfg.dataset.samples_per_client =
            get_field(d, "samples_per_client", cfg.dataset.samples_per_client);
        cfg.dataset.test_samples = get_field(d, "test_samples", cfg.dataset.test_samples);
        cfg.dataset.partition = get_field(d, "partition", cfg.dataset.partition);
        cfg.dataset.skew_classes = get_field(d, "skew_classes", cfg.dataset.skew_classes);
        cfg.dataset.center_radius =
            get_field(d, "center_radius", cfg.dataset.center_radius);
        cfg.dataset.noise_sigma = get_field(d, "noise_sigma", cfg.dataset.noise_sigma);
        cfg.dataset.train_images = get_field(d, "train_images", cfg.dataset.train_images);
        cfg.dataset.train_labels = get_field(d, "train_labels", cfg.dataset.train_labels);
        cfg.dataset.test_images = get_field(d, "test_images", cfg.dataset.test_images);
        cfg.dataset.test_labels = get_field(d, "test_labels", cfg.dataset.test_labels);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        cfg.model.kind = get_field(m, "kind", cfg.model.kind);
        cfg.model.hidden = get_field(m, "hidden", cfg.model.hidden);
    }
    cfg.seeds = get_field(j, "seeds", cfg.seeds);
    cfg.out_dir = get_field(j, "out_dir", cfg.out_dir);
    cfg.validate();
    return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    ordered_json j;
    j["schema_version"] = cfg.schema_version;
    j["name"] = cfg.name;
    j["methods"] = cfg.methods;
    j["clients"] = cfg.clients;
    j["tolerance"] = cfg.tolerance;
    j["rounds"] = cfg.rounds;
    j["local_steps"] = cfg.local_steps;
    j["batch"] = cfg.batch;
    j["eta"] = cfg.eta;
    j["quantize"] = cfg.quantize;
    j["bits"] = cfg.bits;
    j["lower"] = cfg.lower;
    j["upper"] = cfg.upper;
    j["channel"] = {{"rate", cfg.channel.rate},       {"snr_a", cfg.channel.snr_a},
                    {"snr_b", cfg.channel.snr_b},     {"sigma2_a", cfg.channel.sigma2_a},
                    {"sigma2_b", cfg.channel.sigma2_b}, {"mode", cfg.channel.mode}};
    j["dataset"] = {{"source", cfg.dataset.source},
                    {"classes", cfg.dataset.classes},
                    {"feature_dim", cfg.dataset.feature_dim},
                    {"samples_per_client", cfg.dataset.samples_per_client},
                    {"test_samples", cfg.dataset.test_samples},
                    {"partition", cfg.dataset.partition},
                    {"skew_classes", cfg.dataset.skew_classes},
                    {"center_radius", cfg.dataset.center_radius},
                    {"noise_sigma", cfg.dataset.noise_sigma},
                    {"train_images", cfg.dataset.train_images},
                    {"train_labels", cfg.dataset.train_labels},
                    {"test_images", cfg.dataset.test_images},
                    {"test_labels", cfg.dataset.test_labels}};
    j["model"] = {{"kind", cfg.model.kind}, {"hidden", cfg.model.hidden}};
    j["seeds"] = cfg.seeds;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return config_from_json_text(buffer.str());
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open config file for writing: " + path);
    out << config_to_json_text(cfg);
}

LinkOutages resolve_outages(const ExperimentConfig& cfg) {
    channel::ChannelConfig cc;
    cc.rate = cfg.channel.rate;
    cc.snr_a = cfg.channel.snr_a;
    cc.snr_b = cfg.channel.snr_b > 0.0
                   ? cfg.channel.snr_b
                   : channel::balanced_d2p_snr(cfg.channel.snr_a, cfg.channel.sigma2_a,
                                               cfg.channel.sigma2_b);
    cc.sigma2_a = cfg.channel.sigma2_a;
    cc.sigma2_b = cfg.channel.sigma2_b;
    cc.mode = parse_mode(cfg.channel.mode);
    cc.validate();
    return LinkOutages{cc.q_d2d(), cc.q_d2p()};
}

namespace {

struct CellInputs {
    std::vector<fl::ClientState> clients;
    Eigen::VectorXd initial;
    fl::ModelSpec model;
    fl::Dataset test_set;
};

CellInputs build_cell_inputs(const ExperimentConfig& cfg, std::uint64_t seed) {
    CellInputs in;
    fl::Dataset train;
    if (cfg.dataset.source == "synthetic-blobs") {
        const auto centers = rng::key(seed, rng::Tag::blob_centers);
        train = fl::make_blobs(cfg.dataset.classes, cfg.dataset.feature_dim,
                               cfg.dataset.samples_per_client * cfg.clients,
                               cfg.dataset.center_radius, cfg.dataset.noise_sigma,
                               centers, rng::key(seed, rng::Tag::blob_train));
        in.test_set = fl::make_blobs(cfg.dataset.classes, cfg.dataset.feature_dim,
                                     cfg.dataset.test_samples, cfg.dataset.center_radius,
                                     cfg.dataset.noise_sigma, centers,
                                     rng::key(seed, rng::Tag::blob_test));
    } else {
        train = fl::load_idx_dataset(cfg.dataset.train_images, cfg.dataset.train_labels);
        in.test_set = fl::load_idx_dataset(cfg.dataset.test_images, cfg.dataset.test_labels);
    }

    in.model.kind = parse_model_kind(cfg.model.kind);
    in.model.classes = train.classes;
    in.model.feature_dim = train.dim();
    in.model.hidden = cfg.model.hidden;

    auto part = fl::partition_dataset(train, cfg.clients, parse_partition(cfg.dataset.partition),
                                      cfg.dataset.skew_classes, seed);
    in.initial = fl::init_params(in.model, rng::key(seed, rng::Tag::model_init));
    in.clients.resize(cfg.clients);
    for (int m = 0; m < cfg.clients; ++m) {
        in.clients[m].id = m;
        in.clients[m].shard = std::move(part.shards[m]);
        in.clients[m].weight = part.weights[m];
        in.clients[m].params = in.initial;
        in.clients[m].last_sync = in.initial;
    }
    return in;
}

}  // namespace

proto::RunResult run_cell(const ExperimentConfig& cfg, proto::Method method,
                          std::uint64_t seed) {
    cfg.validate();
    CellInputs in = build_cell_inputs(cfg, seed);

    proto::ProtocolConfig pcfg;
    pcfg.local_steps = cfg.local_steps;
    pcfg.eta = cfg.eta;
    pcfg.batch = cfg.batch;
    pcfg.quantize = cfg.quantize;
    pcfg.quantizer = quant::QuantizerConfig{cfg.bits, cfg.lower, cfg.upper};

    const LinkOutages q = resolve_outages(cfg);
    if (method == proto::Method::cogc) {
        const auto scheme = gc::construct_gc_scheme(cfg.clients, cfg.tolerance, seed);
        return proto::run_cogc(std::move(in.clients), std::move(in.initial), scheme,
                               q.q_d2d, q.q_d2p, pcfg, in.model, in.test_set, cfg.rounds,
                               seed);
    }
    const double q_d2p = method == proto::Method::qfl ? 0.0 : q.q_d2p;
    return proto::run_baseline(method, std::move(in.clients), std::move(in.initial), q_d2p,
                               pcfg, in.model, in.test_set, cfg.rounds, seed);
}

void write_metrics_csv(const std::string& run_id, const std::string& method,
                       std::uint64_t seed, const proto::RunResult& result,
                       std::ostream& out) {
    out << "run_id,method,seed,wall_round,successful_round,success,"
           "n_d2d_stragglers,n_d2p_lost,accuracy,loss\n";
    for (const auto& r : result.rounds) {
        out << run_id << ',' << method << ',' << seed << ',' << r.wall_round << ','
            << r.successful_round << ',' << (r.success ? 1 : 0) << ','
            << r.n_d2d_stragglers << ',' << r.n_d2p_lost << ','
            << format_double(r.accuracy) << ',' << format_double(r.loss) << '\n';
    }
}

namespace {

void write_aggregate_csv(const std::string& method,
                         const std::vector<proto::RunResult>& runs, int rounds,
                         bool by_success, std::ostream& out) {
    out << "method,round,seeds,accuracy,loss\n";
    int limit = rounds;
    if (by_success) {
        for (const auto& run : runs) limit = std::min(limit, run.trace.executed);
    }
    for (int r = 1; r <= limit; ++r) {
        double acc = 0.0;
        double loss = 0.0;
        for (const auto& run : runs) {
            const proto::RoundRecord* picked = nullptr;
            if (by_success) {
                for (const auto& rec : run.rounds) {
                    if (rec.success && rec.successful_round == r) {
                        picked = &rec;
                        break;
                    }
                }
            } else {
                picked = &run.rounds[static_cast<std::size_t>(r) - 1];
            }
            acc += picked->accuracy;
            loss += picked->loss;
        }
        acc /= static_cast<double>(runs.size());
        loss /= static_cast<double>(runs.size());
        out << method << ',' << r << ',' << runs.size() << ',' << format_double(acc)
            << ',' << format_double(loss) << '\n';
    }
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg, int threads) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    struct Cell {
        std::string method;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& method : cfg.methods)
        for (auto seed : cfg.seeds) cells.push_back({method, seed});

    std::vector<proto::RunResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                results[i] = run_cell(cfg, parse_method(cells[i].method), cells[i].seed);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int workers = std::clamp<int>(threads, 1, static_cast<int>(cells.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentOutput output;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        output.clamped_total += results[i].clamped_total;
        const std::string run_id =
            cfg.name + "-" + cells[i].method + "-seed" + std::to_string(cells[i].seed);
        const std::string path = (fs::path(cfg.out_dir) / (run_id + ".csv")).string();
        std::ofstream out(path);
        if (!out) throw ConfigError("cannot write metrics file: " + path);
        write_metrics_csv(run_id, cells[i].method, cells[i].seed, results[i], out);
        output.per_run_files.push_back(path);
    }
    for (const auto& method : cfg.methods) {
        std::vector<proto::RunResult> runs;
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (cells[i].method == method) runs.push_back(results[i]);
        const std::string base = cfg.name + "-" + method + "-aggregate";
        {
            const std::string path =
                (fs::path(cfg.out_dir) / (base + ".csv")).string();
            std::ofstream out(path);
            if (!out) throw ConfigError("cannot write aggregate file: " + path);
            write_aggregate_csv(method, runs, cfg.rounds, false, out);
            output.aggregate_files.push_back(path);
        }
        if (method == "cogc") {
            const std::string path =
                (fs::path(cfg.out_dir) / (base + "-by-success.csv")).string();
            std::ofstream out(path);
            if (!out) throw ConfigError("cannot write aggregate file: " + path);
            write_aggregate_csv(method, runs, cfg.rounds, true, out);
            output.aggregate_files.push_back(path);
        }
    }
    save_config(cfg, (fs::path(cfg.out_dir) / (cfg.name + "-config.json")).string());
    return output;
}

double calibrate_upper_bound(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentConfig probe = cfg;
    probe.quantize = false;
    const auto result =
        run_cell(probe, parse_method(cfg.methods.front()), cfg.seeds.front());
    if (!(result.max_delta_coord > 0.0))
        throw ConfigError("calibration run produced no nonzero deltas");
    // 25% headroom over the largest observed coordinate.
    return 1.25 * result.max_delta_coord;
}

void sweep_outage(const std::vector<double>& rates, const std::vector<double>& snrs,
                  const std::vector<int>& tolerances, int clients,
                  channel::OutageMode mode, double sigma2, std::uint64_t mc_trials,
                  std::uint64_t seed, int threads, std::ostream& out) {
    out << "snr,rate,mode,q,M,s,p1,p2,p3,p_o,mc_estimate,mc_stderr\n";
    const char* mode_name = mode == channel::OutageMode::exact ? "exact" : "linearized";
    for (double rate : rates) {
        for (double snr : snrs) {
            const double q = channel::link_outage_probability(rate, snr, sigma2, mode);
            for (int s : tolerances) {
                const auto report = outage::closed_form_outage(clients, s, q);
                out << format_double(snr) << ',' << format_double(rate) << ','
                    << mode_name << ',' << format_double(q) << ',' << clients << ',' << s
                    << ',' << format_double(report.p1) << ',' << format_double(report.p2)
                    << ',' << format_double(report.p3) << ','
                    << format_double(report.p_o);
                if (mc_trials > 0) {
                    const auto mc = outage::monte_carlo_outage(clients, s, q, q, mc_trials,
                                                               seed, threads);
                    out << ',' << format_double(mc.estimate) << ','
                        << format_double(mc.std_error);
                } else {
                    out << ",,";
                }
                out << '\n';
            }
        }
    }
}

}  // namespace cogc::exp
