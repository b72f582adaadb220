#include "sparselab/experiment.hpp"

#include "sparselab/data_io.hpp"
#include "sparselab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <mutex>
#include <thread>

namespace sparselab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ojson config_object(const ExperimentConfig& c) {
    ojson j;
    j["architecture"] = c.architecture;
    j["dataset"] = c.dataset;
    j["seeds"] = c.seeds;
    j["epochs_per_iteration"] = c.epochs_per_iteration;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["iterations"] = c.iterations;
    j["method"] = method_name(c.prune.method);
    j["scope"] = scope_name(c.prune.scope);
    j["direction"] = direction_name(c.prune.direction);
    j["fraction"] = c.prune.fraction;
    j["handling"] = handling_name(c.handling);
    j["checkpoint_capture_epoch"] = c.checkpoint_capture_epoch;
    j["output_dir"] = c.output_dir;
    j["data_dir"] = c.data_dir;
    return j;
}

template <class T>
T get_field(const ojson& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field '" + key + "': " + e.what());
    }
}

std::size_t get_count(const ojson& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("config field '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

void merge_object(ExperimentConfig& c, const ojson& j) {
    if (!j.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    for (const auto& [key, v] : j.items()) {
        if (key == "architecture") {
            c.architecture = get_field<std::string>(v, key);
        } else if (key == "dataset") {
            c.dataset = get_field<std::string>(v, key);
        } else if (key == "seeds") {
            c.seeds = get_field<std::vector<std::uint64_t>>(v, key);
        } else if (key == "seed") {
            c.seeds = {get_field<std::uint64_t>(v, key)};
        } else if (key == "epochs_per_iteration") {
            c.epochs_per_iteration = get_count(v, key);
        } else if (key == "lr") {
            c.lr = get_field<double>(v, key);
        } else if (key == "batch_size") {
            c.batch_size = get_count(v, key);
        } else if (key == "iterations") {
            c.iterations = get_count(v, key);
        } else if (key == "fraction") {
            c.prune.fraction = get_field<double>(v, key);
        } else if (key == "method") {
            const auto m = parse_method(get_field<std::string>(v, key));
            if (!m) {
                throw ConfigError("unknown pruning method '" + v.get<std::string>() + "'");
            }
            c.prune.method = *m;
        } else if (key == "scope") {
            const auto s = parse_scope(get_field<std::string>(v, key));
            if (!s) {
                throw ConfigError("unknown scope '" + v.get<std::string>() + "'");
            }
            c.prune.scope = *s;
        } else if (key == "direction") {
            const auto d = parse_direction(get_field<std::string>(v, key));
            if (!d) {
                throw ConfigError("unknown direction '" + v.get<std::string>() + "'");
            }
            c.prune.direction = *d;
        } else if (key == "handling") {
            const auto h = parse_handling(get_field<std::string>(v, key));
            if (!h) {
                throw ConfigError("unknown handling '" + v.get<std::string>() + "'");
            }
            c.handling = *h;
        } else if (key == "checkpoint_capture_epoch") {
            c.checkpoint_capture_epoch = get_count(v, key);
        } else if (key == "output_dir") {
            c.output_dir = get_field<std::string>(v, key);
        } else if (key == "data_dir") {
            c.data_dir = get_field<std::string>(v, key);
        } else {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
}

ojson parse_json(std::string_view text, const std::string& what) {
    try {
        return ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

ojson sparsity_object(const LayerSparsity& s) {
    return ojson{{"name", s.name},
                 {"total", s.total},
                 {"explicit_pruned", s.explicit_pruned},
                 {"implicit_pruned", s.implicit_pruned}};
}

LayerSparsity sparsity_from(const ojson& j) {
    return LayerSparsity{j.at("name").get<std::string>(), j.at("total").get<std::size_t>(),
                         j.at("explicit_pruned").get<std::size_t>(), j.at("implicit_pruned").get<std::size_t>()};
}

ojson iteration_object(const IterationRecord& r) {
    ojson j;
    j["iteration"] = r.iteration;
    j["test_accuracy"] = r.test_accuracy;
    j["epoch_accuracy"] = r.epoch_accuracy;
    j["epoch_loss"] = r.epoch_loss;
    j["network"] = sparsity_object(r.sparsity.network);
    j["layers"] = ojson::array();
    for (const auto& l : r.sparsity.layers) {
        j["layers"].push_back(sparsity_object(l));
    }
    return j;
}

IterationRecord iteration_from(const ojson& j) {
    IterationRecord r;
    r.iteration = j.at("iteration").get<std::size_t>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.epoch_accuracy = j.at("epoch_accuracy").get<std::vector<double>>();
    r.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
    r.sparsity.network = sparsity_from(j.at("network"));
    for (const auto& l : j.at("layers")) {
        r.sparsity.layers.push_back(sparsity_from(l));
    }
    return r;
}

std::string epochs_csv(const IterationRecord& r) {
    std::string out = "iteration,epoch,train_loss,test_accuracy\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
        out += std::to_string(r.iteration) + "," + std::to_string(e + 1) + "," + fmt(r.epoch_loss[e]) + "," +
               (e < r.epoch_accuracy.size() ? fmt(r.epoch_accuracy[e]) : "") + "\n";
    }
    return out;
}

void write_record(const RunRecord& rec) {
    ojson j;
    j["run_id"] = rec.run_id;
    j["config_hash"] = rec.config_hash;
    j["seed"] = rec.seed;
    j["complete"] = rec.complete();
    j["iterations"] = ojson::array();
    for (const auto& it : rec.iterations) {
        j["iterations"].push_back(ojson{{"iteration", it.iteration},
                                        {"test_accuracy", it.test_accuracy},
                                        {"explicit_fraction", it.sparsity.network.explicit_fraction()},
                                        {"effective_fraction", it.sparsity.network.effective_fraction()}});
    }
    write_text(rec.dir / "record.json", j.dump(2) + "\n");
}

struct Datasets {
    Dataset train;
    Dataset test;
};

} // namespace

void ExperimentConfig::validate() const {
    if (epochs_per_iteration == 0 || batch_size == 0 || iterations == 0) {
        throw ConfigError("epochs_per_iteration, batch_size and iterations must be positive");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("lr must be positive");
    }
    if (seeds.empty()) {
        throw ConfigError("at least one seed is required");
    }
    if (checkpoint_capture_epoch > epochs_per_iteration) {
        throw ConfigError("checkpoint_capture_epoch exceeds epochs_per_iteration");
    }
    prune.validate();
}

fs::path ExperimentConfig::data_root() const { return data_dir.empty() ? default_data_root() : fs::path(data_dir); }

std::string ExperimentConfig::to_json() const { return config_object(*this).dump(2) + "\n"; }

void ExperimentConfig::merge_json(std::string_view text) { merge_object(*this, parse_json(text, "config")); }

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
    ExperimentConfig c;
    c.merge_json(text);
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    try {
        return from_json(read_text(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string config_hash(const ExperimentConfig& config, std::uint64_t seed) {
    ojson j = config_object(config);
    j.erase("output_dir");
    j.erase("data_dir");
    j["seeds"] = {seed};
    // the architecture is keyed by content, not by the path naming it
    j["architecture"] = ojson::parse(serialize_architecture(resolve_architecture(config.architecture)));
    j["engine"] = kEngineVersion;
    return hex64(fnv1a64(j.dump()));
}

std::string run_id(const ExperimentConfig& config, std::uint64_t seed) {
    return std::string(method_name(config.prune.method)) + "-" + std::string(handling_name(config.handling)) +
           "-s" + std::to_string(seed) + "-" + config_hash(config, seed).substr(0, 12);
}

fs::path iteration_dir(const fs::path& run_dir, std::size_t iteration) {
    return run_dir / ("iter_" + std::to_string(iteration));
}

std::string metrics_csv(const IterationRecord& rec) {
    const std::string it = std::to_string(rec.iteration);
    std::string out = "iteration,layer,metric,value\n";
    out += it + ",all,test_accuracy," + fmt(rec.test_accuracy) + "\n";
    auto add = [&](const LayerSparsity& s) {
        out += it + "," + s.name + ",explicit_fraction," + fmt(s.explicit_fraction()) + "\n";
        out += it + "," + s.name + ",effective_fraction," + fmt(s.effective_fraction()) + "\n";
    };
    for (const auto& l : rec.sparsity.layers) {
        add(l);
    }
    add(rec.sparsity.network);
    return out;
}

bool is_run_dir(const fs::path& dir) { return fs::exists(dir / "config.json") && fs::exists(dir / "run.json"); }

RunRecord load_run(const fs::path& dir) {
    if (!is_run_dir(dir)) {
        throw SelectionError(dir.string() + " is not a run directory");
    }
    const ojson meta = parse_json(read_text(dir / "run.json"), (dir / "run.json").string());
    RunRecord rec;
    rec.dir = dir;
    rec.run_id = meta.at("run_id").get<std::string>();
    rec.config_hash = meta.at("config_hash").get<std::string>();
    rec.seed = meta.at("seed").get<std::uint64_t>();
    rec.config = ExperimentConfig::load(dir / "config.json");
    for (std::size_t i = 1;; ++i) {
        const fs::path p = iteration_dir(dir, i) / "record.json";
        if (!fs::exists(p)) {
            break;
        }
        rec.iterations.push_back(iteration_from(parse_json(read_text(p), p.string())));
    }
    return rec;
}

std::string regenerate_metrics_csv(const fs::path& run_dir, std::size_t iteration, const Dataset& test) {
    const fs::path dir = iteration_dir(run_dir, iteration);
    const Checkpoint ck = load_checkpoint(dir / "final.ckpt");
    IterationRecord rec;
    rec.iteration = iteration;
    rec.test_accuracy = accuracy(ck.net, test);
    rec.sparsity = effective_sparsity(ck.masks, ck.net.arch);
    return metrics_csv(rec);
}

RunRecord run_experiment(const ExperimentConfig& config_in, std::uint64_t seed, const DataPair* data,
                         const LogFn& log) {
    config_in.validate();
    ExperimentConfig config = config_in;
    config.seeds = {seed};
    const ArchitectureSpec arch = resolve_architecture(config.architecture);

    RunRecord rec;
    rec.seed = seed;
    rec.config = config;
    rec.config_hash = config_hash(config, seed);
    rec.run_id = run_id(config, seed);
    rec.dir = fs::path(config.output_dir) / rec.run_id;
    auto say = [&](const std::string& msg) {
        if (log) {
            log(rec.run_id + ": " + msg);
        }
    };

    if (is_run_dir(rec.dir)) {
        RunRecord existing = load_run(rec.dir);
        if (existing.config_hash != rec.config_hash) {
            throw StateError(rec.dir.string() + " holds a run with a different configuration");
        }
        if (existing.complete()) {
            say("complete, nothing to do");
            return existing;
        }
        rec.iterations = std::move(existing.iterations);
    } else {
        fs::create_directories(rec.dir);
        write_text(rec.dir / "config.json", config.to_json());
        ojson meta{{"run_id", rec.run_id}, {"config_hash", rec.config_hash}, {"seed", seed},
                   {"engine", kEngineVersion}};
        write_text(rec.dir / "run.json", meta.dump(2) + "\n");
    }
    for (const auto& entry : fs::directory_iterator(rec.dir)) {
        if (entry.path().extension() == ".partial") {
            fs::remove_all(entry.path());
        }
    }

    std::unique_ptr<Datasets> owned;
    if (data == nullptr) {
        owned = std::make_unique<Datasets>(Datasets{load_dataset(config.dataset, config.data_root(), true),
                                                    load_dataset(config.dataset, config.data_root(), false)});
    }
    const Dataset& train_set = data ? *data->train : owned->train;
    const Dataset& test_set = data ? *data->test : owned->test;
    if (train_set.example_shape() != arch.input_shape) {
        throw ConfigError("dataset '" + config.dataset + "' examples " + shape_to_string(train_set.example_shape()) +
                          " do not fit architecture input " + shape_to_string(arch.input_shape));
    }

    RngStream init_rng(seed, StreamId::init);
    RngStream shuffle(seed, StreamId::shuffle);
    RngStream prune_rng(seed, StreamId::prune_random);
    Network net = init_network(arch, init_rng);
    MaskSet masks = MaskSet::all_ones(arch);
    std::optional<InitCheckpoint> init;
    const fs::path init_dir = rec.dir / "init.ckpt";
    if (fs::exists(init_dir / "manifest.json")) {
        init = InitCheckpoint::capture(load_checkpoint(init_dir, arch).net);
    } else if (config.checkpoint_capture_epoch == 0) {
        save_checkpoint(init_dir, Checkpoint{net, masks, {}});
        init = InitCheckpoint::capture(net);
    }

    std::size_t start = rec.iterations.size() + 1;
    if (start > 1) {
        const fs::path last = iteration_dir(rec.dir, start - 1);
        const Checkpoint ck = load_checkpoint(last / "final.ckpt", arch);
        shuffle.restore(ck.rng_state.at(stream_name(StreamId::shuffle)));
        prune_rng.restore(ck.rng_state.at(stream_name(StreamId::prune_random)));
        masks = load_masks(last / "masks");
        masks.check_against(arch);
        if (!init) {
            throw StateError(rec.dir.string() + " lacks init.ckpt");
        }
        net = apply_handling(config.handling, ck.net, *init, masks);
        say("resuming at iteration " + std::to_string(start));
    }

    for (std::size_t i = start; i <= config.iterations; ++i) {
        TrainOptions opt;
        opt.epochs = config.epochs_per_iteration;
        opt.lr = static_cast<float>(config.lr);
        opt.batch_size = config.batch_size;
        opt.on_epoch_end = [&](std::size_t epoch, const Network& current) {
            if (i == 1 && epoch == config.checkpoint_capture_epoch && !init) {
                save_checkpoint(init_dir, Checkpoint{current, masks, {}});
                init = InitCheckpoint::capture(current);
            }
        };
        const TrainResult tr = train(net, masks, train_set, &test_set, opt, shuffle);

        IterationRecord it;
        it.iteration = i;
        it.test_accuracy = tr.epoch_accuracy.back();
        it.sparsity = effective_sparsity(masks, arch);
        it.epoch_accuracy = tr.epoch_accuracy;
        it.epoch_loss = tr.epoch_loss;

        const MaskSet found = prune_step(net, masks, config.prune, prune_rng);

        const fs::path tmp = rec.dir / ("iter_" + std::to_string(i) + ".partial");
        fs::create_directories(tmp);
        save_checkpoint(tmp / "final.ckpt",
                        Checkpoint{net, masks,
                                   {{stream_name(StreamId::shuffle), shuffle.state()},
                                    {stream_name(StreamId::prune_random), prune_rng.state()}}});
        save_masks(tmp / "masks", found);
        write_text(tmp / "metrics.csv", metrics_csv(it));
        write_text(tmp / "epochs.csv", epochs_csv(it));
        write_text(tmp / "record.json", iteration_object(it).dump(2) + "\n");
        fs::rename(tmp, iteration_dir(rec.dir, i));

        net = apply_handling(config.handling, net, *init, found);
        masks = found;
        rec.iterations.push_back(std::move(it));
        write_record(rec);
        say("iteration " + std::to_string(i) + "/" + std::to_string(config.iterations) + " accuracy " +
            fmt(rec.iterations.back().test_accuracy).substr(0, 6) + " kept " +
            std::to_string(masks.total_kept()) + "/" + std::to_string(masks.total()));
    }
    write_record(rec);
    return rec;
}

std::vector<SweepCell> expand_grid(std::string_view grid_json) {
    const ojson grid = parse_json(grid_json, "sweep grid");
    if (!grid.is_object()) {
        throw ConfigError("sweep grid must be a JSON object");
    }
    for (const auto& [key, v] : grid.items()) {
        if (key != "base" && key != "axes" && key != "cells") {
            throw ConfigError("unknown sweep grid field '" + key + "'");
        }
    }
    const ojson base = grid.value("base", ojson::object());
    std::vector<ojson> overrides{ojson::object()};
    if (grid.contains("axes")) {
        for (const auto& [key, values] : grid.at("axes").items()) {
            if (!values.is_array() || values.empty()) {
                throw ConfigError("sweep axis '" + key + "' must be a non-empty array");
            }
            std::vector<ojson> next;
            for (const auto& o : overrides) {
                for (const auto& v : values) {
                    ojson e = o;
                    e[key] = v;
                    next.push_back(e);
                }
            }
            overrides = std::move(next);
        }
    } else if (grid.contains("cells")) {
        overrides.clear();
    }
    if (grid.contains("cells")) {
        for (const auto& c : grid.at("cells")) {
            overrides.push_back(c);
        }
    }
    std::vector<SweepCell> cells;
    for (const auto& o : overrides) {
        ExperimentConfig c;
        merge_object(c, base);
        merge_object(c, o);
        c.validate();
        for (std::uint64_t s : c.seeds) {
            cells.push_back({c, s});
        }
    }
    return cells;
}

SweepResult run_sweep(const std::vector<SweepCell>& cells, std::size_t jobs, const LogFn& log) {
    std::mutex mu;
    std::map<std::pair<std::string, std::string>, std::shared_ptr<const Datasets>> cache;
    auto datasets = [&](const ExperimentConfig& c) {
        const auto key = std::make_pair(c.dataset, c.data_root().string());
        std::lock_guard lock(mu);
        auto& slot = cache[key];
        if (!slot) {
            slot = std::make_shared<const Datasets>(
                Datasets{load_dataset(c.dataset, c.data_root(), true), load_dataset(c.dataset, c.data_root(), false)});
        }
        return slot;
    };
    LogFn safe_log;
    if (log) {
        safe_log = [&](const std::string& m) {
            std::lock_guard lock(mu);
            log(m);
        };
    }

    std::vector<std::optional<RunRecord>> done(cells.size());
    std::vector<std::optional<SweepFailure>> failed(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const auto& cell = cells[i];
            std::string id;
            try {
                id = run_id(cell.config, cell.seed);
                const auto d = datasets(cell.config);
                const DataPair pair{&d->train, &d->test};
                done[i] = run_experiment(cell.config, cell.seed, &pair, safe_log);
            } catch (const std::exception& e) {
                failed[i] = SweepFailure{id.empty() ? "cell " + std::to_string(i) : id, e.what()};
                if (safe_log) {
                    safe_log(failed[i]->run_id + ": failed: " + e.what());
                }
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(jobs, cells.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
    SweepResult result;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (done[i]) {
            result.records.push_back(std::move(*done[i]));
        }
        if (failed[i]) {
            result.failures.push_back(std::move(*failed[i]));
        }
    }
    return result;
}

} // namespace sparselab
