#include "cli.hpp"

#include "olearn/error.hpp"
#include "olearn/format.hpp"
#include "olearn/random.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <map>

namespace olearn::cli {

namespace fs = std::filesystem;

namespace {

bool on_off(const std::string& v) { return v == "on"; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

Dataset load_data(const RunConfig& cfg) {
    if (cfg.format == "synthetic") return make_blobs(cfg.synthetic);
    const auto format = parse_format(cfg.format);
    std::optional<fs::path> labels;
    if (!cfg.labels.empty()) labels = cfg.labels;
    return load_dataset(cfg.dataset, format, labels);
}

std::optional<double> summary_value(const nlohmann::json& v) {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

// Mean and sample standard deviation per (step, metric) over several runs.
nlohmann::json aggregate_summaries(const std::vector<nlohmann::json>& runs, const std::vector<std::uint64_t>& seeds) {
    std::map<std::string, std::vector<double>> values;
    std::vector<std::string> order;
    for (const auto& run : runs) {
        for (const auto& step : run.at("steps")) {
            const std::string prefix = step.at("phase").get<std::string>() + "/" + std::to_string(step.at("step").get<std::size_t>());
            for (const char* group : {"online_accuracy", "test_accuracy"}) {
                if (!step.contains(group)) continue;
                for (const auto& [split, v] : step.at(group).items()) {
                    const std::string key = prefix + "/" + group + "/" + split;
                    if (!values.contains(key)) order.push_back(key);
                    auto& bucket = values[key];
                    if (auto x = summary_value(v)) bucket.push_back(*x);
                }
            }
        }
    }
    nlohmann::json doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["seeds"] = seeds;
    auto& metrics = doc["metrics"] = nlohmann::json::object();
    for (const auto& key : order) {
        const auto& xs = values[key];
        nlohmann::json m;
        m["n"] = xs.size();
        if (xs.empty()) {
            m["mean"] = nullptr;
            m["std"] = nullptr;
        } else {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            m["mean"] = mean;
            m["std"] = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
        }
        metrics[key] = m;
    }
    return doc;
}

struct SeedRun {
    std::uint64_t seed = 0;
    nlohmann::json summary;
};

SeedRun run_one_seed(const RunConfig& cfg, const Dataset& data, std::uint64_t seed, const fs::path& dir) {
    fs::create_directories(dir);
    ScenarioSpec spec = cfg.scenario;
    spec.seed = seed;
    const Scenario scenario = make_scenario(data, spec);
    ProtocolConfig pc = cfg.protocol(seed);

    if (cfg.command == "pretest") {
        ModelConfig mcfg = pc.model;
        mcfg.input_dim = data.dim();
        mcfg.seed = derive_seed(seed, 1);
        ScratchConfig scfg = pc.scratch;
        scfg.seed = derive_seed(seed, 2);
        auto result = pretest_block_size(scratch_processor_factory(mcfg, scfg), scenario.phases.front().stream);
        std::ofstream out(dir / "pretest.csv", std::ios::binary);
        write_pretest_csv(result, out);
        nlohmann::json summary;
        summary["schema_version"] = kReportSchemaVersion;
        summary["chosen"] = result.chosen;
        summary["steps"] = nlohmann::json::array();
        write_json(dir / "summary.json", summary);
        return {seed, summary};
    }

    if (cfg.command == "scratch") {
        pc.phase_limit = 1;
        pc.retrain_after_last = scenario.phases.size() > 1;
    } else if (cfg.command == "incremental" && !cfg.checkpoint.empty()) {
        pc.resume = load_phase_checkpoint(cfg.checkpoint);
    }

    EvalReport report = run_protocol(scenario, pc);
    {
        std::ofstream out(dir / "report.csv", std::ios::binary);
        write_report_csv(report, out);
        std::ofstream timing(dir / "timing.csv", std::ios::binary);
        write_timing_csv(report, timing);
    }
    if (report.pretest) {
        std::ofstream out(dir / "pretest.csv", std::ios::binary);
        write_pretest_csv(*report.pretest, out);
    }
    if (cfg.command == "scratch" && report.checkpoint) {
        save_phase_checkpoint(*report.checkpoint, dir / "checkpoint");
    }
    auto summary = report_summary(report);
    write_json(dir / "summary.json", summary);
    return {seed, summary};
}

// Runs every seed (concurrently) into <dir>/seed_<s> and writes aggregate.json.
nlohmann::json run_seeds(const RunConfig& cfg, const Dataset& data, const fs::path& dir) {
    std::vector<std::future<SeedRun>> jobs;
    for (std::size_t i = 0; i < cfg.seeds; ++i) {
        const std::uint64_t seed = cfg.seed + i;
        jobs.push_back(std::async(std::launch::async, [&cfg, &data, seed, dir] {
            return run_one_seed(cfg, data, seed, dir / ("seed_" + std::to_string(seed)));
        }));
    }
    std::vector<nlohmann::json> summaries;
    std::vector<std::uint64_t> seeds;
    for (auto& j : jobs) {
        auto r = j.get();
        summaries.push_back(std::move(r.summary));
        seeds.push_back(r.seed);
    }
    auto agg = aggregate_summaries(summaries, seeds);
    write_json(dir / "aggregate.json", agg);
    return agg;
}

int dispatch(RunConfig& cfg, const std::string& resolved_config) {
    cfg.validate();
    const Dataset data = load_data(cfg);
    const fs::path out = cfg.out;
    fs::create_directories(out);
    write_text(out / "resolved_config.toml", resolved_config);

    if (cfg.command == "generate") {
        write_delimited(data, out / "dataset.csv");
        std::cout << "wrote " << (out / "dataset.csv").string() << " (" << data.samples.size() << " samples)\n";
        return kExitOk;
    }

    if (cfg.command == "ablate") {
        std::ofstream table(out / "ablation.csv", std::ios::binary);
        table << "loss,update_exemplars,metric,mean,std,n\n";
        for (const char* loss : {"ce", "cd", "mcd"}) {
            for (bool update : {false, true}) {
                RunConfig variant = cfg;
                variant.command = "protocol";
                variant.loss = loss;
                variant.update_exemplars = update;
                const std::string name = std::string(loss) + (update ? "_update_on" : "_update_off");
                auto agg = run_seeds(variant, data, out / name);
                for (const auto& [key, m] : agg.at("metrics").items()) {
                    if (key.rfind("incremental/", 0) != 0) continue;
                    table << loss << ',' << (update ? "on" : "off") << ',' << key << ','
                          << (m.at("mean").is_null() ? "null" : format_double(m.at("mean").get<double>())) << ','
                          << (m.at("std").is_null() ? "null" : format_double(m.at("std").get<double>())) << ','
                          << m.at("n").get<std::size_t>() << '\n';
                }
            }
        }
        std::cout << "wrote " << (out / "ablation.csv").string() << '\n';
        return kExitOk;
    }

    auto agg = run_seeds(cfg, data, out);
    std::cout << agg.dump(2) << '\n';
    return kExitOk;
}

void add_options(CLI::App& app, RunConfig& cfg, std::string& update_flag, std::string& two_step_flag,
                 std::string& farthest_flag, std::string& shuffle_flag) {
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "Read options from a TOML/INI key = value file; flags override it");

    auto data = "Data";
    app.add_option("--dataset", cfg.dataset, "Dataset path (csv file or IDX image file)")->group(data);
    app.add_option("--format", cfg.format, "Dataset format")
        ->check(CLI::IsMember({"csv", "idx", "synthetic"}))
        ->group(data);
    app.add_option("--labels", cfg.labels, "IDX label file (default: derived from --dataset)")->group(data);
    app.add_option("--synthetic-classes", cfg.synthetic.classes)->check(CLI::PositiveNumber)->group(data);
    app.add_option("--synthetic-dim", cfg.synthetic.dim)->check(CLI::PositiveNumber)->group(data);
    app.add_option("--synthetic-per-class", cfg.synthetic.per_class)->check(CLI::PositiveNumber)->group(data);
    app.add_option("--synthetic-separation", cfg.synthetic.separation)->group(data);
    app.add_option("--synthetic-noise", cfg.synthetic.noise_sd)->check(CLI::NonNegativeNumber)->group(data);
    app.add_option("--synthetic-nuisance-dims", cfg.synthetic.nuisance_dims)->group(data);
    app.add_option("--synthetic-nuisance-sd", cfg.synthetic.nuisance_sd)->check(CLI::NonNegativeNumber)->group(data);
    app.add_option("--synthetic-seed", cfg.synthetic.seed)->group(data);

    auto scen = "Scenario";
    app.add_option("--splits", cfg.scenario.splits, "Classes introduced per phase")->delimiter(',')->group(scen);
    app.add_option("--new-fraction", cfg.scenario.new_fraction)->check(CLI::Range(0.0, 1.0))->group(scen);
    app.add_option("--old-fraction", cfg.scenario.old_fraction)->check(CLI::Range(0.0, 1.0))->group(scen);
    app.add_option("--test-fraction", cfg.scenario.test_fraction)->check(CLI::Range(0.0, 1.0))->group(scen);
    app.add_option("--shuffle-classes", shuffle_flag)->check(CLI::IsMember({"on", "off"}))->group(scen);
    app.add_option("--block-size", cfg.block_size, "Block size p in {1,2,4,...,64} or 'pretest'")->group(scen);
    app.add_option("--drift-magnitude", cfg.drift_magnitude, "Mean shift of old classes, in within-class sd")
        ->check(CLI::NonNegativeNumber)
        ->group(scen);
    app.add_option("--drift-onset", cfg.drift_onset, "Drift onset as a fraction of each incremental phase")
        ->check(CLI::Range(0.0, 1.0))
        ->group(scen);

    auto model = "Model";
    app.add_option("--hidden", cfg.hidden, "Hidden layer widths")->delimiter(',')->group(model);
    app.add_option("--init-range", cfg.init_range)->check(CLI::PositiveNumber)->group(model);
    app.add_option("--lr", cfg.sgd.learning_rate)->check(CLI::NonNegativeNumber)->group(model);
    app.add_option("--momentum", cfg.sgd.momentum)->check(CLI::Range(0.0, 0.999999))->group(model);
    app.add_option("--weight-decay", cfg.sgd.weight_decay)->check(CLI::NonNegativeNumber)->group(model);

    auto learn = "Learning";
    app.add_option("--loss", cfg.loss)->check(CLI::IsMember({"ce", "cd", "mcd"}))->group(learn);
    app.add_option("--beta", cfg.beta, "Accommodation ratio")->check(CLI::Range(0.0, 1.0))->group(learn);
    app.add_option("--temperature", cfg.temperature, "Distillation temperature (>= 1)")->group(learn);
    app.add_option("--alpha", cfg.alpha, "'auto' for n/(n+m) or a fixed weight in [0,1]")->group(learn);
    app.add_option("--exemplars-per-class", cfg.exemplars_per_class)->check(CLI::PositiveNumber)->group(learn);
    app.add_option("--update-exemplars", update_flag)->check(CLI::IsMember({"on", "off"}))->group(learn);
    app.add_option("--two-step", two_step_flag)->check(CLI::IsMember({"on", "off"}))->group(learn);
    app.add_option("--replace-farthest", farthest_flag)->check(CLI::IsMember({"on", "off"}))->group(learn);
    app.add_option("--herding", cfg.herding)->check(CLI::IsMember({"sort", "iterative"}))->group(learn);
    app.add_option("--switch-threshold", cfg.switch_threshold)->check(CLI::PositiveNumber)->group(learn);
    app.add_option("--scratch-mode", cfg.scratch_mode)
        ->check(CLI::IsMember({"combined", "ncm", "baseline"}))
        ->group(learn);
    app.add_option("--ncm-features", cfg.ncm_features)->check(CLI::IsMember({"current", "frozen"}))->group(learn);
    app.add_option("--retrain-epochs", cfg.retrain_epochs)->check(CLI::PositiveNumber)->group(learn);
    app.add_option("--retrain-batch", cfg.retrain_batch)->check(CLI::PositiveNumber)->group(learn);

    auto run = "Run";
    app.add_option("--seed", cfg.seed, "Base seed")->group(run);
    app.add_option("--seeds", cfg.seeds, "Number of seeds (base, base+1, ...)")->check(CLI::PositiveNumber)->group(run);
    app.add_option("--out", cfg.out, "Output directory")->envname("OLEARN_OUT")->group(run);
    app.add_option("--checkpoint", cfg.checkpoint, "Phase checkpoint directory to resume from (incremental)")
        ->group(run);
}

} // namespace

void RunConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("--beta: must be in [0, 1], got " + format_double(beta));
    if (!(temperature >= 1.0) || !std::isfinite(temperature)) {
        throw ConfigError("--temperature: must be >= 1, got " + format_double(temperature));
    }
    if (alpha != "auto") {
        double a = 0.0;
        try {
            std::size_t used = 0;
            a = std::stod(alpha, &used);
            if (used != alpha.size()) throw std::invalid_argument(alpha);
        } catch (const std::exception&) {
            throw ConfigError("--alpha: expected 'auto' or a number, got '" + alpha + "'");
        }
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("--alpha: must be in [0, 1], got " + alpha);
    }
    if (block_size != "pretest") {
        std::size_t p = 0;
        try {
            p = std::stoul(block_size);
        } catch (const std::exception&) {
            throw ConfigError("--block-size: expected a number or 'pretest', got '" + block_size + "'");
        }
        if (!is_valid_block_size(p)) throw ConfigError("--block-size: must be one of 1,2,4,8,16,32,64");
    }
    if (hidden.empty()) throw ConfigError("--hidden: need at least one hidden layer");
    for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("--hidden: widths must be >= 1");
    }
    if (format != "synthetic" && dataset.empty()) throw ConfigError("--dataset: required for format " + format);
    if (command == "incremental" && scenario.splits.size() < 2) {
        throw ConfigError("--splits: incremental runs need at least two phases");
    }
    try {
        ScenarioSpec s = scenario;
        if (block_size != "pretest") s.block_size = std::stoul(block_size);
        s.validate();
        sgd.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("scenario/model: ") + e.what());
    }
}

ProtocolConfig RunConfig::protocol(std::uint64_t run_seed) const {
    ProtocolConfig pc;
    pc.seed = run_seed;
    pc.model.hidden = hidden;
    pc.model.init_range = init_range;
    pc.pretest = block_size == "pretest";
    pc.block_size = pc.pretest ? 8 : std::stoul(block_size);

    pc.scratch.sgd = sgd;
    pc.scratch.switch_threshold = switch_threshold;
    pc.scratch.mode = scratch_mode == "ncm"        ? ScratchMode::NcmOnly
                      : scratch_mode == "baseline" ? ScratchMode::BaselineOnly
                                                   : ScratchMode::Combined;
    pc.scratch.feature_source = ncm_features == "frozen" ? NcmFeatureSource::FrozenInitial : NcmFeatureSource::Current;
    pc.scratch.init_range = init_range;

    pc.retrain.epochs = retrain_epochs;
    pc.retrain.batch_size = retrain_batch;
    pc.retrain.sgd = sgd;
    pc.retrain.exemplars_per_class = exemplars_per_class;
    pc.retrain.exemplar_options.replace_farthest = replace_farthest;
    pc.retrain.exemplar_options.herding = herding == "iterative" ? HerdingMode::IterativeMeanMatching
                                                                  : HerdingMode::SortByDistance;
    pc.retrain.init_range = init_range;

    pc.incremental.sgd = sgd;
    pc.incremental.loss = parse_loss_variant(loss);
    pc.incremental.temperature = temperature;
    pc.incremental.beta = beta;
    if (alpha != "auto") pc.incremental.alpha = std::stod(alpha);
    pc.incremental.two_step = two_step;
    pc.incremental.update_exemplars = update_exemplars;
    pc.incremental.init_range = init_range;
    return pc;
}

int run(int argc, const char* const* argv) {
    RunConfig cfg;
    std::string update_flag = "on", two_step_flag = "on", farthest_flag = "off", shuffle_flag = "on";

    CLI::App app{"Online incremental learning: scratch learning, two-step incremental learning and benchmarks"};
    app.require_subcommand(1);
    app.fallthrough();
    add_options(app, cfg, update_flag, two_step_flag, farthest_flag, shuffle_flag);

    struct Sub {
        const char* name;
        const char* help;
    };
    for (const Sub& s : {Sub{"generate", "Write the synthetic dataset as CSV"},
                         Sub{"pretest", "Choose the block size on the first 128 samples"},
                         Sub{"scratch", "Learn the first class split from scratch, then retrain and checkpoint"},
                         Sub{"incremental", "Learn later splits from a trained model (from --checkpoint if given)"},
                         Sub{"protocol", "Full protocol: scratch, offline retraining, incremental phases"},
                         Sub{"ablate", "Loss variants (ce, cd, mcd) x exemplar update on/off"}}) {
        app.add_subcommand(s.name, s.help)->callback([&cfg, name = s.name] { cfg.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    cfg.update_exemplars = on_off(update_flag);
    cfg.two_step = on_off(two_step_flag);
    cfg.replace_farthest = on_off(farthest_flag);
    cfg.scenario.shuffle_classes = on_off(shuffle_flag);
    if (cfg.block_size != "pretest") {
        try {
            cfg.scenario.block_size = std::stoul(cfg.block_size);
        } catch (const std::exception&) {
            // reported by validate()
        }
    }
    if (cfg.drift_magnitude > 0.0) cfg.scenario.drift = DriftSettings{cfg.drift_magnitude, cfg.drift_onset};

    try {
        return dispatch(cfg, app.config_to_str(true, false));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"olearn"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace olearn::cli
