#include "olearn/bench.hpp"

#include "olearn/error.hpp"
#include "olearn/format.hpp"
#include "olearn/random.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <ostream>
#include <sstream>

namespace olearn {

namespace {

std::string value_text(const std::optional<double>& v) { return v ? format_double(*v) : "null"; }

nlohmann::json value_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::set<int> ids_below(std::size_t n) {
    std::set<int> out;
    for (std::size_t i = 0; i < n; ++i) out.insert(static_cast<int>(i));
    return out;
}

std::vector<int> argmax_rows(const Tensor2D& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void append_online_rows(std::ostream& out, const StepReport& s, const OnlineAccuracyTracker& t) {
    out << s.phase << ',' << s.step << ",,online_accuracy," << value_text(t.overall.accuracy()) << '\n';
    out << s.phase << ',' << s.step << ",,online_accuracy_new," << value_text(t.new_class.accuracy()) << '\n';
    out << s.phase << ',' << s.step << ",,online_accuracy_old," << value_text(t.old_class.accuracy()) << '\n';
    out << s.phase << ',' << s.step << ",,online_samples," << t.overall.total << '\n';
}

} // namespace

std::optional<double> AccuracyCounter::accuracy() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
}

void record_prediction(OnlineAccuracyTracker& tracker, int predicted, int actual, SampleRole role) {
    const bool hit = predicted == actual;
    tracker.overall.add(hit);
    (role == SampleRole::NewClass ? tracker.new_class : tracker.old_class).add(hit);
}

TestAccuracy evaluate_predictions(std::span<const int> predicted, const std::vector<LabeledSample>& test,
                                  const std::set<int>& old_class_ids) {
    if (predicted.size() != test.size()) throw DimensionError("evaluate: prediction count mismatch");
    AccuracyCounter all, fresh, old;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const bool hit = predicted[i] == test[i].label;
        all.add(hit);
        (old_class_ids.contains(test[i].label) ? old : fresh).add(hit);
    }
    return {all.accuracy(), fresh.accuracy(), old.accuracy(), test.size()};
}

TestAccuracy evaluate(const MLPModel& model, const std::vector<LabeledSample>& test,
                      const std::set<int>& old_class_ids) {
    for (const auto& s : test) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.n_out()) {
            throw DataError("evaluate: test label " + std::to_string(s.label) + " was never trained");
        }
    }
    if (test.empty()) return {};
    std::vector<std::vector<double>> rows;
    rows.reserve(test.size());
    for (const auto& s : test) rows.push_back(s.x);
    const auto predicted = argmax_rows(predict_logits(model, stack_rows(rows)));
    return evaluate_predictions(predicted, test, old_class_ids);
}

PretestResult pretest_block_size(const ProcessorFactory& factory, const std::vector<LabeledSample>& probe,
                                 const std::vector<std::size_t>& candidates, std::size_t probe_size) {
    if (probe.size() < probe_size) {
        throw DataError("pretest needs " + std::to_string(probe_size) + " samples, got " +
                        std::to_string(probe.size()));
    }
    if (candidates.empty()) throw ConfigError("pretest needs at least one candidate block size");
    for (std::size_t p : candidates) {
        if (!is_valid_block_size(p)) throw ConfigError("pretest candidate " + std::to_string(p) + " not allowed");
    }
    const std::vector<LabeledSample> head(probe.begin(), probe.begin() + static_cast<std::ptrdiff_t>(probe_size));

    PretestResult res;
    res.candidates = candidates;
    std::sort(res.candidates.begin(), res.candidates.end());
    res.candidates.erase(std::unique(res.candidates.begin(), res.candidates.end()), res.candidates.end());
    double best = -1.0;
    for (std::size_t p : res.candidates) {
        BlockProcessor proc = factory();
        AccuracyCounter acc;
        for (const auto& block : split_blocks(head, p)) {
            const auto pred = proc(block);
            if (pred.size() != block.size()) throw Error("pretest: processor returned wrong prediction count");
            for (std::size_t i = 0; i < block.size(); ++i) acc.add(pred[i] == block.samples[i].label);
        }
        const double score = acc.accuracy().value_or(0.0);
        res.accuracies.push_back(score);
        if (score > best) {  // ascending candidates: ties keep the smaller p
            best = score;
            res.chosen = p;
        }
    }
    return res;
}

ProcessorFactory scratch_processor_factory(const ModelConfig& model, const ScratchConfig& cfg) {
    return [model, cfg]() -> BlockProcessor {
        auto state = std::make_shared<ScratchState>(ScratchState::create(MLPModel::create(model), cfg));
        return [state](const DataBlock& block) { return scratch_process_block(*state, block).predictions; };
    };
}

EvalReport run_protocol(const Scenario& scenario, const ProtocolConfig& cfg) {
    if (scenario.phases.empty()) throw ConfigError("scenario has no phases");
    const auto& scratch_stream = scenario.phases.front().stream;
    if (scratch_stream.empty()) throw DataError("scratch phase stream is empty");

    ModelConfig mcfg = cfg.model;
    mcfg.input_dim = scratch_stream.front().x.size();
    mcfg.seed = derive_seed(cfg.seed, 1);
    if (mcfg.n_out == 0) mcfg.n_out = 1;

    ScratchConfig scfg = cfg.scratch;
    scfg.seed = derive_seed(cfg.seed, 2);

    EvalReport report;
    report.block_size = cfg.block_size;
    if (cfg.pretest) {
        report.pretest = pretest_block_size(scratch_processor_factory(mcfg, scfg), scratch_stream);
        report.block_size = report.pretest->chosen;
    }
    if (!is_valid_block_size(report.block_size)) {
        throw ConfigError("block size must be one of 1, 2, 4, 8, 16, 32, 64");
    }
    const std::size_t p = report.block_size;

    const std::size_t first_phase = cfg.resume ? cfg.resume->phase_index + 1 : 0;
    const std::size_t end_phase = cfg.phase_limit == 0
                                      ? scenario.phases.size()
                                      : std::min(scenario.phases.size(), first_phase + cfg.phase_limit);

    std::vector<LabeledSample> seen;
    std::size_t trained = 0;
    for (std::size_t k = 0; k < first_phase && k < scenario.phases.size(); ++k) {
        seen.insert(seen.end(), scenario.phases[k].stream.begin(), scenario.phases[k].stream.end());
        trained += scenario.phases[k].new_classes.size();
    }

    MLPModel model;
    std::optional<ExemplarSet> exemplars;
    NCMClassifier scratch_ncm;
    if (cfg.resume) {
        if (cfg.resume->model.n_out() != trained) {
            throw DataError("checkpoint head has " + std::to_string(cfg.resume->model.n_out()) +
                            " classes, scenario expects " + std::to_string(trained));
        }
        model = cfg.resume->model;
        exemplars = cfg.resume->exemplars;
        scratch_ncm = cfg.resume->ncm;
    }

    auto retrain_step = [&](std::size_t k) {
        RetrainConfig rcfg = cfg.retrain;
        rcfg.seed = derive_seed(cfg.seed, 100 + k);
        auto retrained = offline_retrain(std::move(model), seen, rcfg);
        StepReport step;
        step.phase = "retrain";
        step.step = k;
        step.classes_trained = trained;
        step.test = evaluate(retrained.model, scenario.test_for(trained),
                             ids_below(trained - scenario.phases[k].new_classes.size()));
        report.steps.push_back(std::move(step));
        model = std::move(retrained.model);
        exemplars = std::move(retrained.exemplars);
        report.checkpoint = PhaseCheckpoint{model, *exemplars, {}, scratch_ncm, k};
        report.checkpoint->loss.n = trained;
    };

    for (std::size_t k = first_phase; k < end_phase; ++k) {
        const Phase& phase = scenario.phases[k];
        if (k == 0) {
            trained = phase.new_classes.size();
            ScratchState scratch = ScratchState::create(MLPModel::create(mcfg), scfg);
            StepReport step;
            step.phase = "scratch";
            step.step = 0;
            step.classes_trained = trained;
            OnlineAccuracyTracker tracker;
            for (const auto& block : split_blocks(phase.stream, p)) {
                const auto t0 = std::chrono::steady_clock::now();
                auto outcome = scratch_process_block(scratch, block);
                step.block_seconds.push_back(seconds_since(t0));
                AccuracyCounter block_acc;
                for (std::size_t i = 0; i < block.size(); ++i) {
                    const auto& s = block.samples[i];
                    record_prediction(tracker, outcome.predictions[i], s.label, s.role);
                    block_acc.add(outcome.predictions[i] == s.label);
                    report.predictions.push_back(
                        {0, block.index, s.id, outcome.predictions[i], s.label, s.role, outcome.updates_before});
                }
                step.blocks.push_back(
                    {block.index, block.size(),
                     {{"block_accuracy", block_acc.accuracy()},
                      {"ncm_block_accuracy", outcome.ncm_accuracy},
                      {"baseline_block_accuracy", outcome.baseline_accuracy},
                      {"active_classifier", outcome.active_before == ActiveClassifier::Ncm ? 0.0 : 1.0},
                      {"loss", outcome.loss}}});
            }
            step.online = tracker;
            step.switched_at_block = scratch.switched_at;
            const auto test = scenario.test_for(trained);
            std::vector<int> predicted;
            predicted.reserve(test.size());
            for (const auto& s : test) predicted.push_back(scratch_predict(scratch, s.x));
            step.test = evaluate_predictions(predicted, test, {});
            report.steps.push_back(std::move(step));
            model = std::move(scratch.model);
            scratch_ncm = std::move(scratch.ncm);
        } else {
            if (!exemplars) retrain_step(k - 1);

            IncrementalConfig icfg = cfg.incremental;
            icfg.seed = derive_seed(cfg.seed, 200 + k);
            IncrementalState inc = begin_incremental_phase(model, std::move(*exemplars),
                                                           phase.new_classes.size(), icfg);
            exemplars.reset();
            const std::size_t n_old = trained;
            trained += phase.new_classes.size();

            StepReport step;
            step.phase = "incremental";
            step.step = k;
            step.classes_trained = trained;
            OnlineAccuracyTracker tracker;
            for (const auto& block : split_blocks(phase.stream, p)) {
                const auto t0 = std::chrono::steady_clock::now();
                auto outcome = incremental_process_block(inc, block);
                step.block_seconds.push_back(seconds_since(t0));
                AccuracyCounter block_acc;
                for (std::size_t i = 0; i < block.size(); ++i) {
                    const auto& s = block.samples[i];
                    record_prediction(tracker, outcome.predictions[i], s.label, s.role);
                    block_acc.add(outcome.predictions[i] == s.label);
                    report.predictions.push_back(
                        {k, block.index, s.id, outcome.predictions[i], s.label, s.role, outcome.updates_before});
                }
                step.blocks.push_back(
                    {block.index, block.size(),
                     {{"block_accuracy", block_acc.accuracy()},
                      {"step1_loss", outcome.step1_loss},
                      {"step2_loss", outcome.step2_loss},
                      {"exemplar_replacements", static_cast<double>(outcome.exemplar_replacements)}}});
            }
            step.online = tracker;
            step.test = evaluate(inc.model, scenario.test_for(trained), ids_below(n_old));
            report.steps.push_back(std::move(step));
            model = std::move(inc.model);
        }
        seen.insert(seen.end(), phase.stream.begin(), phase.stream.end());
    }
    if (cfg.retrain_after_last && end_phase > first_phase) retrain_step(end_phase - 1);
    return report;
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
    out << "phase,step,block_index,metric,value\n";
    out << "protocol,0,,schema_version," << kReportSchemaVersion << '\n';
    out << "protocol,0,,block_size," << report.block_size << '\n';
    if (report.pretest) {
        for (std::size_t i = 0; i < report.pretest->candidates.size(); ++i) {
            out << "pretest,0,,accuracy_p" << report.pretest->candidates[i] << ','
                << format_double(report.pretest->accuracies[i]) << '\n';
        }
    }
    for (const auto& s : report.steps) {
        for (const auto& b : s.blocks) {
            out << s.phase << ',' << s.step << ',' << b.index << ",block_size," << b.size << '\n';
            for (const auto& [name, v] : b.values) {
                out << s.phase << ',' << s.step << ',' << b.index << ',' << name << ',' << value_text(v) << '\n';
            }
        }
        out << s.phase << ',' << s.step << ",,classes_trained," << s.classes_trained << '\n';
        if (s.online) append_online_rows(out, s, *s.online);
        out << s.phase << ',' << s.step << ",,test_accuracy," << value_text(s.test.overall) << '\n';
        out << s.phase << ',' << s.step << ",,test_accuracy_new," << value_text(s.test.new_classes) << '\n';
        out << s.phase << ',' << s.step << ",,test_accuracy_old," << value_text(s.test.old_classes) << '\n';
        if (s.phase == "scratch") {
            out << s.phase << ',' << s.step << ",,switched_at_block,"
                << (s.switched_at_block ? std::to_string(*s.switched_at_block) : "null") << '\n';
        }
    }
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream os;
    write_report_csv(report, os);
    return os.str();
}

void write_timing_csv(const EvalReport& report, std::ostream& out) {
    out << "phase,step,block_index,seconds\n";
    for (const auto& s : report.steps) {
        for (std::size_t i = 0; i < s.block_seconds.size(); ++i) {
            out << s.phase << ',' << s.step << ',' << i << ',' << format_double(s.block_seconds[i]) << '\n';
        }
    }
}

void write_pretest_csv(const PretestResult& result, std::ostream& out) {
    out << "block_size,accuracy,chosen\n";
    for (std::size_t i = 0; i < result.candidates.size(); ++i) {
        out << result.candidates[i] << ',' << format_double(result.accuracies[i]) << ','
            << (result.candidates[i] == result.chosen ? 1 : 0) << '\n';
    }
}

nlohmann::json report_summary(const EvalReport& report) {
    nlohmann::json doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["block_size"] = report.block_size;
    if (report.pretest) {
        nlohmann::json pt;
        pt["chosen"] = report.pretest->chosen;
        for (std::size_t i = 0; i < report.pretest->candidates.size(); ++i) {
            pt["accuracy"][std::to_string(report.pretest->candidates[i])] = report.pretest->accuracies[i];
        }
        doc["pretest"] = pt;
    }
    auto& steps = doc["steps"] = nlohmann::json::array();
    for (const auto& s : report.steps) {
        nlohmann::json j;
        j["phase"] = s.phase;
        j["step"] = s.step;
        j["classes_trained"] = s.classes_trained;
        j["blocks"] = s.blocks.size();
        if (s.online) {
            j["online_accuracy"] = {{"overall", value_json(s.online->overall.accuracy())},
                                    {"new", value_json(s.online->new_class.accuracy())},
                                    {"old", value_json(s.online->old_class.accuracy())}};
        }
        j["test_accuracy"] = {{"overall", value_json(s.test.overall)},
                              {"new", value_json(s.test.new_classes)},
                              {"old", value_json(s.test.old_classes)}};
        if (s.phase == "scratch") {
            j["switched_at_block"] = s.switched_at_block ? nlohmann::json(*s.switched_at_block) : nlohmann::json(nullptr);
        }
        steps.push_back(std::move(j));
    }
    return doc;
}

std::map<std::size_t, OnlineAccuracyTracker> replay_predictions(const std::vector<PredictionRecord>& log) {
    std::map<std::size_t, OnlineAccuracyTracker> out;
    for (const auto& r : log) record_prediction(out[r.step], r.predicted, r.actual, r.role);
    return out;
}

} // namespace olearn
