#pragma once

#include "olearn/learner.hpp"
#include "olearn/nn.hpp"
#include "olearn/stream.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace olearn {

struct AccuracyCounter {
    std::size_t correct = 0;
    std::size_t total = 0;

    /// nullopt when nothing was recorded.
    std::optional<double> accuracy() const;
    void add(bool hit) {
        correct += hit;
        ++total;
    }
};

/// Prequential accuracy, overall and split by sample role.
struct OnlineAccuracyTracker {
    AccuracyCounter overall;
    AccuracyCounter new_class;
    AccuracyCounter old_class;
};

void record_prediction(OnlineAccuracyTracker& tracker, int predicted, int actual, SampleRole role);

struct TestAccuracy {
    std::optional<double> overall;
    std::optional<double> new_classes;
    std::optional<double> old_classes;
    std::size_t samples = 0;
};

/// Argmax accuracy on `test`, split by membership of the label in
/// `old_class_ids`. Throws DataError for labels outside the model's head.
TestAccuracy evaluate(const MLPModel& model, const std::vector<LabeledSample>& test,
                      const std::set<int>& old_class_ids);

TestAccuracy evaluate_predictions(std::span<const int> predicted, const std::vector<LabeledSample>& test,
                                  const std::set<int>& old_class_ids);

/// Consumes one block and returns its predictions made before the update.
using BlockProcessor = std::function<std::vector<int>(const DataBlock&)>;
using ProcessorFactory = std::function<BlockProcessor()>;

struct PretestResult {
    std::vector<std::size_t> candidates;
    std::vector<double> accuracies;
    std::size_t chosen = 0;
};

inline const std::vector<std::size_t> kDefaultBlockSizes{1, 2, 4, 8, 16, 32, 64};
inline constexpr std::size_t kPretestProbeSize = 128;

/// For each candidate p, a fresh processor runs once over the first
/// `probe_size` samples in blocks of p; the prequential accuracy is its
/// score. Highest score wins, ties go to the smaller p.
PretestResult pretest_block_size(const ProcessorFactory& factory, const std::vector<LabeledSample>& probe,
                                 const std::vector<std::size_t>& candidates = kDefaultBlockSizes,
                                 std::size_t probe_size = kPretestProbeSize);

struct ProtocolConfig {
    ModelConfig model;  // input_dim is taken from the data
    ScratchConfig scratch;
    RetrainConfig retrain;
    IncrementalConfig incremental;
    std::size_t block_size = 8;
    bool pretest = false;
    std::uint64_t seed = 0;

    std::size_t phase_limit = 0;      // run at most this many phases; 0 runs all
    bool retrain_after_last = false;  // also retrain after the final phase run
    // Start after the checkpoint's phase with its model and exemplars.
    std::optional<PhaseCheckpoint> resume;
};

struct PredictionRecord {
    std::size_t step = 0;
    std::size_t block_index = 0;
    std::size_t sample_id = 0;
    int predicted = 0;
    int actual = 0;
    SampleRole role = SampleRole::NewClass;
    std::size_t learner_updates = 0;  // blocks the learner had consumed when predicting
};

struct BlockMetrics {
    std::size_t index = 0;
    std::size_t size = 0;
    std::vector<std::pair<std::string, std::optional<double>>> values;
};

struct StepReport {
    std::string phase;  // scratch | retrain | incremental
    std::size_t step = 0;
    std::size_t classes_trained = 0;
    std::optional<OnlineAccuracyTracker> online;
    TestAccuracy test;
    std::vector<BlockMetrics> blocks;
    std::vector<double> block_seconds;
    std::optional<std::size_t> switched_at_block;
};

struct EvalReport {
    std::size_t block_size = 0;
    std::optional<PretestResult> pretest;
    std::vector<StepReport> steps;
    std::vector<PredictionRecord> predictions;
    // Model and exemplars produced by the most recent offline retraining.
    std::optional<PhaseCheckpoint> checkpoint;
};

/// Scratch phase, then for every later phase: offline retraining on all data
/// seen so far followed by two-step incremental learning. The held-out set is
/// evaluated after every step; every streamed sample is predicted before the
/// learner consumes its block.
EvalReport run_protocol(const Scenario& scenario, const ProtocolConfig& cfg);

/// Fresh scratch learners for pretesting.
ProcessorFactory scratch_processor_factory(const ModelConfig& model, const ScratchConfig& cfg);

// Report CSV (schema version 1): phase,step,block_index,metric,value with one
// row per metric. Undefined values are written as "null"; phase-level rows
// leave block_index empty. Wall-clock timings are kept out of this file.
inline constexpr int kReportSchemaVersion = 1;
void write_report_csv(const EvalReport& report, std::ostream& out);
std::string report_csv(const EvalReport& report);
void write_timing_csv(const EvalReport& report, std::ostream& out);
void write_pretest_csv(const PretestResult& result, std::ostream& out);
nlohmann::json report_summary(const EvalReport& report);

/// Replays a prediction log into fresh trackers, one per step.
std::map<std::size_t, OnlineAccuracyTracker> replay_predictions(const std::vector<PredictionRecord>& log);

} // namespace olearn
