#pragma once

#include "olearn/exemplar.hpp"
#include "olearn/losses.hpp"
#include "olearn/ncm.hpp"
#include "olearn/nn.hpp"
#include "olearn/stream.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace olearn {

// ---------------------------------------------------------------------------
// Learning from scratch: a nearest-class-mean classifier answers while data is
// scarce, the network (baseline) trains alongside it from the first block, and
// the learner hands over to the baseline once it wins `switch_threshold`
// consecutive blocks.

enum class ActiveClassifier { Ncm, Baseline };

enum class ScratchMode {
    Combined,      // NCM first, switch to baseline
    NcmOnly,       // never switch
    BaselineOnly,  // baseline from the start
};

enum class NcmFeatureSource {
    Current,        // features from the network as it trains
    FrozenInitial,  // features from the network as it was at construction
};

struct ScratchConfig {
    SGDConfig sgd;
    std::size_t switch_threshold = 5;
    ScratchMode mode = ScratchMode::Combined;
    NcmFeatureSource feature_source = NcmFeatureSource::Current;
    std::uint64_t seed = 0;  // head widening
    double init_range = 0.05;
};

/// Consecutive-win counter behind the NCM -> baseline hand-over. A tie
/// resets the streak; once flipped it stays flipped.
struct SwitchRule {
    std::size_t threshold = 5;
    std::size_t streak = 0;
    bool switched = false;

    /// Feeds one block's accuracies. Returns true on the block that flips.
    bool observe(double baseline_accuracy, double ncm_accuracy);
};

struct ScratchState {
    MLPModel model;
    SGDState sgd;
    NCMClassifier ncm;
    ActiveClassifier active = ActiveClassifier::Ncm;
    SwitchRule rule;
    std::optional<MLPModel> frozen_extractor;
    ScratchConfig config;
    std::size_t updates = 0;  // blocks consumed
    std::optional<std::size_t> switched_at;  // block index of the switch

    static ScratchState create(MLPModel model, const ScratchConfig& cfg);
};

inline constexpr int kNoPrediction = -1;

struct ScratchBlockOutcome {
    std::vector<int> predictions;  // active classifier, before any update
    std::vector<int> ncm_predictions;
    std::vector<int> baseline_predictions;
    double ncm_accuracy = 0.0;
    double baseline_accuracy = 0.0;
    ActiveClassifier active_before = ActiveClassifier::Ncm;
    bool switched = false;
    double loss = 0.0;
    std::size_t updates_before = 0;
};

/// Predict with both classifiers, absorb features into the class means, take
/// one cross-entropy SGD step, then compare block accuracies. The baseline
/// must be strictly better to extend the streak; the switch is permanent.
ScratchBlockOutcome scratch_process_block(ScratchState& state, const DataBlock& block);

/// Prediction of the currently active classifier for one input.
int scratch_predict(const ScratchState& state, std::span<const double> x);

// ---------------------------------------------------------------------------
// Learning from a trained model: two-step learning against a frozen snapshot.

enum class LossVariant { CrossEntropy, CrossDistillation, ModifiedCrossDistillation };

std::string_view loss_variant_name(LossVariant v);
LossVariant parse_loss_variant(std::string_view name);  // ce | cd | mcd

struct IncrementalConfig {
    SGDConfig sgd;
    LossVariant loss = LossVariant::ModifiedCrossDistillation;
    double temperature = 2.0;
    double beta = 0.5;
    std::optional<double> alpha;  // nullopt: n / (n + m)
    bool two_step = true;          // balanced exemplar step after each block
    bool update_exemplars = true;  // drift-aware exemplar maintenance
    std::uint64_t seed = 0;
    double init_range = 0.05;
};

struct IncrementalState {
    MLPModel model;         // n + m outputs
    MLPModel old_snapshot;  // n outputs, frozen for the phase
    ExemplarSet exemplars;
    LossConfig loss;
    SGDState sgd;
    IncrementalConfig config;
    std::size_t updates = 0;
};

/// Snapshot `trained`, widen its head by `m_new` and set up the loss.
IncrementalState begin_incremental_phase(const MLPModel& trained, ExemplarSet exemplars,
                                         std::size_t m_new, const IncrementalConfig& cfg);

struct IncrementalBlockOutcome {
    std::vector<int> predictions;  // before any update
    std::optional<double> step1_loss;
    std::optional<double> step2_loss;
    std::size_t exemplar_replacements = 0;
    std::size_t step2_batch_block = 0;
    std::size_t step2_batch_exemplars = 0;
    std::size_t updates_before = 0;
};

/// 1. predict the block with the current model;
/// 2. old-class observations update class means and exemplars;
/// 3. step 1: one SGD step of the configured loss on the block's new-class
///    samples, distilling from the snapshot (skipped if there are none);
/// 4. step 2: one cross-entropy SGD step on the block plus as many exemplars.
/// Without two_step, a single step of the configured loss on the whole block.
IncrementalBlockOutcome incremental_process_block(IncrementalState& state, const DataBlock& block);

/// The loss of step 1 for the given new-class samples under `state`.
LossResult step1_loss(const IncrementalState& state, const Tensor2D& inputs, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Offline retraining on everything seen so far.

struct RetrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    SGDConfig sgd;
    std::uint64_t seed = 0;
    std::size_t exemplars_per_class = 10;
    ExemplarOptions exemplar_options;
    double init_range = 0.05;

    void validate() const;
};

struct RetrainResult {
    MLPModel model;
    ExemplarSet exemplars;
    double last_epoch_loss = 0.0;
};

/// Shuffled mini-batch cross-entropy training, then exemplar sets rebuilt from
/// fresh features with class means reset to the batch means. The head is
/// widened if the data carries labels beyond it. Throws DataError if a class
/// in the head has no samples.
RetrainResult offline_retrain(MLPModel model, const std::vector<LabeledSample>& data,
                              const RetrainConfig& cfg);

// ---------------------------------------------------------------------------
// Phase checkpoint: model.bin + exemplars.json + phase.json in a directory.

struct PhaseCheckpoint {
    MLPModel model;
    ExemplarSet exemplars;
    LossConfig loss;
    NCMClassifier ncm;
    std::size_t phase_index = 0;
};

void save_phase_checkpoint(const PhaseCheckpoint& ckpt, const std::filesystem::path& dir);
PhaseCheckpoint load_phase_checkpoint(const std::filesystem::path& dir);

} // namespace olearn
