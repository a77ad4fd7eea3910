#include "olearn/learner.hpp"

#include "olearn/error.hpp"
#include "olearn/random.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace olearn {

namespace {

std::vector<int> argmax_rows(const Tensor2D& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double accuracy_of(const std::vector<int>& predicted, const std::vector<int>& actual) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) hits += predicted[i] == actual[i];
    return actual.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(actual.size());
}

void widen_for_labels(MLPModel& model, SGDState& sgd, std::span<const int> labels,
                      std::uint64_t seed, double init_range) {
    int top = -1;
    for (int y : labels) top = std::max(top, y);
    const auto needed = static_cast<std::size_t>(top + 1);
    if (needed <= model.n_out()) return;
    model = expand_head(model, needed - model.n_out(), derive_seed(seed, model.n_out()), init_range);
    expand_velocity(sgd, model);
}

void sgd_on_loss(MLPModel& model, SGDState& sgd, const SGDConfig& cfg, const ForwardResult& fwd,
                 const LossResult& loss) {
    GradientSet g = backward(model, fwd.cache, loss.dlogits);
    sgd_step(model, g, sgd, cfg);
}

void check_labels_known(std::span<const int> labels, std::size_t n_out) {
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_out) {
            throw DataError("label " + std::to_string(y) + " is not a known class");
        }
    }
}

} // namespace

// --- scratch ---------------------------------------------------------------

bool SwitchRule::observe(double baseline_accuracy, double ncm_accuracy) {
    if (switched) return false;
    streak = baseline_accuracy > ncm_accuracy ? streak + 1 : 0;
    if (streak < threshold) return false;
    switched = true;
    return true;
}

ScratchState ScratchState::create(MLPModel model, const ScratchConfig& cfg) {
    cfg.sgd.validate();
    if (cfg.switch_threshold == 0) throw ConfigError("switch_threshold must be >= 1");
    model.validate();
    ScratchState st;
    st.config = cfg;
    st.sgd = SGDState::zeros_like(model);
    st.rule.threshold = cfg.switch_threshold;
    st.active = cfg.mode == ScratchMode::BaselineOnly ? ActiveClassifier::Baseline : ActiveClassifier::Ncm;
    if (cfg.feature_source == NcmFeatureSource::FrozenInitial) st.frozen_extractor = model;
    st.model = std::move(model);
    return st;
}

int scratch_predict(const ScratchState& state, std::span<const double> x) {
    Tensor2D row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    if (state.active == ActiveClassifier::Baseline) return argmax_rows(predict_logits(state.model, row))[0];
    const MLPModel& extractor = state.frozen_extractor ? *state.frozen_extractor : state.model;
    Tensor2D f = extract_features(extractor, row);
    return state.ncm.try_classify(f.row(0)).value_or(kNoPrediction);
}

ScratchBlockOutcome scratch_process_block(ScratchState& state, const DataBlock& block) {
    if (block.size() == 0) throw DataError("scratch_process_block: empty block");
    const Tensor2D inputs = block.inputs();
    const std::vector<int> labels = block.labels();
    for (int y : labels) {
        if (y < 0) throw DataError("negative label in block");
    }

    ScratchBlockOutcome out;
    out.updates_before = state.updates;
    out.active_before = state.active;

    // 1. predictions before the block is consumed
    ForwardResult fwd = forward(state.model, inputs);
    out.baseline_predictions = argmax_rows(fwd.logits);
    const Tensor2D ncm_features = state.frozen_extractor ? extract_features(*state.frozen_extractor, inputs)
                                                         : fwd.features;
    out.ncm_predictions.resize(block.size());
    for (std::size_t i = 0; i < block.size(); ++i) {
        out.ncm_predictions[i] = state.ncm.try_classify(ncm_features.row(i)).value_or(kNoPrediction);
    }
    out.predictions = state.active == ActiveClassifier::Ncm ? out.ncm_predictions : out.baseline_predictions;

    // 2. class means
    for (std::size_t i = 0; i < block.size(); ++i) state.ncm.observe(labels[i], ncm_features.row(i));

    // 3. one cross-entropy step; new classes widen the head first
    if (*std::max_element(labels.begin(), labels.end()) >= static_cast<int>(state.model.n_out())) {
        widen_for_labels(state.model, state.sgd, labels, state.config.seed, state.config.init_range);
        fwd = forward(state.model, inputs);
    }
    LossResult loss = cross_entropy(fwd.logits, labels);
    sgd_on_loss(state.model, state.sgd, state.config.sgd, fwd, loss);
    out.loss = loss.value;
    ++state.updates;

    // 4. switch rule
    out.ncm_accuracy = accuracy_of(out.ncm_predictions, labels);
    out.baseline_accuracy = accuracy_of(out.baseline_predictions, labels);
    if (state.config.mode == ScratchMode::Combined && state.active == ActiveClassifier::Ncm) {
        if (state.rule.observe(out.baseline_accuracy, out.ncm_accuracy)) {
            state.active = ActiveClassifier::Baseline;
            state.switched_at = block.index;
            out.switched = true;
        }
    }
    return out;
}

// --- incremental -----------------------------------------------------------

std::string_view loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::CrossEntropy: return "ce";
        case LossVariant::CrossDistillation: return "cd";
        case LossVariant::ModifiedCrossDistillation: return "mcd";
    }
    return "?";
}

LossVariant parse_loss_variant(std::string_view name) {
    if (name == "ce") return LossVariant::CrossEntropy;
    if (name == "cd") return LossVariant::CrossDistillation;
    if (name == "mcd") return LossVariant::ModifiedCrossDistillation;
    throw ConfigError("unknown loss variant '" + std::string(name) + "' (expected ce, cd or mcd)");
}

IncrementalState begin_incremental_phase(const MLPModel& trained, ExemplarSet exemplars,
                                         std::size_t m_new, const IncrementalConfig& cfg) {
    cfg.sgd.validate();
    if (m_new == 0) throw ConfigError("an incremental phase needs at least one new class");
    IncrementalState st;
    st.config = cfg;
    st.old_snapshot = trained;
    st.model = expand_head(trained, m_new, derive_seed(cfg.seed, trained.n_out()), cfg.init_range);
    st.sgd = SGDState::zeros_like(st.model);
    st.loss = LossConfig::defaults_for(trained.n_out(), m_new);
    st.loss.temperature = cfg.temperature;
    st.loss.beta = cfg.beta;
    if (cfg.alpha) st.loss.alpha = *cfg.alpha;
    st.loss.validate();
    refresh_features(exemplars, st.old_snapshot);
    st.exemplars = std::move(exemplars);
    return st;
}

LossResult step1_loss(const IncrementalState& state, const Tensor2D& inputs, std::span<const int> labels) {
    const Tensor2D logits = predict_logits(state.model, inputs);
    if (state.config.loss == LossVariant::CrossEntropy) return cross_entropy(logits, labels);
    const Tensor2D targets = predict_logits(state.old_snapshot, inputs);
    if (state.config.loss == LossVariant::CrossDistillation) {
        return cross_distillation(targets, logits, labels, state.loss);
    }
    return modified_cross_distillation(targets, logits, labels, state.loss);
}

IncrementalBlockOutcome incremental_process_block(IncrementalState& state, const DataBlock& block) {
    if (block.size() == 0) throw DataError("incremental_process_block: empty block");
    if (state.config.two_step && state.exemplars.empty()) {
        throw DataError("incremental_process_block: exemplar set is empty");
    }
    const Tensor2D inputs = block.inputs();
    const std::vector<int> labels = block.labels();
    check_labels_known(labels, state.model.n_out());

    IncrementalBlockOutcome out;
    out.updates_before = state.updates;

    // 1. predictions
    out.predictions = argmax_rows(predict_logits(state.model, inputs));

    // 2. old-class observations feed the class means and exemplar stores
    std::vector<std::size_t> fresh_rows;
    std::vector<std::size_t> old_rows;
    for (std::size_t i = 0; i < block.size(); ++i) {
        (block.samples[i].role == SampleRole::NewClass ? fresh_rows : old_rows).push_back(i);
    }
    if (state.config.update_exemplars && !old_rows.empty()) {
        const Tensor2D old_inputs = gather_rows(inputs, old_rows);
        const Tensor2D feats = extract_features(state.old_snapshot, old_inputs);
        for (std::size_t k = 0; k < old_rows.size(); ++k) {
            const auto& s = block.samples[old_rows[k]];
            if (!state.exemplars.classes.contains(s.label)) continue;
            auto res = update_exemplar_set(state.exemplars, s.x, feats.row(k), s.label, s.id);
            out.exemplar_replacements += res.replaced;
        }
    }

    if (!state.config.two_step) {
        // single step of the configured loss on the whole block
        ForwardResult fwd = forward(state.model, inputs);
        LossResult loss = state.config.loss == LossVariant::CrossEntropy
                              ? cross_entropy(fwd.logits, labels)
                              : step1_loss(state, inputs, labels);
        sgd_on_loss(state.model, state.sgd, state.config.sgd, fwd, loss);
        out.step1_loss = loss.value;
        ++state.updates;
        return out;
    }

    // 3. step 1 on new-class samples
    if (!fresh_rows.empty()) {
        const Tensor2D x = gather_rows(inputs, fresh_rows);
        std::vector<int> y;
        for (std::size_t i : fresh_rows) y.push_back(labels[i]);
        ForwardResult fwd = forward(state.model, x);
        LossResult loss = step1_loss(state, x, y);
        sgd_on_loss(state.model, state.sgd, state.config.sgd, fwd, loss);
        out.step1_loss = loss.value;
    }

    // 4. step 2: balanced batch of block samples and exemplars
    auto drawn = sample_pairs(state.exemplars, block.size(), derive_seed(state.config.seed, state.updates));
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    rows.reserve(2 * block.size());
    for (const auto& s : block.samples) {
        rows.push_back(s.x);
        y.push_back(s.label);
    }
    for (const auto& d : drawn) {
        rows.push_back(d.exemplar.payload);
        y.push_back(d.class_id);
    }
    out.step2_batch_block = block.size();
    out.step2_batch_exemplars = drawn.size();
    const Tensor2D x2 = stack_rows(rows);
    ForwardResult fwd2 = forward(state.model, x2);
    LossResult loss2 = cross_entropy(fwd2.logits, y);
    sgd_on_loss(state.model, state.sgd, state.config.sgd, fwd2, loss2);
    out.step2_loss = loss2.value;
    ++state.updates;
    return out;
}

// --- offline retraining ----------------------------------------------------

void RetrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("retrain epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("retrain batch_size must be >= 1");
    if (exemplars_per_class == 0) throw ConfigError("exemplars_per_class must be >= 1");
    sgd.validate();
}

RetrainResult offline_retrain(MLPModel model, const std::vector<LabeledSample>& data,
                              const RetrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("offline_retrain: no data");
    std::vector<int> all_labels;
    for (const auto& s : data) all_labels.push_back(s.label);
    SGDState sgd = SGDState::zeros_like(model);
    widen_for_labels(model, sgd, all_labels, cfg.seed, cfg.init_range);

    std::vector<std::size_t> per_class(model.n_out(), 0);
    for (int y : all_labels) {
        if (y < 0) throw DataError("offline_retrain: negative label");
        ++per_class[static_cast<std::size_t>(y)];
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (per_class[c] == 0) throw DataError("offline_retrain: class " + std::to_string(c) + " has no samples");
    }

    RetrainResult res;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x7e7a17));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::vector<double>> rows;
            std::vector<int> y;
            for (std::size_t i = start; i < end; ++i) {
                rows.push_back(data[order[i]].x);
                y.push_back(data[order[i]].label);
            }
            ForwardResult fwd = forward(model, stack_rows(rows));
            LossResult loss = cross_entropy(fwd.logits, y);
            sgd_on_loss(model, sgd, cfg.sgd, fwd, loss);
            total += loss.value * static_cast<double>(end - start);
        }
        res.last_epoch_loss = total / static_cast<double>(data.size());
    }

    std::vector<std::vector<double>> rows;
    for (const auto& s : data) rows.push_back(s.x);
    const Tensor2D feats = extract_features(model, stack_rows(rows));
    std::map<int, std::vector<Exemplar>> candidates;
    for (std::size_t i = 0; i < data.size(); ++i) {
        candidates[data[i].label].push_back(
            Exemplar{data[i].x, {feats.row(i).begin(), feats.row(i).end()}, data[i].id});
    }
    res.exemplars = construct_exemplars(candidates, cfg.exemplars_per_class, model.fingerprint(),
                                        cfg.exemplar_options);
    res.model = std::move(model);
    return res;
}

// --- checkpoint ------------------------------------------------------------

void save_phase_checkpoint(const PhaseCheckpoint& ckpt, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_model(ckpt.model, dir / "model.bin");
    save_exemplars(ckpt.exemplars, dir / "exemplars.json");
    nlohmann::json doc;
    doc["format"] = "olearn-phase";
    doc["version"] = 1;
    doc["phase_index"] = ckpt.phase_index;
    doc["loss"] = {{"temperature", ckpt.loss.temperature},
                   {"alpha", ckpt.loss.alpha},
                   {"beta", ckpt.loss.beta},
                   {"n", ckpt.loss.n},
                   {"m", ckpt.loss.m}};
    auto& means = doc["ncm_means"] = nlohmann::json::array();
    for (const auto& [id, st] : ckpt.ncm.classes()) {
        means.push_back({{"class_id", id}, {"count", st.count}, {"mean", st.mean}});
    }
    std::ofstream out(dir / "phase.json");
    if (!out) throw Error("cannot write " + (dir / "phase.json").string());
    out << doc.dump(1) << '\n';
}

PhaseCheckpoint load_phase_checkpoint(const std::filesystem::path& dir) {
    PhaseCheckpoint ckpt;
    ckpt.model = load_model(dir / "model.bin");
    ckpt.exemplars = load_exemplars(dir / "exemplars.json");
    std::ifstream in(dir / "phase.json");
    if (!in) throw DataError("cannot open " + (dir / "phase.json").string());
    try {
        const auto doc = nlohmann::json::parse(in);
        if (doc.at("format") != "olearn-phase" || doc.at("version") != 1) {
            throw FormatError("phase.json: unsupported format");
        }
        ckpt.phase_index = doc.at("phase_index").get<std::size_t>();
        const auto& l = doc.at("loss");
        ckpt.loss.temperature = l.at("temperature").get<double>();
        ckpt.loss.alpha = l.at("alpha").get<double>();
        ckpt.loss.beta = l.at("beta").get<double>();
        ckpt.loss.n = l.at("n").get<std::size_t>();
        ckpt.loss.m = l.at("m").get<std::size_t>();
        for (const auto& m : doc.at("ncm_means")) {
            ClassMeanState st;
            st.class_id = m.at("class_id").get<int>();
            st.count = m.at("count").get<std::size_t>();
            st.mean = m.at("mean").get<std::vector<double>>();
            ckpt.ncm.classes().emplace(st.class_id, std::move(st));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("phase.json: ") + e.what());
    }
    return ckpt;
}

} // namespace olearn
