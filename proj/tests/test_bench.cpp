#include "doctest.h"
#include "test_util.hpp"

#include "olearn/bench.hpp"
#include "olearn/error.hpp"

#include <memory>

using namespace olearn;

namespace {

// Remembers the previous block's labels by position and replays them. On a
// stream whose labels repeat every 8 samples this is right exactly when p is
// a multiple of 8, and the first block is always a miss, so p = 8 scores best.
ProcessorFactory positional_memory() {
    return [] {
        auto memory = std::make_shared<std::vector<int>>();
        return BlockProcessor([memory](const DataBlock& b) {
            std::vector<int> pred(b.size(), -1);
            for (std::size_t i = 0; i < b.size() && i < memory->size(); ++i) pred[i] = (*memory)[i];
            *memory = b.labels();
            return pred;
        });
    };
}

std::vector<LabeledSample> periodic_probe(std::size_t n, int period) {
    std::vector<LabeledSample> out;
    for (std::size_t t = 0; t < n; ++t) out.push_back(LabeledSample{{0.0}, static_cast<int>(t) % period, SampleRole::NewClass, t});
    return out;
}

ProcessorFactory constant_factory(int label) {
    return [label] { return BlockProcessor([label](const DataBlock& b) { return std::vector<int>(b.size(), label); }); };
}

Scenario small_scenario(std::vector<std::size_t> splits, std::uint64_t seed, std::size_t per_class = 30) {
    BlobSpec b;
    b.classes = 0;
    for (auto s : splits) b.classes += s;
    b.dim = 4;
    b.per_class = per_class;
    b.seed = seed;
    ScenarioSpec spec;
    spec.splits = std::move(splits);
    spec.seed = seed;
    return make_scenario(make_blobs(b), spec);
}

ProtocolConfig quick_protocol(std::uint64_t seed) {
    ProtocolConfig pc;
    pc.seed = seed;
    pc.model.hidden = {16, 16};
    pc.retrain.epochs = 3;
    pc.retrain.exemplars_per_class = 4;
    return pc;
}

}  // namespace

TEST_CASE("record_prediction examples") {
    OnlineAccuracyTracker t;
    CHECK_FALSE(t.overall.accuracy().has_value());
    record_prediction(t, 1, 1, SampleRole::NewClass);
    record_prediction(t, 2, 2, SampleRole::OldObservation);
    record_prediction(t, 0, 0, SampleRole::NewClass);
    record_prediction(t, 3, 1, SampleRole::OldObservation);
    CHECK(*t.overall.accuracy() == 0.75);
    CHECK(t.overall.correct == t.new_class.correct + t.old_class.correct);
    CHECK(t.overall.total == t.new_class.total + t.old_class.total);
    CHECK(*t.old_class.accuracy() == 0.5);
}

TEST_CASE("evaluate examples") {
    // a linear head that copies a one-hot input predicts the true label
    MLPModel oracle;
    Tensor2D eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    oracle.layers.push_back(DenseLayer{eye, Tensor2D(1, 3)});
    std::vector<LabeledSample> test;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) {
            std::vector<double> x(3, 0.0);
            x[static_cast<std::size_t>(c)] = 1.0;
            test.push_back(LabeledSample{x, c, SampleRole::NewClass, 0});
        }
    const auto fp = oracle.fingerprint();
    auto r = evaluate(oracle, test, {0});
    CHECK(*r.overall == 1.0);
    CHECK(*r.new_classes == 1.0);
    CHECK(*r.old_classes == 1.0);
    CHECK(oracle.fingerprint() == fp);

    MLPModel constant;
    constant.layers.push_back(DenseLayer{Tensor2D(3, 3), Tensor2D::from_rows({{0.0, 5.0, 0.0}})});
    auto c = evaluate(constant, test, {});
    CHECK(*c.overall == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(c.old_classes.has_value());

    MLPModel narrow;
    narrow.layers.push_back(DenseLayer{Tensor2D(2, 3), Tensor2D(1, 2)});
    CHECK_THROWS_AS(evaluate(narrow, test, {}), DataError);
}

TEST_CASE("pretest: singleton and ties") {
    auto probe = periodic_probe(128, 8);
    auto one = pretest_block_size(constant_factory(0), probe, {16});
    CHECK(one.chosen == 16);
    auto tied = pretest_block_size(constant_factory(0), probe);
    CHECK(tied.chosen == 1);
    CHECK(tied.candidates == kDefaultBlockSizes);
    for (double a : tied.accuracies) CHECK(a == tied.accuracies.front());
}

TEST_CASE("pretest: constructed probe favours p = 8") {
    auto probe = periodic_probe(200, 8);
    auto r = pretest_block_size(positional_memory(), probe);
    CHECK(r.chosen == 8);
    CHECK(r.accuracies[3] == doctest::Approx(120.0 / 128.0));
    auto again = pretest_block_size(positional_memory(), probe);
    CHECK(again.accuracies == r.accuracies);
}

TEST_CASE("pretest: errors") {
    CHECK_THROWS_AS(pretest_block_size(constant_factory(0), periodic_probe(100, 8)), DataError);
    CHECK_THROWS_AS(pretest_block_size(constant_factory(0), periodic_probe(128, 8), {3}), ConfigError);
    CHECK_THROWS_AS(pretest_block_size(constant_factory(0), periodic_probe(128, 8), {}), ConfigError);
}

TEST_CASE("pretest with real scratch learners is deterministic") {
    auto sc = small_scenario({4, 2}, 3, 90);
    ModelConfig mc;
    mc.input_dim = 4;
    mc.hidden = {16, 16};
    mc.seed = 1;
    ScratchConfig scfg;
    auto a = pretest_block_size(scratch_processor_factory(mc, scfg), sc.phases[0].stream);
    auto b = pretest_block_size(scratch_processor_factory(mc, scfg), sc.phases[0].stream);
    CHECK(a.accuracies == b.accuracies);
    CHECK(is_valid_block_size(a.chosen));
}

TEST_CASE("run_protocol: single split gives scratch metrics only") {
    auto sc = small_scenario({3}, 1);
    auto report = run_protocol(sc, quick_protocol(1));
    REQUIRE(report.steps.size() == 1);
    CHECK(report.steps[0].phase == "scratch");
    CHECK(report.steps[0].online.has_value());
}

TEST_CASE("run_protocol: deterministic, prequential and replayable") {
    auto sc = small_scenario({3, 3}, 2);
    auto pc = quick_protocol(2);
    auto a = run_protocol(sc, pc);
    auto b = run_protocol(sc, pc);
    CHECK(report_csv(a) == report_csv(b));
    CHECK(report_summary(a) == report_summary(b));

    std::vector<std::string> phases;
    for (const auto& s : a.steps) phases.push_back(s.phase);
    CHECK(phases == std::vector<std::string>{"scratch", "retrain", "incremental"});

    // every prediction was made after exactly block_index updates within its step
    for (const auto& r : a.predictions) CHECK(r.learner_updates == r.block_index);

    auto replayed = replay_predictions(a.predictions);
    for (const auto& s : a.steps) {
        if (!s.online) continue;
        const auto& t = replayed.at(s.step);
        CHECK(t.overall.correct == s.online->overall.correct);
        CHECK(t.overall.total == s.online->overall.total);
        CHECK(t.old_class.correct == s.online->old_class.correct);
        CHECK(t.new_class.total == s.online->new_class.total);
    }
    for (const auto& s : a.steps) {
        for (auto v : {s.test.overall, s.test.new_classes, s.test.old_classes})
            if (v) CHECK((*v >= 0.0 && *v <= 1.0));
    }
}

TEST_CASE("run_protocol: report CSV layout") {
    auto sc = small_scenario({3, 3}, 4);
    auto csv = report_csv(run_protocol(sc, quick_protocol(4)));
    CHECK(csv.rfind("phase,step,block_index,metric,value\nprotocol,0,,schema_version,1\n", 0) == 0);
    CHECK(csv.find("scratch,0,,test_accuracy_old,null") != std::string::npos);
    CHECK(csv.find("incremental,1,,online_accuracy_old,") != std::string::npos);
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), ',') == 4);
    CHECK(lines > 10);
}

TEST_CASE("run_protocol: resume from the retrain checkpoint") {
    auto sc = small_scenario({3, 3}, 5);
    auto pc = quick_protocol(5);
    auto full = run_protocol(sc, pc);

    auto first = pc;
    first.phase_limit = 1;
    first.retrain_after_last = true;
    auto head = run_protocol(sc, first);
    REQUIRE(head.checkpoint.has_value());
    CHECK(head.checkpoint->phase_index == 0);

    auto rest = pc;
    rest.resume = head.checkpoint;
    auto tail = run_protocol(sc, rest);
    REQUIRE(tail.steps.size() == 1);
    CHECK(tail.steps[0].phase == "incremental");
    // same seeds, same retrained model: the incremental step matches the full run
    CHECK(tail.steps[0].test.overall == full.steps.back().test.overall);
    CHECK(tail.steps[0].online->overall.correct == full.steps.back().online->overall.correct);
}

TEST_CASE("run_protocol with pretest records the choice") {
    auto sc = small_scenario({4, 2}, 6, 90);
    auto pc = quick_protocol(6);
    pc.pretest = true;
    auto r = run_protocol(sc, pc);
    REQUIRE(r.pretest.has_value());
    CHECK(r.block_size == r.pretest->chosen);
    std::ostringstream os;
    write_pretest_csv(*r.pretest, os);
    CHECK(os.str().rfind("block_size,accuracy,chosen\n", 0) == 0);
}
