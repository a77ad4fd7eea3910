#pragma once

#include "olearn/ncm.hpp"
#include "olearn/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"

namespace olearn {

struct Exemplar {
    std::vector<double> payload;  // raw input
    std::vector<double> feature;  // extractor output for payload
    std::size_t source_index = 0;

    friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

enum class HerdingMode {
    SortByDistance,         // one pass: nearest q samples to the class mean
    IterativeMeanMatching,  // greedy: each pick keeps the running exemplar mean closest
};

struct ExemplarOptions {
    HerdingMode herding = HerdingMode::SortByDistance;
    // Replacement victim in update_exemplar_set: the exemplar nearest the
    // mean (default) or the farthest one.
    bool replace_farthest = false;

    friend bool operator==(const ExemplarOptions&, const ExemplarOptions&) = default;
};

struct ClassExemplars {
    std::size_t capacity = 0;
    std::vector<Exemplar> items;
    ClassMeanState mean;

    friend bool operator==(const ClassExemplars&, const ClassExemplars&) = default;
};

/// Per-class bounded exemplar stores. Features are valid for the extractor
/// whose fingerprint is `extractor_version`.
struct ExemplarSet {
    std::map<int, ClassExemplars> classes;
    std::uint64_t extractor_version = 0;
    ExemplarOptions options;

    std::size_t total_size() const;
    bool empty() const { return total_size() == 0; }

    friend bool operator==(const ExemplarSet&, const ExemplarSet&) = default;
};

/// Builds a store per class from candidates whose `feature` is filled in.
/// The class mean is the batch mean of all candidate features; each store
/// keeps the first `q` candidates by squared distance to it, ties in input
/// order. Throws DataError for a class without candidates.
ExemplarSet construct_exemplars(const std::map<int, std::vector<Exemplar>>& candidates_by_class,
                                std::size_t q, std::uint64_t extractor_version,
                                const ExemplarOptions& options = {});

struct ExemplarUpdate {
    bool replaced = false;
    std::size_t victim_index = 0;  // index of the compared stored exemplar
    double victim_distance = 0.0;
    double new_distance = 0.0;
};

/// One drift-aware update for an observation (x, y) of an existing class.
///
///   1. M(y) <- n/(n+1) M(y) + 1/(n+1) f(x)
///   2. d_m = |f(E_m) - M(y)|^2 for every stored exemplar
///   3. d_min, I_min = min, argmin d_m (first index on ties)
///   4. d_new = |f(x) - M(y)|^2
///   5. if d_new <= d_min: remove E_{I_min}, append x
///
/// With options.replace_farthest the victim is the argmax instead. The mean
/// update persists whether or not a replacement happens. Stored features are
/// recomputed first if `extractor` differs from the set's extractor version.
ExemplarUpdate update_exemplar_set(ExemplarSet& set, std::span<const double> x, int y,
                                   std::size_t source_index, const MLPModel& extractor);

/// Same update with f(x) supplied by the caller, who guarantees it came
/// from the set's current extractor.
ExemplarUpdate update_exemplar_set(ExemplarSet& set, std::span<const double> x,
                                   std::span<const double> feature, int y,
                                   std::size_t source_index);

/// Recomputes stored features (and re-seeds class means from them, counts
/// kept) if `extractor` is not the one the set was built with.
bool refresh_features(ExemplarSet& set, const MLPModel& extractor);

struct DrawnExemplar {
    int class_id = 0;
    Exemplar exemplar;
};

/// k exemplars drawn uniformly without replacement from the union of all
/// classes (ordered by class id, then position). Past the union size the
/// remainder is drawn with replacement.
std::vector<DrawnExemplar> sample_pairs(const ExemplarSet& set, std::size_t k, std::uint64_t seed);

nlohmann::json exemplars_to_json(const ExemplarSet& set);
ExemplarSet exemplars_from_json(const nlohmann::json& doc);
void save_exemplars(const ExemplarSet& set, const std::filesystem::path& path);
ExemplarSet load_exemplars(const std::filesystem::path& path);

} // namespace olearn
