#pragma once

#include "olearn/tensor.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace olearn {

/// Running mean of the features absorbed for one class.
struct ClassMeanState {
    int class_id = 0;
    std::vector<double> mean;  // empty while count == 0
    std::size_t count = 0;

    friend bool operator==(const ClassMeanState&, const ClassMeanState&) = default;
};

/// mean <- n/(n+1) * mean + 1/(n+1) * feature, count <- n + 1.
void update_mean(ClassMeanState& state, std::span<const double> feature);

/// Nearest-class-mean classifier over feature vectors.
class NCMClassifier {
public:
    /// Absorbs one feature into the running mean of `class_id`.
    void observe(int class_id, std::span<const double> feature);

    /// Class whose mean has the smallest squared Euclidean distance to
    /// `feature`; equal distances resolve to the lowest class id.
    /// Throws Error when no class has absorbed a sample.
    int classify(std::span<const double> feature) const;

    /// Like classify() but returns nullopt for an empty classifier.
    std::optional<int> try_classify(std::span<const double> feature) const;

    bool empty() const;
    const ClassMeanState* find(int class_id) const;
    const std::map<int, ClassMeanState>& classes() const { return classes_; }
    std::map<int, ClassMeanState>& classes() { return classes_; }

private:
    std::map<int, ClassMeanState> classes_;
};

int ncm_classify(std::span<const double> feature, const NCMClassifier& classifier);

} // namespace olearn
