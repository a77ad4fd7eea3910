#include "olearn/ncm.hpp"

#include "olearn/error.hpp"

#include <limits>
#include <string>

namespace olearn {

void update_mean(ClassMeanState& state, std::span<const double> feature) {
    if (state.count == 0) {
        state.mean.assign(feature.begin(), feature.end());
        state.count = 1;
        return;
    }
    if (feature.size() != state.mean.size()) {
        throw DimensionError("update_mean: feature has " + std::to_string(feature.size()) +
                             " dims, mean has " + std::to_string(state.mean.size()));
    }
    const double n = static_cast<double>(state.count);
    const double keep = n / (n + 1.0);
    const double take = 1.0 / (n + 1.0);
    for (std::size_t i = 0; i < feature.size(); ++i) {
        state.mean[i] = keep * state.mean[i] + take * feature[i];
    }
    ++state.count;
}

void NCMClassifier::observe(int class_id, std::span<const double> feature) {
    auto [it, inserted] = classes_.try_emplace(class_id);
    if (inserted) it->second.class_id = class_id;
    update_mean(it->second, feature);
}

std::optional<int> NCMClassifier::try_classify(std::span<const double> feature) const {
    std::optional<int> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [id, st] : classes_) {
        if (st.count == 0) continue;
        const double d = squared_distance(feature, st.mean);
        // map order is ascending id, so strict < keeps the lowest id on ties
        if (!best || d < best_d) {
            best = id;
            best_d = d;
        }
    }
    return best;
}

int NCMClassifier::classify(std::span<const double> feature) const {
    auto c = try_classify(feature);
    if (!c) throw Error("ncm_classify: classifier has no populated class");
    return *c;
}

bool NCMClassifier::empty() const {
    for (const auto& [id, st] : classes_) {
        if (st.count > 0) return false;
    }
    return true;
}

const ClassMeanState* NCMClassifier::find(int class_id) const {
    auto it = classes_.find(class_id);
    return it == classes_.end() ? nullptr : &it->second;
}

int ncm_classify(std::span<const double> feature, const NCMClassifier& classifier) {
    return classifier.classify(feature);
}

} // namespace olearn
