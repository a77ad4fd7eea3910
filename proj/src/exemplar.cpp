#include "olearn/exemplar.hpp"

#include "olearn/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace olearn {

namespace {

std::vector<double> batch_mean(const std::vector<Exemplar>& items) {
    std::vector<double> mean(items.front().feature.size(), 0.0);
    for (const auto& e : items) {
        if (e.feature.size() != mean.size()) throw DimensionError("ragged exemplar features");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e.feature[i];
    }
    for (double& v : mean) v /= static_cast<double>(items.size());
    return mean;
}

std::vector<std::size_t> herd_by_distance(const std::vector<Exemplar>& items,
                                          std::span<const double> mean) {
    std::vector<double> dist(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) dist[i] = squared_distance(items[i].feature, mean);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    return order;
}

std::vector<std::size_t> herd_iterative(const std::vector<Exemplar>& items,
                                        std::span<const double> mean, std::size_t q) {
    const std::size_t dim = mean.size();
    std::vector<double> running(dim, 0.0);
    std::vector<bool> taken(items.size(), false);
    std::vector<std::size_t> order;
    const std::size_t picks = std::min(q, items.size());
    for (std::size_t k = 1; k <= picks; ++k) {
        std::size_t best = items.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (taken[i]) continue;
            double d = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = mean[j] - (running[j] + items[i].feature[j]) / static_cast<double>(k);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        taken[best] = true;
        order.push_back(best);
        for (std::size_t j = 0; j < dim; ++j) running[j] += items[best].feature[j];
    }
    return order;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

std::size_t ExemplarSet::total_size() const {
    std::size_t n = 0;
    for (const auto& [id, c] : classes) n += c.items.size();
    return n;
}

ExemplarSet construct_exemplars(const std::map<int, std::vector<Exemplar>>& candidates_by_class,
                                std::size_t q, std::uint64_t extractor_version,
                                const ExemplarOptions& options) {
    if (q == 0) throw ConfigError("construct_exemplars: q must be >= 1");
    ExemplarSet set;
    set.extractor_version = extractor_version;
    set.options = options;
    for (const auto& [cls, items] : candidates_by_class) {
        if (items.empty()) {
            throw DataError("construct_exemplars: class " + std::to_string(cls) + " has no samples");
        }
        ClassExemplars store;
        store.capacity = q;
        store.mean.class_id = cls;
        store.mean.mean = batch_mean(items);
        store.mean.count = items.size();

        auto order = options.herding == HerdingMode::SortByDistance
                         ? herd_by_distance(items, store.mean.mean)
                         : herd_iterative(items, store.mean.mean, q);
        if (order.size() > q) order.resize(q);
        for (std::size_t i : order) store.items.push_back(items[i]);
        set.classes.emplace(cls, std::move(store));
    }
    return set;
}

ExemplarUpdate update_exemplar_set(ExemplarSet& set, std::span<const double> x,
                                   std::span<const double> feature, int y,
                                   std::size_t source_index) {
    auto it = set.classes.find(y);
    if (it == set.classes.end()) {
        throw DataError("update_exemplar_set: unknown class " + std::to_string(y));
    }
    ClassExemplars& store = it->second;
    if (store.items.empty()) {
        throw DataError("update_exemplar_set: class " + std::to_string(y) + " has no exemplars");
    }

    update_mean(store.mean, feature);
    const auto& mean = store.mean.mean;

    ExemplarUpdate out;
    out.victim_distance = squared_distance(store.items[0].feature, mean);
    for (std::size_t m = 1; m < store.items.size(); ++m) {
        const double d = squared_distance(store.items[m].feature, mean);
        const bool better = set.options.replace_farthest ? d > out.victim_distance
                                                          : d < out.victim_distance;
        if (better) {
            out.victim_distance = d;
            out.victim_index = m;
        }
    }
    out.new_distance = squared_distance(feature, mean);

    if (out.new_distance <= out.victim_distance) {
        store.items.erase(store.items.begin() + static_cast<std::ptrdiff_t>(out.victim_index));
        store.items.push_back(Exemplar{{x.begin(), x.end()}, {feature.begin(), feature.end()}, source_index});
        out.replaced = true;
    }
    return out;
}

ExemplarUpdate update_exemplar_set(ExemplarSet& set, std::span<const double> x, int y,
                                   std::size_t source_index, const MLPModel& extractor) {
    refresh_features(set, extractor);
    Tensor2D row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    Tensor2D f = extract_features(extractor, row);
    return update_exemplar_set(set, x, f.row(0), y, source_index);
}

bool refresh_features(ExemplarSet& set, const MLPModel& extractor) {
    const std::uint64_t version = extractor.fingerprint();
    if (version == set.extractor_version) return false;
    for (auto& [cls, store] : set.classes) {
        if (store.items.empty()) continue;
        std::vector<std::vector<double>> rows;
        for (const auto& e : store.items) rows.push_back(e.payload);
        Tensor2D f = extract_features(extractor, stack_rows(rows));
        for (std::size_t i = 0; i < store.items.size(); ++i) {
            store.items[i].feature.assign(f.row(i).begin(), f.row(i).end());
        }
        store.mean.mean = batch_mean(store.items);
    }
    set.extractor_version = version;
    return true;
}

std::vector<DrawnExemplar> sample_pairs(const ExemplarSet& set, std::size_t k, std::uint64_t seed) {
    std::vector<std::pair<int, const Exemplar*>> pool;
    for (const auto& [cls, store] : set.classes) {
        for (const auto& e : store.items) pool.emplace_back(cls, &e);
    }
    if (pool.empty()) throw DataError("sample_pairs: exemplar set is empty");
    if (k == 0) throw ConfigError("sample_pairs: k must be >= 1");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t distinct = std::min(k, pool.size());
    // partial Fisher-Yates
    for (std::size_t i = 0; i < distinct; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<DrawnExemplar> out;
    out.reserve(k);
    for (std::size_t i = 0; i < distinct; ++i) {
        out.push_back({pool[idx[i]].first, *pool[idx[i]].second});
    }
    std::uniform_int_distribution<std::size_t> any(0, pool.size() - 1);
    for (std::size_t i = distinct; i < k; ++i) {
        const auto& p = pool[any(rng)];
        out.push_back({p.first, *p.second});
    }
    return out;
}

nlohmann::json exemplars_to_json(const ExemplarSet& set) {
    nlohmann::json doc;
    doc["format"] = "olearn-exemplars";
    doc["version"] = 1;
    doc["extractor_version"] = hex64(set.extractor_version);
    doc["options"] = {
        {"herding", set.options.herding == HerdingMode::SortByDistance ? "sort" : "iterative"},
        {"replace_farthest", set.options.replace_farthest},
    };
    auto& classes = doc["classes"] = nlohmann::json::array();
    for (const auto& [cls, store] : set.classes) {
        nlohmann::json c;
        c["class_id"] = cls;
        c["capacity"] = store.capacity;
        c["count"] = store.mean.count;
        c["mean"] = store.mean.mean;
        auto& items = c["exemplars"] = nlohmann::json::array();
        for (const auto& e : store.items) {
            items.push_back({{"source_index", e.source_index},
                             {"payload", e.payload},
                             {"feature", e.feature}});
        }
        classes.push_back(std::move(c));
    }
    return doc;
}

ExemplarSet exemplars_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "olearn-exemplars") throw FormatError("not an exemplar dump");
        if (doc.at("version") != 1) throw FormatError("unsupported exemplar dump version");
        ExemplarSet set;
        set.extractor_version = std::stoull(doc.at("extractor_version").get<std::string>(), nullptr, 16);
        const auto& opts = doc.at("options");
        set.options.herding = opts.at("herding") == "sort" ? HerdingMode::SortByDistance
                                                           : HerdingMode::IterativeMeanMatching;
        set.options.replace_farthest = opts.at("replace_farthest").get<bool>();
        for (const auto& c : doc.at("classes")) {
            ClassExemplars store;
            const int cls = c.at("class_id").get<int>();
            store.capacity = c.at("capacity").get<std::size_t>();
            store.mean.class_id = cls;
            store.mean.count = c.at("count").get<std::size_t>();
            store.mean.mean = c.at("mean").get<std::vector<double>>();
            for (const auto& e : c.at("exemplars")) {
                store.items.push_back(Exemplar{e.at("payload").get<std::vector<double>>(),
                                               e.at("feature").get<std::vector<double>>(),
                                               e.at("source_index").get<std::size_t>()});
            }
            if (store.items.size() > store.capacity) throw FormatError("class store exceeds capacity");
            set.classes.emplace(cls, std::move(store));
        }
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed exemplar dump: ") + e.what());
    }
}

void save_exemplars(const ExemplarSet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << exemplars_to_json(set).dump(1) << '\n';
}

ExemplarSet load_exemplars(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return exemplars_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("exemplar dump is not valid JSON: ") + e.what());
    }
}

} // namespace olearn
