#include "olearn/stream.hpp"

#include "olearn/error.hpp"
#include "olearn/format.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

namespace olearn {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    auto is_sep = [](char c) { return c == ',' || c == ';' || c == '\t' || c == ' ' || c == '\r'; };
    while (i < line.size()) {
        while (i < line.size() && is_sep(line[i])) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && !is_sep(line[j])) ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw DataError("line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

long long parse_label(std::string_view s, std::size_t line_no) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line_no) + ": bad label '" + std::string(s) + "'");
    }
    return v;
}

// Assigns contiguous ids in ascending order of the raw labels.
Dataset remap_labels(std::vector<std::vector<double>> xs, const std::vector<long long>& raw) {
    std::set<long long> uniq(raw.begin(), raw.end());
    Dataset ds;
    ds.label_values.assign(uniq.begin(), uniq.end());
    std::map<long long, int> index;
    for (std::size_t k = 0; k < ds.label_values.size(); ++k) index[ds.label_values[k]] = static_cast<int>(k);
    ds.samples.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ds.samples.push_back({std::move(xs[i]), index[raw[i]], SampleRole::NewClass, i});
    }
    return ds;
}

std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(std::string(what) + ": truncated header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

// Returns the dims of an unsigned-byte IDX file after validating the magic.
std::vector<std::uint32_t> read_idx_header(std::istream& in, const std::string& name) {
    const std::uint32_t magic = read_be32(in, name.c_str());
    if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08) {
        throw FormatError(name + ": bad IDX magic number");
    }
    const std::uint32_t ndims = magic & 0xff;
    if (ndims == 0) throw FormatError(name + ": IDX file declares zero dimensions");
    std::vector<std::uint32_t> dims(ndims);
    for (auto& d : dims) d = read_be32(in, name.c_str());
    return dims;
}

std::vector<double> random_direction(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    while (norm == 0.0) {
        norm = 0.0;
        for (double& x : v) {
            x = g(rng);
            norm += x * x;
        }
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

} // namespace

std::string_view role_name(SampleRole role) {
    return role == SampleRole::NewClass ? "new" : "old";
}

DataFormat parse_format(std::string_view name) {
    if (name == "csv" || name == "delimited" || name == "txt") return DataFormat::Delimited;
    if (name == "idx") return DataFormat::Idx;
    throw ConfigError("unknown data format '" + std::string(name) + "' (expected csv or idx)");
}

Dataset load_delimited(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<double>> xs;
    std::vector<long long> raw;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_fields(line);
        if (fields.empty() || fields.front().front() == '#') continue;
        if (fields.size() < 2) {
            throw DataError("line " + std::to_string(line_no) + ": need a label and at least one feature");
        }
        if (width == 0) width = fields.size();
        if (fields.size() != width) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " fields, got " + std::to_string(fields.size()));
        }
        raw.push_back(parse_label(fields[0], line_no));
        std::vector<double> x;
        x.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) x.push_back(parse_double(fields[i], line_no));
        xs.push_back(std::move(x));
    }
    if (xs.empty()) throw DataError(path.string() + ": no samples");
    return remap_labels(std::move(xs), raw);
}

void write_delimited(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    for (const auto& s : data.samples) {
        out << data.label_values.at(static_cast<std::size_t>(s.label));
        for (double v : s.x) out << ',' << format_double(v);
        out << '\n';
    }
    if (!out) throw Error("failed writing " + path.string());
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    std::ifstream img(images, std::ios::binary);
    if (!img) throw DataError("cannot open " + images.string());
    std::ifstream lab(labels, std::ios::binary);
    if (!lab) throw DataError("cannot open " + labels.string());

    const auto idims = read_idx_header(img, images.string());
    const auto ldims = read_idx_header(lab, labels.string());
    if (idims.size() < 2) throw FormatError(images.string() + ": image file needs >= 2 dimensions");
    if (ldims.size() != 1) throw FormatError(labels.string() + ": label file must be 1-dimensional");
    if (idims[0] != ldims[0]) {
        throw FormatError("image count " + std::to_string(idims[0]) + " != label count " +
                          std::to_string(ldims[0]));
    }
    std::size_t width = 1;
    for (std::size_t i = 1; i < idims.size(); ++i) width *= idims[i];

    std::vector<std::vector<double>> xs(idims[0]);
    std::vector<long long> raw(idims[0]);
    std::vector<unsigned char> buf(width);
    for (std::size_t n = 0; n < idims[0]; ++n) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(width))) {
            throw FormatError(images.string() + ": truncated pixel data");
        }
        xs[n].resize(width);
        for (std::size_t i = 0; i < width; ++i) xs[n][i] = buf[i] / 255.0;
        char c = 0;
        if (!lab.get(c)) throw FormatError(labels.string() + ": truncated label data");
        raw[n] = static_cast<unsigned char>(c);
    }
    if (xs.empty()) throw DataError(images.string() + ": no samples");
    return remap_labels(std::move(xs), raw);
}

std::filesystem::path idx_label_path_for(const std::filesystem::path& images) {
    std::string name = images.filename().string();
    auto replace = [&name](std::string_view from, std::string_view to) {
        auto pos = name.find(from);
        if (pos != std::string::npos) name.replace(pos, from.size(), to);
    };
    replace("images", "labels");
    replace("idx3", "idx1");
    return images.parent_path() / name;
}

Dataset load_dataset(const std::filesystem::path& path, DataFormat format,
                     const std::optional<std::filesystem::path>& labels) {
    if (format == DataFormat::Delimited) return load_delimited(path);
    return load_idx(path, labels ? *labels : idx_label_path_for(path));
}

Dataset make_blobs(const BlobSpec& spec) {
    if (spec.classes == 0 || spec.dim == 0 || spec.per_class == 0) {
        throw ConfigError("make_blobs: classes, dim and per_class must be >= 1");
    }
    if (spec.nuisance_dims > spec.dim) throw ConfigError("make_blobs: nuisance_dims exceeds dim");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t signal = spec.dim - spec.nuisance_dims;

    std::vector<std::vector<double>> centers(spec.classes, std::vector<double>(spec.dim, 0.0));
    for (auto& c : centers) {
        for (std::size_t d = 0; d < signal; ++d) c[d] = spec.separation * g(rng);
    }
    Dataset ds;
    for (std::size_t k = 0; k < spec.classes; ++k) ds.label_values.push_back(static_cast<long long>(k));
    for (std::size_t k = 0; k < spec.classes; ++k) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            std::vector<double> x(spec.dim);
            for (std::size_t d = 0; d < spec.dim; ++d) {
                const double sd = d < signal ? spec.noise_sd : spec.nuisance_sd;
                x[d] = centers[k][d] + sd * g(rng);
            }
            ds.samples.push_back({std::move(x), static_cast<int>(k), SampleRole::NewClass, ds.samples.size()});
        }
    }
    return ds;
}

double within_class_sd(const Dataset& data) {
    const std::size_t dim = data.dim();
    const std::size_t k = data.num_classes();
    if (dim == 0 || k == 0) return 0.0;
    std::vector<std::vector<double>> sum(k, std::vector<double>(dim, 0.0));
    std::vector<std::vector<double>> sq(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> count(k, 0);
    for (const auto& s : data.samples) {
        auto c = static_cast<std::size_t>(s.label);
        ++count[c];
        for (std::size_t d = 0; d < dim; ++d) {
            sum[c][d] += s.x[d];
            sq[c][d] += s.x[d] * s.x[d];
        }
    }
    double var = 0.0;
    std::size_t terms = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] < 2) continue;
        const double n = static_cast<double>(count[c]);
        for (std::size_t d = 0; d < dim; ++d) {
            const double m = sum[c][d] / n;
            var += std::max(0.0, sq[c][d] / n - m * m) * n / (n - 1.0);
            ++terms;
        }
    }
    return terms == 0 ? 0.0 : std::sqrt(var / static_cast<double>(terms));
}

std::vector<LabeledSample> inject_drift(std::vector<LabeledSample> stream, const DriftSpec& drift,
                                        std::size_t block_size) {
    if (block_size == 0) throw ConfigError("inject_drift: block size must be >= 1");
    const std::size_t onset = drift.onset_block * block_size;
    for (std::size_t i = onset; i < stream.size(); ++i) {
        LabeledSample& s = stream[i];
        if (s.role != SampleRole::OldObservation) continue;
        auto it = drift.shifts.find(s.label);
        if (it == drift.shifts.end()) continue;
        if (it->second.size() != s.x.size()) {
            throw DimensionError("inject_drift: shift for class " + std::to_string(s.label) + " has " +
                                 std::to_string(it->second.size()) + " dims, samples have " +
                                 std::to_string(s.x.size()));
        }
        for (std::size_t d = 0; d < s.x.size(); ++d) s.x[d] += it->second[d];
    }
    return stream;
}

bool is_valid_block_size(std::size_t p) {
    static constexpr std::array<std::size_t, 7> kAllowed{1, 2, 4, 8, 16, 32, 64};
    return std::find(kAllowed.begin(), kAllowed.end(), p) != kAllowed.end();
}

void ScenarioSpec::validate() const {
    if (splits.empty()) throw ConfigError("scenario needs at least one class split");
    for (std::size_t s : splits) {
        if (s == 0) throw ConfigError("class split sizes must be >= 1");
    }
    for (double f : {new_fraction, old_fraction, test_fraction}) {
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("sample fractions must be in [0, 1]");
    }
    if (!(new_fraction > 0.0)) throw ConfigError("new_fraction must be > 0");
    if (std::abs(new_fraction + old_fraction + test_fraction - 1.0) > 1e-9) {
        throw ConfigError("new_fraction + old_fraction + test_fraction must equal 1");
    }
    if (!is_valid_block_size(block_size)) {
        throw ConfigError("block_size must be one of 1, 2, 4, 8, 16, 32, 64");
    }
    if (drift) {
        if (!std::isfinite(drift->magnitude)) throw ConfigError("drift magnitude must be finite");
        if (!(drift->onset_fraction >= 0.0)) throw ConfigError("drift onset_fraction must be >= 0");
    }
}

std::vector<LabeledSample> Scenario::test_for(std::size_t trained_classes) const {
    std::vector<LabeledSample> out;
    for (const auto& s : test) {
        if (static_cast<std::size_t>(s.label) < trained_classes) out.push_back(s);
    }
    return out;
}

Scenario make_scenario(const Dataset& data, const ScenarioSpec& spec) {
    spec.validate();
    const std::size_t k = data.num_classes();
    const std::size_t wanted = std::accumulate(spec.splits.begin(), spec.splits.end(), std::size_t{0});
    if (wanted > k) {
        throw ConfigError("splits need " + std::to_string(wanted) + " classes, dataset has " +
                          std::to_string(k));
    }
    std::mt19937_64 rng(spec.seed);

    Scenario sc;
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    if (spec.shuffle_classes) std::shuffle(order.begin(), order.end(), rng);
    order.resize(wanted);
    sc.class_order = order;

    std::vector<int> label_of(k, -1);
    for (std::size_t pos = 0; pos < order.size(); ++pos) label_of[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos);

    std::vector<std::vector<const LabeledSample*>> by_class(k);
    for (const auto& s : data.samples) by_class[static_cast<std::size_t>(s.label)].push_back(&s);

    // per scenario label: new-class part and old-observation part
    std::vector<std::vector<LabeledSample>> new_part(wanted), old_part(wanted);
    for (std::size_t pos = 0; pos < wanted; ++pos) {
        auto members = by_class[static_cast<std::size_t>(order[pos])];
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t n = members.size();
        const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
        const auto n_old = static_cast<std::size_t>(std::llround(spec.old_fraction * static_cast<double>(n)));
        if (n_test + n_old >= n || (spec.test_fraction > 0.0 && n_test == 0) ||
            (spec.old_fraction > 0.0 && n_old == 0)) {
            throw DataError("class " + std::to_string(data.label_values[static_cast<std::size_t>(order[pos])]) +
                            " has too few samples (" + std::to_string(n) + ") for the requested fractions");
        }
        const std::size_t n_new = n - n_test - n_old;
        for (std::size_t i = 0; i < n; ++i) {
            LabeledSample s = *members[i];
            s.label = static_cast<int>(pos);
            if (i < n_new) {
                s.role = SampleRole::NewClass;
                new_part[pos].push_back(std::move(s));
            } else if (i < n_new + n_old) {
                s.role = SampleRole::OldObservation;
                old_part[pos].push_back(std::move(s));
            } else {
                s.role = SampleRole::NewClass;
                sc.test.push_back(std::move(s));
            }
        }
    }

    const std::size_t n_phases = spec.splits.size();
    std::vector<std::size_t> first(n_phases + 1, 0);
    for (std::size_t p = 0; p < n_phases; ++p) first[p + 1] = first[p] + spec.splits[p];

    const double sd = spec.drift ? within_class_sd(data) : 0.0;
    const std::size_t dim = data.dim();

    for (std::size_t p = 0; p < n_phases; ++p) {
        Phase phase;
        std::vector<LabeledSample> fresh;
        for (std::size_t c = first[p]; c < first[p + 1]; ++c) {
            phase.new_classes.push_back(static_cast<int>(c));
            fresh.insert(fresh.end(), new_part[c].begin(), new_part[c].end());
        }
        std::shuffle(fresh.begin(), fresh.end(), rng);

        std::vector<LabeledSample> old;
        for (std::size_t c = 0; c < first[p]; ++c) {
            phase.old_classes.push_back(static_cast<int>(c));
            // class c was introduced in phase q; its observations are spread
            // over phases q+1 .. n_phases-1
            std::size_t q = 0;
            while (first[q + 1] <= c) ++q;
            const std::size_t later = n_phases - 1 - q;
            const std::size_t slot = p - q - 1;
            const auto& pool = old_part[c];
            const std::size_t lo = pool.size() * slot / later;
            const std::size_t hi = pool.size() * (slot + 1) / later;
            old.insert(old.end(), pool.begin() + static_cast<std::ptrdiff_t>(lo),
                       pool.begin() + static_cast<std::ptrdiff_t>(hi));
        }
        std::shuffle(old.begin(), old.end(), rng);

        // uniform random interleaving that keeps each pool's order
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::size_t i = 0, j = 0;
        phase.stream.reserve(fresh.size() + old.size());
        while (i < fresh.size() || j < old.size()) {
            const double left_old = static_cast<double>(old.size() - j);
            const double left = static_cast<double>(fresh.size() - i) + left_old;
            if (j < old.size() && u(rng) * left < left_old) {
                phase.stream.push_back(std::move(old[j++]));
            } else {
                phase.stream.push_back(std::move(fresh[i++]));
            }
        }

        if (spec.drift && p > 0 && !phase.old_classes.empty()) {
            DriftSpec drift;
            const std::size_t blocks = (phase.stream.size() + spec.block_size - 1) / spec.block_size;
            drift.onset_block = static_cast<std::size_t>(std::floor(spec.drift->onset_fraction * static_cast<double>(blocks)));
            for (int c : phase.old_classes) {
                auto dir = random_direction(dim, rng);
                for (double& v : dir) v *= spec.drift->magnitude * sd;
                drift.shifts.emplace(c, std::move(dir));
            }
            phase.stream = inject_drift(std::move(phase.stream), drift, spec.block_size);
        }
        sc.phases.push_back(std::move(phase));
    }
    return sc;
}

Tensor2D DataBlock::inputs() const {
    std::vector<std::vector<double>> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(s.x);
    return stack_rows(rows);
}

std::vector<int> DataBlock::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

std::optional<DataBlock> SampleStream::next_block(std::size_t p) {
    if (p == 0) throw ConfigError("next_block: p must be >= 1");
    if (cursor_ >= samples_.size()) return std::nullopt;
    const std::size_t take = std::min(p, samples_.size() - cursor_);
    DataBlock b;
    b.index = blocks_++;
    b.samples.assign(samples_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     samples_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
    cursor_ += take;
    return b;
}

std::vector<DataBlock> split_blocks(const std::vector<LabeledSample>& samples, std::size_t p) {
    SampleStream s(samples);
    std::vector<DataBlock> out;
    while (auto b = s.next_block(p)) out.push_back(std::move(*b));
    return out;
}

} // namespace olearn
