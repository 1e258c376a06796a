#include "taskagg/dataset.hpp"

#include "taskagg/error.hpp"
#include "taskagg/result.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace taskagg {

namespace {

std::string idx(Eigen::Index i) { return std::to_string(i); }

void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (!std::isfinite(m(r, c))) {
                throw ValidationError(what + " entry (" + idx(r) + ", " + idx(c) + ") is not finite");
            }
        }
    }
}

std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) names.push_back(prefix + idx(i));
    return names;
}

std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::ifstream open_for_reading(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

std::vector<std::string> parse_header(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header row");
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    auto header = split_row(line);
    std::set<std::string> seen;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c].empty()) {
            throw ValidationError(path.string() + ": empty column name at column " + std::to_string(c + 1));
        }
        if (!seen.insert(header[c]).second) {
            throw ValidationError(path.string() + ": duplicate column name '" + header[c] + "'");
        }
    }
    return header;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    auto where = [&] { return "line " + std::to_string(row) + ", column '" + column + "'"; };
    if (cell.empty()) throw ValidationError("empty cell at " + where());
    if (ec != std::errc() || ptr != last) {
        throw ValidationError("non-numeric cell '" + cell + "' at " + where());
    }
    if (!std::isfinite(value)) throw ValidationError("non-finite cell '" + cell + "' at " + where());
    return value;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

Eigen::VectorXd column_means(const Eigen::MatrixXd& m) {
    if (m.cols() == 0) return Eigen::VectorXd(0);
    return m.colwise().mean().transpose();
}

// Subtracts `means`; columns whose entries are all equal become exactly zero
// and their names are appended to `constant`.
Eigen::MatrixXd subtract(const Eigen::MatrixXd& m, const Eigen::VectorXd& means,
                         const std::vector<std::string>& names, std::vector<std::string>* constant) {
    if (means.size() != m.cols()) {
        throw ValidationError("centering means have " + idx(means.size()) + " entries for " +
                              idx(m.cols()) + " columns");
    }
    Eigen::MatrixXd out = m.rowwise() - means.transpose();
    if (constant != nullptr) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if ((m.col(c).array() == m(0, c)).all()) {
                out.col(c).setZero();
                constant->push_back(names[static_cast<std::size_t>(c)]);
            }
        }
    }
    return out;
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd features, Eigen::MatrixXd targets,
                 std::vector<std::string> feature_names, std::vector<std::string> target_names,
                 std::vector<Eigen::MatrixXd> per_task_features)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      per_task_features_(std::move(per_task_features)),
      feature_names_(std::move(feature_names)),
      target_names_(std::move(target_names)) {
    const Eigen::Index n = targets_.rows();
    if (n < 2) throw ValidationError("dataset needs at least 2 samples, got " + idx(n));
    if (targets_.cols() < 1) throw ValidationError("dataset needs at least one target");
    if (features_.cols() > 0 && features_.rows() != n) {
        throw ValidationError("features have " + idx(features_.rows()) + " rows, targets have " + idx(n));
    }
    if (features_.cols() == 0) features_.resize(n, 0);
    require_finite(features_, "feature");
    require_finite(targets_, "target");

    if (!per_task_features_.empty()) {
        if (static_cast<Eigen::Index>(per_task_features_.size()) != targets_.cols()) {
            throw ValidationError("expected one feature slab per target (" + idx(targets_.cols()) +
                                  "), got " + std::to_string(per_task_features_.size()));
        }
        const Eigen::Index d = per_task_features_.front().cols();
        for (std::size_t t = 0; t < per_task_features_.size(); ++t) {
            const auto& slab = per_task_features_[t];
            if (slab.rows() != n || slab.cols() != d) {
                throw ValidationError("feature slab " + std::to_string(t) + " has shape " + idx(slab.rows()) +
                                      "x" + idx(slab.cols()) + ", expected " + idx(n) + "x" + idx(d));
            }
            require_finite(slab, "feature slab " + std::to_string(t));
        }
        if (features_.cols() > 0 && features_.cols() != d) {
            throw ValidationError("shared features and feature slabs disagree on D");
        }
    }
    if (feature_count() < 1) throw ValidationError("dataset needs at least one feature");

    if (feature_names_.empty()) feature_names_ = default_names("x", feature_count());
    if (target_names_.empty()) target_names_ = default_names("y", targets_.cols());
    if (static_cast<Eigen::Index>(feature_names_.size()) != feature_count()) {
        throw ValidationError("expected " + idx(feature_count()) + " feature names");
    }
    if (static_cast<Eigen::Index>(target_names_.size()) != targets_.cols()) {
        throw ValidationError("expected " + idx(targets_.cols()) + " target names");
    }
}

Eigen::Index Dataset::feature_count() const {
    if (features_.cols() > 0 || per_task_features_.empty()) return features_.cols();
    return per_task_features_.front().cols();
}

Schema Schema::targets_rest_features(const std::vector<std::string>& targets,
                                     const std::vector<std::string>& ignore) {
    Schema s;
    for (const auto& t : targets) s.columns[t] = ColumnSpec{ColumnRole::Target, {}, {}};
    for (const auto& i : ignore) s.columns[i] = ColumnSpec{ColumnRole::Ignore, {}, {}};
    s.fallback = ColumnRole::Feature;
    return s;
}

Schema Schema::homogeneous(const std::vector<std::string>& targets, const std::vector<std::string>& header) {
    Schema s;
    std::set<std::string> target_set(targets.begin(), targets.end());
    for (const auto& t : targets) s.columns[t] = ColumnSpec{ColumnRole::Target, {}, {}};
    for (const auto& name : header) {
        auto at = name.rfind('@');
        if (at == std::string::npos || at == 0) continue;
        std::string task = name.substr(at + 1);
        if (target_set.count(task) == 0) continue;
        s.columns[name] = ColumnSpec{ColumnRole::TaskFeature, task, name.substr(0, at)};
    }
    s.fallback = ColumnRole::Ignore;
    return s;
}

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
    auto in = open_for_reading(path);
    return parse_header(in, path);
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
    auto in = open_for_reading(path);
    const auto header = parse_header(in, path);
    const std::set<std::string> header_set(header.begin(), header.end());
    for (const auto& [name, spec] : schema.columns) {
        if (header_set.count(name) == 0) {
            throw ValidationError(path.string() + ": schema column '" + name + "' not in header");
        }
    }

    std::vector<ColumnSpec> roles;
    for (const auto& name : header) {
        auto it = schema.columns.find(name);
        if (it != schema.columns.end()) {
            roles.push_back(it->second);
        } else if (schema.fallback) {
            roles.push_back(ColumnSpec{*schema.fallback, {}, {}});
        } else {
            throw ValidationError(path.string() + ": column '" + name + "' has no role in the schema");
        }
    }

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        auto cells = split_row(line);
        if (cells.size() != header.size()) {
            throw ValidationError(path.string() + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(header.size()));
        }
        std::vector<double> values(cells.size(), 0.0);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (roles[c].role == ColumnRole::Ignore) continue;
            values[c] = parse_cell(cells[c], line_no, header[c]);
        }
        rows.push_back(std::move(values));
    }

    std::vector<std::size_t> feature_cols, target_cols;
    std::vector<std::string> feature_names, target_names;
    // task name -> feature name -> column
    std::map<std::string, std::map<std::string, std::size_t>> slab_cols;
    std::vector<std::string> slab_feature_order;
    for (std::size_t c = 0; c < header.size(); ++c) {
        switch (roles[c].role) {
            case ColumnRole::Feature:
                feature_cols.push_back(c);
                feature_names.push_back(header[c]);
                break;
            case ColumnRole::Target:
                target_cols.push_back(c);
                target_names.push_back(header[c]);
                break;
            case ColumnRole::TaskFeature: {
                const auto& f = roles[c].feature;
                if (std::find(slab_feature_order.begin(), slab_feature_order.end(), f) ==
                    slab_feature_order.end()) {
                    slab_feature_order.push_back(f);
                }
                slab_cols[roles[c].task][f] = c;
                break;
            }
            case ColumnRole::Ignore:
                break;
        }
    }
    if (target_cols.empty()) throw ValidationError(path.string() + ": no target columns");
    if (feature_cols.empty() && slab_cols.empty()) throw ValidationError(path.string() + ": no feature columns");

    const auto n = static_cast<Eigen::Index>(rows.size());
    auto gather = [&](const std::vector<std::size_t>& cols) {
        Eigen::MatrixXd m(n, static_cast<Eigen::Index>(cols.size()));
        for (Eigen::Index r = 0; r < n; ++r) {
            for (std::size_t k = 0; k < cols.size(); ++k) {
                m(r, static_cast<Eigen::Index>(k)) = rows[static_cast<std::size_t>(r)][cols[k]];
            }
        }
        return m;
    };

    std::vector<Eigen::MatrixXd> slabs;
    if (!slab_cols.empty()) {
        if (!feature_cols.empty()) {
            throw ValidationError(path.string() + ": mixing shared and per-task features is not supported");
        }
        for (const auto& t : target_names) {
            auto it = slab_cols.find(t);
            if (it == slab_cols.end()) throw ValidationError(path.string() + ": no feature slab for target '" + t + "'");
            std::vector<std::size_t> cols;
            for (const auto& f : slab_feature_order) {
                auto fc = it->second.find(f);
                if (fc == it->second.end()) {
                    throw ValidationError(path.string() + ": missing column '" + f + "@" + t + "'");
                }
                cols.push_back(fc->second);
            }
            slabs.push_back(gather(cols));
        }
        feature_names = slab_feature_order;
    }

    return Dataset(gather(feature_cols), gather(target_cols), std::move(feature_names),
                   std::move(target_names), std::move(slabs));
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");

    std::vector<std::string> header;
    std::vector<const Eigen::MatrixXd*> blocks;
    if (dataset.has_shared_features()) {
        header = dataset.feature_names();
        blocks.push_back(&dataset.features());
    }
    for (std::size_t t = 0; t < dataset.per_task_features().size(); ++t) {
        for (const auto& f : dataset.feature_names()) header.push_back(f + "@" + dataset.target_names()[t]);
        blocks.push_back(&dataset.per_task_features()[t]);
    }
    for (const auto& t : dataset.target_names()) header.push_back(t);
    blocks.push_back(&dataset.targets());

    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (Eigen::Index r = 0; r < dataset.samples(); ++r) {
        bool first = true;
        for (const auto* block : blocks) {
            for (Eigen::Index c = 0; c < block->cols(); ++c) {
                out << (first ? "" : ",") << format_double((*block)(r, c));
                first = false;
            }
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Centered center(const Dataset& dataset) {
    ColumnMeans means;
    means.features = column_means(dataset.features());
    means.targets = column_means(dataset.targets());
    for (const auto& slab : dataset.per_task_features()) means.per_task_features.push_back(column_means(slab));

    std::vector<std::string> constant;
    Eigen::MatrixXd x = subtract(dataset.features(), means.features, dataset.feature_names(), &constant);
    std::vector<Eigen::MatrixXd> slabs;
    for (std::size_t t = 0; t < dataset.per_task_features().size(); ++t) {
        std::vector<std::string> names;
        for (const auto& f : dataset.feature_names()) names.push_back(f + "@" + dataset.target_names()[t]);
        slabs.push_back(subtract(dataset.per_task_features()[t], means.per_task_features[t], names, &constant));
    }
    Eigen::MatrixXd y = subtract(dataset.targets(), means.targets, dataset.target_names(), &constant);

    return Centered{Dataset(std::move(x), std::move(y), dataset.feature_names(), dataset.target_names(),
                            std::move(slabs)),
                    std::move(means), std::move(constant)};
}

Dataset center_with(const Dataset& dataset, const ColumnMeans& means) {
    if (means.per_task_features.size() != dataset.per_task_features().size()) {
        throw ValidationError("centering means do not match the number of feature slabs");
    }
    Eigen::MatrixXd x = subtract(dataset.features(), means.features, dataset.feature_names(), nullptr);
    std::vector<Eigen::MatrixXd> slabs;
    for (std::size_t t = 0; t < dataset.per_task_features().size(); ++t) {
        slabs.push_back(subtract(dataset.per_task_features()[t], means.per_task_features[t], {}, nullptr));
    }
    Eigen::MatrixXd y = subtract(dataset.targets(), means.targets, dataset.target_names(), nullptr);
    return Dataset(std::move(x), std::move(y), dataset.feature_names(), dataset.target_names(), std::move(slabs));
}

std::vector<ReducedTask> apply_partition(const Dataset& dataset, const AggregationResult& result) {
    const auto& tasks = result.task_partition;
    if (tasks.universe() != static_cast<std::size_t>(dataset.task_count())) {
        throw ValidationError("task partition covers " + std::to_string(tasks.universe()) +
                              " tasks, dataset has " + idx(dataset.task_count()));
    }
    if (result.feature_partitions.size() != tasks.size()) {
        throw ValidationError("result has " + std::to_string(result.feature_partitions.size()) +
                              " feature partitions for " + std::to_string(tasks.size()) + " task clusters");
    }
    std::vector<ReducedTask> out;
    out.reserve(tasks.size());
    for (std::size_t c = 0; c < tasks.size(); ++c) {
        const auto& members = tasks[c];
        const auto& fp = result.feature_partitions[c];
        if (fp.universe() != static_cast<std::size_t>(dataset.feature_count())) {
            throw ValidationError("feature partition " + std::to_string(c) + " covers " +
                                  std::to_string(fp.universe()) + " features, dataset has " +
                                  idx(dataset.feature_count()));
        }
        Eigen::MatrixXd x;
        if (dataset.has_per_task_features()) {
            x = Eigen::MatrixXd::Zero(dataset.samples(), dataset.feature_count());
            for (std::size_t t : members) x += dataset.per_task_features()[t];
            x /= static_cast<double>(members.size());
        } else {
            x = dataset.features();
        }
        out.push_back(ReducedTask{members, mean_of_columns(dataset.targets(), members), aggregate_columns(x, fp)});
    }
    return out;
}

}  // namespace taskagg
