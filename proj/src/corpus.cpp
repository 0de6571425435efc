#include "shiftkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace shiftkit::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kRowSumTolerance = 1e-6;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.empty()) throw ValidationError("empty CSV file: " + path.string());
    return rows;
}

double parse_value(const std::string& s, const fs::path& path) {
    if (s == "nan" || s == "NaN") return kUndefined;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("bad numeric value '" + s + "' in " + path.string());
    }
}

void check_unique_ids(const std::vector<std::string>& ids, const std::string& context) {
    std::set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second)
            throw ValidationError("duplicate sample id '" + id + "' in " + context);
    }
}

}  // namespace

std::string role_name(SetRole role) {
    switch (role) {
        case SetRole::Train: return "train";
        case SetRole::Val: return "val";
        case SetRole::Test: return "test";
        case SetRole::OodCell: return "ood_cell";
    }
    return "ood_cell";
}

SetRole role_from_name(const std::string& name) {
    if (name == "train") return SetRole::Train;
    if (name == "val") return SetRole::Val;
    if (name == "test") return SetRole::Test;
    if (name == "ood_cell") return SetRole::OodCell;
    throw ValidationError("unknown set role: " + name);
}

ClassVocabulary::ClassVocabulary(std::vector<std::string> names,
                                 std::map<std::string, std::string> superclass_map)
    : names_(std::move(names)), superclass_map_(std::move(superclass_map)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].empty()) throw ValidationError("empty class name in vocabulary");
        if (!index_.emplace(names_[i], i).second)
            throw ValidationError("duplicate class name: " + names_[i]);
    }
    for (const auto& [cls, super] : superclass_map_) {
        if (!index_.count(cls))
            throw ValidationError("superclass map references unknown class: " + cls);
        if (super.empty()) throw ValidationError("empty superclass name for class: " + cls);
    }
}

std::size_t ClassVocabulary::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown class name: " + name);
    return it->second;
}

ClassVocabulary ClassVocabulary::superclass_vocab() const {
    std::vector<std::string> supers;
    std::set<std::string> seen;
    for (const auto& name : names_) {
        auto it = superclass_map_.find(name);
        if (it == superclass_map_.end())
            throw ValidationError("class has no superclass assignment: " + name);
        if (seen.insert(it->second).second) supers.push_back(it->second);
    }
    return ClassVocabulary(std::move(supers));
}

std::vector<std::size_t> ClassVocabulary::superclass_indices() const {
    const ClassVocabulary supers = superclass_vocab();
    std::vector<std::size_t> out(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i)
        out[i] = supers.index_of(superclass_map_.at(names_[i]));
    return out;
}

std::size_t FeatureTable::feature_index(const std::string& name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw ValidationError("unknown feature name: " + name);
    return static_cast<std::size_t>(it - feature_names.begin());
}

std::vector<double> FeatureTable::column(std::size_t f) const {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& row : values) out.push_back(row.at(f));
    return out;
}

std::size_t ConfidenceMatrix::predicted_class(std::size_t i) const {
    const auto& row = rows.at(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = c;  // ties keep the lowest index
    return best;
}

std::vector<std::size_t> ConfidenceMatrix::predictions() const {
    std::vector<std::size_t> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = predicted_class(i);
    return out;
}

const ConfidenceMatrix& LoadedSet::confidences_for(const std::string& tag) const {
    for (const auto& c : confidences)
        if (c.tag == tag) return c;
    throw ValidationError("set '" + labels.name + "' has no confidences tagged '" + tag + "'");
}

bool LoadedSet::has_confidences(const std::string& tag) const {
    for (const auto& c : confidences)
        if (c.tag == tag) return true;
    return false;
}

const LoadedSet& TestCellSet::set_named(const std::string& name) const {
    const LoadedSet* s = find_set(name);
    if (!s) throw ValidationError("no set named '" + name + "' in manifest");
    return *s;
}

const LoadedSet* TestCellSet::find_set(const std::string& name) const {
    for (const auto& s : sets)
        if (s.labels.name == name) return &s;
    return nullptr;
}

const LoadedSet* TestCellSet::find_role(SetRole role) const {
    for (const auto& s : sets)
        if (s.labels.role == role) return &s;
    return nullptr;
}

std::vector<const LoadedSet*> TestCellSet::ood_cells() const {
    std::vector<const LoadedSet*> out;
    for (const auto& s : sets)
        if (s.labels.role == SetRole::OodCell) out.push_back(&s);
    return out;
}

// ---------------------------------------------------------------------------

FeatureTable load_features_csv(const fs::path& path) {
    const auto rows = read_csv(path);
    const auto& header = rows.front();
    if (header.size() < 2 || header[0] != "sample_id")
        throw ValidationError("features CSV must start with a 'sample_id' header: " + path.string());

    FeatureTable table;
    table.feature_names.assign(header.begin() + 1, header.end());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != header.size())
            throw ValidationError("ragged row in " + path.string());
        table.sample_ids.push_back(cells[0]);
        std::vector<double> vals(cells.size() - 1);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            vals[c - 1] = parse_value(cells[c], path);
            if (std::isinf(vals[c - 1]))
                throw ValidationError("non-finite feature value for sample '" + cells[0] +
                                      "' in " + path.string());
        }
        table.values.push_back(std::move(vals));
    }
    check_unique_ids(table.sample_ids, path.string());
    return table;
}

ConfidenceMatrix load_confidences_csv(const fs::path& path, const ClassVocabulary& vocab,
                                      const std::string& tag) {
    const auto rows = read_csv(path);
    const auto& header = rows.front();
    if (header.size() != vocab.size() + 1 || header[0] != "sample_id")
        throw ValidationError("confidences CSV header must be sample_id + one column per class: " +
                              path.string());
    for (std::size_t c = 0; c < vocab.size(); ++c)
        if (header[c + 1] != vocab.name(c))
            throw ValidationError("confidence column '" + header[c + 1] +
                                  "' does not match vocabulary order in " + path.string());

    ConfidenceMatrix conf;
    conf.tag = tag;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != header.size())
            throw ValidationError("ragged row in " + path.string());
        conf.sample_ids.push_back(cells[0]);
        std::vector<double> vals(vocab.size());
        double sum = 0.0;
        for (std::size_t c = 0; c < vocab.size(); ++c) {
            vals[c] = parse_value(cells[c + 1], path);
            if (!std::isfinite(vals[c]) || vals[c] < -1e-9 || vals[c] > 1.0 + 1e-9)
                throw ValidationError("confidence outside [0,1] for sample '" + cells[0] +
                                      "' in " + path.string());
            sum += vals[c];
        }
        if (std::fabs(sum - 1.0) > kRowSumTolerance)
            throw ValidationError("confidence row for sample '" + cells[0] + "' sums to " +
                                  fmt_double(sum) + " (expected 1) in " + path.string());
        conf.rows.push_back(std::move(vals));
    }
    check_unique_ids(conf.sample_ids, path.string());
    return conf;
}

namespace {

LabeledSet load_labels_csv(const fs::path& path, const ClassVocabulary& vocab) {
    const auto rows = read_csv(path);
    const auto& header = rows.front();
    if (header.size() != 2 || header[0] != "sample_id" || header[1] != "label")
        throw ValidationError("labels CSV header must be 'sample_id,label': " + path.string());

    LabeledSet set;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != 2) throw ValidationError("ragged row in " + path.string());
        set.sample_ids.push_back(cells[0]);
        set.labels.push_back(vocab.index_of(cells[1]));
    }
    check_unique_ids(set.sample_ids, path.string());
    return set;
}

// Reorders `ids`-indexed rows to the order of `want`; throws if any id is missing.
template <typename Rows>
void align_to(const std::vector<std::string>& want, std::vector<std::string>& ids, Rows& rows,
              const std::string& what, const std::string& set_name) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
    Rows new_rows;
    new_rows.reserve(want.size());
    for (const auto& id : want) {
        auto it = pos.find(id);
        if (it == pos.end())
            throw ValidationError("missing " + what + " for sample '" + id + "' in set '" +
                                  set_name + "'");
        new_rows.push_back(rows[it->second]);
    }
    rows = std::move(new_rows);
    ids = want;
}

}  // namespace

TestCellSet load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open manifest: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("manifest parse error: " + std::string(e.what()));
    }
    const fs::path base = path.parent_path();

    if (!doc.contains("classes") || !doc["classes"].is_array())
        throw ValidationError("manifest missing 'classes' array");
    std::vector<std::string> names = doc["classes"].get<std::vector<std::string>>();
    std::map<std::string, std::string> supers;
    if (doc.contains("superclasses"))
        supers = doc["superclasses"].get<std::map<std::string, std::string>>();

    TestCellSet cells;
    cells.vocab = ClassVocabulary(std::move(names), std::move(supers));

    if (!doc.contains("sets") || !doc["sets"].is_array())
        throw ValidationError("manifest missing 'sets' array");
    std::set<std::string> set_names;
    for (const auto& js : doc["sets"]) {
        LoadedSet set;
        const std::string name = js.at("name").get<std::string>();
        if (!set_names.insert(name).second)
            throw ValidationError("duplicate set name in manifest: " + name);

        const fs::path labels_path = base / js.at("labels_csv").get<std::string>();
        if (!fs::exists(labels_path))
            throw ValidationError("missing labels file: " + labels_path.string());
        set.labels = load_labels_csv(labels_path, cells.vocab);
        set.labels.name = name;
        set.labels.role = role_from_name(js.at("role").get<std::string>());

        if (js.contains("features_csv") && !js["features_csv"].is_null()) {
            const fs::path fpath = base / js["features_csv"].get<std::string>();
            if (!fs::exists(fpath))
                throw ValidationError("missing features file: " + fpath.string());
            FeatureTable table = load_features_csv(fpath);
            align_to(set.labels.sample_ids, table.sample_ids, table.values, "features", name);
            set.features = std::move(table);
        }
        if (js.contains("confidences")) {
            std::set<std::string> tags;
            for (const auto& jc : js["confidences"]) {
                const std::string tag = jc.at("tag").get<std::string>();
                if (!tags.insert(tag).second)
                    throw ValidationError("duplicate confidence tag '" + tag + "' in set '" +
                                          name + "'");
                const fs::path cpath = base / jc.at("csv").get<std::string>();
                if (!fs::exists(cpath))
                    throw ValidationError("missing confidences file: " + cpath.string());
                ConfidenceMatrix conf = load_confidences_csv(cpath, cells.vocab, tag);
                align_to(set.labels.sample_ids, conf.sample_ids, conf.rows, "confidences", name);
                set.confidences.push_back(std::move(conf));
            }
        }
        cells.sets.push_back(std::move(set));
    }
    return cells;
}

void write_labels_csv(const LabeledSet& set, const ClassVocabulary& vocab, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "sample_id,label\n";
    for (std::size_t i = 0; i < set.size(); ++i)
        out << set.sample_ids[i] << ',' << vocab.name(set.labels[i]) << '\n';
}

void write_features_csv(const FeatureTable& table, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "sample_id";
    for (const auto& f : table.feature_names) out << ',' << f;
    out << '\n';
    for (std::size_t i = 0; i < table.rows(); ++i) {
        out << table.sample_ids[i];
        for (double v : table.values[i]) out << ',' << fmt_double(v);
        out << '\n';
    }
}

void write_confidences_csv(const ConfidenceMatrix& conf, const ClassVocabulary& vocab,
                           const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "sample_id";
    for (const auto& c : vocab.names()) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < conf.size(); ++i) {
        out << conf.sample_ids[i];
        for (double v : conf.rows[i]) out << ',' << fmt_double(v);
        out << '\n';
    }
}

void write_manifest(const TestCellSet& cells, const fs::path& path) {
    const fs::path base = path.parent_path();
    json doc;
    doc["classes"] = cells.vocab.names();
    if (cells.vocab.has_superclasses()) doc["superclasses"] = cells.vocab.superclass_map();
    doc["sets"] = json::array();
    for (const auto& set : cells.sets) {
        json js;
        js["name"] = set.labels.name;
        js["role"] = role_name(set.labels.role);
        const std::string stem = set.labels.name;
        js["labels_csv"] = stem + "_labels.csv";
        write_labels_csv(set.labels, cells.vocab, base / (stem + "_labels.csv"));
        if (set.features) {
            js["features_csv"] = stem + "_features.csv";
            write_features_csv(*set.features, base / (stem + "_features.csv"));
        }
        if (!set.confidences.empty()) {
            js["confidences"] = json::array();
            for (const auto& conf : set.confidences) {
                const std::string cname = stem + "_conf_" + conf.tag + ".csv";
                write_confidences_csv(conf, cells.vocab, base / cname);
                js["confidences"].push_back({{"tag", conf.tag}, {"csv", cname}});
            }
        }
        doc["sets"].push_back(std::move(js));
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> class_counts(const LabeledSet& set, const ClassVocabulary& vocab) {
    std::vector<std::size_t> counts(vocab.size(), 0);
    for (std::size_t label : set.labels) {
        if (label >= vocab.size())
            throw ValidationError("label index out of range in set '" + set.name + "'");
        ++counts[label];
    }
    return counts;
}

std::vector<std::size_t> aggregate_superclass_counts(const std::vector<std::size_t>& counts,
                                                     const ClassVocabulary& vocab) {
    if (counts.size() != vocab.size())
        throw ValidationError("counts size does not match vocabulary");
    const auto map = vocab.superclass_indices();
    std::vector<std::size_t> out(vocab.superclass_vocab().size(), 0);
    for (std::size_t i = 0; i < counts.size(); ++i) out[map[i]] += counts[i];
    return out;
}

ConfidenceMatrix aggregate_superclass_confidences(const ConfidenceMatrix& conf,
                                                  const ClassVocabulary& vocab) {
    const auto map = vocab.superclass_indices();
    const std::size_t n_super = vocab.superclass_vocab().size();
    ConfidenceMatrix out;
    out.tag = conf.tag;
    out.sample_ids = conf.sample_ids;
    out.rows.reserve(conf.rows.size());
    for (const auto& row : conf.rows) {
        if (row.size() != vocab.size())
            throw ValidationError("confidence row width does not match vocabulary");
        std::vector<double> merged(n_super, 0.0);
        for (std::size_t c = 0; c < row.size(); ++c) merged[map[c]] += row[c];
        out.rows.push_back(std::move(merged));
    }
    return out;
}

LabeledSet aggregate_superclass_labels(const LabeledSet& set, const ClassVocabulary& vocab) {
    const auto map = vocab.superclass_indices();
    LabeledSet out = set;
    for (auto& label : out.labels) label = map.at(label);
    return out;
}

}  // namespace shiftkit::corpus
