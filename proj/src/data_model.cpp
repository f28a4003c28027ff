#include "absorbkit/data_model.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace absorbkit {

std::string atlas_name(Atlas a) {
    switch (a) {
        case Atlas::Cortical: return "cortical";
        case Atlas::Subcortical: return "subcortical";
        case Atlas::Brainstem: return "brainstem";
        case Atlas::Cerebellar: return "cerebellar";
    }
    return "unknown";
}

RoiRegistry::RoiRegistry(std::vector<RoiEntry> entries) : entries_(std::move(entries)) {
    if (static_cast<int>(entries_.size()) != kTotal) {
        throw DataError("BadRegistry", "registry must hold exactly 498 entries, got " +
                                           std::to_string(entries_.size()));
    }
    std::array<int, 4> counts{0, 0, 0, 0};
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].roi_id != static_cast<int>(i) + 1) {
            throw DataError("BadRegistry", "roi_ids must be contiguous starting at 1");
        }
        counts[static_cast<int>(entries_[i].atlas)]++;
    }
    if (counts[0] != kCortical || counts[1] != kSubcortical || counts[2] != kBrainstem ||
        counts[3] != kCerebellar) {
        throw DataError("BadRegistry", "atlas partition must be 400/32/56/10");
    }
}

const RoiEntry& RoiRegistry::entry(int roi_id) const {
    if (!contains(roi_id)) {
        throw DataError("UnknownRoiId", "roi_id " + std::to_string(roi_id) + " not in registry");
    }
    return entries_[static_cast<std::size_t>(roi_id - 1)];
}

int RoiRegistry::count(Atlas a) const {
    int n = 0;
    for (const auto& e : entries_) n += (e.atlas == a) ? 1 : 0;
    return n;
}

RoiRegistry make_default_registry() {
    std::vector<RoiEntry> entries;
    entries.reserve(RoiRegistry::kTotal);
    int id = 1;
    auto add = [&](Atlas atlas, int count, const char* prefix, const char* tag) {
        for (int i = 1; i <= count; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%03d", prefix, i);
            entries.push_back(RoiEntry{id++, name, atlas, tag});
        }
    };
    add(Atlas::Cortical, RoiRegistry::kCortical, "cortical", "schaefer400");
    add(Atlas::Subcortical, RoiRegistry::kSubcortical, "subcortical", "tian32");
    add(Atlas::Brainstem, RoiRegistry::kBrainstem, "brainstem", "bianciardi54");
    add(Atlas::Cerebellar, RoiRegistry::kCerebellar, "cerebellar", "mdtb10");
    return RoiRegistry(std::move(entries));
}

std::string condition_name(Condition c) {
    switch (c) {
        case Condition::J1: return "J1";
        case Condition::J2: return "J2";
        case Condition::J3: return "J3";
        case Condition::J4: return "J4";
        case Condition::J5: return "J5";
        case Condition::J6: return "J6";
        case Condition::J7: return "J7";
        case Condition::J8: return "J8";
        case Condition::Access: return "access";
        case Condition::Afterglow: return "afterglow";
        case Condition::Counting: return "counting";
        case Condition::Memory: return "memory";
    }
    return "unknown";
}

Condition parse_condition(const std::string& s) {
    static const std::unordered_map<std::string, Condition> table = {
        {"J1", Condition::J1}, {"J2", Condition::J2}, {"J3", Condition::J3},
        {"J4", Condition::J4}, {"J5", Condition::J5}, {"J6", Condition::J6},
        {"J7", Condition::J7}, {"J8", Condition::J8},
        {"access", Condition::Access}, {"afterglow", Condition::Afterglow},
        {"counting", Condition::Counting}, {"memory", Condition::Memory},
    };
    auto it = table.find(s);
    if (it == table.end()) throw DataError("UnknownCondition", "unrecognized condition '" + s + "'");
    return it->second;
}

bool is_meditative(Condition c) {
    return static_cast<int>(c) <= static_cast<int>(Condition::J8);
}

void Dataset::validate(const RoiRegistry& registry) const {
    if (features.rows() != static_cast<Index>(meta.size())) {
        throw DataError("RowMetaMismatch", "feature rows and metadata length differ");
    }
    if (features.cols() != static_cast<Index>(feature_ids.size())) {
        throw DataError("ColumnIdMismatch", "feature columns and feature_ids length differ");
    }
    for (int id : feature_ids) {
        if (!registry.contains(id)) {
            throw DataError("UnknownRoiId", "feature column roi_id " + std::to_string(id));
        }
    }
    if (!features.allFinite()) {
        throw DataError("NonNumericValue", "dataset contains non-finite values");
    }
    std::unordered_set<std::string> seen;
    std::unordered_map<std::string, int> case_subjects;
    for (const auto& m : meta) {
        if (!seen.insert(m.sample_id).second) {
            throw DataError("DuplicateSampleId", "sample_id '" + m.sample_id + "'");
        }
        if (m.cohort == Cohort::Case) case_subjects[m.subject_id]++;
    }
    if (case_subjects.size() > 1) {
        throw DataError("MultipleCaseSubjects", "case cohort must contain exactly one subject");
    }
}

Contrast::Contrast(std::string name, std::set<Condition> positive, std::set<Condition> negative)
    : name_(std::move(name)), positive_(std::move(positive)), negative_(std::move(negative)) {
    if (positive_.empty() || negative_.empty()) {
        throw ConfigError("EmptyContrastSide", "contrast '" + name_ + "' has an empty side");
    }
    for (Condition c : positive_) {
        if (negative_.count(c)) {
            throw ConfigError("OverlappingContrast",
                              "contrast '" + name_ + "' lists " + condition_name(c) + " on both sides");
        }
    }
}

std::string Contrast::dir_name() const {
    std::string out = name_;
    for (char& ch : out) {
        if (ch == ' ' || ch == '/' || ch == '\\') ch = '_';
    }
    return out;
}

std::vector<Contrast> default_contrasts() {
    const std::set<Condition> all_j = {Condition::J1, Condition::J2, Condition::J3,
                                       Condition::J4, Condition::J5, Condition::J6};
    const std::array<Condition, 6> js = {Condition::J1, Condition::J2, Condition::J3,
                                         Condition::J4, Condition::J5, Condition::J6};
    std::vector<Contrast> out;
    out.emplace_back("ACAM-J vs Control", all_j,
                     std::set<Condition>{Condition::Counting, Condition::Memory});
    out.emplace_back("ACAM-J vs Counting", all_j, std::set<Condition>{Condition::Counting});
    for (int i = 0; i < 6; ++i) {
        out.emplace_back("ACAM-J" + std::to_string(i + 1) + " vs Counting",
                         std::set<Condition>{js[i]}, std::set<Condition>{Condition::Counting});
    }
    for (int i = 0; i < 6; ++i) {
        out.emplace_back("ACAM-J" + std::to_string(i + 1) + " vs Memory",
                         std::set<Condition>{js[i]}, std::set<Condition>{Condition::Memory});
    }
    for (int i = 0; i < 5; ++i) {
        out.emplace_back("ACAM-J" + std::to_string(i + 1) + " vs ACAM-J" + std::to_string(i + 2),
                         std::set<Condition>{js[i]}, std::set<Condition>{js[i + 1]});
    }
    out.emplace_back("ACAM-J1 vs ACAM-J6", std::set<Condition>{Condition::J1},
                     std::set<Condition>{Condition::J6});
    return out;
}

ContrastSelection select_contrast(const Dataset& ds, const Contrast& c) {
    std::vector<Index> rows;
    std::vector<int> labels;
    int n_pos = 0, n_neg = 0;
    for (Index i = 0; i < ds.n_samples(); ++i) {
        Condition cond = ds.meta[static_cast<std::size_t>(i)].condition;
        if (c.positive().count(cond)) {
            rows.push_back(i);
            labels.push_back(1);
            ++n_pos;
        } else if (c.negative().count(cond)) {
            rows.push_back(i);
            labels.push_back(0);
            ++n_neg;
        }
    }
    if (n_pos == 0) throw DataError("EmptyClass", "contrast '" + c.name() + "': positive side has no samples");
    if (n_neg == 0) throw DataError("EmptyClass", "contrast '" + c.name() + "': negative side has no samples");

    ContrastSelection sel;
    sel.data.feature_ids = ds.feature_ids;
    sel.data.features.resize(static_cast<Index>(rows.size()), ds.n_features());
    sel.data.meta.reserve(rows.size());
    sel.labels.resize(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        sel.data.features.row(static_cast<Index>(k)) = ds.features.row(rows[k]);
        sel.data.meta.push_back(ds.meta[static_cast<std::size_t>(rows[k])]);
        sel.labels[static_cast<Index>(k)] = labels[k];
    }
    return sel;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

int parse_roi_column(const std::string& header) {
    // roi_0001 .. roi_0498 (any zero padding accepted)
    if (header.rfind("roi_", 0) != 0) return -1;
    const std::string digits = header.substr(4);
    if (digits.empty()) return -1;
    int v = 0;
    for (char c : digits) {
        if (c < '0' || c > '9') return -1;
        v = v * 10 + (c - '0');
    }
    return v;
}

}  // namespace

Dataset load_feature_table(const std::string& path, const RoiRegistry& registry) {
    std::ifstream in(path);
    if (!in) throw DataError("FileNotFound", "cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("EmptyFile", "'" + path + "' has no header");
    const auto header = split_csv_line(line);

    static const std::array<const char*, 5> required = {"sample_id", "subject_id", "cohort",
                                                        "condition", "run_id"};
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < header.size(); ++i) pos[header[i]] = i;
    for (const char* col : required) {
        if (!pos.count(col)) throw DataError("MissingColumn", std::string("'") + col + "' in " + path);
    }

    std::vector<std::pair<std::size_t, int>> roi_cols;  // (column index, roi_id)
    for (std::size_t i = 0; i < header.size(); ++i) {
        const int roi = parse_roi_column(header[i]);
        if (roi > 0) {
            if (!registry.contains(roi)) {
                throw DataError("UnknownRoiId", "column '" + header[i] + "' in " + path);
            }
            roi_cols.emplace_back(i, roi);
        }
    }
    if (roi_cols.empty()) throw DataError("MissingColumn", "no roi_* feature columns in " + path);

    Dataset ds;
    ds.feature_ids.reserve(roi_cols.size());
    for (const auto& [col, roi] : roi_cols) ds.feature_ids.push_back(roi);

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("BadRow", path + ":" + std::to_string(line_no) + ": expected " +
                                          std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size()));
        }
        SampleMeta m;
        m.sample_id = fields[pos["sample_id"]];
        m.subject_id = fields[pos["subject_id"]];
        const std::string& cohort = fields[pos["cohort"]];
        if (cohort == "group") {
            m.cohort = Cohort::Group;
        } else if (cohort == "case") {
            m.cohort = Cohort::Case;
        } else {
            throw DataError("BadCohort", path + ":" + std::to_string(line_no) + ": '" + cohort + "'");
        }
        m.condition = parse_condition(fields[pos["condition"]]);
        bool ok = false;
        const double run = parse_double(fields[pos["run_id"]], ok);
        if (!ok || run < 1 || run != static_cast<int>(run)) {
            throw DataError("BadRunId", path + ":" + std::to_string(line_no));
        }
        m.run_id = static_cast<int>(run);
        m.segment_key = SampleMeta::make_segment_key(m.subject_id, m.condition);

        std::vector<double> row(roi_cols.size());
        for (std::size_t k = 0; k < roi_cols.size(); ++k) {
            const std::string& cell = fields[roi_cols[k].first];
            const double v = parse_double(cell, ok);
            if (!ok || !std::isfinite(v)) {
                throw DataError("NonNumericValue",
                                path + ": row " + std::to_string(line_no - 1) + ", column '" +
                                    header[roi_cols[k].first] + "' value '" + cell + "'");
            }
            row[k] = v;
        }
        rows.push_back(std::move(row));
        ds.meta.push_back(std::move(m));
    }

    ds.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(roi_cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            ds.features(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
        }
    }
    ds.validate(registry);
    return ds;
}

void save_feature_table(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("FileWriteError", "cannot write '" + path + "'");
    out << "sample_id,subject_id,cohort,condition,run_id";
    for (int roi : ds.feature_ids) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), ",roi_%04d", roi);
        out << buf;
    }
    out << "\n";
    for (Index i = 0; i < ds.n_samples(); ++i) {
        const auto& m = ds.meta[static_cast<std::size_t>(i)];
        out << m.sample_id << ',' << m.subject_id << ','
            << (m.cohort == Cohort::Group ? "group" : "case") << ',' << condition_name(m.condition)
            << ',' << m.run_id;
        for (Index j = 0; j < ds.n_features(); ++j) {
            out << ',' << format_double(ds.features(i, j));
        }
        out << "\n";
    }
}

CovariateTable load_covariates(const std::string& path, const Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw DataError("FileNotFound", "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("EmptyFile", "'" + path + "' has no header");
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "sample_id") {
        throw DataError("MissingColumn", "covariate CSV must start with 'sample_id'");
    }

    CovariateTable table;
    table.names.assign(header.begin() + 1, header.end());
    if (table.names.empty()) throw DataError("MissingColumn", "covariate CSV has no covariates");

    std::unordered_map<std::string, std::vector<double>> by_sample;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("BadRow", path + ":" + std::to_string(line_no));
        }
        std::vector<double> vals(table.names.size());
        for (std::size_t k = 0; k < table.names.size(); ++k) {
            bool ok = false;
            vals[k] = parse_double(fields[k + 1], ok);
            if (!ok || !std::isfinite(vals[k])) {
                throw DataError("NonNumericValue", path + ":" + std::to_string(line_no) +
                                                       " column '" + table.names[k] + "'");
            }
        }
        if (!by_sample.emplace(fields[0], std::move(vals)).second) {
            throw DataError("DuplicateSampleId", "covariate CSV repeats '" + fields[0] + "'");
        }
    }

    table.values.resize(ds.n_samples(), static_cast<Index>(table.names.size()));
    for (Index i = 0; i < ds.n_samples(); ++i) {
        const auto it = by_sample.find(ds.meta[static_cast<std::size_t>(i)].sample_id);
        if (it == by_sample.end()) {
            throw DataError("CovariateMismatch",
                            "no covariates for sample '" + ds.meta[static_cast<std::size_t>(i)].sample_id + "'");
        }
        for (std::size_t k = 0; k < it->second.size(); ++k) {
            table.values(i, static_cast<Index>(k)) = it->second[k];
        }
    }
    return table;
}

void save_covariates(const std::string& path, const Dataset& ds, const CovariateTable& cov) {
    if (cov.values.rows() != ds.n_samples()) {
        throw DataError("DimensionMismatch", "covariate rows do not match the dataset");
    }
    if (static_cast<Index>(cov.names.size()) != cov.values.cols()) {
        throw DataError("DimensionMismatch", "one name per covariate column required");
    }
    std::ofstream out(path);
    if (!out) throw DataError("FileWriteError", "cannot write '" + path + "'");
    out << "sample_id";
    for (const auto& name : cov.names) out << ',' << name;
    out << "\n";
    for (Index i = 0; i < ds.n_samples(); ++i) {
        out << ds.meta[static_cast<std::size_t>(i)].sample_id;
        for (Index j = 0; j < cov.values.cols(); ++j) {
            out << ',' << format_double(cov.values(i, j));
        }
        out << "\n";
    }
}

}  // namespace absorbkit
