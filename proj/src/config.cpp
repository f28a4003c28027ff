#include "absorbkit/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "absorbkit/data_model.hpp"

namespace absorbkit {

namespace {

[[noreturn]] void toml_fail(std::size_t line, const std::string& what) {
    throw ConfigError("TomlParse", "line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// strips a # comment that is not inside a quoted string
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
        if (c == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

int bracket_balance(const std::string& s) {
    bool quoted = false;
    int depth = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
        if (quoted) continue;
        if (c == '[') ++depth;
        if (c == ']') --depth;
    }
    return depth;
}

std::string parse_basic_string(const std::string& s, std::size_t line) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') toml_fail(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        char c = s[i];
        if (c == '\\') {
            if (i + 2 >= s.size()) toml_fail(line, "dangling escape");
            const char e = s[++i];
            switch (e) {
                case '"': c = '"'; break;
                case '\\': c = '\\'; break;
                case 'n': c = '\n'; break;
                case 't': c = '\t'; break;
                case 'r': c = '\r'; break;
                default: toml_fail(line, std::string("unknown escape \\") + e);
            }
        } else if (c == '"') {
            toml_fail(line, "unescaped quote inside string");
        }
        out.push_back(c);
    }
    return out;
}

bool valid_bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

nlohmann::json parse_scalar(const std::string& raw, std::size_t line) {
    const std::string v = trim(raw);
    if (v.empty()) toml_fail(line, "empty value");
    if (v.front() == '"') return parse_basic_string(v, line);
    if (v == "true") return true;
    if (v == "false") return false;
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    if (v == "-inf") return -std::numeric_limits<double>::infinity();

    long long iv = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), iv);
    if (ec == std::errc() && p == v.data() + v.size()) return iv;

    try {
        std::size_t used = 0;
        const double dv = std::stod(v, &used);
        if (used == v.size()) return dv;
    } catch (const std::exception&) {
    }
    toml_fail(line, "cannot parse value '" + v + "'");
}

std::vector<std::string> split_top_level(const std::string& s, std::size_t line) {
    std::vector<std::string> parts;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
        if (c == ',' && !quoted) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) toml_fail(line, "unterminated string in array");
    parts.push_back(cur);
    if (!parts.empty() && trim(parts.back()).empty()) parts.pop_back();  // trailing comma
    return parts;
}

nlohmann::json parse_value(const std::string& raw, std::size_t line) {
    const std::string v = trim(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') toml_fail(line, "unterminated array");
        nlohmann::json arr = nlohmann::json::array();
        const std::string inner = v.substr(1, v.size() - 2);
        if (trim(inner).empty()) return arr;
        for (const auto& part : split_top_level(inner, line)) {
            if (trim(part).empty()) toml_fail(line, "empty array element");
            arr.push_back(parse_scalar(part, line));
        }
        return arr;
    }
    return parse_scalar(v, line);
}

}  // namespace

nlohmann::json parse_toml(const std::string& text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;

    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = strip_comment(raw);
        const std::size_t start_line = line_no;

        // arrays may continue over multiple lines until brackets balance
        while (bracket_balance(line) > 0) {
            std::string more;
            if (!std::getline(in, more)) toml_fail(start_line, "unterminated array");
            ++line_no;
            line += " " + strip_comment(more);
        }
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') toml_fail(start_line, "malformed table header");
            const std::string path = trim(line.substr(1, line.size() - 2));
            if (path.empty()) toml_fail(start_line, "empty table name");
            table = &root;
            std::istringstream parts(path);
            std::string key;
            while (std::getline(parts, key, '.')) {
                key = trim(key);
                if (!valid_bare_key(key)) toml_fail(start_line, "bad table key '" + key + "'");
                nlohmann::json& next = (*table)[key];
                if (next.is_null()) next = nlohmann::json::object();
                if (!next.is_object()) toml_fail(start_line, "'" + key + "' is not a table");
                table = &next;
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) toml_fail(start_line, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!valid_bare_key(key)) toml_fail(start_line, "bad key '" + key + "'");
        if (table->contains(key)) toml_fail(start_line, "duplicate key '" + key + "'");
        (*table)[key] = parse_value(line.substr(eq + 1), start_line);
    }
    return root;
}

nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("FileNotFound", "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();

    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "toml") return parse_toml(buf.str());
    if (ext == "json") {
        try {
            return nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("JsonParse", std::string("in ") + path + ": " + e.what());
        }
    }
    throw ConfigError("BadExtension", "config must be .toml or .json, got " + path);
}

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("UnknownKey", "unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_selection(const nlohmann::json& j, SelectionConfig& cfg) {
    check_keys(j, {"prekeep_fraction", "rfe_step_fraction", "rfe_min_features", "rfe_delta",
                   "mi_bins", "rfe_threshold_mode", "rfe_importance_threshold",
                   "consensus_policy", "prior_roi_mask"},
               "[selection]");
    read(j, "prekeep_fraction", cfg.prekeep_fraction);
    read(j, "rfe_step_fraction", cfg.rfe_step_fraction);
    read(j, "rfe_min_features", cfg.rfe_min_features);
    read(j, "rfe_delta", cfg.rfe_delta);
    read(j, "mi_bins", cfg.mi_bins);
    read(j, "rfe_threshold_mode", cfg.rfe_threshold_mode);
    read(j, "rfe_importance_threshold", cfg.rfe_importance_threshold);
    if (j.contains("consensus_policy")) {
        cfg.consensus_policy = parse_policy(j.at("consensus_policy").get<std::string>());
    }
    read(j, "prior_roi_mask", cfg.prior_roi_mask);
}

void read_augment(const nlohmann::json& j, AugmentConfig& cfg) {
    check_keys(j, {"target_runs_per_segment", "k_cap", "noise_level", "retention_degree",
                   "interpolation_proportion", "perturb_originals"},
               "[augment]");
    read(j, "target_runs_per_segment", cfg.target_runs_per_segment);
    read(j, "k_cap", cfg.k_cap);
    read(j, "noise_level", cfg.noise_level);
    read(j, "retention_degree", cfg.retention_degree);
    read(j, "interpolation_proportion", cfg.interpolation_proportion);
    read(j, "perturb_originals", cfg.perturb_originals);
}

void read_models(const nlohmann::json& j, ModelSpec& spec) {
    check_keys(j, {"lr", "dt", "rf", "svm", "knn", "mlp"}, "[models]");
    if (j.contains("lr")) {
        const auto& m = j.at("lr");
        check_keys(m, {"c", "tol", "max_iter"}, "[models.lr]");
        read(m, "c", spec.lr.c);
        read(m, "tol", spec.lr.tol);
        read(m, "max_iter", spec.lr.max_iter);
    }
    if (j.contains("dt")) {
        const auto& m = j.at("dt");
        check_keys(m, {"max_depth", "min_samples_split"}, "[models.dt]");
        read(m, "max_depth", spec.dt.max_depth);
        read(m, "min_samples_split", spec.dt.min_samples_split);
    }
    if (j.contains("rf")) {
        const auto& m = j.at("rf");
        check_keys(m, {"n_trees", "max_depth", "mtry"}, "[models.rf]");
        read(m, "n_trees", spec.rf.n_trees);
        read(m, "max_depth", spec.rf.max_depth);
        read(m, "mtry", spec.rf.mtry);
    }
    if (j.contains("svm")) {
        const auto& m = j.at("svm");
        check_keys(m, {"c", "tol", "max_iter"}, "[models.svm]");
        read(m, "c", spec.svm.c);
        read(m, "tol", spec.svm.tol);
        read(m, "max_iter", spec.svm.max_iter);
    }
    if (j.contains("knn")) {
        const auto& m = j.at("knn");
        check_keys(m, {"k"}, "[models.knn]");
        read(m, "k", spec.knn.k);
    }
    if (j.contains("mlp")) {
        const auto& m = j.at("mlp");
        check_keys(m,
                   {"hidden1", "hidden2", "learning_rate", "beta1", "beta2", "eps", "max_epochs",
                    "batch_size", "val_fraction", "patience", "early_stopping"},
                   "[models.mlp]");
        read(m, "hidden1", spec.mlp.hidden1);
        read(m, "hidden2", spec.mlp.hidden2);
        read(m, "learning_rate", spec.mlp.learning_rate);
        read(m, "beta1", spec.mlp.beta1);
        read(m, "beta2", spec.mlp.beta2);
        read(m, "eps", spec.mlp.eps);
        read(m, "max_epochs", spec.mlp.max_epochs);
        read(m, "batch_size", spec.mlp.batch_size);
        read(m, "val_fraction", spec.mlp.val_fraction);
        read(m, "patience", spec.mlp.patience);
        read(m, "early_stopping", spec.mlp.early_stopping);
    }
}

nlohmann::json models_to_json(const ModelSpec& s) {
    return {
        {"lr", {{"c", s.lr.c}, {"tol", s.lr.tol}, {"max_iter", s.lr.max_iter}}},
        {"dt", {{"max_depth", s.dt.max_depth}, {"min_samples_split", s.dt.min_samples_split}}},
        {"rf", {{"n_trees", s.rf.n_trees}, {"max_depth", s.rf.max_depth}, {"mtry", s.rf.mtry}}},
        {"svm", {{"c", s.svm.c}, {"tol", s.svm.tol}, {"max_iter", s.svm.max_iter}}},
        {"knn", {{"k", s.knn.k}}},
        {"mlp",
         {{"hidden1", s.mlp.hidden1},
          {"hidden2", s.mlp.hidden2},
          {"learning_rate", s.mlp.learning_rate},
          {"beta1", s.mlp.beta1},
          {"beta2", s.mlp.beta2},
          {"eps", s.mlp.eps},
          {"max_epochs", s.mlp.max_epochs},
          {"batch_size", s.mlp.batch_size},
          {"val_fraction", s.mlp.val_fraction},
          {"patience", s.mlp.patience},
          {"early_stopping", s.mlp.early_stopping}}},
    };
}

}  // namespace

void PipelineConfig::validate() const {
    if (k < 2) throw ConfigError("BadK", "k must be >= 2, got " + std::to_string(k));
    if (ensemble_top_l < 1 || ensemble_top_l > static_cast<int>(kAllFamilies.size())) {
        throw ConfigError("BadTopL", "ensemble_top_l must be in 1..6");
    }
    if (permutation_iterations < 0) {
        throw ConfigError("BadIterations", "permutation_iterations must be >= 0");
    }
    if (importance_repeats < 1) {
        throw ConfigError("BadRepeats", "importance_repeats must be >= 1");
    }
    if (threads < 0) throw ConfigError("BadThreads", "threads must be >= 0");
    selection.validate();
    augment.validate();
    if (paths.group_csv.empty()) throw ConfigError("MissingPath", "paths.group_csv is required");
    if (paths.case_csv.empty()) throw ConfigError("MissingPath", "paths.case_csv is required");
    if (paths.out_dir.empty()) throw ConfigError("MissingPath", "paths.out_dir is required");
    if (residualize && paths.covariates_csv.empty()) {
        throw ConfigError("MissingPath", "residualize=true needs paths.covariates_csv");
    }

    const auto known = default_contrasts();
    auto check_contrast = [&](const std::string& name) {
        for (const auto& c : known) {
            if (c.name() == name) return;
        }
        throw ConfigError("UnknownContrast", "no default contrast named '" + name + "'");
    };
    for (const auto& name : contrasts) check_contrast(name);
    for (const auto& name : permutation_contrasts) check_contrast(name);
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"seed", "k", "ensemble_top_l", "selection", "augment", "models", "contrasts",
                "permutation_iterations", "permutation_contrasts", "full_null", "residualize",
                "grid_search", "selection_metric", "importance_repeats", "threads",
                "persist_fold_models", "paths"},
               "config root");
    PipelineConfig cfg;
    read(j, "seed", cfg.seed);
    read(j, "k", cfg.k);
    read(j, "ensemble_top_l", cfg.ensemble_top_l);
    read(j, "contrasts", cfg.contrasts);
    read(j, "permutation_iterations", cfg.permutation_iterations);
    read(j, "permutation_contrasts", cfg.permutation_contrasts);
    read(j, "full_null", cfg.full_null);
    read(j, "residualize", cfg.residualize);
    read(j, "grid_search", cfg.grid_search);
    if (j.contains("selection_metric")) {
        cfg.selection_metric = parse_selection_metric(j.at("selection_metric").get<std::string>());
    }
    read(j, "importance_repeats", cfg.importance_repeats);
    read(j, "threads", cfg.threads);
    read(j, "persist_fold_models", cfg.persist_fold_models);
    if (j.contains("selection")) read_selection(j.at("selection"), cfg.selection);
    if (j.contains("augment")) read_augment(j.at("augment"), cfg.augment);
    if (j.contains("models")) read_models(j.at("models"), cfg.models);
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        check_keys(p, {"group_csv", "case_csv", "covariates_csv", "out_dir"}, "[paths]");
        read(p, "group_csv", cfg.paths.group_csv);
        read(p, "case_csv", cfg.paths.case_csv);
        read(p, "covariates_csv", cfg.paths.covariates_csv);
        read(p, "out_dir", cfg.paths.out_dir);
    }
    cfg.models.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    nlohmann::json j = {
        {"seed", cfg.seed},
        {"k", cfg.k},
        {"ensemble_top_l", cfg.ensemble_top_l},
        {"contrasts", cfg.contrasts},
        {"permutation_iterations", cfg.permutation_iterations},
        {"permutation_contrasts", cfg.permutation_contrasts},
        {"full_null", cfg.full_null},
        {"residualize", cfg.residualize},
        {"grid_search", cfg.grid_search},
        {"selection_metric", selection_metric_name(cfg.selection_metric)},
        {"importance_repeats", cfg.importance_repeats},
        {"threads", cfg.threads},
        {"persist_fold_models", cfg.persist_fold_models},
        {"paths",
         {{"group_csv", cfg.paths.group_csv},
          {"case_csv", cfg.paths.case_csv},
          {"covariates_csv", cfg.paths.covariates_csv},
          {"out_dir", cfg.paths.out_dir}}},
        {"selection",
         {{"prekeep_fraction", cfg.selection.prekeep_fraction},
          {"rfe_step_fraction", cfg.selection.rfe_step_fraction},
          {"rfe_min_features", cfg.selection.rfe_min_features},
          {"rfe_delta", cfg.selection.rfe_delta},
          {"mi_bins", cfg.selection.mi_bins},
          {"rfe_threshold_mode", cfg.selection.rfe_threshold_mode},
          {"rfe_importance_threshold", cfg.selection.rfe_importance_threshold},
          {"consensus_policy", policy_name(cfg.selection.consensus_policy)},
          {"prior_roi_mask", cfg.selection.prior_roi_mask}}},
        {"augment",
         {{"target_runs_per_segment", cfg.augment.target_runs_per_segment},
          {"k_cap", cfg.augment.k_cap},
          {"noise_level", cfg.augment.noise_level},
          {"retention_degree", cfg.augment.retention_degree},
          {"interpolation_proportion", cfg.augment.interpolation_proportion},
          {"perturb_originals", cfg.augment.perturb_originals}}},
        {"models", models_to_json(cfg.models)},
    };
    return j;
}

void GeneratorSpec::validate() const {
    if (n_subjects < 2) throw ConfigError("InvalidSpec", "need at least 2 group subjects");
    if (runs_per_condition < 1) throw ConfigError("InvalidSpec", "runs_per_condition must be >= 1");
    if (n_rois < 1 || n_rois > RoiRegistry::kTotal) {
        throw ConfigError("InvalidSpec",
                          "n_rois must be in 1.." + std::to_string(RoiRegistry::kTotal));
    }
    for (int roi : informative_rois) {
        if (roi < 1 || roi > n_rois) {
            throw ConfigError("InvalidSpec",
                              "informative roi " + std::to_string(roi) + " outside 1.." +
                                  std::to_string(n_rois));
        }
    }
    if (effect_size < 0.0) throw ConfigError("InvalidSpec", "effect_size must be >= 0");
    if (within_subject_rho < 0.0 || within_subject_rho >= 1.0) {
        throw ConfigError("InvalidSpec", "within_subject_rho must be in [0, 1)");
    }
    if (case_j_runs.size() != 6) {
        throw ConfigError("InvalidSpec", "case_j_runs needs one entry per J1..J6");
    }
    for (int r : case_j_runs) {
        if (r < 1) throw ConfigError("InvalidSpec", "case_j_runs entries must be >= 1");
    }
    if (case_control_runs < 1) throw ConfigError("InvalidSpec", "case_control_runs must be >= 1");
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"n_subjects", "runs_per_condition", "n_rois", "informative_rois", "effect_size",
                "within_subject_rho", "seed", "include_case", "case_j_runs", "case_control_runs"},
               "generator spec");
    GeneratorSpec spec;
    read(j, "n_subjects", spec.n_subjects);
    read(j, "runs_per_condition", spec.runs_per_condition);
    read(j, "n_rois", spec.n_rois);
    read(j, "informative_rois", spec.informative_rois);
    read(j, "effect_size", spec.effect_size);
    read(j, "within_subject_rho", spec.within_subject_rho);
    read(j, "seed", spec.seed);
    read(j, "include_case", spec.include_case);
    read(j, "case_j_runs", spec.case_j_runs);
    read(j, "case_control_runs", spec.case_control_runs);
    spec.validate();
    return spec;
}

nlohmann::json generator_spec_to_json(const GeneratorSpec& spec) {
    return {
        {"n_subjects", spec.n_subjects},
        {"runs_per_condition", spec.runs_per_condition},
        {"n_rois", spec.n_rois},
        {"informative_rois", spec.informative_rois},
        {"effect_size", spec.effect_size},
        {"within_subject_rho", spec.within_subject_rho},
        {"seed", spec.seed},
        {"include_case", spec.include_case},
        {"case_j_runs", spec.case_j_runs},
        {"case_control_runs", spec.case_control_runs},
    };
}

}  // namespace absorbkit
