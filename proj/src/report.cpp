#include "absorbkit/report.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "absorbkit/common.hpp"

#include "json.hpp"

namespace absorbkit {

namespace {

constexpr std::array<const char*, 8> kColumns = {
    "Acc", "CK", "AUC", "Precision", "Recall/Sens.", "F1", "Specificity", "p-Value"};

// summary.json metric keys behind the printed column headers
constexpr std::array<const char*, 8> kKeys = {"Acc",    "CK", "AUC",         "Precision",
                                              "Recall", "F1", "Specificity", "p-Value"};

std::string cell(const nlohmann::json& metrics, const char* key) {
    if (!metrics.is_object() || !metrics.contains(key)) return "-";
    const nlohmann::json& v = metrics.at(key);
    double x = 0.0;
    if (v.is_number()) {
        x = v.get<double>();
    } else if (v.is_object() && v.contains("mean") && v.at("mean").is_number()) {
        x = v.at("mean").get<double>();
    } else {
        return "-";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", x);
    return buf;
}

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string render_report(const std::string& run_dir) {
    const std::string path = run_dir + "/summary.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("MissingSummary", "cannot read '" + path + "'");
    nlohmann::json summary;
    try {
        in >> summary;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("BadSummary", "'" + path + "': " + e.what());
    }

    struct Row {
        std::string name;
        std::vector<std::string> cells;
    };
    std::vector<Row> rows;
    auto add_row = [&rows](const std::string& name, const nlohmann::json& metrics) {
        Row r;
        r.name = name;
        for (const char* key : kKeys) r.cells.push_back(cell(metrics, key));
        rows.push_back(std::move(r));
    };

    if (summary.contains("contrasts")) {
        for (const nlohmann::json& block : summary.at("contrasts")) {
            std::string name = block.value("contrast", std::string("?"));
            if (block.value("residualized", false)) name += " (resid)";
            add_row(name, block.contains("case_test") ? block.at("case_test")
                                                      : nlohmann::json());
        }
    }
    if (summary.contains("overall")) add_row("Overall", summary.at("overall"));
    if (summary.contains("overall_residualized")) {
        add_row("Overall (resid)", summary.at("overall_residualized"));
    }

    std::size_t name_width = std::string("Contrast").size();
    for (const Row& r : rows) name_width = std::max(name_width, r.name.size());
    std::array<std::size_t, kColumns.size()> widths{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        widths[c] = std::string(kColumns[c]).size();
        for (const Row& r : rows) widths[c] = std::max(widths[c], r.cells[c].size());
    }

    std::ostringstream out;
    out << pad_right("Contrast", name_width);
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        out << "  " << pad_left(kColumns[c], widths[c]);
    }
    out << "\n";
    std::size_t total = name_width;
    for (std::size_t w : widths) total += 2 + w;
    out << std::string(total, '-') << "\n";

    const std::size_t n_contrasts =
        summary.contains("contrasts") ? summary.at("contrasts").size() : 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == n_contrasts) out << std::string(total, '-') << "\n";
        out << pad_right(rows[i].name, name_width);
        for (std::size_t c = 0; c < kColumns.size(); ++c) {
            out << "  " << pad_left(rows[i].cells[c], widths[c]);
        }
        out << "\n";
    }

    if (summary.contains("failed") && !summary.at("failed").empty()) {
        out << "\nFailed contrasts:\n";
        for (const nlohmann::json& f : summary.at("failed")) {
            out << "  " << f.get<std::string>() << "\n";
        }
    }
    return out.str();
}

}  // namespace absorbkit
