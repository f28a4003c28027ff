#ifndef ABSORBKIT_REPORT_HPP
#define ABSORBKIT_REPORT_HPP

#include <string>

namespace absorbkit {

/// Fixed-width metric grid for a finished run directory, one row per
/// contrast (residualized variants marked) plus overall means, with the
/// columns Acc, CK, AUC, Precision, Recall/Sens., F1, Specificity and
/// p-Value. Undefined cells render as "-"; failed contrasts are listed
/// under the grid. Reads <run_dir>/summary.json.
std::string render_report(const std::string& run_dir);

}  // namespace absorbkit

#endif
