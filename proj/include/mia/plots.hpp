#pragma once

#include <string>

#include "mia/audit.hpp"

namespace mia {

/// Datasets (rows) x families (columns), one <rect class="cell"> per grid
/// position, coloured on a blue-white-red scale symmetric about 0.
/// Positions without a delta are drawn grey and labelled n/a.
std::string delta_heatmap_svg(const AuditReport& report);

/// One <circle class="point"> per report cell at its AUC, grouped by
/// (dataset, family) along x, with a dashed chance line at 0.5.
std::string auc_scatter_svg(const AuditReport& report);

/// Signed diverging colour for v in [-limit, limit] as "#rrggbb".
std::string diverging_color(double v, double limit);

}  // namespace mia
