#pragma once

#include <string>
#include <vector>

namespace owd {

/// Merge per-run manifests and metric reports into an ablation table
/// (CSV + markdown) and loss/U-Recall curve plots under out_dir.
/// Throws SchemaError naming the path when a manifest is missing.
void write_comparison_report(const std::vector<std::string>& run_dirs,
                             const std::string& out_dir);

}  // namespace owd
