#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace densedyn::cli {

/// curve, lld, pca2d, trajectory, corr, varmap
const std::vector<std::string>& plot_names();

/// SVG text for one figure from the tables in `analysis_dir`. Unknown names throw std::invalid_argument.
std::string render_plot(const std::filesystem::path& analysis_dir, const std::string& which);

}  // namespace densedyn::cli
