#pragma once

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <utility>

#include "reglearn/outer.hpp"

namespace reglearn::io {

/// Checkpoint document {widths, activation, layers: [{A: row-major, b}]}.
nlohmann::json weights_to_json(const mlp::Architecture& arch, const mlp::WeightVector& w);
std::pair<mlp::Architecture, mlp::WeightVector> weights_from_json(const nlohmann::json& j);

/// Dataset document {mesh: {N}, problem: {f, g}, pairs: [{z_hat, u_hat}]}.
/// `f` is a number when the source is constant, otherwise one value per cell.
/// Groups are reconstructed as uniform blocks from the u_hat length; bounds
/// are not part of the document and come from the caller.
nlohmann::json dataset_to_json(const outer::DataSet& data);
outer::DataSet dataset_from_json(const nlohmann::json& j, const fem1d::Bounds& bounds);

nlohmann::json report_to_json(const outer::TrainReport& report,
                              const mlp::Architecture& arch);

/// Two-column CSV "step,misfit_percent" with LF endings and '.' decimals.
std::string misfit_csv(const outer::TrainReport& report);

nlohmann::json solution_to_json(const inner::InnerSolution& sol);

void save_json(const nlohmann::json& j, const std::string& path);
nlohmann::json load_json(const std::string& path);

}  // namespace reglearn::io
