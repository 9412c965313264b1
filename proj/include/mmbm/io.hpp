#pragma once

#include "mmbm/coupling.hpp"
#include "mmbm/model.hpp"
#include "mmbm/passage.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmbm {

/// Model document: {"phases": [...], "p": [...], "Q": [[...]], "mu": [...],
/// "sigma2": [...]}. `phases` is optional. Malformed documents raise
/// ConfigError; well-formed but invalid models raise the validation error.
MmbmParams model_from_json(const nlohmann::json& doc);
MmbmParams load_model_file(const std::filesystem::path& path);
nlohmann::json model_to_json(const MmbmParams& params);

/// Shortest decimal that still carries 17 significant digits.
std::string format_double(double x);

/// `epoch,layer,phase`
void write_ledger_csv(std::ostream& out, const EpochLedger& ledger, const PhaseSequence& phases,
                      const MmbmParams& params);
/// `epoch,layer,phase,value,interval_min`; interval_min is the minimum over the
/// interval ending at the epoch.
void write_skeleton_csv(std::ostream& out, const CoupledBundle& bundle, const MmbmParams& params);
/// `t,value,state` at every breakpoint; state is "+label" or "-label".
void write_path_csv(std::ostream& out, const SfpPath& path, const MmbmParams& params);

/// Passage report: {"n", "psi", "u", "riccati_residual", "quadratic_residual",
/// "iterations", "converged"} with row-major matrices.
void write_passage_solution(std::ostream& out, const PassageSolution& sol, int indent = 0);
void write_matrix(std::ostream& out, const Matrix& a);

}  // namespace mmbm
