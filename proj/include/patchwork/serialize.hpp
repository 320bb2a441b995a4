#pragma once

#include <string>

#include "patchwork/kernels.hpp"
#include "patchwork/model.hpp"
#include "patchwork/partition.hpp"
#include "patchwork/simulate.hpp"

#include <json.hpp>

namespace patchwork {

// JSON forms used by the model bundle, the CLI config files and reports.
// Kernel: {"family": "se"|"exp", "tau": ..., "rho": ..., "noise_var": ...}

nlohmann::json kernel_to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const nlohmann::json& j);

nlohmann::json hyperparams_to_json(const HyperParams& params);
HyperParams hyperparams_from_json(const nlohmann::json& j);

nlohmann::json tree_to_json(const SpatialTree& tree);
SpatialTree tree_from_json(const nlohmann::json& j);

nlohmann::json simspec_to_json(const SimSpec& spec);
SimSpec simspec_from_json(const nlohmann::json& j);

// Fit summary (sizes, timings, optimizer trace) for logs and reports.
nlohmann::json model_info_json(const PatchworkModel& model);

}  // namespace patchwork
