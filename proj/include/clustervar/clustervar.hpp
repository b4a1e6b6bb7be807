#pragma once

#include <string_view>

#include "clustervar/errors.hpp"
#include "clustervar/estimators.hpp"
#include "clustervar/experiment.hpp"
#include "clustervar/json.hpp"
#include "clustervar/simulation.hpp"

namespace clustervar {

inline constexpr std::string_view kVersion = "1.0.0";

}  // namespace clustervar
