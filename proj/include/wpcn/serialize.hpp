#pragma once

#include <string>

#include <json.hpp>

#include "wpcn/scheduler.hpp"
#include "wpcn/selection.hpp"

namespace wpcn {

nlohmann::json instance_to_json(const NetworkInstance& inst);
NetworkInstance instance_from_json(const nlohmann::json& j);

NetworkInstance load_instance(const std::string& path);
void save_instance(const NetworkInstance& inst, const std::string& path);

nlohmann::json schedule_to_json(const Schedule& s);
nlohmann::json selection_to_json(const SelectionResult& r);
nlohmann::json residuals_to_json(const ResidualReport& r);

}  // namespace wpcn
