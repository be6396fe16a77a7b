#pragma once

#include <nlohmann/json.hpp>

#include "nesy/data.hpp"

namespace nesy::codec {

nlohmann::json schema_to_json(const FeatureSchema& s);
FeatureSchema schema_from_json(const nlohmann::json& j);
nlohmann::json features_to_json(const FeatureVector& f);
FeatureVector features_from_json(const nlohmann::json& j);

}  // namespace nesy::codec
