#pragma once

#include "json.hpp"

#include "pmapcut/cutout.hpp"
#include "pmapcut/raster.hpp"
#include "pmapcut/synth.hpp"

// nlohmann::json conversions for the domain types. Decoding starts from the
// type's defaults and overrides the fields present; unknown fields raise
// InvalidArgument and wrongly typed ones nlohmann's type_error.

namespace pmapcut {

void to_json(nlohmann::json& j, const RectProposal& r);
void from_json(const nlohmann::json& j, RectProposal& r);

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

void to_json(nlohmann::json& j, const OracleNoise& n);
void from_json(const nlohmann::json& j, OracleNoise& n);

void to_json(nlohmann::json& j, const CutoutParams& p);
void from_json(const nlohmann::json& j, CutoutParams& p);

} // namespace pmapcut
