#pragma once

// Built-in simulation designs. The JSON text of data/presets/*.json is
// compiled in through a header generated at configure time, so the fixture
// files stay the single source of the matrices.

#include "odfm/io.hpp"
#include "odfm/preset_data.hpp"

#include <string>
#include <vector>

namespace odfm {

inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : detail::kPresetSources) out.emplace_back(p.name);
  return out;
}

inline SimConfig preset(const std::string& name) {
  for (const auto& p : detail::kPresetSources)
    if (name == p.name) return sim_config_from_json(json::parse(p.text));
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "' (available: " + known + ")");
}

}  // namespace odfm
