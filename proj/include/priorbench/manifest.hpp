#pragma once

// Run manifest: the config a run was launched with, its seed, artifact format
// versions and output paths, stored in the same section/key text format as
// config files. Run config keys "a.b" are stored as section "cfg-a", key "b".

#include <map>
#include <string>

#include "priorbench/checkpoint.hpp"
#include "priorbench/config.hpp"

namespace priorbench {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct RunManifest {
  Config config;
  std::uint64_t seed = 0;
  std::string created;  // wall-clock timestamp, informational only
  std::map<std::string, std::string> versions;
  std::map<std::string, std::string> outputs;

  static std::map<std::string, std::string> default_versions() {
    return {{"priorbench", kArtifactVersion},
            {"checkpoint_format", std::to_string(kCheckpointVersion)},
            {"dataset_format", "1"},
            {"csv_schema", "1"}};
  }

  Config to_config() const {
    Config out;
    out.set("manifest.seed", std::to_string(seed));
    if (!created.empty()) out.set("manifest.created", created);
    for (const auto& [k, v] : versions) out.set("versions." + k, v);
    for (const auto& [k, v] : outputs) out.set("outputs." + k, v);
    for (const auto& [k, v] : config.values()) out.set("cfg-" + k, v);
    return out;
  }

  std::string to_text() const { return to_config().to_text(); }

  static RunManifest from_config(const Config& c) {
    RunManifest m;
    if (!c.has("manifest.seed")) throw ConfigError("manifest: missing field 'manifest.seed'");
    m.seed = c.get_u64("manifest.seed", 0);
    m.created = c.get_string("manifest.created", "");
    for (const auto& [full, value] : c.values()) {
      const auto dot = full.find('.');
      const std::string section = full.substr(0, dot);
      const std::string key = full.substr(dot + 1);
      if (section == "manifest") {
        if (key != "seed" && key != "created") throw ConfigError("manifest: unknown field '" + full + "'");
      } else if (section == "versions") {
        m.versions[key] = value;
      } else if (section == "outputs") {
        m.outputs[key] = value;
      } else if (section.rfind("cfg-", 0) == 0) {
        m.config.set(section.substr(4) + "." + key, value);
      } else {
        throw ConfigError("manifest: unknown section '" + section + "'");
      }
    }
    return m;
  }

  static RunManifest parse(std::string_view text, const std::string& source = "<manifest>") {
    return from_config(Config::parse(text, source));
  }

  bool operator==(const RunManifest&) const = default;
};

}  // namespace priorbench
