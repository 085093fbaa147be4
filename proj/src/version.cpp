#include "ctxdistill/version.hpp"

#include <cstdio>

#include "ctxdistill/rng.hpp"

namespace ctxdistill {

std::string config_hash(const nlohmann::json& config) {
  // nlohmann objects iterate in sorted key order, so dump() is canonical.
  std::uint64_t h = fnv1a64(config.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

nlohmann::json file_header(const nlohmann::json& config) {
  return {{"meta",
           {{"tool", "ctxdistill"},
            {"version", kVersion},
            {"config_hash", config_hash(config)}}}};
}

bool is_file_header(const nlohmann::json& record) {
  return record.is_object() && record.contains("meta");
}

}  // namespace ctxdistill
