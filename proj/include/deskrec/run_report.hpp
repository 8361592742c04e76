#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "deskrec/gateway.hpp"

namespace deskrec {

// Outcome of one pipeline unit (a window, a region description, a corrector pass...).
struct UnitStatus {
  std::string stage;    // "df_proposer", "difff_descriptor", ...
  std::string subject;  // "0-9", "3_1", ...
  std::string status;   // ok | failed | fallback | skipped
  int attempts = 0;
  std::string message;
};

struct Flag {
  std::string stage;
  std::string subject;
  std::string message;
};

struct RunReport {
  std::string video_id;
  std::string method;
  std::string status = "ok";  // ok | failed
  std::string error;
  json config = json::object();
  std::vector<UnitStatus> units;
  std::vector<Flag> flags;
  GatewayStats stats;
  std::vector<RequestRecord> requests;

  void unit(std::string stage, std::string subject, std::string status, int attempts = 0,
            std::string message = {});
  void flag(std::string stage, std::string subject, std::string message);
  void capture(const Gateway& gateway);  // stats + request log

  json to_json() const;
};

}  // namespace deskrec
