#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace agebif {

/// One verification record: the mathematical claim being checked, the
/// measured quantity, and the tolerance it was held against.
struct CheckRecord {
    std::string name;
    std::string claim;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    double seconds = 0.0;
};

struct RunReport {
    std::vector<CheckRecord> records;
    std::string config_echo;
    double total_seconds = 0.0;

    bool all_pass() const {
        for (const auto& r : records)
            if (!r.pass) return false;
        return true;
    }

    std::vector<std::string> failing_names() const {
        std::vector<std::string> out;
        for (const auto& r : records)
            if (!r.pass) out.push_back(r.name);
        return out;
    }
};

inline nlohmann::json to_json(const RunReport& report) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& r : report.records) {
        checks.push_back({{"name", r.name},
                          {"claim", r.claim},
                          {"pass", r.pass},
                          {"measured", r.measured},
                          {"tolerance", r.tolerance},
                          {"seconds", r.seconds}});
    }
    return nlohmann::json{{"checks", checks},
                          {"all_pass", report.all_pass()},
                          {"total_seconds", report.total_seconds},
                          {"config", report.config_echo}};
}

}  // namespace agebif
