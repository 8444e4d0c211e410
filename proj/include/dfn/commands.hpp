#ifndef DFN_COMMANDS_HPP
#define DFN_COMMANDS_HPP

#include "dfn/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dfn {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
    kExitSuccess = 0,
    kExitValidationFailure = 1,
    kExitRuntimeFailure = 2,
};

// Output directory: explicit flag, else $DFN_OUTPUT_DIR, else none (stdout only).
std::optional<std::string> resolve_output_dir(const std::optional<std::string>& flag);

struct SimulateOptions {
    std::optional<double> horizon;
    std::optional<double> dt;
    std::optional<std::string> out_dir;
    int every = 1;  // CSV row stride
};

struct ResilienceOptions {
    std::optional<std::vector<double>> alphas;
    std::optional<int> samples;
    std::optional<std::uint64_t> seed;
    std::optional<double> horizon;
    unsigned jobs = 0;
    std::optional<std::string> out_dir;
};

struct LimitFlowOptions {
    double from = 0.0;
    double to = 2.0;
    int steps = 41;  // rows, endpoints included
    unsigned jobs = 0;
    std::optional<std::string> out_dir;
};

// Each command writes its primary document (JSON or CSV) to `out`, files and
// a run manifest to the output directory when one is set, and returns an
// ExitCode. Failures are reported as a JSON object {"error": ...} on `out`.
int cmd_validate(const std::string& scenario_path, std::ostream& out);
int cmd_simulate(const std::string& scenario_path, const SimulateOptions& opt, std::ostream& out);
int cmd_mincut(const std::string& scenario_path, std::ostream& out);
int cmd_resilience(const std::string& scenario_path, const ResilienceOptions& opt, std::ostream& out);
int cmd_limitflow(const std::string& scenario_path, const LimitFlowOptions& opt, std::ostream& out);

// Building blocks, exposed for tests.
nlohmann::json validation_report(const ScenarioDocument& doc);
nlohmann::json resilience_to_json(const Scenario& s, const ResilienceReport& r);
std::string trajectory_csv(const Scenario& s, const Trajectory<double>& traj, int every = 1);
std::uint64_t fnv1a64(const std::string& bytes);
std::string format_number(double x);

}  // namespace dfn

#endif  // DFN_COMMANDS_HPP
