#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctap/model.hpp"
#include "ctap/observables.hpp"
#include "ctap/oracle.hpp"

namespace ctap {

enum class RunMode { Stochastic, Oracle, Both };
enum class OutputFormat { Csv, Json };

std::string to_string(RunMode mode);
std::string to_string(OutputFormat format);
RunMode parse_run_mode(const std::string& text);
OutputFormat parse_output_format(const std::string& text);

namespace exit_code {
inline constexpr int success = 0;
inline constexpr int validation = 2;
inline constexpr int divergence_limit = 3;
inline constexpr int io = 4;
}  // namespace exit_code

inline constexpr const char* code_version = "ctap-positive-p 1.0.0";

struct RunConfig {
    ModelParams model;
    SimParams sim;
    OracleOptions oracle;
    RunMode mode = RunMode::Stochastic;
    std::string output_path = "ctap";
    OutputFormat format = OutputFormat::Csv;
    unsigned workers = 0;
    std::optional<int> sample_count;  // uniform grid request, consumed by finalize()

    bool operator==(const RunConfig&) const = default;
};

/// Syntax or value error in a config file; line is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& message, int line);
    int line() const { return line_; }

private:
    int line_;
};

class ValidationFailure : public std::runtime_error {
public:
    explicit ValidationFailure(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// Values given on the command line; each set field replaces the file value.
struct ConfigOverrides {
    std::optional<std::string> state, integrator;
    std::optional<double> chi, omega, t_p, e2, dt, initial_phase;
    std::optional<std::int64_t> n_total, n_traj, n_batches;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode, output, format;
    std::optional<unsigned> workers;
    std::optional<int> samples;
};

/// Parses "key = value" lines grouped under [model], [sim], [oracle] and [output].
/// '#' starts a comment. Unknown sections or keys and malformed values are ConfigErrors.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_text(const std::string& text);

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides);

/// Materialises the sample grid on the dt lattice. Throws ConfigError on bad sample times.
void finalize(RunConfig& config);

/// Violations of model/sim constraints plus mode-specific ones (oracle atom cap).
ValidationReport validate_config(const RunConfig& config);

/// Parse, override, finalize and validate. Throws ConfigError or ValidationFailure.
RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});
RunConfig load_config_text(const std::string& text, const ConfigOverrides& overrides = {});

/// Config text that parses back to an equal RunConfig.
std::string write_config(const RunConfig& config);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

void write_series_csv(std::ostream& out, const WitnessSeries& series);
void write_series_json(std::ostream& out, const WitnessSeries& series);

struct RunOutputs {
    std::vector<std::filesystem::path> files;
    std::int64_t n_diverged = 0;
    double diverged_fraction = 0.0;
};

/// Executes the configured mode(s), writing series files, an agreement report (Both
/// mode) and a manifest next to config.output_path. Returns an exit_code value.
int run(const RunConfig& config, std::ostream& log, RunOutputs* outputs = nullptr);

}  // namespace ctap
