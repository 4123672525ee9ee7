#include "ctap/run_config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ctap/sde.hpp"

namespace ctap {

namespace {

std::string lowercase(std::string text) {
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
    return text;
}

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

}  // namespace

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Stochastic: return "stochastic";
        case RunMode::Oracle: return "oracle";
        case RunMode::Both: return "both";
    }
    return "stochastic";
}

std::string to_string(OutputFormat format) {
    return format == OutputFormat::Csv ? "csv" : "json";
}

RunMode parse_run_mode(const std::string& text) {
    const std::string v = lowercase(text);
    if (v == "stochastic") return RunMode::Stochastic;
    if (v == "oracle") return RunMode::Oracle;
    if (v == "both") return RunMode::Both;
    throw std::invalid_argument("unknown mode '" + text + "' (expected stochastic, oracle or both)");
}

OutputFormat parse_output_format(const std::string& text) {
    const std::string v = lowercase(text);
    if (v == "csv") return OutputFormat::Csv;
    if (v == "json") return OutputFormat::Json;
    throw std::invalid_argument("unknown format '" + text + "' (expected csv or json)");
}

ConfigError::ConfigError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
    std::string text = "invalid configuration:";
    for (const auto& v : violations) text += "\n  " + v;
    return text;
}

}  // namespace

ValidationFailure::ValidationFailure(std::vector<std::string> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

std::string format_double(double value) {
    std::array<char, 64> buffer{};
    const auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buffer.data(), end);
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value, int line) {
    T out{};
    const char* begin = value.data();
    const char* end = begin + value.size();
    if (!value.empty() && value.front() == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end || begin == end)
        throw ConfigError("invalid value '" + value + "' for key '" + key + "'", line);
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(out)) throw ConfigError("non-finite value for key '" + key + "'", line);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
    const std::string v = lowercase(value);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean '" + value + "' for key '" + key + "'", line);
}

template <typename F>
auto parse_enum(const std::string& key, const std::string& value, int line, F&& parser) {
    try {
        return parser(value);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(e.what()) + " for key '" + key + "'", line);
    }
}

std::vector<double> parse_list(const std::string& key, const std::string& value, int line) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item), line));
    if (out.empty()) throw ConfigError("empty list for key '" + key + "'", line);
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value, int line)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"model",
         {
             {"omega", [](RunConfig& c, auto& k, auto& v, int l) { c.model.omega = parse_number<double>(k, v, l); }},
             {"t_p", [](RunConfig& c, auto& k, auto& v, int l) { c.model.t_p = parse_number<double>(k, v, l); }},
             {"e2", [](RunConfig& c, auto& k, auto& v, int l) { c.model.e2 = parse_number<double>(k, v, l); }},
             {"chi", [](RunConfig& c, auto& k, auto& v, int l) { c.model.chi = parse_number<double>(k, v, l); }},
             {"n_total",
              [](RunConfig& c, auto& k, auto& v, int l) { c.model.n_total = parse_number<std::int64_t>(k, v, l); }},
             {"state",
              [](RunConfig& c, auto& k, auto& v, int l) { c.model.state_kind = parse_enum(k, v, l, parse_state_kind); }},
             {"initial_phase",
              [](RunConfig& c, auto& k, auto& v, int l) { c.model.initial_phase = parse_number<double>(k, v, l); }},
         }},
        {"sim",
         {
             {"dt", [](RunConfig& c, auto& k, auto& v, int l) { c.sim.dt = parse_number<double>(k, v, l); }},
             {"n_traj", [](RunConfig& c, auto& k, auto& v, int l) { c.sim.n_traj = parse_number<std::int64_t>(k, v, l); }},
             {"seed", [](RunConfig& c, auto& k, auto& v, int l) { c.sim.seed = parse_number<std::uint64_t>(k, v, l); }},
             {"n_batches",
              [](RunConfig& c, auto& k, auto& v, int l) { c.sim.n_batches = parse_number<std::int64_t>(k, v, l); }},
             {"samples", [](RunConfig& c, auto& k, auto& v, int l) { c.sample_count = parse_number<int>(k, v, l); }},
             {"sample_times", [](RunConfig& c, auto& k, auto& v, int l) { c.sim.sample_times = parse_list(k, v, l); }},
             {"divergence_threshold",
              [](RunConfig& c, auto& k, auto& v, int l) { c.sim.divergence_threshold = parse_number<double>(k, v, l); }},
             {"max_diverged_fraction",
              [](RunConfig& c, auto& k, auto& v, int l) { c.sim.max_diverged_fraction = parse_number<double>(k, v, l); }},
             {"noise_substeps",
              [](RunConfig& c, auto& k, auto& v, int l) { c.sim.noise_substeps = parse_number<int>(k, v, l); }},
             {"flip_noise_branch",
              [](RunConfig& c, auto& k, auto& v, int l) { c.sim.flip_noise_branch = parse_bool(k, v, l); }},
             {"integrator",
              [](RunConfig& c, auto& k, auto& v, int l) { c.sim.integrator = parse_enum(k, v, l, parse_integrator); }},
             {"workers", [](RunConfig& c, auto& k, auto& v, int l) { c.workers = parse_number<unsigned>(k, v, l); }},
         }},
        {"oracle",
         {
             {"dt", [](RunConfig& c, auto& k, auto& v, int l) { c.oracle.dt = parse_number<double>(k, v, l); }},
             {"max_norm_drift",
              [](RunConfig& c, auto& k, auto& v, int l) { c.oracle.max_norm_drift = parse_number<double>(k, v, l); }},
             {"cap", [](RunConfig& c, auto& k, auto& v, int l) { c.oracle.cap = parse_number<std::int64_t>(k, v, l); }},
         }},
        {"output",
         {
             {"mode", [](RunConfig& c, auto& k, auto& v, int l) { c.mode = parse_enum(k, v, l, parse_run_mode); }},
             {"path", [](RunConfig& c, auto&, auto& v, int) { c.output_path = v; }},
             {"format",
              [](RunConfig& c, auto& k, auto& v, int l) { c.format = parse_enum(k, v, l, parse_output_format); }},
         }},
    };
    return table;
}

}  // namespace

RunConfig parse_config(std::istream& in) {
    RunConfig config;
    std::string section;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ConfigError("malformed section header '" + text + "'", line);
            section = lowercase(trim(text.substr(1, text.size() - 2)));
            if (!schema().contains(section)) throw ConfigError("unknown section [" + section + "]", line);
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + text + "'", line);
        const std::string key = lowercase(trim(text.substr(0, eq)));
        const std::string value = trim(text.substr(eq + 1));
        if (section.empty()) throw ConfigError("key '" + key + "' appears before any section header", line);
        const auto& keys = schema().at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line);
        if (value.empty()) throw ConfigError("missing value for key '" + key + "'", line);
        it->second(config, key, value, line);
    }
    return config;
}

RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

void apply_overrides(RunConfig& config, const ConfigOverrides& o) {
    auto wrap = [](const char* flag, auto&& parse) {
        try {
            return parse();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string(e.what()) + " for --" + flag, 0);
        }
    };
    if (o.state) config.model.state_kind = wrap("state", [&] { return parse_state_kind(*o.state); });
    if (o.integrator) config.sim.integrator = wrap("integrator", [&] { return parse_integrator(*o.integrator); });
    if (o.chi) config.model.chi = *o.chi;
    if (o.omega) config.model.omega = *o.omega;
    if (o.t_p) config.model.t_p = *o.t_p;
    if (o.e2) config.model.e2 = *o.e2;
    if (o.initial_phase) config.model.initial_phase = *o.initial_phase;
    if (o.n_total) config.model.n_total = *o.n_total;
    if (o.n_traj) config.sim.n_traj = *o.n_traj;
    if (o.dt) config.sim.dt = *o.dt;
    if (o.seed) config.sim.seed = *o.seed;
    if (o.n_batches) config.sim.n_batches = *o.n_batches;
    if (o.samples) config.sample_count = *o.samples;
    if (o.mode) config.mode = wrap("mode", [&] { return parse_run_mode(*o.mode); });
    if (o.output) config.output_path = *o.output;
    if (o.format) config.format = wrap("format", [&] { return parse_output_format(*o.format); });
    if (o.workers) config.workers = *o.workers;
}

void finalize(RunConfig& config) {
    const SimParams& sim = config.sim;
    if (!(sim.dt > 0.0) || !(config.model.t_p > 0.0)) return;  // reported by validation
    try {
        if (config.sample_count) {
            config.sim.sample_times =
                snap_sample_times(uniform_sample_times(config.model.t_p, *config.sample_count), sim.dt, config.model.t_p);
            config.sample_count.reset();
        } else if (sim.sample_times.empty()) {
            config.sim.sample_times = effective_sample_times(config.model, sim);
        } else {
            config.sim.sample_times = snap_sample_times(sim.sample_times, sim.dt, config.model.t_p);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what(), 0);
    }
}

ValidationReport validate_config(const RunConfig& config) {
    ValidationLimits limits;
    limits.oracle_cap = config.oracle.cap;
    ValidationReport report = validate(config.model, config.sim, limits);
    if (config.mode != RunMode::Stochastic) {
        if (!(config.oracle.dt > 0.0)) report.violations.push_back("oracle dt must be positive");
        if (config.model.state_kind == StateKind::Fock) {
            if (config.model.n_total > config.oracle.cap)
                report.violations.push_back("oracle mode needs n_total <= " + std::to_string(config.oracle.cap));
        } else {
            try {
                coherent_sector_decomposition(std::sqrt(static_cast<double>(std::max<std::int64_t>(config.model.n_total, 0))),
                                              1e-12, config.oracle.cap);
            } catch (const ResourceLimit& e) {
                report.violations.push_back(std::string("oracle mode: ") + e.what());
            }
        }
    }
    if (config.output_path.empty()) report.violations.push_back("output path must not be empty");
    return report;
}

RunConfig load_config_text(const std::string& text, const ConfigOverrides& overrides) {
    RunConfig config = parse_config_text(text);
    apply_overrides(config, overrides);
    finalize(config);
    const ValidationReport report = validate_config(config);
    if (!report.ok()) throw ValidationFailure(report.violations);
    return config;
}

RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string(), 0);
    std::ostringstream text;
    text << in.rdbuf();
    return load_config_text(text.str(), overrides);
}

std::string write_config(const RunConfig& c) {
    std::ostringstream out;
    out << "[model]\n"
        << "omega = " << format_double(c.model.omega) << "\n"
        << "t_p = " << format_double(c.model.t_p) << "\n"
        << "e2 = " << format_double(c.model.e2) << "\n"
        << "chi = " << format_double(c.model.chi) << "\n"
        << "n_total = " << c.model.n_total << "\n"
        << "state = " << to_string(c.model.state_kind) << "\n"
        << "initial_phase = " << format_double(c.model.initial_phase) << "\n\n";
    out << "[sim]\n"
        << "dt = " << format_double(c.sim.dt) << "\n"
        << "n_traj = " << c.sim.n_traj << "\n"
        << "seed = " << c.sim.seed << "\n"
        << "n_batches = " << c.sim.n_batches << "\n";
    if (c.sample_count) out << "samples = " << *c.sample_count << "\n";
    if (!c.sim.sample_times.empty()) {
        out << "sample_times = ";
        for (std::size_t i = 0; i < c.sim.sample_times.size(); ++i)
            out << (i ? ", " : "") << format_double(c.sim.sample_times[i]);
        out << "\n";
    }
    if (c.sim.divergence_threshold)
        out << "divergence_threshold = " << format_double(*c.sim.divergence_threshold) << "\n";
    out << "max_diverged_fraction = " << format_double(c.sim.max_diverged_fraction) << "\n"
        << "noise_substeps = " << c.sim.noise_substeps << "\n"
        << "flip_noise_branch = " << (c.sim.flip_noise_branch ? "true" : "false") << "\n"
        << "integrator = " << to_string(c.sim.integrator) << "\n"
        << "workers = " << c.workers << "\n\n";
    out << "[oracle]\n"
        << "dt = " << format_double(c.oracle.dt) << "\n"
        << "max_norm_drift = " << format_double(c.oracle.max_norm_drift) << "\n"
        << "cap = " << c.oracle.cap << "\n\n";
    out << "[output]\n"
        << "mode = " << to_string(c.mode) << "\n"
        << "path = " << c.output_path << "\n"
        << "format = " << to_string(c.format) << "\n";
    return out.str();
}

namespace {

constexpr std::array<const char*, 14> series_columns = {
    "time", "n1", "n1_err", "n2", "n2_err", "n3", "n3_err", "xi13", "xi13_err", "xi31", "xi31_err", "hz", "hz_err",
    "diverged_fraction"};

std::array<double, 14> row_values(const WitnessPoint& w) {
    return {w.time,          w.n1.value,   w.n1.error,   w.n2.value, w.n2.error, w.n3.value,
            w.n3.error,      w.xi13.value, w.xi13.error, w.xi31.value, w.xi31.error, w.hz.value,
            w.hz.error,      w.diverged_fraction};
}

}  // namespace

void write_series_csv(std::ostream& out, const WitnessSeries& series) {
    for (std::size_t i = 0; i < series_columns.size(); ++i) out << (i ? "," : "") << series_columns[i];
    out << "\n";
    for (const WitnessPoint& w : series) {
        const auto values = row_values(w);
        for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << format_double(values[i]);
        out << "\n";
    }
}

void write_series_json(std::ostream& out, const WitnessSeries& series) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const WitnessPoint& w : series) {
        nlohmann::ordered_json row;
        const auto values = row_values(w);
        for (std::size_t i = 0; i < values.size(); ++i) row[series_columns[i]] = values[i];
        rows.push_back(std::move(row));
    }
    nlohmann::ordered_json doc;
    doc["columns"] = series_columns;
    doc["rows"] = std::move(rows);
    out << doc.dump(2) << "\n";
}

namespace {

std::filesystem::path output_file(const RunConfig& c, const std::string& suffix) {
    return std::filesystem::path(c.output_path + "_" + suffix);
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body,
                RunOutputs* outputs) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw std::ios_base::failure("failed writing " + path.string());
    if (outputs) outputs->files.push_back(path);
}

void write_series(const RunConfig& c, const std::string& name, const WitnessSeries& series, RunOutputs* outputs) {
    const bool csv = c.format == OutputFormat::Csv;
    write_file(output_file(c, name + (csv ? ".csv" : ".json")),
               [&](std::ostream& out) { csv ? write_series_csv(out, series) : write_series_json(out, series); },
               outputs);
}

struct Agreement {
    double max_z = 0.0;
    std::string worst;
};

Agreement write_agreement(const RunConfig& c, const WitnessSeries& stochastic, const WitnessSeries& exact,
                          RunOutputs* outputs) {
    Agreement agreement;
    write_file(output_file(c, "agreement.csv"),
               [&](std::ostream& out) {
                   out << "time,observable,stochastic,stderr,oracle,z\n";
                   for (std::size_t i = 0; i < stochastic.size(); ++i) {
                       const WitnessPoint& a = stochastic[i];
                       const WitnessPoint& b = exact[i];
                       const std::array<std::tuple<const char*, Estimate, double>, 6> rows = {{
                           {"n1", a.n1, b.n1.value},
                           {"n2", a.n2, b.n2.value},
                           {"n3", a.n3, b.n3.value},
                           {"xi13", a.xi13, b.xi13.value},
                           {"xi31", a.xi31, b.xi31.value},
                           {"hz", a.hz, b.hz.value},
                       }};
                       for (const auto& [name, est, ref] : rows) {
                           const double diff = std::abs(est.value - ref);
                           const double z = est.error > 0.0 ? diff / est.error : (diff == 0.0 ? 0.0 : INFINITY);
                           if (z > agreement.max_z) {
                               agreement.max_z = z;
                               agreement.worst = std::string(name) + " at t=" + format_double(a.time);
                           }
                           out << format_double(a.time) << "," << name << "," << format_double(est.value) << ","
                               << format_double(est.error) << "," << format_double(ref) << "," << format_double(z)
                               << "\n";
                       }
                   }
               },
               outputs);
    return agreement;
}

nlohmann::ordered_json manifest_json(const RunConfig& c) {
    nlohmann::ordered_json m;
    m["code_version"] = code_version;
    m["mode"] = to_string(c.mode);
    m["model"] = {{"omega", c.model.omega},       {"t_p", c.model.t_p},
                  {"e2", c.model.e2},             {"chi", c.model.chi},
                  {"n_total", c.model.n_total},   {"state", to_string(c.model.state_kind)},
                  {"initial_phase", c.model.initial_phase}};
    m["sim"] = {{"dt", c.sim.dt},
                {"n_traj", c.sim.n_traj},
                {"seed", c.sim.seed},
                {"n_batches", c.sim.n_batches},
                {"sample_times", c.sim.sample_times},
                {"divergence_threshold", effective_divergence_threshold(c.model, c.sim)},
                {"max_diverged_fraction", c.sim.max_diverged_fraction},
                {"noise_substeps", c.sim.noise_substeps},
                {"flip_noise_branch", c.sim.flip_noise_branch},
                {"integrator", to_string(c.sim.integrator)}};
    m["oracle"] = {{"dt", c.oracle.dt}, {"max_norm_drift", c.oracle.max_norm_drift}, {"cap", c.oracle.cap}};
    return m;
}

}  // namespace

int run(const RunConfig& config, std::ostream& log, RunOutputs* outputs) {
    const ValidationReport report = validate_config(config);
    for (const auto& w : report.warnings) log << "warning: " << w << "\n";
    if (!report.ok()) {
        for (const auto& v : report.violations) log << "error: " << v << "\n";
        return exit_code::validation;
    }

    RunOutputs local;
    RunOutputs* out = outputs ? outputs : &local;
    nlohmann::ordered_json manifest = manifest_json(config);
    manifest["warnings"] = report.warnings;
    bool limit_breached = false;

    try {
        WitnessSeries stochastic;
        WitnessSeries exact;
        if (config.mode != RunMode::Oracle) {
            const EnsembleResult result = run_ensemble(config.model, config.sim, config.workers);
            stochastic = result.witnesses();
            out->n_diverged = result.divergence.n_diverged;
            out->diverged_fraction = result.divergence.fraction();
            limit_breached = result.divergence.limit_exceeded();
            manifest["divergence"] = {{"n_traj", result.divergence.n_traj},
                                      {"n_diverged", result.divergence.n_diverged},
                                      {"fraction", result.divergence.fraction()},
                                      {"limit", result.divergence.max_fraction},
                                      {"limit_exceeded", limit_breached}};
            write_series(config, "stochastic", stochastic, out);
        }
        if (config.mode != RunMode::Stochastic) {
            const OracleSeries series = evolve_initial(config.model, config.sim.sample_times, config.oracle);
            exact = series.witnesses();
            manifest["oracle_max_norm_drift"] = series.max_norm_drift;
            write_series(config, "oracle", exact, out);
        }
        if (config.mode == RunMode::Both) {
            const Agreement agreement = write_agreement(config, stochastic, exact, out);
            manifest["agreement"] = {{"max_z", agreement.max_z}, {"worst", agreement.worst}};
            log << "oracle agreement: max |z| = " << agreement.max_z << " (" << agreement.worst << ")\n";
        }
        nlohmann::ordered_json files = nlohmann::ordered_json::array();
        for (const auto& f : out->files) files.push_back(f.filename().string());
        manifest["outputs"] = files;
        write_file(output_file(config, "manifest.json"), [&](std::ostream& o) { o << manifest.dump(2) << "\n"; }, out);
    } catch (const std::ios_base::failure& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const std::filesystem::filesystem_error& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const std::invalid_argument& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::validation;
    } catch (const ResourceLimit& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::validation;
    } catch (const StepSizeError& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::validation;
    }

    if (limit_breached) {
        log << "error: diverged fraction " << out->diverged_fraction << " exceeds limit "
            << config.sim.max_diverged_fraction << "\n";
        return exit_code::divergence_limit;
    }
    return exit_code::success;
}

}  // namespace ctap
