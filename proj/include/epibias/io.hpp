#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "epibias/error.hpp"
#include "epibias/exposures.hpp"
#include "epibias/gamma.hpp"
#include "epibias/growth.hpp"
#include "epibias/outbreak.hpp"
#include "epibias/summary.hpp"
#include "epibias/tracing.hpp"

namespace epibias {

inline constexpr std::string_view version = "1.0.0";

/// A configuration file or flag could not be used.
class ConfigError : public Error {
  public:
    using Error::Error;
};

enum class OutputFormat { Csv, Json };

/// Everything a command needs; see configs/ebola.ini for the key reference.
struct RunConfig {
    Scenario scenario;
    BiasScenario bias;

    // [estimate]
    std::size_t window = 42;
    std::size_t prediction_horizon = 42;
    std::size_t backward_pairs = 500;
    std::size_t backward_stride = 9;
    /// Traces whose person table, pairs and incidence are written by `simulate`.
    std::size_t trace_files = 1;

    // [exposures]
    ExposureModel exposure_model;
    std::size_t exposure_persons = 500;
    std::size_t exposure_replicates = 1000;

    // [cfr]
    double cfr_p = 0.7;
    double cfr_doubling_time = 20.0;
    double cfr_death_mean = 9.0;
    double cfr_recovery_mean = 17.0;

    // [run]
    std::size_t replicates = 1000;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out_dir = "out";
    OutputFormat format = OutputFormat::Csv;
};

namespace detail {

/// Typed access to a property tree that remembers which keys were read.
class IniReader {
  public:
    explicit IniReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

    template<class T>
    void get(const std::string& section, const std::string& key, T& target)
    {
        const std::string path = section + "." + key;
        seen_.insert(path);
        const auto node = tree_.get_child_optional(boost::property_tree::ptree::path_type(path, '.'));
        if (!node) {
            return;
        }
        const std::string text = node->data();
        if constexpr (std::is_unsigned_v<T>) {
            if (text.find('-') != std::string::npos) {
                throw ConfigError("config: [" + section + "] " + key + " must be non-negative");
            }
        }
        std::istringstream in(text);
        T value{};
        in >> value;
        if (in.fail() || !(in >> std::ws).eof()) {
            throw ConfigError("config: cannot parse [" + section + "] " + key + " = '" + text + "'");
        }
        target = value;
    }

    /// Gamma read either as key_shape/key_rate or as key_mean/key_sd.
    void gamma(const std::string& section, const std::string& key, GammaParams& target)
    {
        std::optional<double> shape;
        std::optional<double> rate;
        std::optional<double> mean;
        std::optional<double> sd;
        read_optional(section, key + "_shape", shape);
        read_optional(section, key + "_rate", rate);
        read_optional(section, key + "_mean", mean);
        read_optional(section, key + "_sd", sd);
        const bool by_rate = shape || rate;
        const bool by_moments = mean || sd;
        if (by_rate && by_moments) {
            throw ConfigError("config: [" + section + "] " + key + " given both as shape/rate and mean/sd");
        }
        try {
            if (by_rate) {
                target = GammaParams(shape.value_or(target.shape()), rate.value_or(target.rate()));
            }
            else if (by_moments) {
                target = gamma_from_moments(mean.value_or(target.mean()), sd.value_or(target.sd()));
            }
        }
        catch (const InvalidArgument& e) {
            throw ConfigError("config: [" + section + "] " + key + ": " + e.what());
        }
    }

    void check_unknown() const
    {
        for (const auto& [section, body] : tree_) {
            if (body.empty() && !body.data().empty()) {
                throw ConfigError("config: key '" + section + "' outside a section");
            }
            for (const auto& [key, value] : body) {
                if (!seen_.count(section + "." + key)) {
                    throw ConfigError("config: unknown key [" + section + "] " + key);
                }
            }
        }
    }

  private:
    template<class T>
    void read_optional(const std::string& section, const std::string& key, std::optional<T>& target)
    {
        const std::string path = section + "." + key;
        if (tree_.get_child_optional(boost::property_tree::ptree::path_type(path, '.'))) {
            T v{};
            get(section, key, v);
            target = v;
        }
        seen_.insert(path);
    }

    const boost::property_tree::ptree& tree_;
    std::set<std::string> seen_;
};

} // namespace detail

/// Reject configurations the commands cannot run; throws ConfigError.
inline void validate(const RunConfig& c)
{
    try {
        c.scenario.validate();
    }
    catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    auto need = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError("config: " + what);
        }
    };
    need(c.bias.R0 > 0.0, "[bias] R0 must be positive");
    need(c.bias.serial_c > 0.0, "[bias] serial_c must be positive");
    need(c.bias.me_p > 0.0 && c.bias.me_p <= 1.0, "[bias] me_p must lie in (0, 1]");
    need(c.bias.me_single_fraction > 0.0 && c.bias.me_single_fraction < c.bias.me_p,
         "[bias] me_single_fraction must lie in (0, me_p)");
    need(!c.bias.me_biased_mean || *c.bias.me_biased_mean > 0.0, "[bias] me_biased_mean must be positive");
    need(c.window >= 2, "[estimate] window must be at least 2");
    need(c.prediction_horizon >= 1, "[estimate] prediction_horizon must be at least 1");
    need(c.backward_pairs >= 2 && c.backward_stride >= 1, "[estimate] backward_pairs >= 2 and backward_stride >= 1");
    need(c.backward_pairs * c.backward_stride <= c.scenario.notify_threshold,
         "[estimate] backward_pairs * backward_stride must not exceed the notification threshold");
    need(c.exposure_model.p > 0.0 && c.exposure_model.p <= 1.0, "[exposures] p must lie in (0, 1]");
    need(c.exposure_model.contact_rate > 0.0, "[exposures] contact_rate must be positive");
    need(c.exposure_persons >= 50, "[exposures] persons must be at least 50");
    need(c.exposure_replicates >= 1, "[exposures] replicates must be at least 1");
    need(c.cfr_p >= 0.0 && c.cfr_p <= 1.0, "[cfr] p_death must lie in [0, 1]");
    need(c.cfr_doubling_time > 0.0, "[cfr] doubling_time must be positive");
    need(c.cfr_death_mean > 0.0 && c.cfr_recovery_mean > 0.0, "[cfr] delay means must be positive");
    need(c.replicates >= 1, "[run] replicates must be at least 1");
}

/// Parse an INI file over the built-in defaults.
inline RunConfig load_config(const std::filesystem::path& path)
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    }
    catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    RunConfig c;
    detail::IniReader in(tree);
    auto& sc = c.scenario;
    in.get("scenario", "contact_rate", sc.contact_rate);
    in.gamma("scenario", "latent", sc.latent);
    in.gamma("scenario", "infectious", sc.infectious);
    in.get("scenario", "incubation_factor_min", sc.incubation_factor_min);
    in.get("scenario", "incubation_factor_max", sc.incubation_factor_max);
    in.get("scenario", "p_death", sc.p_death);
    in.gamma("scenario", "to_death", sc.to_death);
    in.gamma("scenario", "to_recovery", sc.to_recovery);
    in.get("scenario", "notify_threshold", sc.notify_threshold);
    in.get("scenario", "followup", sc.followup);
    in.get("scenario", "max_persons", sc.max_persons);

    auto& b = c.bias;
    in.get("bias", "R0", b.R0);
    in.gamma("bias", "generation", b.generation);
    in.get("bias", "serial_c", b.serial_c);
    in.gamma("bias", "me_generation", b.me_generation);
    in.get("bias", "me_p", b.me_p);
    in.get("bias", "me_single_fraction", b.me_single_fraction);
    in.gamma("bias", "me_incubation", b.me_incubation);
    std::string biased_mean = "12";
    in.get("bias", "me_biased_mean", biased_mean);
    if (biased_mean == "derived") {
        b.me_biased_mean.reset();
    }
    else {
        double v = 0.0;
        std::istringstream s(biased_mean);
        if (!(s >> v) || !(s >> std::ws).eof()) {
            throw ConfigError("config: [bias] me_biased_mean must be a number or 'derived'");
        }
        b.me_biased_mean = v;
    }

    in.get("estimate", "window", c.window);
    in.get("estimate", "prediction_horizon", c.prediction_horizon);
    in.get("estimate", "backward_pairs", c.backward_pairs);
    in.get("estimate", "backward_stride", c.backward_stride);
    in.get("estimate", "trace_files", c.trace_files);

    in.get("exposures", "p", c.exposure_model.p);
    in.get("exposures", "contact_rate", c.exposure_model.contact_rate);
    in.gamma("exposures", "incubation", c.exposure_model.incubation);
    in.get("exposures", "persons", c.exposure_persons);
    in.get("exposures", "replicates", c.exposure_replicates);

    in.get("cfr", "p_death", c.cfr_p);
    in.get("cfr", "doubling_time", c.cfr_doubling_time);
    in.get("cfr", "death_mean", c.cfr_death_mean);
    in.get("cfr", "recovery_mean", c.cfr_recovery_mean);

    in.get("run", "replicates", c.replicates);
    in.get("run", "threads", c.threads);
    std::uint64_t seed = 0;
    const bool has_seed = tree.get_child_optional(boost::property_tree::ptree::path_type("run.seed", '.')).has_value();
    in.get("run", "seed", seed);
    if (has_seed) {
        c.seed = seed;
    }
    std::string out = c.out_dir.string();
    in.get("run", "out", out);
    c.out_dir = out;

    in.check_unknown();
    return c;
}

/*!
 * Canonical text of every setting that influences results. Output location,
 * format and thread count are excluded: they do not change the numbers.
 */
inline std::string canonical_config(const RunConfig& c)
{
    std::string s;
    auto put = [&](std::string_view key, auto value) { s += fmt::format("{}={}\n", key, value); };
    auto num = [&](std::string_view key, double value) { s += fmt::format("{}={:.17g}\n", key, value); };
    auto gam = [&](std::string_view key, const GammaParams& g) {
        num(fmt::format("{}_shape", key), g.shape());
        num(fmt::format("{}_rate", key), g.rate());
    };
    const auto& sc = c.scenario;
    num("scenario.contact_rate", sc.contact_rate);
    gam("scenario.latent", sc.latent);
    gam("scenario.infectious", sc.infectious);
    num("scenario.incubation_factor_min", sc.incubation_factor_min);
    num("scenario.incubation_factor_max", sc.incubation_factor_max);
    num("scenario.p_death", sc.p_death);
    gam("scenario.to_death", sc.to_death);
    gam("scenario.to_recovery", sc.to_recovery);
    put("scenario.notify_threshold", sc.notify_threshold);
    num("scenario.followup", sc.followup);
    put("scenario.max_persons", sc.max_persons);
    num("bias.R0", c.bias.R0);
    gam("bias.generation", c.bias.generation);
    num("bias.serial_c", c.bias.serial_c);
    gam("bias.me_generation", c.bias.me_generation);
    num("bias.me_p", c.bias.me_p);
    num("bias.me_single_fraction", c.bias.me_single_fraction);
    gam("bias.me_incubation", c.bias.me_incubation);
    if (c.bias.me_biased_mean) {
        num("bias.me_biased_mean", *c.bias.me_biased_mean);
    }
    else {
        put("bias.me_biased_mean", "derived");
    }
    put("estimate.window", c.window);
    put("estimate.prediction_horizon", c.prediction_horizon);
    put("estimate.backward_pairs", c.backward_pairs);
    put("estimate.backward_stride", c.backward_stride);
    put("estimate.trace_files", c.trace_files);
    num("exposures.p", c.exposure_model.p);
    num("exposures.contact_rate", c.exposure_model.contact_rate);
    gam("exposures.incubation", c.exposure_model.incubation);
    put("exposures.persons", c.exposure_persons);
    put("exposures.replicates", c.exposure_replicates);
    num("cfr.p_death", c.cfr_p);
    num("cfr.doubling_time", c.cfr_doubling_time);
    num("cfr.death_mean", c.cfr_death_mean);
    num("cfr.recovery_mean", c.cfr_recovery_mean);
    put("run.replicates", c.replicates);
    put("run.seed", c.seed ? std::to_string(*c.seed) : std::string("none"));
    return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const RunConfig& c)
{
    return fmt::format("{:016x}", fnv1a(canonical_config(c)));
}

/// Provenance attached to every emitted file.
struct RunMetadata {
    std::uint64_t seed = 0;
    std::string version{epibias::version};
    std::string config_hash;
    std::string command;
};

inline nlohmann::ordered_json to_json(const RunMetadata& m)
{
    return {{"command", m.command}, {"version", m.version}, {"seed", m.seed}, {"config_hash", m.config_hash}};
}

inline nlohmann::ordered_json to_json(const Summary& s)
{
    return {{"n", s.n},           {"mean", s.mean},     {"sd", s.sd},           {"min", s.min},
            {"max", s.max},       {"median", s.median}, {"lower95", s.lower95}, {"upper95", s.upper95}};
}

/// Leading comment line of every CSV file.
inline std::string csv_comment(const RunMetadata& m)
{
    return fmt::format("# command={} version={} seed={} config_hash={}\n", m.command, m.version, m.seed, m.config_hash);
}

/// CSV number with 6 significant digits.
inline std::string csv_number(double v)
{
    return fmt::format("{:.6g}", v);
}

/*!
 * A rectangular table. CSV output starts with one '#' comment line carrying
 * the metadata; JSON output is {"meta": ..., "columns": [...], "rows": [...]}
 * with full-precision numbers.
 */
class Table {
  public:
    using Cell = std::variant<std::string, double, std::int64_t>;

    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<Cell> row)
    {
        detail::require(row.size() == columns_.size(), "Table: row width does not match the header");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }

    std::string csv(const RunMetadata& meta) const
    {
        std::string out = csv_comment(meta) + join(columns_) + "\n";
        for (const auto& row : rows_) {
            std::vector<std::string> cells;
            for (const auto& c : row) {
                cells.push_back(std::visit(
                    [](const auto& v) -> std::string {
                        using V = std::decay_t<decltype(v)>;
                        if constexpr (std::is_same_v<V, double>) {
                            return csv_number(v);
                        }
                        else if constexpr (std::is_same_v<V, std::int64_t>) {
                            return std::to_string(v);
                        }
                        else {
                            return v;
                        }
                    },
                    c));
            }
            out += join(cells) + "\n";
        }
        return out;
    }

    nlohmann::ordered_json json(const RunMetadata& meta) const
    {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& row : rows_) {
            nlohmann::ordered_json obj;
            for (std::size_t i = 0; i < row.size(); ++i) {
                std::visit([&](const auto& v) { obj[columns_[i]] = v; }, row[i]);
            }
            rows.push_back(std::move(obj));
        }
        return {{"meta", to_json(meta)}, {"columns", columns_}, {"rows", std::move(rows)}};
    }

  private:
    static std::string join(const std::vector<std::string>& cells)
    {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            s += (i ? "," : "") + cells[i];
        }
        return s;
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

inline std::string person_csv(const OutbreakTrace& trace, const RunMetadata& meta)
{
    std::string out = csv_comment(meta) + "id,infector_id,t_infect,t_inf_start,t_inf_end,t_symptom,outcome,t_outcome\n";
    for (const auto& p : trace.persons) {
        out += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{},{:.6f}\n", p.id,
                           p.is_index() ? std::string("") : std::to_string(p.infector_id), p.t_infect,
                           p.t_infectious_start, p.t_infectious_end, p.t_symptom,
                           p.fate == Fate::Died ? "died" : "recovered", p.t_outcome);
    }
    return out;
}

inline std::string pair_csv(std::span<const TracedPair> pairs, const RunMetadata& meta)
{
    std::string out = csv_comment(meta) + "infectee_id,infector_id,gen_time,serial_interval\n";
    for (const auto& p : pairs) {
        out += fmt::format("{},{},{:.6f},{:.6f}\n", p.infectee_id, p.infector_id, p.generation_time, p.serial_interval);
    }
    return out;
}

/// Histories in wide form (person_id, k, symptom_time) plus a long file of exposure times.
inline std::pair<std::string, std::string> history_csv(std::span<const ExposureHistory> histories, const RunMetadata& meta)
{
    std::string wide = csv_comment(meta) + "person_id,k,symptom_time\n";
    std::string exposures = csv_comment(meta) + "person_id,exposure_time\n";
    for (std::size_t i = 0; i < histories.size(); ++i) {
        wide += fmt::format("{},{},{:.6f}\n", i, histories[i].exposures.size(), histories[i].symptom_time);
        for (double e : histories[i].exposures) {
            exposures += fmt::format("{},{:.6f}\n", i, e);
        }
    }
    return {wide, exposures};
}

/// Serialized writer for an output directory.
class OutputDir {
  public:
    OutputDir(std::filesystem::path dir, OutputFormat format) : dir_(std::move(dir)), format_(format)
    {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_)) {
            throw ConfigError("output directory '" + dir_.string() + "' cannot be created");
        }
    }

    OutputFormat format() const { return format_; }

    void write_text(const std::string& name, const std::string& text)
    {
        std::lock_guard lock(mutex_);
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        out << text;
        if (!out) {
            throw Error("cannot write '" + path.string() + "'");
        }
        written_.push_back(name);
    }

    void write_json(const std::string& name, const nlohmann::ordered_json& j) { write_text(name, j.dump(2) + "\n"); }

    /// Writes `stem`.csv or `stem`.json depending on the format.
    void write_table(const std::string& stem, const Table& t, const RunMetadata& meta)
    {
        if (format_ == OutputFormat::Csv) {
            write_text(stem + ".csv", t.csv(meta));
        }
        else {
            write_json(stem + ".json", t.json(meta));
        }
    }

    const std::vector<std::string>& written() const { return written_; }

  private:
    std::filesystem::path dir_;
    OutputFormat format_;
    std::mutex mutex_;
    std::vector<std::string> written_;
};

} // namespace epibias
